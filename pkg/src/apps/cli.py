"""
Command-line entry point: prepare, train, enhance, evaluate, predict, crossval and synth.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from config.config import FORMATS, PRESETS, VARIANTS, RunConfig
from src.core.errors import ConfigError, DidaError
from src.core.pipeline import SPLIT_NAMES, Pipeline

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# argparse dest -> configuration key
OVERRIDES = {
    "data": "data_path",
    "format": "data_format",
    "max_records": "max_records",
    "embeddings": "embeddings_path",
    "lexicon": "lexicon_dir",
    "synonyms": "synonyms_path",
    "output_dir": "output_dir",
    "seed": "seed",
    "variant": "variant",
    "epochs": "epochs",
    "enhancement_epochs": "enhancement_epochs",
    "d_h": "d_h",
    "use_temporal": "use_temporal",
    "tau_p": "tau_p",
    "tau_n": "tau_n",
    "gamma": "gamma",
    "tune_thresholds": "tune",
    "translator": "translator",
    "translator_endpoint": "translator_endpoint",
    "plan": "plan",
    "rate": "rate",
    "scope": "scope",
    "folds": "folds",
    "split_scheme": "split_scheme",
    "checkpoint": "checkpoint_path",
    "progress": "progress",
}


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Dataset parameter preset")
    parser.add_argument("--data", help="Dataset path")
    parser.add_argument("--format", choices=FORMATS, help="Dataset format")
    parser.add_argument("--max-records", type=int, help="Load at most this many records")
    parser.add_argument("--embeddings", help="Embedding text file")
    parser.add_argument("--lexicon", help="Emotion lexicon directory")
    parser.add_argument("--synonyms", help="Synonym dictionary (TSV)")
    parser.add_argument("--output-dir", help="Run output directory")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--variant", choices=sorted(VARIANTS), help="Model variant")
    parser.add_argument("--verbose", "-v", action="store_true", help="Verbose logging")
    parser.add_argument("--quiet", "-q", dest="progress", action="store_const", const=False,
                        help="Hide progress bars and informational logs")


def _add_enhancement(parser: argparse.ArgumentParser):
    parser.add_argument("--tau-p", type=float, help="Positive pseudo-label threshold in (0.5, 1]")
    parser.add_argument("--tau-n", type=float, help="Negative pseudo-label threshold in (0.5, 1]")
    parser.add_argument("--gamma", type=float, help="Single confidence threshold (alias of --tau-p)")
    parser.add_argument("--translator", choices=["stub", "http"], help="Back-translation client")
    parser.add_argument("--translator-endpoint", help="HTTP translation endpoint")
    parser.add_argument("--plan", help='Augmentation plan, e.g. "synonym:2,back_translation:1"')
    parser.add_argument("--rate", type=float, help="Substitution rate in (0, 0.3]")
    parser.add_argument("--scope", choices=["news", "comments", "both"], help="Texts to augment")


def _add_architecture(parser: argparse.ArgumentParser):
    parser.add_argument("--d-h", type=int, help="GRU hidden width")
    parser.add_argument("--no-temporal", dest="use_temporal", action="store_const", const=False,
                        help="Ablate the temporal emotion feature")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dida", description="DIDA fake-news detection")
    commands = parser.add_subparsers(dest="command", required=True)

    prepare = commands.add_parser("prepare", help="Convert a raw dataset to canonical JSONL and splits")
    _add_common(prepare)
    prepare.add_argument("--in", dest="in_path", required=True, help="Raw dataset file or directory")
    prepare.add_argument("--out", required=True, help="Output directory")
    prepare.add_argument("--split", dest="split_scheme", choices=["ratio", "kfold"], help="Splitting scheme")

    train = commands.add_parser("train", help="Train a model and write checkpoint and metrics")
    _add_common(train)
    _add_enhancement(train)
    _add_architecture(train)
    train.add_argument("--epochs", type=int, help="Training epochs")
    train.add_argument("--enhancement-epochs", type=int, help="Epochs of the enhancement phase")
    train.add_argument("--tune-thresholds", action="store_const", const=True,
                       help="Grid-search tau_p and tau_n on the validation split")
    train.add_argument("--checkpoint", help="Checkpoint output path")

    enhance = commands.add_parser("enhance", help="Run one enhancement round with a checkpoint")
    _add_common(enhance)
    _add_enhancement(enhance)
    _add_architecture(enhance)
    enhance.add_argument("--checkpoint", required=True, help="Trained checkpoint")

    evaluate = commands.add_parser("evaluate", help="Score a checkpoint on a split")
    _add_common(evaluate)
    _add_architecture(evaluate)
    evaluate.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    evaluate.add_argument("--split", dest="split_name", choices=SPLIT_NAMES, default="test", help="Split to score")

    predict = commands.add_parser("predict", help="Write per-record predictions")
    _add_common(predict)
    _add_architecture(predict)
    predict.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    predict.add_argument("--out", help="Predictions CSV (default: <output-dir>/predictions.csv)")
    predict.add_argument("--export-emotion-series", help="CSV of per-comment emotion scores")

    crossval = commands.add_parser("crossval", help="k-fold cross-validation over one or more variants")
    _add_common(crossval)
    _add_enhancement(crossval)
    _add_architecture(crossval)
    crossval.add_argument("--variants", help="Comma-separated variants (default: --variant)")
    crossval.add_argument("--folds", type=int, help="Number of folds")
    crossval.add_argument("--epochs", type=int, help="Training epochs")

    synth = commands.add_parser("synth", help="Generate the synthetic corpus with matching resources")
    _add_common(synth)
    synth.add_argument("--n", type=int, default=200, help="Number of records (even, >= 20)")
    synth.add_argument("--out", required=True, help="Output directory")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Builds the run configuration: defaults < preset < file < command line"""
    overrides: Dict[str, Any] = {key: getattr(args, dest) for dest, key in OVERRIDES.items()
                                 if getattr(args, dest, None) is not None}
    return RunConfig.from_file(args.config, overrides=overrides, preset=args.preset)


def run(args: argparse.Namespace) -> int:
    run_config = resolve_config(args)
    pipeline = Pipeline(run_config)

    if args.command == "prepare":
        written = pipeline.prepare_dataset(args.in_path, args.out, run_config.paths.data_format,
                                           run_config.train.split_scheme)
        print(f"Prepared: {', '.join(str(p) for p in written.values())}")

    elif args.command == "train":
        metrics = pipeline.train()
        for name in ("validation", "test"):
            if name in metrics:
                m = metrics[name]
                print(f"{name}: macro F1 {m['macro_f1']:.4f} | accuracy {m['accuracy']:.4f} | "
                      f"RMSE {m['rmse']:.4f} (x100 {m['rmse_x100']:.1f})")
        print(f"Checkpoint: {metrics['checkpoint']}")

    elif args.command == "enhance":
        path, report = pipeline.enhance(args.checkpoint)
        print(f"Expanded set: {path} ({report.selected_pos} positive, {report.selected_neg} negative "
              f"of {report.variants} variants)")

    elif args.command == "evaluate":
        report = pipeline.evaluate(args.checkpoint, args.split_name)
        print(f"{args.split_name}: macro F1 {report.macro_f1:.4f} | accuracy {report.accuracy:.4f} | "
              f"RMSE {report.rmse:.4f} (x100 {report.rmse_percent:.1f})")

    elif args.command == "predict":
        predictions = pipeline.predict(args.checkpoint, args.out, args.export_emotion_series)
        print(f"Predicted {len(predictions)} records")

    elif args.command == "crossval":
        variants: Optional[List[str]] = None
        if args.variants:
            variants = [v.strip() for v in args.variants.split(",") if v.strip()]
            unknown = [v for v in variants if v not in VARIANTS]
            if unknown:
                raise ConfigError(f"Unknown variants: {', '.join(unknown)}")
        reports = pipeline.crossvalidate(variants)
        print(f"{'variant':<14}{'macro F1':>10}{'accuracy':>10}{'RMSE':>8}{'x100':>8}")
        for variant, report in reports.items():
            print(f"{variant:<14}{report.macro_f1:>10.4f}{report.accuracy:>10.4f}"
                  f"{report.rmse:>8.4f}{report.rmse_percent:>8.1f}")

    elif args.command == "synth":
        written = pipeline.synthesize(args.n, args.out, args.seed)
        print(f"Synthetic corpus: {written['data']} (config: {written['config']})")

    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI interface"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    if args.verbose:
        log_level = logging.DEBUG
    elif args.progress is False:
        log_level = logging.WARNING
    else:
        log_level = logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logger = logging.getLogger(__name__)

    try:
        return run(args)
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_USAGE
    except (DidaError, OSError) as e:
        logger.error(f"❌ {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
