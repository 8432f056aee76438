import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from config.config import RunConfig, config
from processors.dataset_processor import (
    DatasetProcessor, DatasetSplit, KFoldSplit, NewsRecord, RatioSplit, make_splits,
)
from processors.resource_loader import Resources, load_resources
from processors.synthetic import generate_synthetic, write_synthetic_resources
from src.core.augment import AugmentPlan
from src.core.checkpoint import load_checkpoint, save_checkpoint
from src.core.emotion import EmotionExtractor
from src.core.errors import ConfigError, DataError, ResourceError
from src.core.network import DIDANetwork
from src.core.pseudolabel import PseudoLabeler, RoundReport
from src.core.training import MetricReport, Trainer, write_history, write_metrics
from src.core.translation import TranslatorClient, make_translator

SPLIT_NAMES = ("train", "validation", "test", "all")


class Pipeline:
    """
    Main pipeline class of the DIDA fake-news detector.
    Wires configuration, resources and the training modules into the command-line stages.

    This class provides methods to convert raw datasets, train and enhance models, evaluate
    checkpoints, export predictions and emotion series, run the cross-validation ladder and
    generate the synthetic corpus. Every stage writes the resolved configuration into its
    output directory.
    """

    def __init__(self, run_config: Optional[RunConfig] = None):
        """
        Initializes the Pipeline with logging, the dataset processor and the run configuration.
        Resources are loaded lazily on first use.
        """
        self.logger = logging.getLogger(__name__)
        self.config = run_config or config
        self.processor = DatasetProcessor()
        self._resources: Optional[Resources] = None

    # -- shared plumbing -------------------------------------------------------------------

    @property
    def resources(self) -> Resources:
        """
        Loads the embedding table, lexicon and synonym dictionary named by the configuration.

        Raises:
            ResourceError: If a required path is not configured or does not exist.
        """
        if self._resources is None:
            paths = self.config.paths
            for key in ("embeddings_path", "lexicon_dir"):
                if not getattr(paths, key):
                    raise ResourceError(f"No {key} configured")
            self._resources = load_resources(paths.embeddings_path, paths.lexicon_dir, paths.synonyms_path)
            if self._resources.embeddings.d_g != self.config.train.embedding_dim:
                raise ConfigError(f"embedding_dim is {self.config.train.embedding_dim} but "
                                  f"{paths.embeddings_path} has width {self._resources.embeddings.d_g}")
        return self._resources

    def load_records(self, path: Optional[str] = None, fmt: Optional[str] = None) -> List[NewsRecord]:
        path = path or self.config.paths.data_path
        if not path:
            raise ConfigError("No data_path configured")
        return self.processor.load(path, fmt or self.config.paths.data_format, self.config.paths.max_records)

    def split(self, records: Sequence[NewsRecord]) -> DatasetSplit:
        """Ratio split of the labeled records with the configured ratios and seed"""
        labeled = [r for r in records if r.is_labeled]
        if not labeled:
            raise DataError("Dataset has no labeled records")
        return make_splits(labeled, RatioSplit(*self.config.train.split_ratios), self.config.seed)[0]

    def translator(self) -> TranslatorClient:
        augment = self.config.augment
        return make_translator(augment.translator, augment.translator_endpoint,
                               augment.translator_timeout, augment.source_lang)

    def checkpoint_path(self) -> Path:
        return Path(self.config.paths.checkpoint_path or self.config.output_dir / "model.ckpt")

    def load_network(self, path: Optional[Union[str, Path]] = None) -> DIDANetwork:
        """
        Restores a network from a checkpoint trained under the same architecture settings.

        Raises:
            CheckpointError: If the checkpoint's configuration hash differs.
        """
        trainer = Trainer(self.resources, self.config)
        params, _ = load_checkpoint(path or self.checkpoint_path(), expected_hash=trainer.config_hash())
        return trainer.network_for(params)

    def _run_dir(self) -> Path:
        run_dir = self.config.create_directories()
        self.config.save()
        return run_dir

    # -- stages ----------------------------------------------------------------------------

    def prepare_dataset(self, in_path: str, out_dir: str, fmt: str, scheme: str = "ratio") -> Dict[str, Path]:
        """
        Converts a raw dataset to canonical JSONL and writes split files plus a manifest.
        Returns the written paths keyed by name.

        Args:
            in_path (str): Raw dataset file or directory.
            out_dir (str): Output directory.
            fmt (str): Dataset format.
            scheme (str): "ratio" (train/validation/test files) or "kfold" (fold manifests only).

        Returns:
            Dict[str, Path]: Paths of all.jsonl, the split files and splits.json.
        """
        self.logger.info(f"📄 Preparing {fmt} dataset from {in_path}")
        out = Path(out_dir)
        records = self.load_records(in_path, fmt)
        written = {"all": self.processor.write_jsonl(records, out / "all.jsonl")}
        labeled = [r for r in records if r.is_labeled]

        if scheme == "kfold":
            splits = make_splits(labeled, KFoldSplit(self.config.train.folds), self.config.seed)
        else:
            splits = make_splits(labeled, RatioSplit(*self.config.train.split_ratios), self.config.seed)
            for name in ("train", "validation", "test"):
                written[name] = self.processor.write_jsonl(getattr(splits[0], name), out / f"{name}.jsonl")

        manifest = {"format": fmt, "seed": self.config.seed, "scheme": scheme,
                    "splits": [s.manifest() for s in splits]}
        written["manifest"] = out / "splits.json"
        with open(written["manifest"], "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
        self.config.save(out / "config.json")
        self.logger.info(f"✅ Prepared {len(records)} records ({len(labeled)} labeled) into {out}")
        return written

    def train(self) -> Dict:
        """
        Trains the configured variant on the ratio split, running the enhancement round for the
        augmenting variants, and writes checkpoint, history.csv and metrics.json.

        Returns:
            Dict: Validation and test metrics plus the checkpoint path.
        """
        run_dir = self._run_dir()
        split = self.split(self.load_records())
        trainer = Trainer(self.resources, self.config)
        plan = AugmentPlan.from_config(self.config.augment)
        result = trainer.fit(split, plan, self.translator())

        checkpoint = save_checkpoint(result.params, self.checkpoint_path(), trainer.config_hash(),
                                     extra={"variant": self.config.train.variant, "best_epoch": result.best_epoch})
        write_history(result.history, run_dir / "history.csv")
        metrics = {"variant": self.config.train.variant, "best_epoch": result.best_epoch}
        for name in ("validation", "test"):
            records = getattr(split, name)
            if records:
                metrics[name] = trainer.evaluate(result.params, records).to_dict()
        if result.report is not None:
            result.report.save(run_dir / "report.json")
        write_metrics(metrics, run_dir / "metrics.json")
        with open(run_dir / "split.json", "w", encoding="utf-8") as f:
            json.dump(split.manifest(), f, indent=2)
        self.logger.info(f"✅ Training complete; checkpoint at {checkpoint}")
        return {**metrics, "checkpoint": str(checkpoint)}

    def enhance(self, checkpoint: Optional[str] = None) -> Tuple[Path, RoundReport]:
        """
        Runs one enhancement round with a trained checkpoint and writes the expanded training
        set (originals plus pseudo-labeled variants) and the round report.

        Returns:
            Tuple[Path, RoundReport]: The expanded.jsonl path and the report.
        """
        run_dir = self._run_dir()
        split = self.split(self.load_records())
        labeler = PseudoLabeler(self.load_network(checkpoint), self.resources, self.config)
        expanded, report = labeler.enhancement_round(
            split.train, AugmentPlan.from_config(self.config.augment),
            self.config.pseudolabel.thresholds(), self.translator())
        path = self.processor.write_jsonl(list(expanded.originals) + expanded.pseudo_records(),
                                          run_dir / "expanded.jsonl")
        report.save(run_dir / "report.json")
        return path, report

    def evaluate(self, checkpoint: Optional[str] = None, split_name: str = "test") -> MetricReport:
        """
        Scores a checkpoint on one split of the configured dataset and writes metrics.json.

        Raises:
            DataError: If the chosen split is empty.
        """
        if split_name not in SPLIT_NAMES:
            raise ConfigError(f"Unknown split '{split_name}' (choose from {', '.join(SPLIT_NAMES)})")
        run_dir = self._run_dir()
        records = self.load_records()
        if split_name == "all":
            chosen = [r for r in records if r.is_labeled]
        else:
            chosen = list(getattr(self.split(records), split_name))
        network = self.load_network(checkpoint)
        report = Trainer(self.resources, self.config).evaluate(network.params, chosen)
        write_metrics({"split": split_name, **report.to_dict()}, run_dir / "metrics.json")
        self.logger.info(f"📊 {split_name}: macro F1 {report.macro_f1:.4f}, accuracy {report.accuracy:.4f}, "
                         f"RMSE {report.rmse:.4f} (x100 = {report.rmse_percent:.1f})")
        return report

    def predict(self, checkpoint: Optional[str] = None, out_path: Optional[str] = None,
                emotion_series_path: Optional[str] = None) -> pd.DataFrame:
        """
        Writes per-record class-1 probabilities and predictions for every record of the dataset,
        and optionally the per-comment emotion score series.

        Returns:
            pd.DataFrame: Columns id, p_fake, prediction, label.
        """
        run_dir = self._run_dir()
        records = self.load_records()
        trainer = Trainer(self.resources, self.config)
        network = self.load_network(checkpoint)
        rows = []
        for prepared in trainer.prepare(records):
            P = network.predict_proba(prepared)
            rows.append({"id": prepared.record_id, "p_fake": float(P[1]),
                         "prediction": int(P.argmax()), "label": prepared.label})
        predictions = pd.DataFrame(rows, columns=["id", "p_fake", "prediction", "label"])
        target = Path(out_path) if out_path else run_dir / "predictions.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        predictions.to_csv(target, index=False)
        self.logger.info(f"💾 Wrote {len(predictions)} predictions to {target}")

        if emotion_series_path:
            self.export_emotion_series(records, emotion_series_path)
        return predictions

    def export_emotion_series(self, records: Sequence[NewsRecord], path: str) -> pd.DataFrame:
        """One row per comment: record id, position, timestamp and emotion score"""
        extractor = EmotionExtractor(self.resources.lexicon, self.resources.tokenizer, self.config.emotion)
        rows = []
        for record in records:
            matrix = extractor.comment_matrix(record, self.config.train.max_comments)
            scores = matrix.rows[:, matrix.layout.score][:, 0] if matrix.M else []
            for index, (ts, score) in enumerate(zip(matrix.timestamps, scores)):
                rows.append({"id": record.id, "index": index, "ts": ts, "score": float(score)})
        series = pd.DataFrame(rows, columns=["id", "index", "ts", "score"])
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        series.to_csv(path, index=False)
        self.logger.info(f"💾 Wrote emotion series of {len(records)} records to {path}")
        return series

    def crossvalidate(self, variants: Optional[Sequence[str]] = None) -> Dict[str, MetricReport]:
        """
        Runs the k-fold protocol for each requested variant (the configured one by default) and
        writes one metrics block per variant.

        Returns:
            Dict[str, MetricReport]: Mean report with per-fold values, keyed by variant.
        """
        run_dir = self._run_dir()
        records = [r for r in self.load_records() if r.is_labeled]
        variants = list(variants or [self.config.train.variant])
        original_variant = self.config.train.variant
        reports = {}
        try:
            for variant in variants:
                self.config.set_value("variant", variant)
                self.config.validate()
                self.logger.info(f"🚀 Cross-validating {variant} over {self.config.train.folds} folds")
                trainer = Trainer(self.resources, self.config)
                reports[variant] = trainer.crossvalidate(records, AugmentPlan.from_config(self.config.augment),
                                                         self.translator())
                mean = reports[variant]
                self.logger.info(f"📊 {variant}: macro F1 {mean.macro_f1:.4f}, accuracy {mean.accuracy:.4f}, "
                                 f"RMSE {mean.rmse:.4f} (x100 = {mean.rmse_percent:.1f})")
        finally:
            self.config.set_value("variant", original_variant)
        write_metrics({variant: report.to_dict() for variant, report in reports.items()}, run_dir / "metrics.json")
        return reports

    def synthesize(self, n_records: int, out_dir: str, seed: Optional[int] = None) -> Dict[str, Path]:
        """
        Generates the synthetic corpus with matching resources and a ready-to-use config.toml.

        Returns:
            Dict[str, Path]: Paths of the data file, resources and config file.
        """
        seed = self.config.seed if seed is None else seed
        out = Path(out_dir)
        params = self.config.synthetic
        records = generate_synthetic(n_records, seed, params)
        data_path = self.processor.write_jsonl(records, out / "data.jsonl")
        resources = write_synthetic_resources(out / "resources", params, seed)

        config_path = out / "config.toml"
        config_path.write_text(
            "[paths]\n"
            f'data_path = "{data_path.as_posix()}"\n'
            f'embeddings_path = "{resources.embeddings_path.as_posix()}"\n'
            f'lexicon_dir = "{resources.lexicon_dir.as_posix()}"\n'
            f'synonyms_path = "{resources.synonyms_path.as_posix()}"\n'
            f'output_dir = "{(out / "run").as_posix()}"\n'
            "\n[train]\n"
            f"embedding_dim = {params.vector_dim}\n"
            f"seed = {seed}\n",
            encoding="utf-8",
        )
        self.logger.info(f"✅ Synthetic corpus of {n_records} records written to {out}")
        return {"data": data_path, "embeddings": resources.embeddings_path, "lexicon": resources.lexicon_dir,
                "synonyms": resources.synonyms_path, "config": config_path}
