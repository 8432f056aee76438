import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

FORMATS = ("jsonl", "rumoureval19", "weibo16")
STRATEGIES = ("synonym", "embedding", "masked_lm", "back_translation")
SUBSTITUTION_STRATEGIES = ("synonym", "embedding", "masked_lm")
L2_SCOPES = ("classifier", "all")
FALLBACK_STOP_WORDS = (
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by", "for", "with",
    "to", "from", "in", "on", "is", "are", "was", "were", "be", "been", "it",
    "this", "that", "these", "those", "as", "so", "than", "too", "very",
)


@dataclass(frozen=True)
class VariantSpec:
    """Feature switches of one row of the ablation ladder"""
    co_attention: bool
    temporal: bool
    augmentation: str  # "none", "inherit" or "gated"


VARIANTS: Dict[str, VariantSpec] = {
    "dual_emotion": VariantSpec(co_attention=False, temporal=False, augmentation="none"),
    "dida_t": VariantSpec(co_attention=False, temporal=True, augmentation="none"),
    "dida_d": VariantSpec(co_attention=True, temporal=True, augmentation="none"),
    "dida_a": VariantSpec(co_attention=True, temporal=True, augmentation="inherit"),
    "dida": VariantSpec(co_attention=True, temporal=True, augmentation="gated"),
}

# Per-dataset text length, comment count, embedding width and stop word list
PRESETS: Dict[str, Dict[str, Any]] = {
    "rumoureval19": {"max_text_len": 50, "max_comments": 345, "embedding_dim": 200},
    "weibo16": {"max_text_len": 100, "max_comments": 100, "embedding_dim": 300, "stop_words_lang": "chinese"},
}


@dataclass
class PathsConfig:
    """Input and output locations"""
    data_path: Optional[str] = None
    data_format: str = "jsonl"
    max_records: Optional[int] = None
    embeddings_path: Optional[str] = None
    lexicon_dir: Optional[str] = None
    synonyms_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    output_dir: str = "runs/default"


@dataclass
class EmotionConfig:
    """Configuration of the lexicon emotion features"""
    negation_window: int = 2


@dataclass
class TrainConfig:
    """Model and optimization settings; defaults are the RumourEval-19 column"""
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    l2: float = 0.01
    l2_scope: str = "classifier"  # "classifier" or "all"
    max_text_len: int = 50
    max_comments: int = 345
    embedding_dim: int = 200
    d_h: int = 32
    seed: int = 13
    variant: str = "dida"
    use_temporal: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    split_scheme: str = "ratio"
    split_ratios: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    folds: int = 5
    enhancement_epochs: Optional[int] = None
    pseudo_weight: float = 1.0
    progress: bool = True

    @property
    def variant_spec(self) -> VariantSpec:
        """
        Resolves the ablation switches for the configured variant.
        The independent `use_temporal` flag can additionally drop the temporal emotion feature.

        Returns:
            VariantSpec: The effective feature switches.
        """
        spec = VARIANTS[self.variant]
        if not self.use_temporal and spec.temporal:
            spec = VariantSpec(co_attention=spec.co_attention, temporal=False,
                               augmentation=spec.augmentation)
        return spec


@dataclass
class AugmentConfig:
    """Configuration of the data augmentation module"""
    plan: List[Tuple[str, int]] = field(default_factory=lambda: [
        ("synonym", 2), ("embedding", 2), ("masked_lm", 2), ("back_translation", 2)
    ])
    rate: float = 0.1
    scope: str = "both"  # "news", "comments" or "both"
    embedding_top_k: int = 10
    stop_words: Tuple[str, ...] = ()  # explicit list; empty means stop_words_path or the nltk list
    stop_words_lang: str = "english"
    stop_words_path: Optional[str] = None
    translator: str = "stub"  # "stub" or "http"
    translator_endpoint: Optional[str] = None
    translator_timeout: float = 10.0
    source_lang: str = "en"
    pivot_langs: Tuple[str, ...] = ("fr",)
    max_attempts: int = 3
    backoff_seconds: float = 1.0


@dataclass
class PseudoLabelConfig:
    """Confidence thresholds of the pseudo-label selection"""
    tau_p: float = 0.9
    tau_n: float = 0.9
    gamma: Optional[float] = None
    tune: bool = False
    grid: Tuple[float, ...] = (0.8, 0.85, 0.9, 0.95)

    def thresholds(self) -> Tuple[float, float]:
        """Returns (tau_p, tau_n); a configured gamma stands in for tau_p"""
        tau_p = self.gamma if self.gamma is not None else self.tau_p
        return tau_p, self.tau_n


@dataclass
class SyntheticParams:
    """Shape of the synthetic corpus whose only class signal is comment order"""
    comments_per_record: int = 8
    comment_length: int = 6
    emotion_words_per_comment: int = 2
    news_length: int = 12
    neutral_vocab_size: int = 60
    emotion_vocab_size: int = 6
    vector_dim: int = 16
    start_time: int = 1_500_000_000
    mean_gap_seconds: int = 600
    true_flip_rate: float = 0.05


SECTIONS = {
    "paths": PathsConfig,
    "emotion": EmotionConfig,
    "train": TrainConfig,
    "augment": AugmentConfig,
    "pseudolabel": PseudoLabelConfig,
    "synthetic": SyntheticParams,
}


def parse_plan(value: Union[str, List[Any]]) -> List[Tuple[str, int]]:
    """
    Parses an augmentation plan from "synonym:2,embedding:1" text or a list of pairs.
    Returns a list of (strategy, multiplier) tuples.

    Args:
        value (Union[str, List[Any]]): Plan text from the command line or a TOML array.

    Returns:
        List[Tuple[str, int]]: The parsed plan.

    Raises:
        ConfigError: If a strategy is unknown or a multiplier is not a positive integer.
    """
    if isinstance(value, str):
        entries = [item.split(":") for item in value.split(",") if item.strip()]
    else:
        entries = [list(item) for item in value]

    plan = []
    for entry in entries:
        if len(entry) != 2:
            raise ConfigError(f"Invalid augmentation plan entry: {entry!r}")
        strategy, multiplier = str(entry[0]).strip(), entry[1]
        if strategy not in STRATEGIES:
            raise ConfigError(f"Unknown augmentation strategy '{strategy}'")
        try:
            multiplier = int(multiplier)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid multiplier for '{strategy}': {multiplier!r}") from e
        if multiplier < 1:
            raise ConfigError(f"Multiplier for '{strategy}' must be >= 1")
        plan.append((strategy, multiplier))
    return plan


class RunConfig:
    """Main configuration class of a DIDA run"""

    def __init__(self):
        self.paths = PathsConfig()
        self.emotion = EmotionConfig()
        self.train = TrainConfig()
        self.augment = AugmentConfig()
        self.pseudolabel = PseudoLabelConfig()
        self.synthetic = SyntheticParams()

    @property
    def seed(self) -> int:
        return self.train.seed

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir)

    @classmethod
    def from_file(cls, path: Optional[Union[str, Path]] = None,
                  overrides: Optional[Dict[str, Any]] = None,
                  preset: Optional[str] = None) -> "RunConfig":
        """
        Builds a configuration from defaults, an optional preset, a TOML file and CLI overrides.
        Later sources win: defaults < preset < file < overrides.

        Args:
            path (Optional[Union[str, Path]]): TOML file with section tables or flat keys.
            overrides (Optional[Dict[str, Any]]): Flat key/value pairs from the command line; None values are ignored.
            preset (Optional[str]): Name of a dataset preset ("rumoureval19" or "weibo16").

        Returns:
            RunConfig: The resolved and validated configuration.

        Raises:
            ConfigError: If the file cannot be parsed or contains unknown or invalid keys.
        """
        run_config = cls()
        if preset:
            run_config.apply_preset(preset)

        if path is not None:
            try:
                with open(path, "rb") as f:
                    data = tomllib.load(f)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"Cannot parse config file {path}: {e}") from e
            except FileNotFoundError as e:
                raise ConfigError(f"Config file not found: {path}") from e

            if preset_name := data.pop("preset", None):
                run_config.apply_preset(preset_name)
            for key, value in data.items():
                if key in SECTIONS and isinstance(value, dict):
                    for sub_key, sub_value in value.items():
                        run_config.set_value(sub_key, sub_value, section=key)
                else:
                    run_config.set_value(key, value)

        for key, value in (overrides or {}).items():
            if value is not None:
                run_config.set_value(key, value)

        run_config.validate()
        return run_config

    def apply_preset(self, name: str):
        """Applies the dataset-specific values of a published parameter column"""
        if name not in PRESETS:
            raise ConfigError(f"Unknown preset '{name}' (choose from {', '.join(PRESETS)})")
        for key, value in PRESETS[name].items():
            setattr(self.train, key, value)

    def set_value(self, key: str, value: Any, section: Optional[str] = None):
        """
        Sets one configuration value, routing flat keys to the section that owns them.
        Values are coerced to the field's declared shape (tuples, plans).

        Args:
            key (str): Field name.
            value (Any): New value.
            section (Optional[str]): Section name; looked up from the key when omitted.

        Raises:
            ConfigError: If the key is unknown.
        """
        if section is None:
            owners = [name for name, cls in SECTIONS.items()
                      if key in {f.name for f in fields(cls)}]
            if not owners:
                raise ConfigError(f"Unknown configuration key '{key}'")
            section = owners[0]
        elif section not in SECTIONS:
            raise ConfigError(f"Unknown configuration section '{section}'")

        target = getattr(self, section)
        field_names = {f.name for f in fields(target)}
        if key not in field_names:
            raise ConfigError(f"Unknown configuration key '{section}.{key}'")

        if key == "plan":
            value = parse_plan(value)
        elif isinstance(getattr(target, key), tuple) and isinstance(value, (list, str)):
            if isinstance(value, str):
                value = [item.strip() for item in value.split(",") if item.strip()]
            value = tuple(value)
            if key in ("split_ratios", "grid"):
                value = tuple(float(v) for v in value)
        setattr(target, key, value)

    def validate(self):
        """
        Checks cross-field constraints of the configuration.
        Raises on the first violation so the CLI can exit with a usage error.

        Raises:
            ConfigError: If any value is outside its allowed range.
        """
        train = self.train
        if train.variant not in VARIANTS:
            raise ConfigError(f"Unknown variant '{train.variant}' (choose from {', '.join(VARIANTS)})")
        if self.paths.data_format not in FORMATS:
            raise ConfigError(f"Unknown dataset format '{self.paths.data_format}'")
        for name in ("epochs", "batch_size", "max_text_len", "max_comments", "embedding_dim", "d_h"):
            if getattr(train, name) < 1:
                raise ConfigError(f"train.{name} must be >= 1")
        if train.learning_rate <= 0 or train.l2 < 0:
            raise ConfigError("learning_rate must be > 0 and l2 >= 0")
        if train.l2_scope not in L2_SCOPES:
            raise ConfigError(f"Unknown l2_scope '{train.l2_scope}' (choose from {', '.join(L2_SCOPES)})")
        if train.split_scheme not in ("ratio", "kfold"):
            raise ConfigError(f"Unknown split scheme '{train.split_scheme}'")
        if len(train.split_ratios) != 3 or abs(sum(train.split_ratios) - 1.0) > 1e-9 \
                or min(train.split_ratios) < 0:
            raise ConfigError(f"split_ratios must be three non-negative values summing to 1, got {train.split_ratios}")
        if train.folds < 2:
            raise ConfigError("folds must be >= 2")

        augment = self.augment
        if not 0 < augment.rate <= 0.3:
            raise ConfigError(f"augmentation rate must be in (0, 0.3], got {augment.rate}")
        if augment.scope not in ("news", "comments", "both"):
            raise ConfigError(f"Unknown augmentation scope '{augment.scope}'")
        if augment.translator not in ("stub", "http"):
            raise ConfigError(f"Unknown translator '{augment.translator}'")
        if augment.translator == "http" and not augment.translator_endpoint:
            raise ConfigError("translator 'http' needs translator_endpoint")
        if augment.max_attempts < 1 or augment.embedding_top_k < 1:
            raise ConfigError("max_attempts and embedding_top_k must be >= 1")
        if not augment.pivot_langs:
            raise ConfigError("pivot_langs must name at least one language")

        tau_p, tau_n = self.pseudolabel.thresholds()
        validate_thresholds(tau_p, tau_n)
        for value in self.pseudolabel.grid:
            validate_thresholds(value, value)

        if self.emotion.negation_window < 0:
            raise ConfigError("negation_window must be >= 0")

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """Returns the configuration as JSON-serializable nested dictionaries"""
        return {name: json.loads(json.dumps(asdict(getattr(self, name)))) for name in SECTIONS}

    def model_hash(self, emotion_dim: int, embedding_dim: int) -> str:
        """
        Hashes every setting that changes the shape or wiring of the network.
        Checkpoints store this hash and refuse to load under a different one.

        Args:
            emotion_dim (int): Width d of the emotion vector implied by the lexicon.
            embedding_dim (int): Width of the embedding table.

        Returns:
            str: Hex SHA-256 digest.
        """
        spec = self.train.variant_spec
        payload = {
            "d_h": self.train.d_h,
            "embedding_dim": embedding_dim,
            "emotion_dim": emotion_dim,
            "co_attention": spec.co_attention,
            "temporal": spec.temporal,
            "max_text_len": self.train.max_text_len,
            "max_comments": self.train.max_comments,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def create_directories(self) -> Path:
        """
        Creates the run output directory if it does not already exist.

        Returns:
            Path: The output directory.
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir

    def save(self, path: Optional[Union[str, Path]] = None) -> Path:
        """
        Writes the resolved configuration as JSON into the run directory.

        Args:
            path (Optional[Union[str, Path]]): Target file; defaults to `<output_dir>/config.json`.

        Returns:
            Path: The written file.
        """
        target = Path(path) if path is not None else self.create_directories() / "config.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        logger.debug(f"Saved resolved config to {target}")
        return target


def validate_thresholds(tau_p: float, tau_n: float):
    """
    Checks that both pseudo-label thresholds lie in (0.5, 1].
    Lower values would let one prediction qualify for both labels.

    Raises:
        ConfigError: If either threshold is out of range.
    """
    for name, value in (("tau_p", tau_p), ("tau_n", tau_n)):
        if not 0.5 < value <= 1.0:
            raise ConfigError(f"{name} must be in (0.5, 1], got {value}")


# Global configuration instance
config = RunConfig()
