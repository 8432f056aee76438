"""
Confidence-gated pseudo-labeling of augmented variants and the gated pseudo-label loss.
"""
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from config.config import RunConfig, validate_thresholds
from processors.dataset_processor import NewsRecord
from processors.resource_loader import Resources
from src.core.augment import AugmentedRecord, Augmenter, AugmentPlan, MaskedLMProvider
from src.core.emotion import EmotionExtractor
from src.core.errors import DidaError
from src.core.network import DIDANetwork, prepare_record, supervised_loss
from src.core.translation import TranslatorClient

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoExample:
    """A variant with its model probability p, pseudo label and gate"""
    variant: AugmentedRecord
    p: float
    y_tilde: int
    gate: int = 1


@dataclass
class RoundReport:
    """Summary of one enhancement round"""
    round: int
    variants: int
    selected_pos: int
    selected_neg: int
    tau_p: float
    tau_n: float
    dropped: int = 0
    scoring_failures: int = 0
    mode: str = "gated"
    per_strategy: Dict[str, Dict[str, int]] = field(default_factory=dict)
    augmentation: Dict = field(default_factory=dict)

    @property
    def selected(self) -> int:
        return self.selected_pos + self.selected_neg

    def to_dict(self) -> Dict:
        return asdict(self)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path


@dataclass(frozen=True)
class ExpandedSet:
    """Original labeled records plus pseudo-labeled variants (flagged separately for the loss)"""
    originals: Tuple[NewsRecord, ...]
    pseudo: Tuple[PseudoExample, ...] = ()

    def __len__(self) -> int:
        return len(self.originals) + len(self.pseudo)

    def pseudo_records(self) -> List[NewsRecord]:
        """Variants as records carrying their pseudo label"""
        return [NewsRecord(e.variant.record.id, e.variant.record.news_text, e.variant.record.comments, e.y_tilde)
                for e in self.pseudo]


def select(scored: Sequence[Tuple[AugmentedRecord, float]], tau_p: float, tau_n: float) -> List[PseudoExample]:
    """
    Keeps a variant with label 1 iff p ≥ tau_p and with label 0 iff 1 − p ≥ tau_n.

    Args:
        scored (Sequence[Tuple[AugmentedRecord, float]]): (variant, p) pairs.
        tau_p (float): Positive threshold in (0.5, 1].
        tau_n (float): Negative threshold in (0.5, 1].

    Returns:
        List[PseudoExample]: Admitted examples (gate 1) in input order.

    Raises:
        ConfigError: If a threshold is not in (0.5, 1].
    """
    validate_thresholds(tau_p, tau_n)
    selected = []
    for variant, p in scored:
        if p >= tau_p:
            selected.append(PseudoExample(variant, p, y_tilde=1))
        elif 1.0 - p >= tau_n:
            selected.append(PseudoExample(variant, p, y_tilde=0))
    return selected


def pseudo_loss(batch: Sequence[PseudoExample], y_hat: Sequence[float]) -> float:
    """
    Gated cross entropy averaged over the examples whose gate is 1.

    Args:
        batch (Sequence[PseudoExample]): Pseudo-labeled examples.
        y_hat (Sequence[float]): Current model probabilities of class 1, one per example.

    Returns:
        float: The loss; 0 with a warning when every gate is 0.
    """
    gated = sum(e.gate for e in batch)
    if gated == 0:
        logger.warning("⚠️ Pseudo-label batch has no gated example; loss is 0")
        return 0.0
    return sum(e.gate * supervised_loss(e.y_tilde, p) for e, p in zip(batch, y_hat, strict=True)) / gated


class PseudoLabeler:
    """
    Scores augmented variants with a trained network and turns the confident ones into
    pseudo-labeled training examples.
    """

    def __init__(self, network: DIDANetwork, resources: Resources, config: RunConfig):
        self.logger = logging.getLogger(__name__)
        self.network = network
        self.resources = resources
        self.config = config
        self.extractor = EmotionExtractor(resources.lexicon, resources.tokenizer, config.emotion)
        self.scoring_failures = 0

    def score_variants(self, variants: Sequence[AugmentedRecord]) -> List[Tuple[AugmentedRecord, float]]:
        """
        Computes the class-1 probability of every variant, in input order.
        Variants that fail to encode are skipped and counted in `scoring_failures`.
        """
        self.scoring_failures = 0
        scored = []
        for variant in variants:
            try:
                prepared = prepare_record(variant.record, self.resources, self.config.train, self.extractor)
                scored.append((variant, float(self.network.predict_proba(prepared)[1])))
            except DidaError as e:
                self.scoring_failures += 1
                self.logger.warning(f"⚠️ Could not score variant {variant.record.id}: {e}")
        return scored

    def current_probabilities(self, batch: Sequence[PseudoExample]) -> List[float]:
        return [float(self.network.predict_proba(
            prepare_record(e.variant.record, self.resources, self.config.train, self.extractor))[1])
            for e in batch]

    def pseudo_loss(self, batch: Sequence[PseudoExample]) -> float:
        return pseudo_loss(batch, self.current_probabilities(batch))

    def enhancement_round(self, labeled: Sequence[NewsRecord], plan: AugmentPlan,
                          thresholds: Tuple[float, float],
                          translator: Optional[TranslatorClient] = None,
                          masked_lm: Optional[MaskedLMProvider] = None,
                          round_index: int = 1) -> Tuple[ExpandedSet, RoundReport]:
        """
        Augments the labeled records, scores the variants and admits the confident ones.

        With the label-inheriting variant ("dida_a") every variant takes its parent's label
        instead of going through scoring and selection.

        Args:
            labeled (Sequence[NewsRecord]): Training records the network was trained on.
            plan (AugmentPlan): Augmentation plan.
            thresholds (Tuple[float, float]): (tau_p, tau_n).
            translator (Optional[TranslatorClient]): Client for back-translation entries.
            masked_lm (Optional[MaskedLMProvider]): Provider for masked_lm entries.
            round_index (int): Round number written into the report.

        Returns:
            Tuple[ExpandedSet, RoundReport]: The expanded training set and the round report.
        """
        tau_p, tau_n = thresholds
        validate_thresholds(tau_p, tau_n)
        augmenter = Augmenter(self.resources, self.config.augment, translator, masked_lm)
        variants = augmenter.augment_corpus(labeled, plan, self.config.seed, progress=self.config.train.progress)
        mode = self.config.train.variant_spec.augmentation

        if mode == "inherit":
            parents = {r.id: r.label for r in labeled}
            selected = [PseudoExample(v, math.nan, y_tilde=parents[v.parent_id]) for v in variants]
            self.scoring_failures = 0
        else:
            selected = select(self.score_variants(variants), tau_p, tau_n)

        per_strategy: Dict[str, Dict[str, int]] = defaultdict(lambda: {"variants": 0, "pos": 0, "neg": 0})
        for v in variants:
            per_strategy[v.strategy]["variants"] += 1
        for e in selected:
            per_strategy[e.variant.strategy]["pos" if e.y_tilde == 1 else "neg"] += 1

        counts = Counter(e.y_tilde for e in selected)
        report = RoundReport(
            round=round_index,
            variants=len(variants),
            selected_pos=counts[1],
            selected_neg=counts[0],
            tau_p=tau_p,
            tau_n=tau_n,
            dropped=len(variants) - len(selected),
            scoring_failures=self.scoring_failures,
            mode=mode,
            per_strategy=dict(per_strategy),
            augmentation=augmenter.last_report.to_dict(),
        )
        if not selected:
            self.logger.warning(f"⚠️ No variant selected (tau_p={tau_p}, tau_n={tau_n}); training set unchanged")
            return ExpandedSet(tuple(labeled)), report

        self.logger.info(f"📊 Enhancement round {round_index}: {report.selected_pos} positive and "
                         f"{report.selected_neg} negative pseudo-labels from {len(variants)} variants")
        return ExpandedSet(tuple(labeled), tuple(selected)), report
