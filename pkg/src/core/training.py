"""
Optimization loop, enhancement training, evaluation metrics, cross-validation and the
pseudo-label threshold grid.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, f1_score, mean_squared_error
from tqdm import tqdm

from config.config import RunConfig
from processors.dataset_processor import DatasetSplit, KFoldSplit, NewsRecord, make_splits
from processors.resource_loader import Resources
from src.core.augment import AugmentPlan, MaskedLMProvider
from src.core.emotion import EmotionExtractor
from src.core.errors import DataError, NumericalError
from src.core.network import DIDANetwork, ModelParams, PreparedRecord, prepare_record
from src.core.pseudolabel import PseudoLabeler, RoundReport
from src.core.translation import TranslatorClient

HISTORY_COLUMNS = ["phase", "epoch", "train_loss", "val_macro_f1", "val_accuracy"]


@dataclass
class MetricReport:
    """Accuracy, macro F1 and RMSE (in [0, 1]); cross-validation reports also hold the per-fold values"""
    macro_f1: float
    rmse: float
    accuracy: float
    n: int = 0
    per_fold: List["MetricReport"] = field(default_factory=list)

    @property
    def rmse_percent(self) -> float:
        return 100.0 * self.rmse

    def to_dict(self) -> Dict:
        data = {"macro_f1": self.macro_f1, "rmse": self.rmse, "rmse_x100": self.rmse_percent,
                "accuracy": self.accuracy, "n": self.n}
        if self.per_fold:
            data = {"per_fold": [fold.to_dict() for fold in self.per_fold], "mean": data}
        return data

    @classmethod
    def mean_of(cls, folds: Sequence["MetricReport"]) -> "MetricReport":
        return cls(
            macro_f1=float(np.mean([f.macro_f1 for f in folds])),
            rmse=float(np.mean([f.rmse for f in folds])),
            accuracy=float(np.mean([f.accuracy for f in folds])),
            n=sum(f.n for f in folds),
            per_fold=list(folds),
        )


def compute_metrics(labels: Sequence[int], probabilities: Sequence) -> MetricReport:
    """
    Scores predictions against labels.

    Args:
        labels (Sequence[int]): True labels (1 = fake).
        probabilities (Sequence): Either N x 2 class distributions or N class-1 probabilities.

    Returns:
        MetricReport: Accuracy and macro F1 of argmax predictions, RMSE of the class-1 probabilities.

    Raises:
        DataError: If there is nothing to score.
    """
    labels = np.asarray(labels, dtype=np.int64)
    P = np.asarray(probabilities, dtype=np.float64)
    if labels.size == 0:
        raise DataError("Cannot evaluate an empty record list")
    if P.ndim == 1:
        P = np.stack([1.0 - P, P], axis=1)
    predictions = P.argmax(axis=1)
    return MetricReport(
        macro_f1=float(f1_score(labels, predictions, labels=[0, 1], average="macro", zero_division=0)),
        rmse=float(math.sqrt(mean_squared_error(labels.astype(np.float64), P[:, 1]))),
        accuracy=float(accuracy_score(labels, predictions)),
        n=int(labels.size),
    )


class Adam:
    """Adam optimizer updating ModelParams arrays in place"""

    def __init__(self, params: ModelParams, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, grads: Dict[str, np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            self.params.arrays[name] -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


@dataclass
class TrainResult:
    params: ModelParams
    history: pd.DataFrame
    best_epoch: int
    best_val_macro_f1: float
    report: Optional[RoundReport] = None


class Trainer:
    """
    Trains DIDA networks on dataset splits.

    Records are prepared once and cached by id. Each epoch shuffles with a generator seeded by
    (seed, phase, epoch); the parameters with the best validation macro F1 (earliest on ties)
    are kept.
    """

    def __init__(self, resources: Resources, config: RunConfig):
        self.logger = logging.getLogger(__name__)
        self.resources = resources
        self.config = config
        self.extractor = EmotionExtractor(resources.lexicon, resources.tokenizer, config.emotion)
        self._prepared: Dict[str, PreparedRecord] = {}

    @property
    def emotion_dim(self) -> int:
        return self.extractor.d

    def config_hash(self) -> str:
        return self.config.model_hash(self.emotion_dim, self.resources.embeddings.d_g)

    def prepare(self, records: Sequence[NewsRecord]) -> List[PreparedRecord]:
        prepared = []
        for record in records:
            key = f"{record.id}\x00{record.label}"
            if key not in self._prepared:
                self._prepared[key] = prepare_record(record, self.resources, self.config.train, self.extractor)
            prepared.append(self._prepared[key])
        return prepared

    def new_network(self) -> DIDANetwork:
        return DIDANetwork.initialize(self.resources.embeddings, self.emotion_dim, self.config.train)

    def network_for(self, params: ModelParams) -> DIDANetwork:
        return DIDANetwork(params, self.resources.embeddings, self.config.train.variant_spec)

    # -- metrics ---------------------------------------------------------------------------

    def evaluate_prepared(self, network: DIDANetwork, prepared: Sequence[PreparedRecord]) -> MetricReport:
        if not prepared:
            raise DataError("Cannot evaluate an empty record list")
        unlabeled = [r.record_id for r in prepared if r.label is None]
        if unlabeled:
            raise DataError(f"Cannot evaluate unlabeled records: {unlabeled[:5]}")
        P = np.stack([network.predict_proba(r) for r in prepared])
        return compute_metrics([r.label for r in prepared], P)

    def evaluate(self, params: ModelParams, records: Sequence[NewsRecord]) -> MetricReport:
        """
        Scores a parameter set on labeled records.

        Returns:
            MetricReport: Accuracy, macro F1 and RMSE.

        Raises:
            DataError: If the record list is empty or holds unlabeled records.
        """
        return self.evaluate_prepared(self.network_for(params), self.prepare(records))

    # -- optimization ----------------------------------------------------------------------

    def _batch_items(self, batch: Sequence[Tuple[PreparedRecord, int, bool]]) -> List[Tuple[PreparedRecord, int, float]]:
        n_orig = sum(1 for _, _, pseudo in batch if not pseudo)
        n_pseudo = len(batch) - n_orig
        weight_orig = 1.0 / n_orig if n_orig else 0.0
        weight_pseudo = self.config.train.pseudo_weight / n_pseudo if n_pseudo else 0.0
        return [(rec, y, weight_pseudo if pseudo else weight_orig) for rec, y, pseudo in batch]

    def _run_phase(self, network: DIDANetwork, examples: Sequence[Tuple[PreparedRecord, int, bool]],
                   validation: Sequence[PreparedRecord], epochs: int, phase: int,
                   best: Tuple[ModelParams, int, float]) -> Tuple[List[Dict], Tuple[ModelParams, int, float]]:
        train = self.config.train
        optimizer = Adam(network.params, train.learning_rate, train.beta1, train.beta2, train.adam_eps)
        rows = []
        best_params, best_epoch, best_f1 = best
        for epoch in tqdm(range(1, epochs + 1), desc=f"phase {phase}", disable=not train.progress):
            order = np.random.default_rng([train.seed, phase, epoch]).permutation(len(examples))
            losses = []
            for batch_index, start in enumerate(range(0, len(order), train.batch_size)):
                batch = [examples[i] for i in order[start:start + train.batch_size]]
                try:
                    loss, grads = network.loss_and_gradients(self._batch_items(batch), l2=train.l2,
                                                              l2_scope=train.l2_scope)
                except NumericalError as e:
                    raise NumericalError(f"Training diverged at phase {phase}, epoch {epoch}, batch {batch_index}: {e}") from e
                optimizer.step(grads)
                losses.append(loss)

            val = self.evaluate_prepared(network, validation) if validation else None
            val_f1 = val.macro_f1 if val else math.nan
            rows.append({"phase": phase, "epoch": epoch, "train_loss": float(np.mean(losses)),
                         "val_macro_f1": val_f1, "val_accuracy": val.accuracy if val else math.nan})
            improved = val is not None and val_f1 > best_f1
            if best_params is None or improved or val is None:
                best_params, best_epoch = network.params.copy(), epoch
                if improved:
                    best_f1 = val_f1
            self.logger.debug(f"phase {phase} epoch {epoch}: loss={rows[-1]['train_loss']:.4f} val_f1={val_f1:.4f}")
        return rows, (best_params, best_epoch, best_f1)

    def train(self, split: DatasetSplit) -> TrainResult:
        """
        Trains a fresh network on the split's training records for `epochs` epochs of
        shuffled mini-batches minimizing mean cross entropy plus L2 on weight matrices.

        Args:
            split (DatasetSplit): Labeled train/validation/test records.

        Returns:
            TrainResult: Best parameters by validation macro F1 and the per-epoch history.

        Raises:
            DataError: If the training set is empty.
            NumericalError: If the loss or a gradient becomes non-finite (names phase, epoch and batch).
        """
        if not split.train:
            raise DataError("Training split is empty")
        network = self.new_network()
        examples = [(rec, rec.label, False) for rec in self.prepare(split.train)]
        validation = self.prepare(split.validation)
        self.logger.info(f"🚀 Training {self.config.train.variant} on {len(examples)} records "
                         f"({len(validation)} validation) for {self.config.train.epochs} epochs")
        rows, (params, epoch, f1) = self._run_phase(network, examples, validation, self.config.train.epochs,
                                                    phase=1, best=(None, 0, -math.inf))
        self.logger.info(f"✅ Best epoch {epoch} with validation macro F1 {f1:.4f}")
        return TrainResult(params, pd.DataFrame(rows, columns=HISTORY_COLUMNS), epoch, f1)

    def enhance(self, phase1: TrainResult, split: DatasetSplit, plan: AugmentPlan,
                thresholds: Tuple[float, float], translator: Optional[TranslatorClient] = None,
                masked_lm: Optional[MaskedLMProvider] = None) -> TrainResult:
        """
        Runs the enhancement round on top of a phase-1 result and continues training on the
        expanded set (phases 2 and 3). With nothing selected the phase-1 parameters are returned
        unchanged.
        """
        labeler = PseudoLabeler(self.network_for(phase1.params.copy()), self.resources, self.config)
        expanded, report = labeler.enhancement_round(split.train, plan, thresholds, translator, masked_lm)
        if not expanded.pseudo:
            return TrainResult(phase1.params, phase1.history, phase1.best_epoch, phase1.best_val_macro_f1, report)

        network = self.network_for(phase1.params.copy())
        examples = [(rec, rec.label, False) for rec in self.prepare(expanded.originals)]
        examples += [(rec, rec.label, True) for rec in self.prepare(expanded.pseudo_records())]
        epochs = self.config.train.enhancement_epochs or self.config.train.epochs
        rows, (params, epoch, f1) = self._run_phase(
            network, examples, self.prepare(split.validation), epochs, phase=3,
            best=(phase1.params, phase1.best_epoch, phase1.best_val_macro_f1))
        history = pd.concat([phase1.history, pd.DataFrame(rows, columns=HISTORY_COLUMNS)], ignore_index=True)
        self.logger.info(f"✅ Enhanced training done; best validation macro F1 {f1:.4f}")
        return TrainResult(params, history, epoch, f1, report)

    def train_with_enhancement(self, split: DatasetSplit, plan: AugmentPlan,
                               thresholds: Optional[Tuple[float, float]] = None,
                               translator: Optional[TranslatorClient] = None,
                               masked_lm: Optional[MaskedLMProvider] = None) -> TrainResult:
        """
        Phase 1 trains on labeled data, phase 2 runs the enhancement round and phase 3 continues
        from the phase-1 best parameters on originals plus pseudo-labeled variants. The best
        checkpoint by validation macro F1 is taken over all phases.

        Args:
            split (DatasetSplit): Labeled split; pseudo-labels only ever join its training part.
            plan (AugmentPlan): Augmentation plan.
            thresholds (Optional[Tuple[float, float]]): (tau_p, tau_n); configured values by default.
            translator (Optional[TranslatorClient]): Client for back-translation.
            masked_lm (Optional[MaskedLMProvider]): Provider for masked-LM substitution.

        Returns:
            TrainResult: Parameters, combined history and the round report.
        """
        thresholds = thresholds or self.config.pseudolabel.thresholds()
        return self.enhance(self.train(split), split, plan, thresholds, translator, masked_lm)

    def tune_thresholds(self, split: DatasetSplit, plan: AugmentPlan,
                        translator: Optional[TranslatorClient] = None,
                        masked_lm: Optional[MaskedLMProvider] = None) -> Tuple[Tuple[float, float], pd.DataFrame, TrainResult]:
        """
        Grid search of (tau_p, tau_n) over the configured grid maximizing validation macro F1.
        Phase 1 runs once and is shared by every grid point.

        Returns:
            Tuple[Tuple[float, float], pd.DataFrame, TrainResult]: Best thresholds (first in grid
            order on ties), the full grid table and the result trained with them.
        """
        if not split.validation:
            raise DataError("Threshold tuning needs a validation split")
        phase1 = self.train(split)
        grid = self.config.pseudolabel.grid
        rows, best, best_result = [], None, None
        for tau_p in grid:
            for tau_n in grid:
                result = self.enhance(phase1, split, plan, (tau_p, tau_n), translator, masked_lm)
                f1 = self.evaluate(result.params, split.validation).macro_f1
                rows.append({"tau_p": tau_p, "tau_n": tau_n, "val_macro_f1": f1,
                             "selected": result.report.selected if result.report else 0})
                if best is None or f1 > best[2]:
                    best, best_result = (tau_p, tau_n, f1), result
        self.logger.info(f"📊 Best thresholds tau_p={best[0]} tau_n={best[1]} (validation macro F1 {best[2]:.4f})")
        return (best[0], best[1]), pd.DataFrame(rows), best_result

    def fit(self, split: DatasetSplit, plan: Optional[AugmentPlan] = None,
            translator: Optional[TranslatorClient] = None,
            masked_lm: Optional[MaskedLMProvider] = None) -> TrainResult:
        """Trains the configured variant, running the enhancement round when the variant augments"""
        if self.config.train.variant_spec.augmentation == "none" or plan is None:
            return self.train(split)
        if self.config.pseudolabel.tune:
            return self.tune_thresholds(split, plan, translator, masked_lm)[2]
        return self.train_with_enhancement(split, plan, None, translator, masked_lm)

    def crossvalidate(self, records: Sequence[NewsRecord], plan: Optional[AugmentPlan] = None,
                      translator: Optional[TranslatorClient] = None,
                      masked_lm: Optional[MaskedLMProvider] = None) -> MetricReport:
        """
        k-fold protocol: trains one network per fold and scores it on that fold's test records.

        Returns:
            MetricReport: Mean metrics with the per-fold reports attached.
        """
        splits = make_splits(list(records), KFoldSplit(self.config.train.folds), self.config.seed)
        folds = []
        for split in splits:
            self.logger.info(f"📄 Fold {split.fold_id + 1}/{len(splits)}")
            result = self.fit(split, plan, translator, masked_lm)
            report = self.evaluate(result.params, split.test)
            self.logger.info(f"📊 Fold {split.fold_id + 1}: macro F1 {report.macro_f1:.4f}, "
                             f"accuracy {report.accuracy:.4f}, RMSE {report.rmse:.4f}")
            folds.append(report)
        return MetricReport.mean_of(folds)


def write_history(history: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False)
    return path


def write_metrics(metrics: Union[MetricReport, Dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = metrics.to_dict() if isinstance(metrics, MetricReport) else metrics
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    return path


def train(split: DatasetSplit, config: RunConfig, resources: Resources) -> Tuple[ModelParams, pd.DataFrame]:
    result = Trainer(resources, config).train(split)
    return result.params, result.history


def train_with_enhancement(split: DatasetSplit, config: RunConfig, resources: Resources, plan: AugmentPlan,
                           thresholds: Tuple[float, float], translator: Optional[TranslatorClient] = None,
                           ) -> Tuple[ModelParams, pd.DataFrame, Optional[RoundReport]]:
    result = Trainer(resources, config).train_with_enhancement(split, plan, thresholds, translator)
    return result.params, result.history, result.report


def evaluate(params: ModelParams, records: Sequence[NewsRecord], config: RunConfig,
             resources: Resources) -> MetricReport:
    return Trainer(resources, config).evaluate(params, records)


def crossvalidate(records: Sequence[NewsRecord], config: RunConfig, resources: Resources,
                  plan: Optional[AugmentPlan] = None,
                  translator: Optional[TranslatorClient] = None) -> MetricReport:
    return Trainer(resources, config).crossvalidate(records, plan, translator)
