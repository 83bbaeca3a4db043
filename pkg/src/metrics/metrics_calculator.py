"""
Metrics Calculator

This module computes multi-label evaluation metrics: micro/macro F1 from
per-label confusion counts, micro/macro ROC AUC, and precision at n.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger

try:
    from sklearn.metrics import roc_auc_score
    SKLEARN_AVAILABLE = True
except ImportError:
    SKLEARN_AVAILABLE = False
    logger.error("scikit-learn is required for ROC AUC computation!")

from ..errors import MetricsError, ShapeError

DEFAULT_THRESHOLD = 0.5
RECORD_DECIMALS = 4


@dataclass
class PredictionSet:
    """Documents × labels probabilities paired with the binary truth matrix."""

    probabilities: np.ndarray
    truth: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.truth = np.asarray(self.truth, dtype=np.float64)
        if self.probabilities.ndim != 2 or self.probabilities.shape != self.truth.shape:
            raise ShapeError(
                f"probabilities {self.probabilities.shape} and truth {self.truth.shape} must be matching matrices"
            )
        if not np.isin(self.truth, (0.0, 1.0)).all():
            raise MetricsError("truth entries must be 0 or 1")
        if self.probabilities.size and not ((self.probabilities >= 0.0) & (self.probabilities <= 1.0)).all():
            raise MetricsError("probabilities must lie in [0, 1]")

    @property
    def num_docs(self) -> int:
        return self.probabilities.shape[0]

    @property
    def num_labels(self) -> int:
        return self.probabilities.shape[1]


@dataclass
class ConfusionCounts:
    """Per-label true positive, false positive and false negative counts."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def per_label(self) -> List[Dict[str, int]]:
        return [{"tp": int(a), "fp": int(b), "fn": int(c)} for a, b, c in zip(self.tp, self.fp, self.fn)]


@dataclass
class MetricsReport:
    """Evaluation summary; every metric lies in [0, 1]."""

    macro_auc: float
    micro_auc: float
    macro_f1: float
    micro_f1: float
    p_at_n: Dict[int, float] = field(default_factory=dict)
    counts: Optional[ConfusionCounts] = None

    def to_dict(self) -> Dict[str, float]:
        values = {
            "macro_auc": self.macro_auc,
            "micro_auc": self.micro_auc,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
        }
        for n in sorted(self.p_at_n):
            values[f"p@{n}"] = self.p_at_n[n]
        return values

    def to_record(self) -> str:
        """Flat `name=value` record with four fractional digits."""
        return " ".join(f"{name}={value:.{RECORD_DECIMALS}f}" for name, value in self.to_dict().items())

    @classmethod
    def from_record(cls, record: str) -> "MetricsReport":
        values: Dict[str, float] = {}
        for item in record.split():
            name, sep, value = item.partition("=")
            if not sep:
                raise MetricsError(f"malformed metrics record item: {item!r}")
            values[name] = float(value)
        try:
            p_at_n = {int(name[2:]): v for name, v in values.items() if name.startswith("p@")}
            return cls(
                macro_auc=values["macro_auc"],
                micro_auc=values["micro_auc"],
                macro_f1=values["macro_f1"],
                micro_f1=values["micro_f1"],
                p_at_n=p_at_n,
            )
        except (KeyError, ValueError) as e:
            raise MetricsError(f"incomplete metrics record: {e}") from None

    def metric(self, name: str) -> float:
        return self.to_dict()[name]


def confusion_counts(pred: PredictionSet) -> ConfusionCounts:
    """
    Binarize at the threshold (≥ threshold is positive) and count per label.
    """
    predicted = pred.probabilities >= pred.threshold
    actual = pred.truth == 1.0
    return ConfusionCounts(
        tp=(predicted & actual).sum(axis=0),
        fp=(predicted & ~actual).sum(axis=0),
        fn=(~predicted & actual).sum(axis=0),
    )


def micro_f1(counts: ConfusionCounts) -> float:
    """Σ2TP / Σ(2TP + FP + FN), pooled over labels; 0 when the denominator is 0."""
    numerator = 2.0 * counts.tp.sum()
    denominator = numerator + counts.fp.sum() + counts.fn.sum()
    return float(numerator / denominator) if denominator > 0 else 0.0


def macro_f1(counts: ConfusionCounts) -> float:
    """Mean of per-label F1; a label with TP = FP = FN = 0 contributes 0."""
    if counts.tp.size == 0:
        return 0.0
    numerator = 2.0 * counts.tp
    denominator = numerator + counts.fp + counts.fn
    per_label = np.divide(numerator, denominator, out=np.zeros_like(numerator, dtype=np.float64), where=denominator > 0)
    return float(per_label.mean())


def roc_auc(pred: PredictionSet, mode: str = "micro") -> float:
    """
    ROC AUC as the probability that a random positive outscores a random negative (ties ½).

    Args:
        pred: Predictions and truth
        mode: "micro" pools every (document, label) pair; "macro" averages
            per-label AUC over labels with at least one positive and one negative

    Returns:
        AUC in [0, 1]

    Raises:
        MetricsError: If no valid pair set exists
    """
    if not SKLEARN_AVAILABLE:
        raise ImportError("scikit-learn is required for ROC AUC computation")

    if mode == "micro":
        truth = pred.truth.ravel()
        if truth.min(initial=1.0) == truth.max(initial=0.0):
            raise MetricsError("micro AUC needs at least one positive and one negative pair")
        return float(roc_auc_score(truth, pred.probabilities.ravel()))

    if mode == "macro":
        scores = []
        skipped = 0
        for label in range(pred.num_labels):
            column = pred.truth[:, label]
            if column.min(initial=1.0) == column.max(initial=0.0):
                skipped += 1
                continue
            scores.append(roc_auc_score(column, pred.probabilities[:, label]))
        if not scores:
            raise MetricsError(f"macro AUC undefined: all {skipped} labels lack a positive or a negative")
        if skipped:
            logger.debug(f"macro AUC skipped {skipped} degenerate label(s)")
        return float(np.mean(scores))

    raise ValueError(f"Unknown AUC mode: {mode}. Expected 'micro' or 'macro'")


def top_n_labels(scores: np.ndarray, n: int) -> np.ndarray:
    """Indices of the n highest scores per row; ties go to the lower label index."""
    return np.argsort(-scores, axis=1, kind="stable")[:, :n]


def precision_at_n(pred: PredictionSet, n: int) -> float:
    """
    Mean over documents of the fraction of the n top-scored labels present in the truth.

    Raises:
        MetricsError: If n is not in [1, number of labels]
    """
    if not 1 <= n <= pred.num_labels:
        raise MetricsError(f"precision@{n} needs 1 <= n <= {pred.num_labels} labels")
    if pred.num_docs == 0:
        return 0.0
    top = top_n_labels(pred.probabilities, n)
    hits = np.take_along_axis(pred.truth, top, axis=1).sum(axis=1)
    return float((hits / n).mean())


def evaluate_all(pred: PredictionSet, n_list: Iterable[int] = (5, 8, 15)) -> MetricsReport:
    """
    Compute every metric for a prediction set.

    Args:
        pred: Predictions and truth
        n_list: Cut-offs for precision at n

    Returns:
        MetricsReport
    """
    counts = confusion_counts(pred)
    return MetricsReport(
        macro_auc=roc_auc(pred, "macro"),
        micro_auc=roc_auc(pred, "micro"),
        macro_f1=macro_f1(counts),
        micro_f1=micro_f1(counts),
        p_at_n={int(n): precision_at_n(pred, int(n)) for n in n_list},
        counts=counts,
    )


class MetricsCalculator:
    """
    Evaluates predictions with the threshold and cut-offs from the `evaluation` config section.
    """

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize the metrics calculator with configuration.

        Args:
            config: Configuration dictionary
        """
        self.config = config
        self.evaluation_config = config.get("evaluation", {})
        self.threshold = self.evaluation_config.get("threshold", DEFAULT_THRESHOLD)
        self.n_list: List[int] = list(self.evaluation_config.get("n_list", [5, 8, 15]))

        logger.debug("Metrics Calculator initialized")

    def usable_n(self, num_labels: int, n_list: Optional[Sequence[int]] = None) -> List[int]:
        """Cut-offs not exceeding the label count."""
        requested = list(n_list) if n_list is not None else self.n_list
        usable = [n for n in requested if n <= num_labels]
        dropped = sorted(set(requested) - set(usable))
        if dropped:
            logger.warning(f"Skipping precision@n for n={dropped}: only {num_labels} labels")
        return usable

    def evaluate(
        self,
        probabilities: np.ndarray,
        truth: np.ndarray,
        n_list: Optional[Sequence[int]] = None,
    ) -> MetricsReport:
        pred = PredictionSet(probabilities, truth, self.threshold)
        try:
            return evaluate_all(pred, self.usable_n(pred.num_labels, n_list))
        except Exception as e:
            logger.error(f"Evaluation failed: {str(e)}")
            raise
