"""
Synthetic Corpus Generator

This module generates labelled corpora with planted structure so the model
can be checked at desk scale. Every label owns a set of trigger words that
appear only in documents carrying that label; labels can also be made to
co-occur. Filler words carry no signal.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..errors import ConfigError
from .data_processor import SPLITS, Corpus, Document, LabelIndex, Vocabulary

MAX_NOISE_RATE = 0.1


@dataclass
class SyntheticSpec:
    """
    Parameters of a synthetic corpus.

    `noise_rate` is the probability that a trigger word of an active label is
    not emitted. `weak_labels` overrides it per label, which moves part of the
    signal for those labels into co-occurrence.
    """

    vocab_size: int = 600
    num_labels: int = 30
    docs_per_split: Dict[str, int] = field(default_factory=lambda: {"train": 5000, "val": 500, "test": 500})
    doc_length: Tuple[int, int] = (40, 80)
    triggers_per_label: int = 2
    base_rates: Union[float, List[float]] = 0.1
    cooccurrence: List[Tuple[int, int, float]] = field(default_factory=list)
    noise_rate: float = 0.05
    weak_labels: Dict[int, float] = field(default_factory=dict)
    seed: int = 7

    def __post_init__(self):
        self.doc_length = tuple(self.doc_length)
        self.cooccurrence = [tuple(pair) for pair in self.cooccurrence]
        self.weak_labels = {int(k): float(v) for k, v in self.weak_labels.items()}
        self.validate()

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "SyntheticSpec":
        known = {k: v for k, v in values.items() if k in cls.__dataclass_fields__}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"Unknown synthetic spec field(s): {', '.join(sorted(unknown))}")
        return cls(**known)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["doc_length"] = list(self.doc_length)
        values["cooccurrence"] = [list(pair) for pair in self.cooccurrence]
        return values

    @property
    def num_fillers(self) -> int:
        return self.vocab_size - self.num_labels * self.triggers_per_label

    def label_base_rates(self) -> np.ndarray:
        if isinstance(self.base_rates, (int, float)):
            return np.full(self.num_labels, float(self.base_rates))
        return np.asarray(self.base_rates, dtype=np.float64)

    def validate(self) -> None:
        if self.num_labels < 1 or self.triggers_per_label < 1:
            raise ConfigError("num_labels and triggers_per_label must be positive")
        if self.num_fillers < 1:
            raise ConfigError(
                f"infeasible spec: {self.num_labels} labels × {self.triggers_per_label} triggers "
                f"leave no filler words in a vocabulary of {self.vocab_size}"
            )
        lo, hi = self.doc_length
        if not 1 <= lo <= hi:
            raise ConfigError(f"doc_length must satisfy 1 <= min <= max, got {self.doc_length}")
        if set(self.docs_per_split) - set(SPLITS) or any(n < 0 for n in self.docs_per_split.values()):
            raise ConfigError(f"docs_per_split needs non-negative counts for splits {SPLITS}")

        rates = self.label_base_rates()
        if rates.shape != (self.num_labels,):
            raise ConfigError(f"base_rates must be a scalar or a list of {self.num_labels} values")
        probabilities = list(rates) + [p for _, _, p in self.cooccurrence] + list(self.weak_labels.values())
        if any(not 0.0 <= p <= 1.0 for p in probabilities):
            raise ConfigError("all synthetic probabilities must lie in [0, 1]")
        if not 0.0 <= self.noise_rate <= MAX_NOISE_RATE:
            raise ConfigError(f"noise_rate must be in [0, {MAX_NOISE_RATE}] so triggers are emitted with probability >= 0.9")
        for source, target, _ in self.cooccurrence:
            if not (0 <= source < self.num_labels and 0 <= target < self.num_labels) or source == target:
                raise ConfigError(f"invalid co-occurrence pair ({source}, {target})")
        if any(not 0 <= label < self.num_labels for label in self.weak_labels):
            raise ConfigError("weak_labels refers to an unknown label")

    def bayes_recall_bound(self) -> float:
        """Recall of the trigger-presence rule for labels without an override."""
        return 1.0 - self.noise_rate ** self.triggers_per_label

    def expected_marginals(self) -> np.ndarray:
        """
        Expected label frequencies after co-occurrence boosting.

        Exact when no co-occurrence source is itself a target; otherwise an
        independence approximation.
        """
        marginals = self.label_base_rates().copy()
        for source, target, p in self.cooccurrence:
            marginals[target] = 1.0 - (1.0 - marginals[target]) * (1.0 - marginals[source] * p)
        return marginals


def trigger_words(spec: SyntheticSpec) -> List[List[str]]:
    return [[f"t{label:03d}_{j}" for j in range(spec.triggers_per_label)] for label in range(spec.num_labels)]


def filler_words(spec: SyntheticSpec) -> List[str]:
    return [f"w{i:05d}" for i in range(spec.num_fillers)]


def _sample_labels(spec: SyntheticSpec, rates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    active = rng.random(spec.num_labels) < rates
    for source, target, p in spec.cooccurrence:
        if active[source] and rng.random() < p:
            active[target] = True
    return active


def _sample_tokens(
    spec: SyntheticSpec,
    active: np.ndarray,
    trigger_ids: Sequence[Sequence[int]],
    filler_ids: np.ndarray,
    rng: np.random.Generator,
) -> List[int]:
    lo, hi = spec.doc_length
    length = int(rng.integers(lo, hi + 1))

    planted = []
    for label in np.flatnonzero(active):
        drop = spec.weak_labels.get(int(label), spec.noise_rate)
        for token in trigger_ids[label]:
            if rng.random() >= drop:
                planted.append(token)

    length = max(length, len(planted))
    tokens = filler_ids[rng.integers(0, len(filler_ids), size=length)]
    if planted:
        positions = rng.choice(length, size=len(planted), replace=False)
        tokens[positions] = planted
    return tokens.tolist()


def generate_synthetic(spec: SyntheticSpec) -> Tuple[Corpus, Vocabulary]:
    """
    Generate a corpus with planted trigger words and label co-occurrences.

    Each document samples its label set (base rates, then co-occurrence
    boosts), emits the trigger words of its active labels, and fills the
    remaining positions with filler words.

    Args:
        spec: Synthetic corpus parameters

    Returns:
        Tuple of (corpus, vocabulary); deterministic for a fixed seed
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    triggers = trigger_words(spec)
    fillers = filler_words(spec)
    vocab = Vocabulary.from_words([w for group in triggers for w in group] + fillers)
    label_index = LabelIndex(f"L{label:03d}" for label in range(spec.num_labels))

    trigger_ids = [vocab.encode(group) for group in triggers]
    filler_ids = np.array(vocab.encode(fillers), dtype=np.int64)
    rates = spec.label_base_rates()

    documents = []
    for split in SPLITS:
        for i in range(spec.docs_per_split.get(split, 0)):
            active = _sample_labels(spec, rates, rng)
            tokens = _sample_tokens(spec, active, trigger_ids, filler_ids, rng)
            documents.append(
                Document(
                    id=f"{split}-{i:05d}",
                    tokens=tuple(tokens),
                    labels=frozenset(int(l) for l in np.flatnonzero(active)),
                    split=split,
                )
            )

    if spec.bayes_recall_bound() < 0.9048:
        logger.warning("Trigger emission is too noisy for the 0.95 micro-F1 guarantee")
    logger.info(
        f"Generated {len(documents)} synthetic documents over {spec.num_labels} labels "
        f"and {len(vocab)} tokens (seed={spec.seed})"
    )
    corpus = Corpus(
        documents=documents,
        vocab=vocab,
        label_index=label_index,
        metadata={"synthetic_spec": spec.to_dict()},
    )
    return corpus, vocab


class SyntheticCorpusGenerator:
    """
    Generates synthetic corpora according to the `synthetic` section of the configuration.
    """

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize the generator with configuration.

        Args:
            config: Configuration dictionary
        """
        self.config = config
        self.spec = SyntheticSpec.from_dict(config.get("synthetic", {}))

        logger.debug("Synthetic Corpus Generator initialized")

    def generate(self) -> Tuple[Corpus, Vocabulary]:
        """
        Generate the configured corpus.

        Returns:
            Tuple of (corpus, vocabulary)
        """
        try:
            return generate_synthetic(self.spec)
        except Exception as e:
            logger.error(f"Synthetic generation failed: {str(e)}")
            raise
