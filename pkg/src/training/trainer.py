"""
Trainer

This module handles the binary cross-entropy loss, the epoch loop with Adam
updates, validation-driven early stopping and checkpoint selection, and
evaluation of saved checkpoints.
"""

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from ..data_processing.data_processor import Corpus, Document, batch_iter
from ..errors import ConfigError, DataError, NumericError, ShapeError
from ..metrics.metrics_calculator import MetricsCalculator, MetricsReport, PredictionSet, evaluate_all
from ..model.checkpoint import Checkpoint
from ..model.mvam_model import ModelConfig, MVAMModel
from ..tensor_core.tensor import Tensor
from .optimizer import AdamState, adam_step

LOG_FLOOR = 1e-12


@dataclass
class TrainConfig:
    """Optimization and early-stopping settings."""

    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    patience: int = 10
    early_stop_n: int = 15
    max_epochs: int = 100
    seed: int = 0
    progress_bar: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"training.learning_rate must be positive, got {self.learning_rate}")
        if self.patience < 1:
            raise ConfigError(f"training.patience must be at least 1, got {self.patience}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.early_stop_n < 1:
            raise ConfigError("training.batch_size, max_epochs and early_stop_n must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown training field(s): {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    metric: float
    val_report: MetricsReport
    wall_time: float


@dataclass
class TrainLog:
    """Per-epoch history of a training run."""

    metric_name: str
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    diverged: bool = False

    @property
    def best_metric(self) -> Optional[float]:
        for record in self.epochs:
            if record.epoch == self.best_epoch:
                return record.metric
        return None

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for record in self.epochs:
            row = {
                "epoch": record.epoch,
                "train_loss": record.train_loss,
                self.metric_name: record.metric,
                "wall_time": record.wall_time,
                "best": record.epoch == self.best_epoch,
            }
            row.update({f"val_{name}": value for name, value in record.val_report.to_dict().items()})
            rows.append(row)
        return pd.DataFrame(rows)

    def save(self, path: Union[str, Path]) -> None:
        """Write one JSON record per epoch."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_json(path, orient="records", lines=True)
        logger.debug(f"Train log saved to {path}")


class EarlyStopping:
    """
    Tracks the best validation metric; only a strict improvement resets patience.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best_metric = -math.inf
        self.best_epoch = 0
        self.last_epoch = 0

    def update(self, epoch: int, metric: float) -> bool:
        """Record an epoch's metric; returns True when it is a new best."""
        self.last_epoch = epoch
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            return True
        return False

    @property
    def should_stop(self) -> bool:
        return self.last_epoch - self.best_epoch >= self.patience


def bce_loss(probabilities: Tensor, truth: np.ndarray) -> Tensor:
    """
    Binary cross entropy summed over labels and averaged over documents.

    Probabilities are clamped at 1e-12 inside the logarithms.

    Args:
        probabilities: batch×|Y| tensor of sigmoid outputs
        truth: batch×|Y| binary matrix

    Returns:
        Scalar loss tensor
    """
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != probabilities.shape:
        raise ShapeError(f"truth shape {truth.shape} does not match probabilities {probabilities.shape}")
    y = Tensor(truth)
    log_likelihood = y * probabilities.log(LOG_FLOOR) + (1.0 - y) * (1.0 - probabilities).log(LOG_FLOOR)
    return -(log_likelihood.sum(axis=1).mean())


def predict_split(
    checkpoint: Checkpoint,
    corpus: Corpus,
    split: str,
    threshold: float = 0.5,
    batch_size: int = 64,
) -> Tuple[PredictionSet, List[np.ndarray], List[Document]]:
    """
    Eval-mode predictions for one split.

    Returns:
        Tuple of (prediction set, per-document attention, documents)
    """
    checkpoint.check_compatible(corpus)
    documents = corpus.split(split)
    model = MVAMModel(checkpoint.config, checkpoint.params)
    probabilities, attention = model.predict(documents, batch_size)
    return PredictionSet(probabilities, corpus.label_matrix(documents), threshold), attention, documents


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    corpus: Corpus,
    split: str = "test",
    n_list: Sequence[int] = (5, 8, 15),
    threshold: float = 0.5,
) -> MetricsReport:
    """
    Evaluate a checkpoint on one split of a corpus.

    Raises:
        CheckpointError: If the corpus vocabulary or labels differ from the checkpoint's
        DataError: If the split is empty
    """
    pred, _, documents = predict_split(checkpoint, corpus, split, threshold)
    if not documents:
        raise DataError(f"split {split!r} has no documents")
    report = evaluate_all(pred, n_list)
    logger.info(f"{split} metrics: {report.to_record()}")
    return report


class Trainer:
    """
    Trains an MVAM model with Adam and keeps the checkpoint with the best
    validation precision@n.
    """

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        metrics: Optional[MetricsCalculator] = None,
        pretrained: Optional[np.ndarray] = None,
    ):
        """
        Initialize the trainer.

        Args:
            model_config: Model architecture
            train_config: Optimization settings
            metrics: Validation metrics calculator (defaults from an empty config)
            pretrained: Optional word embedding table
        """
        self.model_config = model_config
        self.train_config = train_config
        self.metrics = metrics or MetricsCalculator({})
        self.pretrained = pretrained
        self.metric_name = f"p@{train_config.early_stop_n}"

        logger.debug("Trainer initialized")

    def train(self, corpus: Corpus) -> Tuple[Checkpoint, TrainLog]:
        """
        Run the epoch loop with early stopping.

        Training stops when the validation metric has not strictly improved
        for `patience` epochs or after `max_epochs`. A non-finite loss or
        gradient ends training early and the best checkpoint so far is kept.

        Args:
            corpus: Corpus with non-empty train and val splits

        Returns:
            Tuple of (best checkpoint, training log)
        """
        cfg = self.train_config
        if not corpus.split("train") or not corpus.split("val"):
            raise DataError("training needs non-empty train and val splits")
        if cfg.early_stop_n > corpus.num_labels:
            raise ConfigError(f"early_stop_n={cfg.early_stop_n} exceeds the {corpus.num_labels} labels")
        if self.model_config.vocab_size != len(corpus.vocab) or self.model_config.num_labels != corpus.num_labels:
            raise ConfigError("model vocab_size/num_labels do not match the corpus")

        model = MVAMModel(self.model_config, seed=cfg.seed, pretrained=self.pretrained)
        state = AdamState()
        dropout_rng = np.random.default_rng([cfg.seed, 1])
        stopper = EarlyStopping(cfg.patience)
        log = TrainLog(metric_name=self.metric_name)
        best = self._checkpoint(model, corpus, epoch=0, metric=None)

        logger.info(
            f"Training on {len(corpus.split('train'))} documents, validating on "
            f"{len(corpus.split('val'))}; early stop on {self.metric_name} with patience {cfg.patience}"
        )
        for epoch in range(1, cfg.max_epochs + 1):
            started = time.perf_counter()
            try:
                train_loss = self.train_epoch(model, corpus, state, epoch, dropout_rng)
            except NumericError as e:
                logger.error(f"Training diverged in epoch {epoch}: {str(e)}")
                log.diverged = True
                break

            metric, report = self._validate(model, corpus)
            log.epochs.append(EpochRecord(epoch, train_loss, metric, report, time.perf_counter() - started))

            if stopper.update(epoch, metric):
                best = self._checkpoint(model, corpus, epoch, metric)
                logger.info(f"Epoch {epoch}: loss {train_loss:.4f}, {self.metric_name} {metric:.4f} (best)")
            else:
                logger.info(f"Epoch {epoch}: loss {train_loss:.4f}, {self.metric_name} {metric:.4f}")
            if stopper.should_stop:
                logger.info(f"No improvement for {cfg.patience} epochs; stopping after epoch {epoch}")
                break

        log.best_epoch = stopper.best_epoch
        logger.success(f"Training finished; best epoch {log.best_epoch} ({self.metric_name}={best.metric})")
        return best, log

    def train_epoch(
        self,
        model: MVAMModel,
        corpus: Corpus,
        state: AdamState,
        epoch: int,
        rng: np.random.Generator,
    ) -> float:
        """
        One pass over the shuffled train split.

        Returns:
            Mean per-document training loss

        Raises:
            NumericError: On a non-finite loss or gradient
        """
        cfg = self.train_config
        num_docs = len(corpus.split("train"))
        batches = batch_iter(corpus, cfg.batch_size, shuffle_seed=cfg.seed * 1_000_003 + epoch, split="train")
        total = 0.0
        for batch in tqdm(
            batches,
            total=math.ceil(num_docs / cfg.batch_size),
            desc=f"epoch {epoch}",
            disable=not cfg.progress_bar,
            leave=False,
        ):
            model.params.zero_grad()
            output = model.forward_batch(batch, train_mode=True, rng=rng)
            loss = bce_loss(output.probabilities, batch.labels)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite training loss {value}")
            loss.backward()
            adam_step(model.params, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
            total += value * len(batch)
        return total / num_docs

    def _validate(self, model: MVAMModel, corpus: Corpus) -> Tuple[float, MetricsReport]:
        documents = corpus.split("val")
        probabilities, _ = model.predict(documents)
        n_list = sorted(set(self.metrics.usable_n(corpus.num_labels)) | {self.train_config.early_stop_n})
        report = self.metrics.evaluate(probabilities, corpus.label_matrix(documents), n_list)
        return report.p_at_n[self.train_config.early_stop_n], report

    def _checkpoint(self, model: MVAMModel, corpus: Corpus, epoch: int, metric: Optional[float]) -> Checkpoint:
        return Checkpoint(
            config=self.model_config,
            params=model.params.copy(),
            vocab=corpus.vocab,
            label_index=corpus.label_index,
            epoch=epoch,
            metric=metric,
            extra={"train_config": self.train_config.to_dict()},
        )
