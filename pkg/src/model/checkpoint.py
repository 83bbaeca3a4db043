"""
Model checkpoints.

A checkpoint is a numpy `.npz` archive: one float64 array per parameter
tensor under `param/<name>` plus a `__meta__` entry holding JSON with the
model config, vocabulary tokens and hash, label codes, epoch and metric.
Loading a saved checkpoint reproduces it bitwise.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from loguru import logger

from ..data_processing.data_processor import Corpus, LabelIndex, Vocabulary
from ..errors import CheckpointError
from .mvam_model import ModelConfig, ModelParams

FORMAT_NAME = "mvam-checkpoint"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model and map data onto it."""

    config: ModelConfig
    params: ModelParams
    vocab: Vocabulary
    label_index: LabelIndex
    epoch: int = 0
    metric: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def vocab_hash(self) -> str:
        return self.vocab.hash

    def check_compatible(self, corpus: Corpus) -> None:
        """Reject corpora whose vocabulary or labels differ from the checkpoint's."""
        if corpus.vocab.hash != self.vocab_hash:
            raise CheckpointError("corpus vocabulary does not match the checkpoint vocabulary")
        if corpus.label_index != self.label_index:
            raise CheckpointError("corpus label index does not match the checkpoint labels")

    def equals(self, other: "Checkpoint") -> bool:
        return (
            self.config == other.config
            and self.params.equals(other.params)
            and self.vocab == other.vocab
            and self.label_index == other.label_index
            and self.epoch == other.epoch
            and self.metric == other.metric
        )

    def save(self, path: Union[str, Path]) -> Path:
        """Write the checkpoint to `path` (the name is used as given)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "param_names": self.params.names,
            "vocab": self.vocab.tokens,
            "vocab_hash": self.vocab_hash,
            "labels": self.label_index.codes,
            "epoch": self.epoch,
            "metric": self.metric,
            "extra": self.extra,
        }
        arrays = {f"param/{name}": data for name, data in self.params.arrays().items()}
        with open(path, "wb") as f:
            np.savez(f, __meta__=np.array(json.dumps(meta)), **arrays)
        logger.info(f"Checkpoint saved to {path} (epoch {self.epoch})")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        """
        Read a checkpoint written by `save`.

        Raises:
            CheckpointError: If the file is missing, not a checkpoint, or inconsistent
        """
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"Checkpoint not found: {path}")
        try:
            with np.load(path, allow_pickle=False) as archive:
                meta = json.loads(str(archive["__meta__"]))
                if meta.get("format") != FORMAT_NAME:
                    raise CheckpointError(f"{path} is not an MVAM checkpoint")
                arrays = {name: archive[f"param/{name}"] for name in meta["param_names"]}
        except CheckpointError:
            raise
        except Exception as e:
            logger.error(f"Failed to read checkpoint {path}: {str(e)}")
            raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

        vocab = Vocabulary(meta["vocab"])
        if vocab.hash != meta["vocab_hash"]:
            raise CheckpointError(f"vocabulary hash mismatch inside {path}")
        checkpoint = cls(
            config=ModelConfig.from_dict(meta["config"]),
            params=ModelParams.from_arrays(arrays),
            vocab=vocab,
            label_index=LabelIndex(meta["labels"], keep_order=True),
            epoch=meta["epoch"],
            metric=meta["metric"],
            extra=meta.get("extra", {}),
        )
        logger.debug(f"Checkpoint loaded from {path}")
        return checkpoint
