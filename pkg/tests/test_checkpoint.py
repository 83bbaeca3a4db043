"""Tests for checkpoint save/load."""

import numpy as np
import pytest

from src.data_processing.data_processor import Corpus, LabelIndex, Vocabulary
from src.errors import CheckpointError
from src.model.checkpoint import Checkpoint
from src.model.mvam_model import init_params, randomize_trainable


@pytest.fixture
def checkpoint(small_corpus, small_model_config):
    params = randomize_trainable(init_params(small_model_config, seed=1), seed=2)
    return Checkpoint(
        config=small_model_config,
        params=params,
        vocab=small_corpus.vocab,
        label_index=small_corpus.label_index,
        epoch=7,
        metric=0.4321,
        extra={"note": "fixture"},
    )


def test_round_trip_is_bitwise(tmp_path, checkpoint):
    path = checkpoint.save(tmp_path / "model.npz")
    loaded = Checkpoint.load(path)
    assert loaded.equals(checkpoint)
    assert loaded.params.names == checkpoint.params.names
    assert loaded.extra == {"note": "fixture"}
    assert not loaded.params["PE"].requires_grad
    for name, data in checkpoint.params.arrays().items():
        assert loaded.params[name].data.tobytes() == data.tobytes()


def test_compatible_corpus_accepted(checkpoint, small_corpus):
    checkpoint.check_compatible(small_corpus)


def test_vocab_mismatch_rejected(checkpoint, small_corpus):
    other = Corpus(
        documents=[],
        vocab=Vocabulary.from_words(["x", "y"]),
        label_index=small_corpus.label_index,
    )
    with pytest.raises(CheckpointError, match="vocabulary"):
        checkpoint.check_compatible(other)


def test_label_mismatch_rejected(checkpoint, small_corpus):
    other = Corpus(documents=[], vocab=small_corpus.vocab, label_index=LabelIndex(["A", "B"]))
    with pytest.raises(CheckpointError, match="label"):
        checkpoint.check_compatible(other)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        Checkpoint.load(tmp_path / "absent.npz")


def test_foreign_archive_rejected(tmp_path):
    path = tmp_path / "foreign.npz"
    with open(path, "wb") as f:
        np.savez(f, weights=np.ones(3))
    with pytest.raises(CheckpointError):
        Checkpoint.load(path)


def test_garbage_file_rejected(tmp_path):
    path = tmp_path / "garbage.npz"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        Checkpoint.load(path)
