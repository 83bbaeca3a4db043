"""Shared fixtures: tiny model configs and small synthetic corpora."""

import numpy as np
import pytest

from src.data_processing.synthetic_generator import SyntheticSpec, generate_synthetic
from src.model.mvam_model import ModelConfig, init_params, randomize_trainable


@pytest.fixture
def tiny_config():
    return ModelConfig(num_labels=5, vocab_size=20, d_e=8, d_c=6, k=3, d_ff=16, dropout_p=0.0)


@pytest.fixture
def random_params(tiny_config):
    return randomize_trainable(init_params(tiny_config, seed=0), scale=0.5, seed=1)


@pytest.fixture
def tiny_documents():
    rng = np.random.default_rng(11)
    return [rng.integers(2, 20, size=n) for n in (12, 7, 1)]


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticSpec(
        vocab_size=60,
        num_labels=6,
        docs_per_split={"train": 40, "val": 20, "test": 20},
        doc_length=(8, 14),
        triggers_per_label=2,
        base_rates=0.3,
        seed=3,
    )


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    corpus, _ = generate_synthetic(small_spec)
    return corpus


@pytest.fixture
def small_model_config(small_corpus):
    return ModelConfig(
        num_labels=small_corpus.num_labels,
        vocab_size=len(small_corpus.vocab),
        d_e=8,
        d_c=6,
        k=3,
        d_ff=16,
        dropout_p=0.2,
    )


@pytest.fixture(scope="session")
def dense_label_spec():
    """Default-sized corpus where almost every document carries at least five labels."""
    return SyntheticSpec(base_rates=0.3, cooccurrence=[(0, 1, 0.8), (2, 3, 0.8)])
