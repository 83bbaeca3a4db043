"""Tests for the loss, the training loop and checkpoint evaluation."""

import math

import numpy as np
import pandas as pd
import pytest

from src.data_processing.data_processor import Corpus, Vocabulary, batch_iter
from src.data_processing.synthetic_generator import SyntheticSpec, generate_synthetic
from src.errors import CheckpointError, ConfigError, DataError, NumericError, ShapeError
from src.metrics.metrics_calculator import MetricsReport
from src.model.checkpoint import Checkpoint
from src.model.mvam_model import ModelConfig, MVAMModel, forward, init_params, randomize_trainable
from src.tensor_core import Tensor
from src.training.optimizer import AdamState, adam_step
from src.training.trainer import (
    EarlyStopping,
    EpochRecord,
    TrainConfig,
    Trainer,
    TrainLog,
    bce_loss,
    evaluate_checkpoint,
)


def _report(value=0.5):
    return MetricsReport(0.5, 0.5, 0.5, 0.5, {5: value})


def _train_config(**overrides):
    values = dict(batch_size=8, early_stop_n=5, max_epochs=30, patience=10, progress_bar=False)
    values.update(overrides)
    return TrainConfig(**values)


def _scripted_trainer(mocker, small_model_config, metrics, **overrides):
    mocker.patch.object(Trainer, "train_epoch", return_value=0.25)
    mocker.patch.object(Trainer, "_validate", side_effect=[(m, _report(m)) for m in metrics])
    return Trainer(small_model_config, _train_config(**overrides))


class TestBceLoss:
    def test_half_probability(self):
        loss = bce_loss(Tensor([[0.5]]), np.array([[1.0]]))
        assert loss.item() == pytest.approx(math.log(2))

    def test_sums_labels_and_averages_documents(self):
        probabilities = Tensor([[0.5, 0.5], [0.5, 0.5]])
        loss = bce_loss(probabilities, np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert loss.item() == pytest.approx(math.log(4))

    def test_confident_mistake_is_finite(self):
        loss = bce_loss(Tensor([[0.0]]), np.array([[1.0]]))
        assert loss.item() == pytest.approx(-math.log(1e-12))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(Tensor([[0.5, 0.5]]), np.array([[1.0]]))


class TestTrainConfig:
    def test_rejects_non_positive_learning_rate(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=0.0)

    def test_rejects_unknown_field(self):
        with pytest.raises(ConfigError, match="momentum"):
            TrainConfig.from_dict({"momentum": 0.9})

    def test_round_trip(self):
        config = TrainConfig(batch_size=4, seed=9)
        assert TrainConfig.from_dict(config.to_dict()) == config


class TestEarlyStopping:
    def test_tie_does_not_reset_patience(self):
        stopper = EarlyStopping(patience=2)
        assert stopper.update(1, 0.4)
        assert not stopper.update(2, 0.4)
        assert not stopper.should_stop
        stopper.update(3, 0.4)
        assert stopper.should_stop
        assert stopper.best_epoch == 1


def test_fresh_model_loss_decreases_at_default_learning_rate(tiny_config, tiny_documents):
    params = init_params(tiny_config, seed=0)
    truth = np.random.default_rng(3).integers(0, 2, size=(3, tiny_config.num_labels)).astype(float)
    state = AdamState()
    losses = []
    for _ in range(5):
        params.zero_grad()
        loss = bce_loss(forward(tiny_documents, params, tiny_config).probabilities, truth)
        losses.append(loss.item())
        loss.backward()
        adam_step(params, state, learning_rate=2e-4)
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


def test_overfits_a_handful_of_documents():
    spec = SyntheticSpec(
        vocab_size=30,
        num_labels=4,
        docs_per_split={"train": 8},
        doc_length=(6, 8),
        triggers_per_label=1,
        base_rates=0.4,
        noise_rate=0.0,
        seed=5,
    )
    corpus, vocab = generate_synthetic(spec)
    config = ModelConfig(num_labels=4, vocab_size=len(vocab), d_e=16, d_c=16, k=3, d_ff=32, dropout_p=0.0)
    model = MVAMModel(config, seed=0)
    (batch,) = list(batch_iter(corpus, batch_size=8))
    state = AdamState()

    losses = []
    for _ in range(150):
        model.params.zero_grad()
        loss = bce_loss(model.forward_batch(batch).probabilities, batch.labels)
        losses.append(loss.item())
        loss.backward()
        adam_step(model.params, state, learning_rate=1e-2)
    assert losses[-1] < 0.1 * losses[0]


class TestTrainerLoop:
    def test_patience_one_stops_after_a_tie(self, mocker, small_corpus, small_model_config):
        trainer = _scripted_trainer(mocker, small_model_config, [0.3, 0.3, 0.9], patience=1)
        checkpoint, log = trainer.train(small_corpus)
        assert [r.epoch for r in log.epochs] == [1, 2]
        assert log.best_epoch == 1
        assert checkpoint.epoch == 1 and checkpoint.metric == 0.3

    def test_stops_patience_epochs_after_best(self, mocker, small_corpus, small_model_config):
        metrics = [0.1, 0.2, 0.5] + [0.4] * 20
        trainer = _scripted_trainer(mocker, small_model_config, metrics, patience=10)
        checkpoint, log = trainer.train(small_corpus)
        assert len(log.epochs) == 13
        assert log.best_epoch == 3
        assert log.best_metric == 0.5
        assert checkpoint.epoch == 3

    def test_max_epochs_bounds_the_loop(self, mocker, small_corpus, small_model_config):
        trainer = _scripted_trainer(mocker, small_model_config, [0.1, 0.2, 0.3, 0.4], max_epochs=4)
        _, log = trainer.train(small_corpus)
        assert len(log.epochs) == 4
        assert log.best_epoch == 4

    def test_divergence_keeps_last_good_checkpoint(self, mocker, small_corpus, small_model_config):
        mocker.patch.object(Trainer, "train_epoch", side_effect=[0.3, NumericError("non-finite training loss nan")])
        mocker.patch.object(Trainer, "_validate", return_value=(0.2, _report(0.2)))
        checkpoint, log = Trainer(small_model_config, _train_config()).train(small_corpus)
        assert log.diverged
        assert len(log.epochs) == 1
        assert checkpoint.epoch == 1

    def test_divergence_in_first_epoch_returns_initial_params(self, mocker, small_corpus, small_model_config):
        mocker.patch.object(Trainer, "train_epoch", side_effect=NumericError("non-finite gradient"))
        checkpoint, log = Trainer(small_model_config, _train_config()).train(small_corpus)
        assert log.diverged and log.epochs == []
        assert checkpoint.epoch == 0
        assert checkpoint.params.equals(init_params(small_model_config, seed=0))

    def test_early_stop_n_beyond_labels(self, small_corpus, small_model_config):
        with pytest.raises(ConfigError, match="early_stop_n"):
            Trainer(small_model_config, _train_config(early_stop_n=7)).train(small_corpus)

    def test_empty_validation_split(self, small_model_config):
        corpus, _ = generate_synthetic(
            SyntheticSpec(vocab_size=60, num_labels=6, docs_per_split={"train": 5}, doc_length=(4, 6), seed=1)
        )
        with pytest.raises(DataError):
            Trainer(small_model_config, _train_config()).train(corpus)

    def test_model_sizes_must_match_corpus(self, small_corpus, tiny_config):
        with pytest.raises(ConfigError):
            Trainer(tiny_config, _train_config(early_stop_n=5)).train(small_corpus)

    def test_training_is_deterministic(self, small_corpus, small_model_config):
        def run():
            return Trainer(small_model_config, _train_config(max_epochs=2, learning_rate=1e-2)).train(small_corpus)

        (first, first_log), (second, second_log) = run(), run()
        assert first.params.equals(second.params)
        pd.testing.assert_frame_equal(
            first_log.to_frame().drop(columns="wall_time"),
            second_log.to_frame().drop(columns="wall_time"),
        )

    def test_real_epochs_change_parameters(self, small_corpus, small_model_config):
        checkpoint, log = Trainer(small_model_config, _train_config(max_epochs=1)).train(small_corpus)
        assert len(log.epochs) == 1
        assert np.isfinite(log.epochs[0].train_loss)
        assert not checkpoint.params.equals(init_params(small_model_config, seed=0))
        assert checkpoint.extra["train_config"]["max_epochs"] == 1


class TestTrainLog:
    def test_frame_and_save(self, tmp_path):
        log = TrainLog(
            metric_name="p@5",
            epochs=[EpochRecord(1, 0.9, 0.4, _report(0.4), 0.1), EpochRecord(2, 0.7, 0.6, _report(0.6), 0.1)],
            best_epoch=2,
        )
        frame = log.to_frame()
        assert list(frame.columns[:5]) == ["epoch", "train_loss", "p@5", "wall_time", "best"]
        assert frame["best"].tolist() == [False, True]
        assert "val_macro_auc" in frame.columns

        log.save(tmp_path / "logs" / "train_log.jsonl")
        saved = pd.read_json(tmp_path / "logs" / "train_log.jsonl", lines=True)
        assert saved["epoch"].tolist() == [1, 2]
        assert saved["p@5"].tolist() == [0.4, 0.6]


class TestEvaluateCheckpoint:
    @pytest.fixture
    def checkpoint(self, small_corpus, small_model_config):
        params = randomize_trainable(init_params(small_model_config, seed=0), seed=4)
        return Checkpoint(small_model_config, params, small_corpus.vocab, small_corpus.label_index, epoch=1)

    def test_repeatable(self, checkpoint, small_corpus):
        first = evaluate_checkpoint(checkpoint, small_corpus, "test", n_list=(1, 5))
        second = evaluate_checkpoint(checkpoint, small_corpus, "test", n_list=(1, 5))
        assert first.to_dict() == second.to_dict()
        assert sorted(first.p_at_n) == [1, 5]

    def test_vocabulary_mismatch(self, checkpoint, small_corpus):
        other = Corpus(
            documents=small_corpus.documents,
            vocab=Vocabulary.from_words(["only", "two"]),
            label_index=small_corpus.label_index,
        )
        with pytest.raises(CheckpointError, match="vocabulary"):
            evaluate_checkpoint(checkpoint, other, "test", n_list=(1,))
