"""Tests for the MVAM model: initialization, encoders, attention and forward pass."""

import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.errors import ConfigError, DataError, ShapeError
from src.model.mvam_model import (
    ModelConfig,
    ModelParams,
    MVAMModel,
    attend_match,
    classify,
    encode_document,
    encode_labels,
    forward,
    forward_padded,
    informative_snippets,
    init_params,
    label_self_attention,
    positional_encoding,
    randomize_trainable,
)
from src.tensor_core import Tensor

GOLDEN_DIR = Path(__file__).parent / "golden"
# Set to 1 to rewrite the golden files from the current code.
UPDATE_GOLDEN = os.environ.get("MVAM_UPDATE_GOLDEN") == "1"


def _permuted(params: ModelParams, perm: np.ndarray) -> ModelParams:
    arrays = {name: data.copy() for name, data in params.arrays().items()}
    for name in ("U", "beta", "b"):
        arrays[name] = arrays[name][perm]
    return ModelParams.from_arrays(arrays)


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            ModelConfig(num_labels=0, vocab_size=10)
        with pytest.raises(ConfigError):
            ModelConfig(num_labels=3, vocab_size=10, dropout_p=1.0)
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({"num_labels": 3, "vocab_size": 10, "heads": 4})

    def test_dict_round_trip(self, tiny_config):
        assert ModelConfig.from_dict(tiny_config.to_dict()) == tiny_config


class TestPositionalEncoding:
    def test_first_row_alternates(self):
        table = positional_encoding(4, 8)
        np.testing.assert_array_equal(table[0], [0.0, 1.0] * 4)

    def test_closed_form(self):
        table = positional_encoding(7, 10)
        for pos in range(7):
            for j in range(5):
                angle = pos / 10000 ** (2 * j / 10)
                assert abs(table[pos, 2 * j] - np.sin(angle)) < 1e-12
                assert abs(table[pos, 2 * j + 1] - np.cos(angle)) < 1e-12
        assert abs(table[1, 0] - 0.841471) < 1e-6

    def test_range(self):
        table = positional_encoding(50, 9)
        assert table.shape == (50, 9)
        assert np.abs(table).max() <= 1.0

    def test_needs_two_columns(self):
        with pytest.raises(ShapeError):
            positional_encoding(3, 1)


class TestInitParams:
    def test_same_seed_is_bitwise_identical(self, tiny_config):
        assert init_params(tiny_config, seed=4).equals(init_params(tiny_config, seed=4))
        assert not init_params(tiny_config, seed=4).equals(init_params(tiny_config, seed=5))

    def test_pretrained_is_used_exactly(self, tiny_config):
        table = np.random.default_rng(0).normal(size=(tiny_config.vocab_size, tiny_config.d_e))
        params = init_params(tiny_config, pretrained=table)
        np.testing.assert_array_equal(params["E"].data, table)

    def test_pretrained_shape_mismatch(self, tiny_config):
        with pytest.raises(ShapeError):
            init_params(tiny_config, pretrained=np.zeros((3, tiny_config.d_e)))

    def test_bounds_and_fixed_tables(self, tiny_config):
        params = init_params(tiny_config, seed=0)
        assert np.abs(params["W_c"].data).max() <= 0.5 / (tiny_config.k * tiny_config.d_e)
        assert np.abs(params["block0.W2"].data).max() <= 0.5 / tiny_config.d_ff
        np.testing.assert_array_equal(params["E"].data[0], np.zeros(tiny_config.d_e))
        assert not params["PE"].requires_grad
        assert params["block0.W2"].shape == (tiny_config.d_ff, tiny_config.d_c)

    def test_ablation_drops_attention_tensors(self, tiny_config):
        params = init_params(replace(tiny_config, use_label_attention=False))
        assert "block0.W_Q" not in params
        assert "block0.W1" in params


class TestEncodeDocument:
    def test_eval_mode_is_deterministic(self, tiny_config, random_params):
        ids = np.array([3, 4, 5, 6])
        a = encode_document(ids, random_params, tiny_config).data
        b = encode_document(ids, random_params, tiny_config).data
        np.testing.assert_array_equal(a, b)

    def test_single_token(self, tiny_config, random_params):
        assert encode_document([7], random_params, tiny_config).shape == (tiny_config.d_c, 1)

    def test_zero_kernel_gives_activated_bias(self, tiny_config, random_params):
        arrays = random_params.arrays()
        arrays["W_c"] = np.zeros_like(arrays["W_c"])
        params = ModelParams.from_arrays(arrays)
        h = encode_document([2, 3, 4], params, tiny_config).data
        expected = np.tanh(params["b_c"].data)[:, None].repeat(3, axis=1)
        np.testing.assert_array_equal(h, expected)

    def test_train_mode_dropout_changes_output(self, tiny_config, random_params):
        config = replace(tiny_config, dropout_p=0.5)
        ids = np.arange(2, 14)
        a = encode_document(ids, random_params, config, train_mode=True, rng=np.random.default_rng(0)).data
        b = encode_document(ids, random_params, config, train_mode=False).data
        assert not np.array_equal(a, b)

    def test_out_of_vocabulary_id(self, tiny_config, random_params):
        with pytest.raises(DataError):
            encode_document([tiny_config.vocab_size], random_params, tiny_config)

    def test_empty_document(self, tiny_config, random_params):
        with pytest.raises(DataError):
            encode_document([], random_params, tiny_config)


class TestEncodeLabels:
    def test_single_label_attends_to_itself(self):
        rng = np.random.default_rng(0)
        z = Tensor(rng.normal(size=(1, 4)))
        out, weights = label_self_attention(z, Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=(4, 4))))
        np.testing.assert_array_equal(weights.data, [[1.0]])
        np.testing.assert_array_equal(out.data, z.data)

    def test_zero_projections_give_uniform_attention(self):
        z = Tensor(np.random.default_rng(1).normal(size=(5, 4)))
        out, weights = label_self_attention(z, Tensor(np.zeros((4, 4))), Tensor(np.zeros((4, 4))))
        np.testing.assert_allclose(weights.data, np.full((5, 5), 0.2))
        np.testing.assert_allclose(out.data, np.tile(z.data.mean(axis=0), (5, 1)), atol=1e-12)

    def test_output_shape_and_attention_rows(self, tiny_config, random_params):
        weights = []
        reps = encode_labels(random_params, tiny_config, weights)
        assert reps.shape == (tiny_config.num_labels, tiny_config.d_c)
        assert len(weights) == 1
        np.testing.assert_allclose(weights[0].sum(axis=1), 1.0, atol=1e-12)

    def test_stacked_blocks(self, tiny_config):
        config = replace(tiny_config, num_label_blocks=3)
        params = randomize_trainable(init_params(config), seed=2)
        assert "block1.ffn_norm.gain" in params
        assert "block2.ffn_norm.gain" not in params
        assert encode_labels(params, config).shape == (config.num_labels, config.d_c)

    def test_batch_norm_variant(self, tiny_config, random_params):
        reps = encode_labels(random_params, replace(tiny_config, norm_kind="batch"))
        assert np.isfinite(reps.data).all()


class TestAttendMatch:
    def test_identical_columns(self):
        column = np.array([0.5, -1.0, 2.0])
        h = Tensor(np.tile(column[:, None], (1, 4)))
        reps = Tensor(np.random.default_rng(0).normal(size=(2, 3)))
        alpha, v = attend_match(h, reps, np.array([True, True, True, False]))
        np.testing.assert_allclose(alpha.data, [[1 / 3, 1 / 3, 1 / 3, 0.0]] * 2)
        np.testing.assert_allclose(v.data, np.tile(column, (2, 1)))

    def test_single_position(self):
        h = Tensor([[0.3], [-0.7]])
        alpha, v = attend_match(h, Tensor([[1.0, 2.0], [-3.0, 0.5]]))
        np.testing.assert_array_equal(alpha.data, [[1.0], [1.0]])
        np.testing.assert_array_equal(v.data, [[0.3, -0.7], [0.3, -0.7]])

    def test_dominant_position(self):
        h = Tensor([[0.0, 100.0, 0.0]])
        alpha, _ = attend_match(h, Tensor([[1.0]]))
        assert alpha.data[0, 1] >= 1.0 - 1e-20
        assert alpha.data[0, 0] < 1e-20 and alpha.data[0, 2] < 1e-20

    def test_all_padding_rejected(self):
        with pytest.raises(DataError):
            attend_match(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 2))), np.zeros(3, dtype=bool))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            attend_match(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 4))))


class TestClassify:
    def test_zero_weights_give_half(self):
        out = classify(Tensor(np.ones((3, 2))), Tensor(np.zeros((3, 2))), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, [0.5, 0.5, 0.5])

    def test_bias_log_three(self):
        out = classify(Tensor(np.ones((1, 2))), Tensor(np.zeros((1, 2))), Tensor([np.log(3.0)]))
        assert abs(out.data[0] - 0.75) < 1e-15

    def test_strictly_inside_unit_interval(self):
        out = classify(Tensor(np.full((2, 1), 1e6)), Tensor([[1.0], [-1.0]]), Tensor(np.zeros(2)))
        assert ((out.data > 0.0) & (out.data < 1.0)).all()


class TestForward:
    def test_batch_equals_single_calls(self, tiny_config, random_params, tiny_documents):
        batched = forward(tiny_documents, random_params, tiny_config).probabilities.data
        assert batched.shape == (len(tiny_documents), tiny_config.num_labels)
        for row, doc in enumerate(tiny_documents):
            single = forward([doc], random_params, tiny_config).probabilities.data
            np.testing.assert_array_equal(batched[row], single[0])

    def test_padding_invariance(self, tiny_config, random_params, tiny_documents):
        reference = forward(tiny_documents, random_params, tiny_config).probabilities.data
        width = max(len(d) for d in tiny_documents) + 3
        ids = np.zeros((len(tiny_documents), width), dtype=np.int64)
        for row, doc in enumerate(tiny_documents):
            ids[row, : len(doc)] = doc
        padded = forward_padded(ids, ids != 0, random_params, tiny_config).probabilities.data
        np.testing.assert_allclose(padded, reference, atol=1e-9, rtol=0)

    def test_attention_rows_are_stochastic(self, tiny_config):
        rng = np.random.default_rng(3)
        for trial in range(20):
            params = randomize_trainable(init_params(tiny_config), scale=2.0, seed=trial)
            docs = [rng.integers(2, tiny_config.vocab_size, size=rng.integers(1, 13)) for _ in range(3)]
            out = forward(docs, params, tiny_config)
            for alpha, doc in zip(out.attention, docs):
                assert alpha.shape == (tiny_config.num_labels, len(doc))
                assert (alpha >= 0).all()
                np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
            for weights in out.label_attention:
                np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
            probabilities = out.probabilities.data
            assert ((probabilities > 0) & (probabilities < 1)).all()

    def test_label_equivariance_without_positional_encoding(self, tiny_config, tiny_documents):
        config = replace(tiny_config, use_positional_encoding=False)
        params = randomize_trainable(init_params(config), seed=3)
        perm = np.array([3, 0, 4, 1, 2])
        base = forward(tiny_documents, params, config).probabilities.data
        permuted = forward(tiny_documents, _permuted(params, perm), config).probabilities.data
        np.testing.assert_allclose(permuted, base[:, perm], atol=1e-12, rtol=0)

    def test_positional_encoding_breaks_equivariance(self, tiny_config, random_params, tiny_documents):
        perm = np.array([3, 0, 4, 1, 2])
        base = forward(tiny_documents, random_params, tiny_config).probabilities.data
        permuted = forward(tiny_documents, _permuted(random_params, perm), tiny_config).probabilities.data
        assert np.abs(permuted - base[:, perm]).max() > 1e-6

    def test_empty_batch_rejected(self, tiny_config, random_params):
        with pytest.raises(DataError):
            forward([], random_params, tiny_config)

    def test_golden_output(self, tiny_config):
        params = randomize_trainable(init_params(tiny_config, seed=0), scale=0.5, seed=42)
        documents = [np.arange(2, 14), np.array([5, 9, 5, 17])]
        probabilities = forward(documents, params, tiny_config).probabilities.data

        golden = GOLDEN_DIR / "tiny_forward.npy"
        if UPDATE_GOLDEN:
            GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
            np.save(golden, probabilities)
        assert golden.exists(), f"{golden} is missing; record it once with MVAM_UPDATE_GOLDEN=1 and commit it"
        np.testing.assert_allclose(probabilities, np.load(golden), atol=1e-12, rtol=0)


class TestSnippets:
    def test_argmax_window(self):
        attention = np.array([[0.1, 0.6, 0.1, 0.1, 0.1], [0.0, 0.0, 0.0, 0.2, 0.8]])
        tokens = [10, 11, 12, 13, 14]
        found = informative_snippets(attention, tokens, [0, 1], kernel_width=3)
        assert found[0]["position"] == 1 and found[0]["tokens"] == [10, 11, 12]
        assert found[1]["position"] == 4 and found[1]["tokens"] == [13, 14]
        assert found[1]["weight"] == 0.8


class TestMVAMModel:
    def test_predict_matches_forward_and_leaves_params_writable(self, tiny_config, random_params, tiny_documents):
        model = MVAMModel(tiny_config, random_params)
        probabilities, attention = model.predict(tiny_documents, batch_size=2)
        expected = forward(tiny_documents, random_params, tiny_config).probabilities.data
        np.testing.assert_array_equal(probabilities, expected)
        assert len(attention) == len(tiny_documents)
        assert model.params["E"].data.flags.writeable

    def test_predict_empty(self, tiny_config):
        probabilities, attention = MVAMModel(tiny_config).predict([])
        assert probabilities.shape == (0, tiny_config.num_labels)
        assert attention == []
