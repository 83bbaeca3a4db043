"""
MVAM Model

This module implements the multi-view alignment model: a convolutional
document encoder, a self-attention label encoder with fixed sinusoidal
positional encoding, per-label attention over document positions, and one
sigmoid classifier per label.

Shapes follow the column-per-position convention: a document encoding H is
d_c×N, label representations are |Y|×d_c, attention is |Y|×N.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..data_processing.data_processor import PAD_ID, Batch, Document
from ..errors import ConfigError, DataError, ShapeError
from ..tensor_core.functional import (
    ACTIVATIONS,
    conv1d_same,
    dropout,
    embedding_lookup,
    normalize,
    relu,
    sigmoid,
    softmax_rows,
)
from ..tensor_core.tensor import Tensor

NORM_KINDS = ("layer", "batch")
FIXED_PARAMS = ("PE",)

TokenInput = Union[Document, Sequence[int], np.ndarray]


@dataclass
class ModelConfig:
    """Architecture hyperparameters."""

    num_labels: int
    vocab_size: int
    d_e: int = 100
    d_c: int = 200
    k: int = 10
    d_ff: int = 2048
    dropout_p: float = 0.6
    use_positional_encoding: bool = True
    use_label_attention: bool = True
    activation: str = "tanh"
    num_label_blocks: int = 1
    norm_kind: str = "layer"
    norm_eps: float = 1e-5

    def __post_init__(self):
        for name in ("num_labels", "vocab_size", "d_e", "d_c", "k", "d_ff", "num_label_blocks"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"model.{name} must be at least 1, got {getattr(self, name)}")
        if self.use_positional_encoding and self.d_e < 2:
            raise ConfigError("positional encoding needs d_e >= 2")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"model.dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"model.activation must be 'tanh' or 'relu', got {self.activation!r}")
        if self.norm_kind not in NORM_KINDS:
            raise ConfigError(f"model.norm_kind must be one of {NORM_KINDS}, got {self.norm_kind!r}")

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "ModelConfig":
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown model field(s): {', '.join(sorted(unknown))}")
        missing = {"num_labels", "vocab_size"} - set(values)
        if missing:
            raise ConfigError(f"Model config is missing {', '.join(sorted(missing))}")
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ModelParams:
    """
    Named model tensors. Every tensor except the positional table is trainable.
    """

    def __init__(self, tensors: Mapping[str, Tensor]):
        self._tensors: Dict[str, Tensor] = dict(tensors)
        for name, tensor in self._tensors.items():
            tensor.name = name

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    @property
    def names(self) -> List[str]:
        return list(self._tensors)

    def trainable(self) -> Dict[str, Tensor]:
        return {name: t for name, t in self._tensors.items() if t.requires_grad}

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "ModelParams":
        return cls(
            {
                name: Tensor(np.array(data, dtype=np.float64), requires_grad=name not in FIXED_PARAMS)
                for name, data in arrays.items()
            }
        )

    def copy(self) -> "ModelParams":
        """Deep copy with fresh gradients."""
        return ModelParams.from_arrays({name: t.data.copy() for name, t in self._tensors.items()})

    def snapshot(self) -> "ModelParams":
        """
        Frozen copy for evaluation: no tensor requires grad and the arrays are read-only,
        so several evaluation workers may share it.
        """
        frozen = {}
        for name, tensor in self._tensors.items():
            data = tensor.data.copy()
            data.setflags(write=False)
            frozen[name] = Tensor(data, requires_grad=False)
        return ModelParams(frozen)

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality of names, shapes and values."""
        if self.names != other.names:
            return False
        return all(
            a.data.shape == b.data.shape and a.data.tobytes() == b.data.tobytes()
            for a, b in zip(self._tensors.values(), other._tensors.values())
        )


@dataclass
class ForwardOutput:
    """Model outputs for a batch of documents."""

    probabilities: Tensor
    attention: List[np.ndarray]
    label_reps: Tensor
    label_attention: List[np.ndarray] = field(default_factory=list)


def positional_encoding(num_labels: int, d_e: int) -> np.ndarray:
    """
    Fixed sinusoidal table: sin on even columns, cos on odd columns.

    PE[pos, 2j] = sin(pos / 10000^(2j/d_e)), PE[pos, 2j+1] = cos(pos / 10000^(2j/d_e)).

    Args:
        num_labels: Number of rows (label positions)
        d_e: Number of columns

    Returns:
        num_labels×d_e array
    """
    if d_e < 2:
        raise ShapeError(f"positional encoding needs d_e >= 2, got {d_e}")
    positions = np.arange(num_labels, dtype=np.float64)[:, None]
    even = np.arange(0, d_e, 2, dtype=np.float64)
    angles = positions / np.power(10000.0, even / d_e)
    table = np.zeros((num_labels, d_e))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : d_e // 2])
    return table


def init_params(
    config: ModelConfig,
    pretrained: Optional[np.ndarray] = None,
    seed: int = 0,
) -> ModelParams:
    """
    Initialize all model tensors.

    Weight matrices are uniform in [−0.5/d, 0.5/d] with d the fan-in; biases
    and normalization shifts start at zero and normalization gains at one.

    Args:
        config: Model configuration
        pretrained: Optional vocab_size×d_e word embedding table
        seed: Random seed; identical seeds give bitwise-identical parameters

    Returns:
        ModelParams

    Raises:
        ShapeError: If the pretrained table has the wrong shape
    """
    rng = np.random.default_rng(seed)

    def uniform(shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 0.5 / fan_in
        return rng.uniform(-bound, bound, size=shape)

    d_e, d_c, d_ff, labels = config.d_e, config.d_c, config.d_ff, config.num_labels
    arrays: Dict[str, np.ndarray] = {}

    if pretrained is not None:
        pretrained = np.asarray(pretrained, dtype=np.float64)
        if pretrained.shape != (config.vocab_size, d_e):
            raise ShapeError(f"pretrained embeddings have shape {pretrained.shape}, expected {(config.vocab_size, d_e)}")
        arrays["E"] = pretrained.copy()
    else:
        arrays["E"] = uniform((config.vocab_size, d_e), d_e)
        arrays["E"][PAD_ID] = 0.0
    arrays["U"] = uniform((labels, d_e), d_e)
    arrays["PE"] = positional_encoding(labels, d_e) if d_e >= 2 else np.zeros((labels, d_e))

    for block in range(config.num_label_blocks):
        prefix = f"block{block}."
        out_dim = d_c if block == config.num_label_blocks - 1 else d_e
        if config.use_label_attention:
            arrays[prefix + "W_Q"] = uniform((d_e, d_e), d_e)
            arrays[prefix + "W_K"] = uniform((d_e, d_e), d_e)
            arrays[prefix + "attn_norm.gain"] = np.ones(d_e)
            arrays[prefix + "attn_norm.bias"] = np.zeros(d_e)
        arrays[prefix + "W1"] = uniform((d_e, d_ff), d_e)
        arrays[prefix + "b1"] = np.zeros(d_ff)
        arrays[prefix + "W2"] = uniform((d_ff, out_dim), d_ff)
        arrays[prefix + "b2"] = np.zeros(out_dim)
        if block < config.num_label_blocks - 1:
            arrays[prefix + "ffn_norm.gain"] = np.ones(d_e)
            arrays[prefix + "ffn_norm.bias"] = np.zeros(d_e)

    arrays["W_c"] = uniform((config.k, d_e, d_c), config.k * d_e)
    arrays["b_c"] = np.zeros(d_c)
    arrays["beta"] = uniform((labels, d_c), d_c)
    arrays["b"] = np.zeros(labels)

    params = ModelParams.from_arrays(arrays)
    logger.debug(f"Initialized {len(params)} parameter tensors (seed={seed})")
    return params


def randomize_trainable(params: ModelParams, scale: float = 0.5, seed: int = 0) -> ModelParams:
    """
    Copy of `params` with every trainable tensor redrawn uniformly in [−scale, scale].

    The PAD embedding row stays zero and the positional table is untouched.
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, tensor in params.items():
        if tensor.requires_grad:
            arrays[name] = rng.uniform(-scale, scale, size=tensor.shape)
        else:
            arrays[name] = tensor.data.copy()
    arrays["E"][PAD_ID] = 0.0
    return ModelParams.from_arrays(arrays)


def _token_ids(doc: TokenInput) -> np.ndarray:
    tokens = doc.tokens if isinstance(doc, Document) else doc
    ids = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if ids.size < 1:
        raise DataError("cannot encode an empty document")
    return ids


def encode_document(
    doc: TokenInput,
    params: ModelParams,
    config: ModelConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    Embed, apply dropout (train mode only) and convolve one document.

    PAD ids embed to zero, which the convolution sees as zero padding.

    Args:
        doc: Document or token id sequence of length N
        params: Model parameters
        config: Model configuration
        train_mode: Enables dropout on the word embeddings
        rng: Generator for the dropout mask

    Returns:
        H of shape d_c×N

    Raises:
        DataError: On an empty document or an id outside the vocabulary
    """
    ids = _token_ids(doc)
    embedded = embedding_lookup(params["E"], ids, padding_idx=PAD_ID)
    if train_mode and config.dropout_p > 0.0:
        if rng is None:
            logger.debug("encode_document: no dropout generator given, using seed 0")
            rng = np.random.default_rng(0)
        embedded = dropout(embedded, config.dropout_p, rng, training=True)
    return conv1d_same(embedded.T, params["W_c"], params["b_c"], config.activation)


def label_self_attention(z: Tensor, w_q: Tensor, w_k: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Scaled dot-product self-attention over label rows with Z itself as the value.

    Returns:
        Tuple of (softmax(QKᵀ/√d_z)·Z, attention weights |Y|×|Y|)
    """
    d_z = z.shape[1]
    scores = ((z @ w_q) @ (z @ w_k).T) / np.sqrt(d_z)
    weights = softmax_rows(scores)
    return weights @ z, weights


def encode_labels(
    params: ModelParams,
    config: ModelConfig,
    attention_out: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """
    Align label embeddings with each other and project them to d_c.

    Each block applies self-attention with a residual add & norm (skipped
    when label attention is disabled), then a ReLU feed-forward network. The
    last block's FFN maps to d_c; earlier blocks map back to d_e and add a
    second residual add & norm.

    Args:
        params: Model parameters
        config: Model configuration
        attention_out: When given, receives each block's label attention weights

    Returns:
        Label representations of shape |Y|×d_c
    """
    z = params["U"] + params["PE"] if config.use_positional_encoding else params["U"]
    for block in range(config.num_label_blocks):
        prefix = f"block{block}."
        if config.use_label_attention:
            aligned, weights = label_self_attention(z, params[prefix + "W_Q"], params[prefix + "W_K"])
            if attention_out is not None:
                attention_out.append(weights.data.copy())
            x = normalize(
                z + aligned,
                params[prefix + "attn_norm.gain"],
                params[prefix + "attn_norm.bias"],
                config.norm_eps,
                config.norm_kind,
            )
        else:
            x = z
        hidden = relu(x @ params[prefix + "W1"] + params[prefix + "b1"])
        out = hidden @ params[prefix + "W2"] + params[prefix + "b2"]
        if block == config.num_label_blocks - 1:
            z = out
        else:
            z = normalize(
                x + out,
                params[prefix + "ffn_norm.gain"],
                params[prefix + "ffn_norm.bias"],
                config.norm_eps,
                config.norm_kind,
            )
    return z


def attend_match(
    h: Tensor,
    label_reps: Tensor,
    pad_mask: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Per-label attention over document positions.

    α_l = softmax_n(h_nᵀ u_l) over unpadded positions; v_l = Σ_n α_{l,n} h_n.

    Args:
        h: Document encoding d_c×N
        label_reps: Label representations |Y|×d_c
        pad_mask: Boolean N-vector, True at real tokens; all positions when None

    Returns:
        Tuple of (alpha |Y|×N, V |Y|×d_c)

    Raises:
        ShapeError: If dimensions disagree
        DataError: If every position is padding
    """
    if label_reps.shape[1] != h.shape[0]:
        raise ShapeError(f"label representations {label_reps.shape} do not pair with document encoding {h.shape}")
    n = h.shape[1]
    if pad_mask is None:
        pad_mask = np.ones(n, dtype=bool)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if pad_mask.shape != (n,):
        raise ShapeError(f"pad mask shape {pad_mask.shape} does not match {n} positions")
    if not pad_mask.any():
        raise DataError("document consists only of padding")

    scores = label_reps @ h
    alpha = softmax_rows(scores, np.broadcast_to(pad_mask, scores.shape))
    return alpha, alpha @ h.T


def classify(v: Tensor, beta: Tensor, b: Tensor) -> Tensor:
    """ŷ_l = σ(β_lᵀ v_l + b_l) for every label; returns a |Y| vector."""
    if v.shape != beta.shape or b.shape != (v.shape[0],):
        raise ShapeError(f"classifier shapes disagree: V {v.shape}, beta {beta.shape}, b {b.shape}")
    return sigmoid((beta * v).sum(axis=1) + b)


def _forward_rows(
    rows: Sequence[Tuple[np.ndarray, np.ndarray]],
    params: ModelParams,
    config: ModelConfig,
    train_mode: bool,
    rng: Optional[np.random.Generator],
) -> ForwardOutput:
    if not rows:
        raise DataError("forward needs a non-empty batch")
    label_attention: List[np.ndarray] = []
    label_reps = encode_labels(params, config, label_attention)

    probabilities = []
    attention = []
    for ids, mask in rows:
        h = encode_document(ids, params, config, train_mode, rng)
        alpha, v = attend_match(h, label_reps, mask)
        probabilities.append(classify(v, params["beta"], params["b"]))
        attention.append(alpha.data[:, : int(mask.sum())].copy())

    return ForwardOutput(
        probabilities=Tensor.stack(probabilities),
        attention=attention,
        label_reps=label_reps,
        label_attention=label_attention,
    )


def forward(
    documents: Sequence[TokenInput],
    params: ModelParams,
    config: ModelConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardOutput:
    """
    Run the model on documents, each at its own length.

    Label representations are computed once and shared by the batch, so the
    rows of a batched call equal separate single-document calls.

    Args:
        documents: Documents or token id sequences
        params: Model parameters
        config: Model configuration
        train_mode: Enables dropout
        rng: Dropout generator

    Returns:
        ForwardOutput with batch×|Y| probabilities
    """
    rows = []
    for doc in documents:
        ids = _token_ids(doc)
        rows.append((ids, ids != PAD_ID))
    return _forward_rows(rows, params, config, train_mode, rng)


def forward_padded(
    ids: np.ndarray,
    mask: np.ndarray,
    params: ModelParams,
    config: ModelConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardOutput:
    """
    Run the model on a padded batch×N id matrix; padded positions are excluded from attention.
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if ids.ndim != 2 or ids.shape != mask.shape:
        raise ShapeError(f"ids {ids.shape} and mask {mask.shape} must be matching matrices")
    return _forward_rows(list(zip(ids, mask)), params, config, train_mode, rng)


def informative_snippets(
    attention: np.ndarray,
    tokens: Sequence[int],
    label_ids: Sequence[int],
    kernel_width: int,
) -> List[Dict[str, Any]]:
    """
    Locate the most attended position for each label and the k-gram it covers.

    Args:
        attention: |Y|×N attention of one document
        tokens: The document's token ids
        label_ids: Labels to report
        kernel_width: Convolution width k

    Returns:
        One dict per label with `label`, `position`, `weight`, `start`, `end`, `tokens`
    """
    left = (kernel_width - 1) // 2
    right = kernel_width - 1 - left
    snippets = []
    for label in label_ids:
        position = int(np.argmax(attention[label]))
        start = max(0, position - left)
        end = min(len(tokens), position + right + 1)
        snippets.append(
            {
                "label": int(label),
                "position": position,
                "weight": float(attention[label, position]),
                "start": start,
                "end": end,
                "tokens": list(tokens[start:end]),
            }
        )
    return snippets


class MVAMModel:
    """
    Model configuration and parameters bundled with the forward pass.
    """

    def __init__(
        self,
        config: ModelConfig,
        params: Optional[ModelParams] = None,
        seed: int = 0,
        pretrained: Optional[np.ndarray] = None,
    ):
        """
        Initialize the model.

        Args:
            config: Model configuration
            params: Existing parameters; freshly initialized when None
            seed: Initialization seed
            pretrained: Optional word embedding table
        """
        self.config = config
        self.params = params if params is not None else init_params(config, pretrained, seed)
        logger.debug(
            f"MVAM model ready: {config.num_labels} labels, vocab {config.vocab_size}, "
            f"d_e={config.d_e}, d_c={config.d_c}, k={config.k}"
        )

    def forward(
        self,
        documents: Sequence[TokenInput],
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> ForwardOutput:
        return forward(documents, self.params, self.config, train_mode, rng)

    def forward_batch(
        self,
        batch: Batch,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> ForwardOutput:
        return forward_padded(batch.ids, batch.mask, self.params, self.config, train_mode, rng)

    def predict(self, documents: Sequence[Document], batch_size: int = 64) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Eval-mode probabilities and attention for many documents, using a frozen snapshot.

        Returns:
            Tuple of (documents×|Y| probabilities, per-document attention)
        """
        frozen = self.params.snapshot()
        probabilities = []
        attention: List[np.ndarray] = []
        for start in range(0, len(documents), batch_size):
            chunk = documents[start:start + batch_size]
            output = forward(chunk, frozen, self.config, train_mode=False)
            probabilities.append(output.probabilities.data)
            attention.extend(output.attention)
        if not probabilities:
            return np.zeros((0, self.config.num_labels)), []
        return np.vstack(probabilities), attention
