"""
Pretrained word embedding loader for the word2vec/GloVe text format.
"""

from pathlib import Path
from typing import Union

import numpy as np
from loguru import logger

from ..errors import DataError
from .data_processor import PAD_ID, Vocabulary


def _is_header(parts) -> bool:
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_pretrained_embeddings(
    path: Union[str, Path],
    vocab: Vocabulary,
    d_e: int,
    seed: int = 0,
) -> np.ndarray:
    """
    Build a vocab_size×d_e table from a text embedding file.

    Each line holds a token followed by exactly d_e decimal values. An
    optional word2vec header line (`count dim`) is skipped. Vocabulary tokens
    absent from the file get uniform values in [−0.5/d_e, 0.5/d_e]; the PAD
    row is always zero.

    Args:
        path: Embedding file
        vocab: Vocabulary whose ids index the table rows
        d_e: Embedding dimension
        seed: Seed for rows of tokens missing from the file

    Returns:
        Embedding table

    Raises:
        DataError: If the file is missing or a line has the wrong number of values
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Embedding file not found: {path}")

    rng = np.random.default_rng(seed)
    bound = 0.5 / d_e
    table = rng.uniform(-bound, bound, size=(len(vocab), d_e))
    found = np.zeros(len(vocab), dtype=bool)

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if line_number == 1 and _is_header(parts):
                if int(parts[1]) != d_e:
                    raise DataError(f"line 1: header declares dimension {parts[1]}, expected {d_e}")
                continue
            if len(parts) != d_e + 1:
                raise DataError(f"line {line_number}: expected a token and {d_e} values, got {len(parts) - 1} values")
            token = parts[0]
            if token not in vocab:
                continue
            try:
                values = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise DataError(f"line {line_number}: non-numeric embedding value") from None
            row = vocab.id_of(token)
            table[row] = values
            found[row] = True

    table[PAD_ID] = 0.0
    covered = int(found.sum())
    missing = len(vocab) - 2 - covered
    logger.info(f"Loaded embeddings for {covered} tokens from {path}; {max(missing, 0)} initialized randomly")
    return table
