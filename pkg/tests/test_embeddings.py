"""Tests for the pretrained embedding loader."""

import numpy as np
import pytest

from src.data_processing.data_processor import PAD_ID, UNK_ID, Vocabulary
from src.data_processing.embeddings import load_pretrained_embeddings
from src.errors import DataError


@pytest.fixture
def vocab():
    return Vocabulary.from_words(["cat", "dog", "eel"])


def test_full_coverage(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("cat 1 2 3\ndog 4 5 6\neel 7 8 9\n", encoding="utf-8")
    table = load_pretrained_embeddings(path, vocab, d_e=3)
    assert table.shape == (5, 3)
    np.testing.assert_array_equal(table[vocab.id_of("dog")], [4.0, 5.0, 6.0])
    np.testing.assert_array_equal(table[PAD_ID], np.zeros(3))


def test_missing_tokens_are_small_and_seeded(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("cat 1 2 3\n", encoding="utf-8")
    first = load_pretrained_embeddings(path, vocab, d_e=3, seed=4)
    second = load_pretrained_embeddings(path, vocab, d_e=3, seed=4)
    np.testing.assert_array_equal(first, second)
    assert np.all(np.abs(first[vocab.id_of("eel")]) <= 0.5 / 3)
    assert np.all(np.abs(first[UNK_ID]) <= 0.5 / 3)


def test_header_is_skipped(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("2 3\ncat 1 2 3\nzebra 0 0 1\n", encoding="utf-8")
    table = load_pretrained_embeddings(path, vocab, d_e=3)
    np.testing.assert_array_equal(table[vocab.id_of("cat")], [1.0, 2.0, 3.0])


def test_header_dimension_mismatch(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("2 4\ncat 1 2 3 4\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 1"):
        load_pretrained_embeddings(path, vocab, d_e=3)


def test_short_line_rejected_with_number(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("cat 1 2 3\ndog 1 2\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_pretrained_embeddings(path, vocab, d_e=3)


def test_reserved_tokens_in_file_are_ignored(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("<pad> 9 9 9\ncat 1 2 3\n", encoding="utf-8")
    table = load_pretrained_embeddings(path, vocab, d_e=3)
    np.testing.assert_array_equal(table[PAD_ID], np.zeros(3))


def test_missing_file(tmp_path, vocab):
    with pytest.raises(DataError, match="not found"):
        load_pretrained_embeddings(tmp_path / "none.txt", vocab, d_e=3)
