"""
Data Processor

This module handles reading and writing labelled document corpora, building
the token vocabulary and label index, filtering to the most frequent labels,
and cutting corpora into padded batches for the model.

Corpus files are JSON Lines: one object per line with keys
`id` (string), `text` (whitespace-pretokenized string), `labels` (list of
label code strings) and `split` (`train`, `val` or `test`). JSON string
escaping is the escape scheme, so tokens may contain any character except
whitespace.
"""

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..errors import DataError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1
SPLITS = ("train", "val", "test")
DEFAULT_MAX_LENGTH = 2500

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Document:
    """A tokenized document with its ground-truth label ids."""

    id: str
    tokens: Tuple[int, ...]
    labels: FrozenSet[int]
    split: str

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise DataError(f"document {self.id!r} has no tokens")
        if self.split not in SPLITS:
            raise DataError(f"document {self.id!r} has unknown split {self.split!r}")

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class CorpusRecord:
    """One parsed line of a corpus file, before vocabulary mapping."""

    id: str
    words: List[str]
    labels: List[str]
    split: str


class Vocabulary:
    """
    Bijective token ↔ id mapping with PAD=0 and UNK=1 reserved.
    """

    def __init__(self, tokens: Sequence[str]):
        """
        Initialize from a full id-ordered token listing.

        Args:
            tokens: Token for every id, starting with PAD_TOKEN and UNK_TOKEN
        """
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise DataError(f"vocabulary must start with {PAD_TOKEN!r} and {UNK_TOKEN!r}")
        index = {token: i for i, token in enumerate(tokens)}
        if len(index) != len(tokens):
            raise DataError("vocabulary contains duplicate tokens")
        self._tokens = tokens
        self._index = index

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocabulary":
        return cls([PAD_TOKEN, UNK_TOKEN] + [w for w in words if w not in (PAD_TOKEN, UNK_TOKEN)])

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index and token not in (PAD_TOKEN, UNK_TOKEN)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    @property
    def tokens(self) -> List[str]:
        return list(self._tokens)

    @property
    def hash(self) -> str:
        """SHA-256 of the newline-joined token listing."""
        return hashlib.sha256("\n".join(self._tokens).encode("utf-8")).hexdigest()

    def id_of(self, token: str) -> int:
        """Id of `token`; unknown tokens map to UNK, the reserved tokens to their own ids."""
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    def encode(self, words: Iterable[str]) -> List[int]:
        """Map corpus words to ids; a literal reserved string in text maps to UNK."""
        return [UNK_ID if w == PAD_TOKEN else self.id_of(w) for w in words]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self._tokens[i] for i in ids]

    def save(self, path: PathLike) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")
        logger.debug(f"Vocabulary of {len(self)} tokens saved to {path}")

    @classmethod
    def load(cls, path: PathLike) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise DataError(f"Vocabulary file not found: {path}")
        tokens = path.read_text(encoding="utf-8").split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        return cls(tokens)


class LabelIndex:
    """Label code ↔ label id mapping; codes are ordered ascending."""

    def __init__(self, codes: Iterable[str], keep_order: bool = False):
        codes = list(codes) if keep_order else sorted(set(codes))
        if len(set(codes)) != len(codes):
            raise DataError("label index contains duplicate codes")
        self._codes = codes
        self._index = {code: i for i, code in enumerate(codes)}

    def __len__(self) -> int:
        return len(self._codes)

    def __contains__(self, code: str) -> bool:
        return code in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelIndex) and self._codes == other._codes

    @property
    def codes(self) -> List[str]:
        return list(self._codes)

    def id_of(self, code: str) -> int:
        return self._index[code]

    def code_of(self, label_id: int) -> str:
        return self._codes[label_id]


@dataclass
class Corpus:
    """Documents plus the vocabulary and label index their ids refer to."""

    documents: List[Document]
    vocab: Vocabulary
    label_index: LabelIndex
    rejected: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        num_labels = len(self.label_index)
        for doc in self.documents:
            if any(label >= num_labels or label < 0 for label in doc.labels):
                raise DataError(f"document {doc.id!r} has a label id outside [0, {num_labels})")

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def num_labels(self) -> int:
        return len(self.label_index)

    def split(self, name: str) -> List[Document]:
        if name not in SPLITS:
            raise DataError(f"Unknown split: {name}. Expected one of {SPLITS}")
        return [doc for doc in self.documents if doc.split == name]

    def label_matrix(self, documents: Sequence[Document]) -> np.ndarray:
        """Binary documents × labels truth matrix."""
        truth = np.zeros((len(documents), self.num_labels))
        for row, doc in enumerate(documents):
            truth[row, sorted(doc.labels)] = 1.0
        return truth

    def label_frequencies(self, split: str = "train") -> np.ndarray:
        counts = np.zeros(self.num_labels, dtype=np.int64)
        for doc in self.split(split):
            counts[list(doc.labels)] += 1
        return counts


@dataclass
class Batch:
    """Padded id matrix, pad mask and label matrix for a group of documents."""

    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    doc_ids: List[str]

    def __len__(self) -> int:
        return len(self.doc_ids)


def _parse_line(line: str, line_number: int) -> CorpusRecord:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError(f"line {line_number}: not valid JSON ({e.msg})") from None
    if not isinstance(record, dict):
        raise DataError(f"line {line_number}: expected a JSON object")

    missing = [key for key in ("id", "text", "labels", "split") if key not in record]
    if missing:
        raise DataError(f"line {line_number}: missing field(s) {', '.join(missing)}")
    if not isinstance(record["text"], str):
        raise DataError(f"line {line_number}: 'text' must be a string")
    labels = record["labels"]
    if not isinstance(labels, list) or not all(isinstance(code, str) for code in labels):
        raise DataError(f"line {line_number}: 'labels' must be a list of strings")
    if record["split"] not in SPLITS:
        raise DataError(f"line {line_number}: split must be one of {SPLITS}, got {record['split']!r}")

    return CorpusRecord(
        id=str(record["id"]),
        words=record["text"].split(),
        labels=labels,
        split=record["split"],
    )


def read_records(path: PathLike) -> Tuple[List[CorpusRecord], int]:
    """
    Parse a corpus file into raw records.

    Args:
        path: JSON Lines corpus file

    Returns:
        Tuple of (records in file order, number of rejected empty-text records)

    Raises:
        DataError: On a missing file or a malformed line (with its line number)
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Corpus file not found: {path}")

    records = []
    rejected = 0
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, line_number)
            if not record.words:
                rejected += 1
                logger.warning(f"line {line_number}: record {record.id!r} has empty text, rejected")
                continue
            records.append(record)

    if rejected:
        logger.warning(f"Rejected {rejected} record(s) with empty text from {path}")
    return records, rejected


def build_vocab(corpus: Iterable[Sequence[str]], min_freq: int = 1) -> Vocabulary:
    """
    Build a vocabulary from tokenized texts.

    Tokens with frequency ≥ min_freq follow the reserved ids, ordered by
    frequency descending then token ascending.

    Args:
        corpus: Iterable of token sequences
        min_freq: Minimum corpus frequency

    Returns:
        Vocabulary
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be at least 1, got {min_freq}")
    counts = Counter()
    for words in corpus:
        counts.update(words)
    for reserved in (PAD_TOKEN, UNK_TOKEN):
        counts.pop(reserved, None)

    kept = sorted((token for token, count in counts.items() if count >= min_freq), key=lambda t: (-counts[t], t))
    logger.debug(f"Vocabulary: kept {len(kept)} of {len(counts)} distinct tokens (min_freq={min_freq})")
    return Vocabulary.from_words(kept)


def _to_documents(
    records: Sequence[CorpusRecord],
    vocab: Vocabulary,
    label_index: LabelIndex,
    max_length: int,
) -> List[Document]:
    documents = []
    truncated = 0
    unknown_labels = Counter()
    for record in records:
        ids = vocab.encode(record.words)
        if len(ids) > max_length:
            ids = ids[:max_length]
            truncated += 1
        labels = set()
        for code in record.labels:
            if code in label_index:
                labels.add(label_index.id_of(code))
            else:
                unknown_labels[code] += 1
        documents.append(Document(id=record.id, tokens=tuple(ids), labels=frozenset(labels), split=record.split))

    if truncated:
        logger.info(f"Truncated {truncated} document(s) to {max_length} tokens")
    if unknown_labels:
        logger.warning(f"Dropped {sum(unknown_labels.values())} occurrence(s) of {len(unknown_labels)} unknown label code(s)")
    return documents


def load_corpus(
    path: PathLike,
    vocab: Optional[Vocabulary] = None,
    label_index: Optional[LabelIndex] = None,
    min_freq: int = 1,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> Corpus:
    """
    Load a corpus file and map its tokens and labels to ids.

    Args:
        path: JSON Lines corpus file
        vocab: Vocabulary to map through; built from the train split when None
        label_index: Label index to map through; built from all records when None
        min_freq: Minimum frequency for a built vocabulary
        max_length: Documents are truncated at the tail to this many tokens

    Returns:
        Corpus in file order
    """
    records, rejected = read_records(path)
    if vocab is None:
        vocab = build_vocab((r.words for r in records if r.split == "train"), min_freq)
    if label_index is None:
        label_index = LabelIndex(code for r in records for code in r.labels)

    documents = _to_documents(records, vocab, label_index, max_length)
    logger.info(f"Loaded {len(documents)} documents, {len(vocab)} tokens, {len(label_index)} labels from {path}")
    return Corpus(documents=documents, vocab=vocab, label_index=label_index, rejected=rejected)


def write_corpus(corpus: Corpus, path: PathLike) -> None:
    """Write a corpus in the JSON Lines format `load_corpus` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for doc in corpus.documents:
            record = {
                "id": doc.id,
                "text": " ".join(corpus.vocab.decode(doc.tokens)),
                "labels": [corpus.label_index.code_of(label) for label in sorted(doc.labels)],
                "split": doc.split,
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.debug(f"Wrote {len(corpus)} documents to {path}")


def filter_top_labels(corpus: Corpus, n: int, drop_empty: bool = True) -> Corpus:
    """
    Restrict a corpus to its n most frequent labels.

    Frequencies are counted on the train split; ties go to the smaller code.

    Args:
        corpus: Source corpus
        n: Number of labels to keep
        drop_empty: Drop documents left without any label

    Returns:
        New corpus with a re-indexed label set
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    counts = corpus.label_frequencies("train")
    ranked = sorted(range(corpus.num_labels), key=lambda l: (-counts[l], corpus.label_index.code_of(l)))
    kept = ranked[:n]
    new_index = LabelIndex(corpus.label_index.code_of(l) for l in kept)
    remap = {old: new_index.id_of(corpus.label_index.code_of(old)) for old in kept}

    documents = []
    for doc in corpus.documents:
        labels = frozenset(remap[l] for l in doc.labels if l in remap)
        if drop_empty and not labels:
            continue
        documents.append(replace(doc, labels=labels))

    logger.info(f"Kept {len(new_index)} most frequent labels; {len(documents)} of {len(corpus)} documents remain")
    return Corpus(
        documents=documents,
        vocab=corpus.vocab,
        label_index=new_index,
        rejected=corpus.rejected,
        metadata=dict(corpus.metadata),
    )


def drop_unlabelled(corpus: Corpus) -> Corpus:
    """Drop documents without any label, as `filter_top_labels` does after re-indexing."""
    documents = [doc for doc in corpus.documents if doc.labels]
    if len(documents) < len(corpus):
        logger.info(f"Dropped {len(corpus) - len(documents)} document(s) with no label in the index")
    return Corpus(
        documents=documents,
        vocab=corpus.vocab,
        label_index=corpus.label_index,
        rejected=corpus.rejected,
        metadata=dict(corpus.metadata),
    )


def pad_documents(documents: Sequence[Document]) -> Tuple[np.ndarray, np.ndarray]:
    """Pad token id sequences to their common max length with PAD_ID."""
    width = max(doc.length for doc in documents)
    ids = np.full((len(documents), width), PAD_ID, dtype=np.int64)
    for row, doc in enumerate(documents):
        ids[row, :doc.length] = doc.tokens
    return ids, ids != PAD_ID


def batch_iter(
    corpus: Corpus,
    batch_size: int,
    shuffle_seed: Optional[int] = None,
    split: str = "train",
) -> Iterator[Batch]:
    """
    Yield padded batches of one split.

    Args:
        corpus: Source corpus
        batch_size: Documents per batch (the last batch may be smaller)
        shuffle_seed: Seed for the document order; corpus order when None
        split: Split to iterate

    Yields:
        Batch objects, each padded to its own max length
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    documents = corpus.split(split)
    order = np.arange(len(documents))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(documents))

    for start in range(0, len(documents), batch_size):
        chosen = [documents[i] for i in order[start:start + batch_size]]
        ids, mask = pad_documents(chosen)
        yield Batch(ids=ids, mask=mask, labels=corpus.label_matrix(chosen), doc_ids=[doc.id for doc in chosen])


class DataProcessor:
    """
    Loads corpora according to the `data` section of the configuration.
    """

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize the data processor with configuration.

        Args:
            config: Configuration dictionary
        """
        self.config = config
        self.data_config = config.get("data", {})
        self.min_freq = self.data_config.get("min_freq", 1)
        self.max_length = self.data_config.get("max_length", DEFAULT_MAX_LENGTH)
        self.top_labels = self.data_config.get("top_labels")

        logger.debug("Data Processor initialized")

    def load(
        self,
        path: PathLike,
        vocab: Optional[Vocabulary] = None,
        label_index: Optional[LabelIndex] = None,
    ) -> Corpus:
        """
        Load a corpus, applying the configured label filter when building a new label index.

        Args:
            path: Corpus file
            vocab: Existing vocabulary (e.g. from a checkpoint)
            label_index: Existing label index (e.g. from a checkpoint)

        Returns:
            Corpus
        """
        try:
            corpus = load_corpus(path, vocab, label_index, self.min_freq, self.max_length)
            if self.top_labels:
                if label_index is None:
                    corpus = filter_top_labels(corpus, int(self.top_labels))
                else:
                    corpus = drop_unlabelled(corpus)
            return corpus
        except Exception as e:
            logger.error(f"Failed to load corpus {path}: {str(e)}")
            raise
