"""
Main Experiment Runner

This module contains the ExperimentRunner class that orchestrates the MVAM
pipeline: synthetic corpus generation, training, evaluation, prediction and
gradient checking.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from .config.config_manager import ConfigManager
from .data_processing.data_processor import Corpus, DataProcessor, write_corpus
from .data_processing.embeddings import load_pretrained_embeddings
from .data_processing.synthetic_generator import SyntheticCorpusGenerator
from .errors import ConfigError, DataError
from .metrics.metrics_calculator import MetricsCalculator, MetricsReport, PredictionSet, top_n_labels
from .model.checkpoint import Checkpoint
from .model.mvam_model import ModelConfig, forward, informative_snippets, init_params, randomize_trainable
from .tensor_core.grad_check import GradCheckReport, grad_check
from .training.trainer import TrainLog, Trainer, bce_loss, predict_split

PathLike = Union[str, Path]

ABLATIONS = {
    "none": {},
    "no_pe": {"model.use_positional_encoding": False},
    "no_alignment": {"model.use_label_attention": False},
}

GRADCHECK_CONFIG = {"num_labels": 5, "vocab_size": 20, "d_e": 8, "d_c": 6, "k": 3, "d_ff": 16, "dropout_p": 0.0}


def read_predictions(path: PathLike, corpus: Corpus, split: str, threshold: float = 0.5) -> PredictionSet:
    """
    Read a predictions file aligned to the documents of one split.

    Each line is `{"id": ..., "scores": {code: probability}}`; codes absent
    from a line score 0.

    Raises:
        DataError: On malformed lines, unknown codes or documents without a line
    """
    if not Path(path).exists():
        raise DataError(f"Predictions file not found: {path}")
    documents = corpus.split(split)
    row_of = {doc.id: i for i, doc in enumerate(documents)}
    probabilities = np.zeros((len(documents), corpus.num_labels))
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                doc_id, scores = record["id"], record["scores"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{path}:{line_number}: malformed prediction line ({e})") from None
            if not isinstance(scores, dict):
                raise DataError(f"{path}:{line_number}: 'scores' must map label codes to probabilities")
            if doc_id not in row_of:
                continue
            for code, score in scores.items():
                if code not in corpus.label_index:
                    raise DataError(f"{path}:{line_number}: unknown label code {code!r}")
                probabilities[row_of[doc_id], corpus.label_index.id_of(code)] = float(score)
            seen.add(doc_id)
    missing = set(row_of) - seen
    if missing:
        raise DataError(f"{path} has no predictions for {len(missing)} {split} document(s), e.g. {sorted(missing)[0]}")
    return PredictionSet(probabilities, corpus.label_matrix(documents), threshold)


class ExperimentRunner:
    """
    Main class for running MVAM experiments.

    This class orchestrates the pipeline:
    1. Synthetic corpus generation
    2. Corpus loading and vocabulary building
    3. Training with early stopping
    4. Evaluation and prediction from checkpoints
    """

    def __init__(self, config_manager: ConfigManager):
        """
        Initialize the runner with a configuration manager.

        Args:
            config_manager: Loaded and validated configuration
        """
        self.config_manager = config_manager
        self.config = config_manager.get_config()

        self.data_processor = DataProcessor(self.config)
        self.metrics_calculator = MetricsCalculator(self.config)

        logger.info("Experiment runner initialized successfully")

    def _output_dir(self, out: Optional[PathLike]) -> Path:
        path = Path(out or self.config_manager.get("output.dir", "runs"))
        path.mkdir(parents=True, exist_ok=True)
        return path

    def synthesize(self, out: Optional[PathLike] = None) -> Tuple[Corpus, Path]:
        """
        Generate a synthetic corpus and write it with its vocabulary.

        Returns:
            Tuple of (corpus, corpus file path)
        """
        out_dir = self._output_dir(out)
        corpus, vocab = SyntheticCorpusGenerator(self.config).generate()

        corpus_path = out_dir / "corpus.jsonl"
        write_corpus(corpus, corpus_path)
        vocab.save(out_dir / "vocab.txt")
        self.config_manager.save_config(str(out_dir / "config.yaml"))
        logger.success(f"Synthetic corpus written to {corpus_path} (vocab hash {vocab.hash[:12]})")
        return corpus, corpus_path

    def train(
        self,
        corpus_path: PathLike,
        out: Optional[PathLike] = None,
        ablation: str = "none",
    ) -> Tuple[Checkpoint, TrainLog]:
        """
        Train on a corpus file and write the best checkpoint and the train log.

        Args:
            corpus_path: JSONL corpus with train and val splits
            out: Output directory
            ablation: "none", "no_pe" or "no_alignment"

        Returns:
            Tuple of (best checkpoint, training log)
        """
        if ablation not in ABLATIONS:
            raise ConfigError(f"Unknown ablation {ablation!r}. Expected one of {sorted(ABLATIONS)}")
        for key, value in ABLATIONS[ablation].items():
            self.config_manager.set(key, value)

        out_dir = self._output_dir(out)
        self.config_manager.save_config(str(out_dir / "config.yaml"))

        logger.info("Step 1: Loading corpus...")
        corpus = self.data_processor.load(corpus_path)
        model_config = self.config_manager.model_config(corpus.num_labels, len(corpus.vocab))
        train_config = self.config_manager.train_config()

        pretrained = None
        embeddings_path = self.config_manager.get("data.embeddings")
        if embeddings_path:
            pretrained = load_pretrained_embeddings(embeddings_path, corpus.vocab, model_config.d_e, train_config.seed)

        logger.info("Step 2: Training...")
        trainer = Trainer(model_config, train_config, self.metrics_calculator, pretrained)
        checkpoint, log = trainer.train(corpus)

        logger.info("Step 3: Saving results...")
        checkpoint.save(out_dir / "checkpoint.npz")
        corpus.vocab.save(out_dir / "vocab.txt")
        log.save(out_dir / "train_log.jsonl")
        if log.diverged:
            logger.warning("Training diverged; the saved checkpoint is the last good one")
        return checkpoint, log

    def evaluate(
        self,
        corpus_path: PathLike,
        checkpoint_path: Optional[PathLike] = None,
        predictions_path: Optional[PathLike] = None,
        split: str = "test",
        out: Optional[PathLike] = None,
    ) -> MetricsReport:
        """
        Evaluate a checkpoint, or a predictions file, on one split.

        Returns:
            MetricsReport (also written as a metrics record when `out` is given)
        """
        if (checkpoint_path is None) == (predictions_path is None):
            raise ConfigError("evaluate needs exactly one of a checkpoint or a predictions file")

        if checkpoint_path is not None:
            checkpoint = Checkpoint.load(checkpoint_path)
            corpus = self.data_processor.load(corpus_path, checkpoint.vocab, checkpoint.label_index)
            pred, _, _ = predict_split(checkpoint, corpus, split, self.metrics_calculator.threshold)
        else:
            corpus = self.data_processor.load(corpus_path)
            pred = read_predictions(predictions_path, corpus, split, self.metrics_calculator.threshold)

        if pred.num_docs == 0:
            raise DataError(f"split {split!r} has no documents")
        report = self.metrics_calculator.evaluate(pred.probabilities, pred.truth)
        logger.success(f"{split}: {report.to_record()}")

        if out is not None:
            record_path = self._output_dir(out) / f"metrics_{split}.txt"
            record_path.write_text(report.to_record() + "\n", encoding="utf-8")
        return report

    def predict(
        self,
        corpus_path: PathLike,
        checkpoint_path: PathLike,
        out_path: PathLike,
        top_n: int = 5,
        snippets: bool = False,
        split: str = "test",
    ) -> List[Dict[str, Any]]:
        """
        Write per-document predictions as JSON lines.

        Each line carries the document id, the top-n label codes, the score
        of every label, and optionally the most attended snippet per top label.
        """
        checkpoint = Checkpoint.load(checkpoint_path)
        if not 1 <= top_n <= len(checkpoint.label_index):
            raise ConfigError(f"top_n must be in [1, {len(checkpoint.label_index)}], got {top_n}")
        corpus = self.data_processor.load(corpus_path, checkpoint.vocab, checkpoint.label_index)
        pred, attention, documents = predict_split(checkpoint, corpus, split)

        codes = checkpoint.label_index.codes
        top = top_n_labels(pred.probabilities, top_n) if documents else np.zeros((0, top_n), dtype=int)
        records = []
        for row, doc in enumerate(documents):
            record: Dict[str, Any] = {
                "id": doc.id,
                "top": [codes[label] for label in top[row]],
                "scores": {code: float(p) for code, p in zip(codes, pred.probabilities[row])},
            }
            if snippets:
                found = informative_snippets(attention[row], doc.tokens, top[row], checkpoint.config.k)
                for item in found:
                    item["label"] = codes[item["label"]]
                    item["tokens"] = checkpoint.vocab.decode(item["tokens"])
                record["snippets"] = found
            records.append(record)

        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record) + "\n")
        logger.success(f"Wrote predictions for {len(records)} {split} documents to {out_path}")
        return records

    def gradcheck(self, seed: int = 0, tolerance: float = 1e-4) -> GradCheckReport:
        """
        Finite-difference check of every trainable tensor on a tiny model.

        Two documents of lengths 12 and 7 with random labels are scored in
        eval mode with randomized parameters.
        """
        config = ModelConfig(**GRADCHECK_CONFIG)
        params = randomize_trainable(init_params(config, seed=seed), scale=0.5, seed=seed + 1)
        rng = np.random.default_rng(seed)
        documents = [rng.integers(2, config.vocab_size, size=length) for length in (12, 7)]
        truth = rng.integers(0, 2, size=(len(documents), config.num_labels)).astype(np.float64)

        def loss(p):
            return bce_loss(forward(documents, p, config, train_mode=False).probabilities, truth)

        report = grad_check(loss, params, tolerance=tolerance)
        for line in report.summary_lines():
            logger.info(line)
        return report
