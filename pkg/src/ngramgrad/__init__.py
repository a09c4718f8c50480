"""Differentiable n-gram matching objectives for sequence models.

The package trains small attentional encoder-decoders with ordinary
cross-entropy, then refines them by backpropagating through probabilistic
relaxations of BLEU-style n-gram metrics, where every hard count is
replaced by a sum of products of token probabilities.  A self-contained
reverse-mode autodiff core (`autodiff`) keeps the whole pipeline
dependency-light and every gradient checkable against finite differences.
"""

from .autodiff import GraphError, Value, grad_check
from .corpus import ParallelCorpus, Vocab, batch_iter, gen_synthetic, load_corpus, save_corpus
from .metrics import bleu, corpus_bleu, gleu, ngram_counts, precision_recall
from .probloss import ProbSequence, batch_loss, p_bleu, p_gleu, p_pn, prob_ngram_counts
from .seq2seq import (
    ModelParams,
    decode_greedy,
    decode_teacher_forced,
    encode,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .training import DivergenceError, TrainConfig, TrainResult, evaluate_model, finetune, pretrain_mle
from .analysis import CorrelationReport, correlate, pearson

__all__ = [
    "CorrelationReport",
    "DivergenceError",
    "GraphError",
    "ModelParams",
    "ParallelCorpus",
    "ProbSequence",
    "TrainConfig",
    "TrainResult",
    "Value",
    "batch_iter",
    "batch_loss",
    "bleu",
    "correlate",
    "corpus_bleu",
    "decode_greedy",
    "decode_teacher_forced",
    "encode",
    "evaluate_model",
    "finetune",
    "gen_synthetic",
    "gleu",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "load_corpus",
    "ngram_counts",
    "p_bleu",
    "p_gleu",
    "p_pn",
    "pearson",
    "precision_recall",
    "pretrain_mle",
    "prob_ngram_counts",
    "save_checkpoint",
    "save_corpus",
]

__version__ = "0.1.0"
