"""Hard n-gram overlap metrics: precision, recall, BLEU, GLEU.

These are the ordinary, non-differentiable evaluation metrics computed from
integer n-gram counts.  Token sequences are plain lists of hashable tokens
(vocabulary ids in the pipeline, but strings work equally well) and must not
contain begin/end sentinels or padding — strip those before scoring.

All scores live in [0, 1].  Sentence BLEU floors each order's precision at
1e-9 inside the log so that short sentences with no higher-order matches
score near zero instead of blowing up; GLEU needs no smoothing because it
never takes a log.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

__all__ = [
    "NgramTable",
    "ngram_counts",
    "clipped_matches",
    "precision_recall",
    "brevity_penalty",
    "bleu",
    "gleu",
    "corpus_bleu",
    "EPSILON",
]

EPSILON = 1e-9
GLEU_MAX_ORDER = 4


@dataclass
class NgramTable:
    """n-gram occurrence counts of a single sequence at one order."""

    order: int
    counts: Counter

    def total(self) -> int:
        return sum(self.counts.values())


def ngram_counts(seq, n: int) -> NgramTable:
    """Count every contiguous n-token subsequence of ``seq``.

    A sequence shorter than ``n`` yields an empty table; the counts of a
    length-T sequence always sum to max(T - n + 1, 0).
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    return NgramTable(n, Counter(tuple(seq[t : t + n]) for t in range(len(seq) - n + 1)))


def clipped_matches(hyp_table: NgramTable, ref_table: NgramTable) -> NgramTable:
    """Per-gram min of hypothesis and reference counts.

    Clipping is what stops a hypothesis from farming credit by repeating a
    matched gram: each gram earns at most its reference count.  Grams absent
    from the reference are kept with an explicit count of 0.
    """
    if hyp_table.order != ref_table.order:
        raise ValueError(
            f"order mismatch: {hyp_table.order} vs {ref_table.order}"
        )
    clipped = Counter(
        {g: min(c, ref_table.counts.get(g, 0)) for g, c in hyp_table.counts.items()}
    )
    return NgramTable(hyp_table.order, clipped)


def precision_recall(hyp, ref, n: int) -> tuple[float, float]:
    """n-gram precision and recall of ``hyp`` against ``ref``.

    precision = clipped matches / hypothesis grams, recall = clipped
    matches / reference grams; either is 0 when its denominator is 0.
    """
    hyp_table = ngram_counts(hyp, n)
    ref_table = ngram_counts(ref, n)
    matched = clipped_matches(hyp_table, ref_table).total()
    hyp_total = hyp_table.total()
    ref_total = ref_table.total()
    p = matched / hyp_total if hyp_total else 0.0
    r = matched / ref_total if ref_total else 0.0
    return p, r


def brevity_penalty(hyp_len: int, ref_len: int) -> float:
    """Multiplicative penalty for hypotheses shorter than the reference.

    1 when the hypothesis is at least as long, exp(1 - ref/hyp) otherwise,
    and exactly 0 for an empty hypothesis.
    """
    if ref_len < 1:
        raise ValueError(f"reference length must be >= 1, got {ref_len}")
    if hyp_len == 0:
        return 0.0
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def _uniform(max_order: int) -> list[float]:
    return [1.0 / max_order] * max_order


def _geometric_mean(precisions, weights) -> float:
    return math.exp(
        sum(w * math.log(max(p, EPSILON)) for w, p in zip(weights, precisions))
    )


def bleu(hyp, ref, max_order: int = 4, weights=None) -> float:
    """Sentence BLEU: brevity penalty times the weighted geometric mean of
    1..max_order n-gram precisions.

    Weights default to uniform 1/max_order and must sum to 1.  Each
    precision is floored at 1e-9 inside the log, so a hypothesis with no
    matches at some order scores close to (but above) zero.
    """
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if weights is None:
        weights = _uniform(max_order)
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
    precisions = [precision_recall(hyp, ref, n)[0] for n in range(1, max_order + 1)]
    return brevity_penalty(len(hyp), len(ref)) * _geometric_mean(precisions, weights)


def gleu(hyp, ref) -> float:
    """Sentence GLEU: min of pooled precision and pooled recall over
    1..4-grams.

    Matched, hypothesis, and reference counts are each summed across all
    four orders first, then divided once — a single quotient per side, not
    a mean of per-order ratios.  Unlike BLEU there is no brevity penalty;
    the recall arm already punishes short hypotheses.
    """
    matched = hyp_total = ref_total = 0
    for n in range(1, GLEU_MAX_ORDER + 1):
        hyp_table = ngram_counts(hyp, n)
        ref_table = ngram_counts(ref, n)
        matched += clipped_matches(hyp_table, ref_table).total()
        hyp_total += hyp_table.total()
        ref_total += ref_table.total()
    p = matched / hyp_total if hyp_total else 0.0
    r = matched / ref_total if ref_total else 0.0
    return min(p, r)


def corpus_bleu(pairs, max_order: int = 4, weights=None) -> float:
    """Micro-averaged corpus BLEU.

    Clipped and hypothesis counts are pooled per order across every
    (hyp, ref) pair before dividing, and the brevity penalty uses summed
    lengths, so long sentences weigh more than short ones and a single
    pair degenerates to its sentence BLEU.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("corpus_bleu needs at least one (hyp, ref) pair")
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if weights is None:
        weights = _uniform(max_order)
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
    matched = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_table = ngram_counts(hyp, n)
            matched[n - 1] += clipped_matches(hyp_table, ngram_counts(ref, n)).total()
            totals[n - 1] += hyp_table.total()
    precisions = [m / t if t else 0.0 for m, t in zip(matched, totals)]
    return brevity_penalty(hyp_len, ref_len) * _geometric_mean(precisions, weights)
