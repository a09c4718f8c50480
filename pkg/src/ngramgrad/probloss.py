"""Differentiable n-gram training objectives.

The hard metrics count an n-gram as 1 if it appears; here each occurrence
contributes the product of the model's per-step probabilities for its
tokens, so the count — and everything downstream: clipped matches,
precision, the BLEU/GLEU-shaped scores — becomes a smooth function of the
decoder outputs, differentiable by the autodiff tape.

Token identities are frozen constants (argmax/teacher choices carry no
gradient); only the probability factors are graph nodes.  Reference counts
and the brevity penalty are constants too.  Setting every probability to 1
collapses each probabilistic quantity onto its hard counterpart exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from . import metrics
from .autodiff import Value
from .metrics import EPSILON, NgramTable

__all__ = [
    "ProbSequence",
    "ProbNgramTable",
    "prob_ngram_counts",
    "prob_clipped_matches",
    "prob_precision",
    "p_bleu",
    "p_gleu",
    "p_pn",
    "batch_loss",
    "OBJECTIVES",
]

P_GLEU_MAX_ORDER = 4


@dataclass
class ProbSequence:
    """A decoded sequence with the model probability of each emitted token.

    ``probs[j]`` is the scalar Value p(tokens[j] | tokens[<j], source); all
    should lie in (0, 1].  Floats are accepted and wrapped as constants,
    which is how the hard-reduction identities are exercised.
    """

    tokens: list
    probs: list

    def __post_init__(self):
        if len(self.tokens) != len(self.probs):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.probs)} probabilities"
            )
        self.probs = [p if isinstance(p, Value) else Value(p) for p in self.probs]

    @classmethod
    def from_vector(cls, tokens, vec: Value) -> "ProbSequence":
        """Build from one rank-1 Value holding all step probabilities."""
        return cls(list(tokens), [ad.gather(vec, j) for j in range(len(tokens))])

    def __len__(self):
        return len(self.tokens)


@dataclass
class ProbNgramTable:
    """Real-valued n-gram counts: gram tuple -> scalar Value."""

    order: int
    counts: dict


def _vsum(values) -> Value:
    if len(values) == 1:
        return values[0]
    return ad.sum_reduce(ad.stack(values))


def prob_ngram_counts(seq: ProbSequence, n: int) -> ProbNgramTable:
    """Probabilistic n-gram counts of a decoded sequence.

    The gram starting at position t contributes the product of the step
    probabilities of its n tokens; contributions of identical grams sum.
    With all probabilities 1 this is exactly the hard count table.
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    counts: dict = {}
    for t in range(len(seq.tokens) - n + 1):
        gram = tuple(seq.tokens[t : t + n])
        factor = seq.probs[t]
        for i in range(1, n):
            factor = factor * seq.probs[t + i]
        counts[gram] = counts[gram] + factor if gram in counts else factor
    return ProbNgramTable(n, counts)


def prob_clipped_matches(hyp: ProbNgramTable, ref: NgramTable) -> ProbNgramTable:
    """min(probabilistic hypothesis count, hard reference count) per gram.

    The reference count enters as a constant, so when the clip is active
    (hypothesis over-generates a gram) no gradient flows through that
    entry — the scalar-min routes the adjoint to the constant branch.
    """
    if hyp.order != ref.order:
        raise ValueError(f"order mismatch: {hyp.order} vs {ref.order}")
    clipped = {
        g: ad.smin(c, float(ref.counts.get(g, 0))) for g, c in hyp.counts.items()
    }
    return ProbNgramTable(hyp.order, clipped)


def prob_precision(seq: ProbSequence, ref, n: int) -> Value:
    """Differentiable n-gram precision: clipped over total probabilistic counts.

    A hypothesis shorter than n has no grams; the result is then the
    constant 0 with no gradient anywhere.
    """
    table = prob_ngram_counts(seq, n)
    if not table.counts:
        return Value(0.0)
    clipped = prob_clipped_matches(table, metrics.ngram_counts(ref, n))
    numer = _vsum(list(clipped.counts.values()))
    denom = _vsum(list(table.counts.values()))
    return numer / denom


def p_bleu(seq: ProbSequence, ref, max_order: int = 4, weights=None) -> Value:
    """BLEU with probabilistic precisions.

    The brevity penalty is computed from the discrete lengths and treated
    as a constant factor; each precision is floored at 1e-9 before the log,
    mirroring the hard metric.
    """
    if weights is None:
        weights = [1.0 / max_order] * max_order
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
    bp = metrics.brevity_penalty(len(seq), len(ref))
    terms = [
        ad.log(ad.smax(prob_precision(seq, ref, n), EPSILON)) * w
        for n, w in zip(range(1, max_order + 1), weights)
    ]
    return ad.exp(_vsum(terms)) * bp


def p_gleu(seq: ProbSequence, ref) -> Value:
    """Pooled probabilistic precision of 1..4-grams.

    One quotient: clipped counts summed across all four orders over total
    counts summed across all four orders.  No recall arm and no brevity
    penalty — this surrogate keeps only the precision side, whose
    denominator normalizes the score.
    """
    numer_terms: list = []
    denom_terms: list = []
    for n in range(1, P_GLEU_MAX_ORDER + 1):
        table = prob_ngram_counts(seq, n)
        if not table.counts:
            break
        clipped = prob_clipped_matches(table, metrics.ngram_counts(ref, n))
        numer_terms.extend(clipped.counts.values())
        denom_terms.extend(table.counts.values())
    if not denom_terms:
        return Value(0.0)
    return _vsum(numer_terms) / _vsum(denom_terms)


def p_pn(seq: ProbSequence, ref, n: int = 2) -> Value:
    """Single-order probabilistic precision (P-P2 in the experiments)."""
    return prob_precision(seq, ref, n)


OBJECTIVES = ("p_bleu", "p_gleu", "p_pn")


def _resolve_objective(objective: str, order: int):
    """Map an objective name to a (seq, ref) -> Value scorer.

    Accepts the canonical names plus the digit form "p_p2"/"p_p3"/... which
    overrides ``order``.
    """
    name = objective.lower().replace("-", "_")
    if name.startswith("p_p") and name[3:].isdigit():
        order = int(name[3:])
        name = "p_pn"
    if name == "p_bleu":
        return lambda seq, ref: p_bleu(seq, ref), 1
    if name == "p_gleu":
        return lambda seq, ref: p_gleu(seq, ref), 1
    if name == "p_pn":
        return lambda seq, ref: p_pn(seq, ref, order), order
    raise ValueError(
        f"unknown objective {objective!r}; expected one of p_bleu, p_gleu, p_pn/p_pN"
    )


def batch_loss(batch, objective: str, order: int = 2) -> tuple[Value, int]:
    """Negative sum of per-sentence scores over a batch.

    Returns (loss, skipped) where ``skipped`` counts degenerate sentences —
    empty hypotheses, or hypotheses shorter than the order of a single-order
    objective — which contribute nothing to the loss rather than erroring
    (greedy decoding emits very short outputs early in finetuning).
    """
    batch = list(batch)
    if not batch:
        raise ValueError("batch_loss needs at least one (ProbSequence, ref) pair")
    scorer, min_len = _resolve_objective(objective, order)
    scores = []
    skipped = 0
    for seq, ref in batch:
        if len(seq) < min_len:
            skipped += 1
            continue
        scores.append(scorer(seq, ref))
    if not scores:
        return Value(0.0), skipped
    return -_vsum(scores), skipped
