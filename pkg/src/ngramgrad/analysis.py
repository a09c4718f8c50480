"""Correlation study between hard and probabilistic sentence scores.

The interesting question about a differentiable surrogate is whether it
orders hypotheses the way the real metric does.  This module greedy-decodes
sampled sentences, scores each hypothesis with GLEU (hard) and with the
pooled probabilistic precision (its differentiable stand-in), and reports
the Pearson correlation plus the raw scatter rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .probloss import ProbSequence, p_gleu
from .seq2seq import ModelParams, decode_greedy, default_max_len, encode

__all__ = ["CorrelationReport", "pearson", "correlate", "report_csv", "parse_report_csv"]

SCATTER_HEADER = "id,gleu,pgleu"


@dataclass
class CorrelationReport:
    n: int
    coefficient: float
    rows: list  # (sentence id, hard GLEU, probabilistic GLEU)


def pearson(xs, ys) -> float:
    """Sample Pearson correlation of two equal-length sequences.

    Undefined when either side has zero variance, so that is an error
    rather than a silent NaN.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError(f"need equal-length vectors, got {xs.shape} and {ys.shape}")
    if xs.size < 2:
        raise ValueError(f"need at least 2 points, got {xs.size}")
    if np.ptp(xs) == 0.0 or np.ptp(ys) == 0.0:
        raise ValueError("zero variance: correlation undefined")
    return float(np.corrcoef(xs, ys)[0, 1])


def correlate(
    params: ModelParams, pairs, n_samples: int, rng: np.random.Generator
) -> CorrelationReport:
    """Greedy-decode ``n_samples`` pairs drawn without replacement; score both ways.

    Empty hypotheses are dropped (both scores would be the constant 0);
    fewer than 2 surviving samples is an error.
    """
    pairs = list(pairs)
    if n_samples > len(pairs):
        raise ValueError(f"asked for {n_samples} samples from {len(pairs)} pairs")
    chosen = rng.choice(len(pairs), size=n_samples, replace=False)
    rows = []
    for idx in chosen:
        src, ref = pairs[int(idx)]
        outputs = decode_greedy(encode(src, params), default_max_len(len(src)), params)
        if not outputs:
            continue
        hyp = [o.token for o in outputs]
        seq = ProbSequence(hyp, [o.prob for o in outputs])
        rows.append((int(idx), metrics.gleu(hyp, ref), p_gleu(seq, ref).item()))
    if len(rows) < 2:
        raise ValueError(f"only {len(rows)} valid samples; need at least 2")
    coeff = pearson([r[1] for r in rows], [r[2] for r in rows])
    return CorrelationReport(len(rows), coeff, rows)


def report_csv(report: CorrelationReport) -> str:
    lines = [SCATTER_HEADER]
    for sid, hard, soft in report.rows:
        lines.append(f"{sid},{hard!r},{soft!r}")
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list:
    lines = text.strip().split("\n")
    if lines[0] != SCATTER_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        sid, hard, soft = line.split(",")
        rows.append((int(sid), float(hard), float(soft)))
    return rows
