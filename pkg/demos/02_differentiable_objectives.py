"""Differentiable n-gram objectives: the core idea.

Hard n-gram counts jump 0 -> 1 when a token changes, so BLEU has no useful
gradient.  Replace each count with the product of the model's probabilities
for the tokens inside the gram and every count, precision, and score becomes
a smooth function of those probabilities -- something a seq2seq model can be
trained on directly.

Run:  python3 demos/02_differentiable_objectives.py
"""

import numpy as np

from ngramgrad import ProbSequence, Value, p_bleu, p_gleu, p_pn
from ngramgrad.probloss import prob_clipped_matches, prob_ngram_counts
from ngramgrad.metrics import ngram_counts

# A 4-token hypothesis with per-token probabilities (imagine these came from
# a decoder's softmax).  Tokens are small ints, as produced by a vocabulary.
tokens = [5, 7, 9, 7]
probs = [Value(0.9), Value(0.6), Value(0.8), Value(0.7)]
seq = ProbSequence(tokens, probs)
ref = [5, 7, 7, 9]

# each bigram's count is the product of its tokens' probabilities
table = prob_ngram_counts(seq, 2)
print("probabilistic bigram counts:")
for gram, count in table.counts.items():
    print(f"  {gram}: {count.item():.3f}")

# clipping against the reference count uses a smooth min; the reference
# side is a constant, so gradients only flow through the hypothesis
clipped = prob_clipped_matches(table, ngram_counts(ref, 2))
print("clipped:", {g: round(c.item(), 3) for g, c in clipped.counts.items()})
print()

# three scores, all differentiable in the probabilities
for name, score in [
    ("P-BLEU", p_bleu(seq, ref)),
    ("P-GLEU", p_gleu(seq, ref)),
    ("P-P2  ", p_pn(seq, ref, 2)),
]:
    print(f"{name} = {score.item():.4f}")
print("(P-BLEU is ~0 here: hyp and ref share no 3- or 4-grams, and the")
print(" epsilon-floored high orders crush the geometric mean -- exactly why")
print(" single-order precisions and pooled P-GLEU behave better per sentence.)")
print()

# the payoff: gradients.  Maximizing P-P2 means pushing up probabilities of
# bigrams that match the reference and down those that don't.
score = p_pn(seq, ref, 2)
score.backward()
print("d(P-P2)/d(prob) per token:")
for t, p in zip(tokens, probs):
    direction = "raise" if p.grad.item() > 0 else ("lower" if p.grad.item() < 0 else "leave")
    print(f"  token {t}: grad {p.grad.item():+.4f}  -> {direction} its probability")
