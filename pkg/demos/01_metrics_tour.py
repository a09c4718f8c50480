"""A tour of the hard (non-differentiable) n-gram metrics.

Run:  python3 demos/01_metrics_tour.py
"""

from ngramgrad import bleu, corpus_bleu, gleu
from ngramgrad.metrics import brevity_penalty, clipped_matches, ngram_counts, precision_recall

hyp = ["the", "cat", "sat", "on", "the", "mat"]
ref = ["the", "cat", "sat", "on", "a", "mat"]

print("hypothesis:", " ".join(hyp))
print("reference: ", " ".join(ref))
print()

# n-gram tables are plain Counters keyed by token tuples
for n in (1, 2):
    table = ngram_counts(hyp, n)
    print(f"{n}-gram counts:", dict(table.counts))

# clipping caps each hypothesis count at the reference count, so repeating
# "the the the the" cannot farm unigram matches
clipped = clipped_matches(ngram_counts(hyp, 1), ngram_counts(ref, 1))
print("clipped unigram matches:", dict(clipped.counts))

p, r = precision_recall(hyp, ref, 2)
print(f"bigram precision {p:.3f}, recall {r:.3f}")
print()

# sentence BLEU: geometric mean of 1..4-gram precisions times brevity penalty
print(f"bleu(hyp, ref)    = {bleu(hyp, ref):.4f}")
print(f"bleu(ref, ref)    = {bleu(ref, ref):.4f}   (identity at len >= 4)")
print(f"brevity_penalty(3, 6) = {brevity_penalty(3, 6):.4f}   (short hypotheses pay)")

# GLEU is the sentence-level surrogate: min(pooled precision, pooled recall)
# over orders 1-4, no brevity penalty -- better behaved on single sentences
print(f"gleu(hyp, ref)    = {gleu(hyp, ref):.4f}")
print()

# corpus BLEU pools counts over all pairs before dividing (micro-average),
# so one terrible sentence cannot zero out the whole score
pairs = [
    (hyp, ref),
    (["a", "dog"], ["a", "dog"]),
    (["mat"], ["the", "mat"]),
]
print(f"corpus_bleu over {len(pairs)} pairs = {corpus_bleu(pairs):.4f}")
