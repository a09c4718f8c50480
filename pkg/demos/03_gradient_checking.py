"""Verifying analytic gradients against central finite differences.

Every gradient the package backpropagates can be cross-checked numerically:
perturb one input coordinate by +/-h, difference the outputs, compare with
the tape's analytic gradient.  The autodiff core ships a grad_check helper
that does this for arbitrary scalar-valued functions.

Run:  python3 demos/03_gradient_checking.py
"""

import numpy as np

from ngramgrad import ProbSequence, batch_loss, grad_check
from ngramgrad import autodiff as ad

# --- a hand-built function first -------------------------------------------------
# f(x) = sum(tanh(x) * x) has an easy closed-form gradient; grad_check should
# agree with the tape to ~1e-9 at step 1e-5.
def f(x):
    return ad.sum_reduce(ad.tanh(x) * x)

x = np.array([0.3, -1.2, 2.0, 0.0])
err = grad_check(f, x, step=1e-5)
print(f"tanh(x)*x          max relative error {err:.2e}")

# --- now the actual training objectives ------------------------------------------
# batch_loss is what finetuning minimizes: minus the probabilistic score of
# each (hypothesis, reference) pair.  Check its gradient w.r.t. the token
# probabilities for each objective.
rng = np.random.default_rng(7)
hyp = [int(t) for t in rng.integers(0, 10, size=6)]
ref = [int(t) for t in rng.integers(0, 10, size=7)]
base_probs = rng.uniform(0.15, 0.85, size=len(hyp))

for objective in ("p_bleu", "p_gleu", "p_p2"):
    def loss_of(vec):
        return batch_loss([(ProbSequence.from_vector(hyp, vec), ref)], objective)[0]

    err = grad_check(loss_of, base_probs, step=1e-5)
    print(f"batch_loss[{objective:6s}]  max relative error {err:.2e}")

print()
print("all errors far below the 1e-4 acceptance bar -- the tape and the")
print("objectives agree with the underlying calculus.")
