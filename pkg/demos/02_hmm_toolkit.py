"""
The five HMM operations on a toy model
======================================

Generate, estimate, decode, Viterbi and Baum-Welch training on a
two-state, three-symbol model small enough to reason about by hand.
"""

import itertools

import numpy as np

from canhmm.hmm import HmmModel, hmm_decode, hmm_estimate, hmm_generate, hmm_train, hmm_viterbi

# State 0 prefers symbol 0, state 1 prefers symbol 2; both states are sticky.
source = HmmModel(
    pi=[0.5, 0.5],
    A=[[0.9, 0.1], [0.2, 0.8]],
    B=[[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
)

states, symbols = hmm_generate(source, 10_000, seed=7)
print("first 20 states: ", states[:20])
print("first 20 symbols:", symbols[:20])

# With the states known, estimation is counting.
counted = hmm_estimate(states, symbols, 2, 3)
print("estimated A:\n", counted.A.round(3))

# Decoding returns the log-likelihood plus per-step predictive probabilities;
# their logs add up to the log-likelihood, which keeps long sequences stable.
res = hmm_decode(source, symbols)
print(f"log-likelihood {res.log_likelihood:.3f}, sum of log c_t {np.log(res.scaling).sum():.3f}")

path = hmm_viterbi(source, symbols)
print(f"Viterbi path agrees with the true states on {np.mean(path == states):.1%} of steps")

# Baum-Welch from five random starts; the trace never goes down.
fit = hmm_train([symbols], 2, restarts=5, seed=0)
print(f"restart {fit.restart} won after {len(fit.loglik)} iterations, "
      f"final log-likelihood {fit.loglik[-1]:.3f}")
assert all(b >= a - 1e-10 for a, b in itertools.pairwise(fit.loglik))

# Hidden states have no names, so compare up to relabelling.
best = min(itertools.permutations(range(2)),
           key=lambda p: np.abs(fit.model.B[list(p)] - source.B).max())
print("recovered A:\n", fit.model.A[np.ix_(best, best)].round(3))
print("recovered B:\n", fit.model.B[list(best)].round(3))
