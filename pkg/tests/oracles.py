"""Brute-force reference computations over every hidden-state path.

Exponential in T; only usable for the tiny models the oracle tests draw.
"""

import itertools
import math

import numpy as np


def path_probability(pi, A, B, path, symbols) -> float:
    p = pi[path[0]] * B[path[0], symbols[0]]
    for t in range(1, len(symbols)):
        p *= A[path[t - 1], path[t]] * B[path[t], symbols[t]]
    return float(p)


def all_paths(n_states: int, length: int):
    return itertools.product(range(n_states), repeat=length)


def brute_likelihood(model, symbols) -> float:
    return math.fsum(path_probability(model.pi, model.A, model.B, p, symbols)
                     for p in all_paths(model.n_states, len(symbols)))


def brute_posteriors(model, symbols) -> np.ndarray:
    post = np.zeros((len(symbols), model.n_states))
    for p in all_paths(model.n_states, len(symbols)):
        w = path_probability(model.pi, model.A, model.B, p, symbols)
        post[np.arange(len(symbols)), p] += w
    return post / post.sum(axis=1, keepdims=True)


def log_path_score(model, path, symbols) -> float:
    with np.errstate(divide="ignore"):
        lp, lA, lB = np.log(model.pi), np.log(model.A), np.log(model.B)
    s = lp[path[0]] + lB[path[0], symbols[0]]
    for t in range(1, len(symbols)):
        s += lA[path[t - 1], path[t]] + lB[path[t], symbols[t]]
    return float(s)


def brute_viterbi(model, symbols, tol: float = 1e-9) -> tuple[tuple[int, ...] | None, float]:
    """Most probable path by enumeration, with the backtracking tie rule.

    Picking the lowest state index at every backtrack step (last step first)
    selects, among all optimal paths, the one that is smallest when read
    from the end. Scores within `tol` of the best count as ties.
    """
    scores = {p: log_path_score(model, p, symbols) for p in all_paths(model.n_states, len(symbols))}
    top = max(scores.values())
    if top == -np.inf:
        return None, top
    optimal = [p for p, s in scores.items() if s >= top - tol]
    return min(optimal, key=lambda p: p[::-1]), top


def random_model(rng, n_states: int, n_symbols: int, sparse: bool = False):
    from canhmm.hmm import HmmModel

    m = HmmModel.random(n_states, n_symbols, rng)
    if sparse:
        for arr in (m.A, m.B):
            mask = rng.random(arr.shape) < 0.25
            mask[np.arange(arr.shape[0]), rng.integers(arr.shape[1], size=arr.shape[0])] = False
            arr[mask] = 0.0
            arr /= arr.sum(axis=1, keepdims=True)
    return m
