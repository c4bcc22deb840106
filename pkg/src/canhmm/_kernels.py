"""Compiled inner loops for the scaled forward-backward and Viterbi passes.

All kernels take the per-step emission likelihoods ``E[t, i] = B[i, o_t]``
so they never index the emission matrix themselves.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def forward(pi, A, E):
    """Scaled forward pass.

    Returns (alpha, c, stop). ``alpha[t]`` is normalized to sum 1 and
    ``c[t] = P(o_t | o_<t)``. `stop` is the first step whose predictive
    probability is zero, or T when the whole sequence is possible; rows
    from `stop` on are left at zero.
    """
    T, N = E.shape
    alpha = np.zeros((T, N))
    c = np.zeros(T)
    for i in range(N):
        alpha[0, i] = pi[i] * E[0, i]
        c[0] += alpha[0, i]
    if c[0] <= 0.0:
        alpha[0, :] = 0.0
        return alpha, c, 0
    for i in range(N):
        alpha[0, i] /= c[0]
    for t in range(1, T):
        for j in range(N):
            acc = 0.0
            for i in range(N):
                acc += alpha[t - 1, i] * A[i, j]
            alpha[t, j] = acc * E[t, j]
            c[t] += alpha[t, j]
        if c[t] <= 0.0:
            alpha[t, :] = 0.0
            return alpha, c, t
        for j in range(N):
            alpha[t, j] /= c[t]
    return alpha, c, T


@nb.njit(cache=True)
def backward(A, E, c):
    """Scaled backward pass matching :func:`forward`'s scaling factors."""
    T, N = E.shape
    beta = np.zeros((T, N))
    beta[T - 1, :] = 1.0
    for t in range(T - 2, -1, -1):
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += A[i, j] * E[t + 1, j] * beta[t + 1, j]
            beta[t, i] = acc / c[t + 1]
    return beta


@nb.njit(cache=True)
def expected_counts(A, E, obs, alpha, beta, c, n_symbols):
    """E-step sufficient statistics for one sequence.

    Returns (gamma0, transition counts N x N, emission counts N x M).
    """
    T, N = E.shape
    trans = np.zeros((N, N))
    emit = np.zeros((N, n_symbols))
    for t in range(T):
        norm = 0.0
        for i in range(N):
            norm += alpha[t, i] * beta[t, i]
        for i in range(N):
            emit[i, obs[t]] += alpha[t, i] * beta[t, i] / norm
    for t in range(T - 1):
        for i in range(N):
            a = alpha[t, i] / c[t + 1]
            for j in range(N):
                trans[i, j] += a * A[i, j] * E[t + 1, j] * beta[t + 1, j]
    gamma0 = alpha[0] * beta[0]
    return gamma0 / gamma0.sum(), trans, emit


TIE_RTOL = 1e-12


@nb.njit(cache=True)
def _lowest_argmax(values):
    """Lowest index whose value is within TIE_RTOL (relative) of the maximum.

    Scores that are equal in exact arithmetic (the same factors multiplied in
    another order) can differ in the last bits; treating them as ties keeps
    the lowest-index rule deterministic.
    """
    top = -np.inf
    for v in values:
        if v > top:
            top = v
    if top == -np.inf:
        return 0, top
    cut = top - TIE_RTOL * max(1.0, abs(top))
    for i in range(values.size):
        if values[i] >= cut:
            return i, top
    return 0, top


@nb.njit(cache=True)
def viterbi(log_pi, log_A, log_E):
    """Most probable path in log space; ties resolve to the lowest state index.

    Returns (path, best log joint probability).
    """
    T, N = log_E.shape
    delta = np.empty(N)
    nxt = np.empty(N)
    cand = np.empty(N)
    back = np.zeros((T, N), dtype=np.int64)
    for i in range(N):
        delta[i] = log_pi[i] + log_E[0, i]
    for t in range(1, T):
        for j in range(N):
            for i in range(N):
                cand[i] = delta[i] + log_A[i, j]
            arg, best = _lowest_argmax(cand)
            back[t, j] = arg
            nxt[j] = best + log_E[t, j]
        delta[:] = nxt
    path = np.zeros(T, dtype=np.int64)
    last, best = _lowest_argmax(delta)
    path[T - 1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


@nb.njit(cache=True)
def window_scores(pi, A, E_windows):
    """Predictive score of the last observation of each window.

    `E_windows` has shape (W, n, N): emission likelihoods for W windows of
    n observations. Returns the last-step scaling factor of each window.
    """
    W, n, N = E_windows.shape
    out = np.zeros(W)
    alpha = np.empty(N)
    nxt = np.empty(N)
    for w in range(W):
        s = 0.0
        for i in range(N):
            alpha[i] = pi[i] * E_windows[w, 0, i]
            s += alpha[i]
        dead = s <= 0.0
        if not dead:
            for i in range(N):
                alpha[i] /= s
        for t in range(1, n):
            if dead:
                break
            s = 0.0
            for j in range(N):
                acc = 0.0
                for i in range(N):
                    acc += alpha[i] * A[i, j]
                nxt[j] = acc * E_windows[w, t, j]
                s += nxt[j]
            if s <= 0.0:
                dead = True
                break
            for j in range(N):
                alpha[j] = nxt[j] / s
        out[w] = 0.0 if dead else s
    return out
