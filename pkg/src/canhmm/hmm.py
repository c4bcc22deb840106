"""Discrete-emission hidden Markov models.

Conventions: ``A[i, j] = P(state j at t | state i at t-1)`` and
``B[i, k] = P(symbol k | state i)``. Sampling uses numpy's PCG64 generator
(``numpy.random.default_rng(seed)``) with inverse-CDF draws from a single
uniform per choice, so a given seed always yields the same output.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .observations import ObservationAlphabet

FORMAT_VERSION = 1
ROW_TOL = 1e-12


class ModelValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid HMM: " + "; ".join(violations))
        self.violations = violations


class ImpossibleSequenceError(ValueError):
    """The observations have zero probability under the model."""


class ModelFormatError(ValueError):
    pass


@dataclass
class HmmModel:
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    alphabet: ObservationAlphabet | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.B.shape[1]

    def check(self) -> HmmModel:
        problems = validate_model(self)
        if problems:
            raise ModelValidationError(problems)
        return self

    @classmethod
    def uniform(cls, n_states: int, n_symbols: int, alphabet=None) -> HmmModel:
        return cls(np.full(n_states, 1 / n_states), np.full((n_states, n_states), 1 / n_states),
                   np.full((n_states, n_symbols), 1 / n_symbols), alphabet)

    @classmethod
    def random(cls, n_states: int, n_symbols: int, rng: np.random.Generator) -> HmmModel:
        """Row-stochastic matrices from normalized uniforms."""
        def rows(shape):
            x = rng.random(shape)
            return x / x.sum(axis=-1, keepdims=True)
        return cls(rows(n_states), rows((n_states, n_states)), rows((n_states, n_symbols)))


def validate_model(model: HmmModel) -> list[str]:
    """Every violated model invariant, as human-readable strings; empty if valid."""
    out = []
    pi, A, B = model.pi, model.A, model.B
    if pi.ndim != 1 or A.ndim != 2 or B.ndim != 2:
        return [f"bad array ranks: pi {pi.ndim}, A {A.ndim}, B {B.ndim}"]
    n = pi.shape[0]
    if n < 1:
        out.append("need at least one hidden state")
    if A.shape != (n, n):
        out.append(f"A has shape {A.shape}, expected ({n}, {n})")
    if B.shape[0] != n:
        out.append(f"B has {B.shape[0]} rows, expected {n}")
    if B.shape[1] < 2:
        out.append(f"need at least two symbols, B has {B.shape[1]} columns")
    if model.alphabet is not None and model.alphabet.n_symbols != B.shape[1]:
        out.append(f"B has {B.shape[1]} columns but the alphabet defines {model.alphabet.n_symbols} symbols")
    for name, arr in (("pi", pi), ("A", A), ("B", B)):
        if not np.all(np.isfinite(arr)):
            out.append(f"{name} has non-finite entries")
            continue
        for idx in zip(*np.nonzero(arr < 0)):
            out.append(f"{name}{list(map(int, idx))} is negative ({arr[idx]:g})")
    if np.all(np.isfinite(pi)) and abs(pi.sum() - 1) > ROW_TOL:
        out.append(f"pi sums to {pi.sum():.15g}")
    for name, arr in (("A", A), ("B", B)):
        if not np.all(np.isfinite(arr)):
            continue
        for i, s in enumerate(arr.sum(axis=1)):
            if abs(s - 1) > ROW_TOL:
                out.append(f"{name} row {i} sums to {s:.15g}")
    return out


def _symbols(model: HmmModel, symbols) -> np.ndarray:
    obs = np.asarray(symbols)
    if obs.ndim != 1 or obs.size == 0:
        raise ValueError("need a non-empty 1-D symbol sequence")
    if not np.issubdtype(obs.dtype, np.integer):
        raise ValueError("symbols must be integers")
    if obs.min() < 0 or obs.max() >= model.n_symbols:
        raise ValueError(f"symbol out of range [0, {model.n_symbols})")
    return obs.astype(np.int64)


def _emissions(model: HmmModel, obs: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(model.B[:, obs].T)


@dataclass
class DecodeResult:
    log_likelihood: float
    posteriors: np.ndarray
    scaling: np.ndarray

    @property
    def impossible(self) -> bool:
        return self.log_likelihood == -math.inf


def hmm_decode(model: HmmModel, symbols) -> DecodeResult:
    """Posterior state probabilities via scaled forward-backward.

    ``scaling[t] = P(o_t | o_1..o_{t-1})`` and the log-likelihood is the sum
    of their logs. A sequence the model cannot produce comes back with
    ``log_likelihood = -inf``, NaN posteriors, and zero scaling from the
    first impossible step on.
    """
    obs = _symbols(model, symbols)
    E = _emissions(model, obs)
    alpha, c, stop = _kernels.forward(model.pi, model.A, E)
    if stop < len(obs):
        return DecodeResult(-math.inf, np.full_like(alpha, np.nan), c)
    beta = _kernels.backward(model.A, E, c)
    post = alpha * beta
    post /= post.sum(axis=1, keepdims=True)
    return DecodeResult(math.fsum(np.log(c)), post, c)


def hmm_viterbi(model: HmmModel, symbols) -> np.ndarray:
    """Most likely hidden-state path; ties go to the lower state index."""
    obs = _symbols(model, symbols)
    with np.errstate(divide="ignore"):
        path, best = _kernels.viterbi(np.log(model.pi), np.log(model.A), np.log(_emissions(model, obs)))
    if best == -math.inf:
        raise ImpossibleSequenceError("no state path can produce this sequence")
    return path


def log_joint(model: HmmModel, states, symbols) -> float:
    """log P(states, symbols)."""
    s = np.asarray(states)
    o = np.asarray(symbols)
    with np.errstate(divide="ignore"):
        return float(np.log(model.pi[s[0]]) + np.log(model.A[s[:-1], s[1:]]).sum()
                     + np.log(model.B[s, o]).sum())


def _draw(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def hmm_generate(model: HmmModel, length: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(states, symbols)`` of the given length.

    Each step draws one uniform for the state (from pi, then the current
    transition row) and one for the symbol, in that order.
    """
    model.check()
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    pi_cdf = np.cumsum(model.pi)
    A_cdf = np.cumsum(model.A, axis=1)
    B_cdf = np.cumsum(model.B, axis=1)
    u = rng.random((length, 2))
    states = np.empty(length, dtype=np.int64)
    symbols = np.empty(length, dtype=np.int64)
    s = _draw(pi_cdf, u[0, 0])
    for t in range(length):
        if t:
            s = _draw(A_cdf[s], u[t, 0])
        states[t] = s
        symbols[t] = _draw(B_cdf[s], u[t, 1])
    return states, symbols


def _normalize_rows(counts: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Row-normalize counts; all-zero rows become uniform.

    With ``floor > 0`` each row is the maximizer of ``sum_k n_k log p_k``
    subject to ``p_k >= floor``: entries below the floor are clamped and the
    rest share the remaining mass in proportion to their counts.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    out = np.empty_like(counts)
    m = counts.shape[1]
    for r, row in enumerate(counts):
        total = row.sum()
        if total <= 0 or floor * m >= 1:
            out[r] = 1.0 / m
            continue
        p = row / total
        if floor > 0:
            clamped = np.zeros(m, dtype=bool)
            while True:
                free = row[~clamped].sum()
                p = np.where(clamped, floor, row * (1 - floor * clamped.sum()) / free)
                low = ~clamped & (p < floor)
                if not low.any():
                    break
                clamped |= low
        out[r] = p
    return out


def hmm_estimate(
    states,
    symbols,
    n_states: int | None = None,
    n_symbols: int | None = None,
    pseudocount: float = 0.0,
) -> HmmModel:
    """Maximum-likelihood parameters from a labelled state/symbol sequence.

    Transition and emission rows are normalized counts (plus an optional
    Laplace `pseudocount`); a state that never occurs gets uniform rows.
    The initial distribution is the empirical state occupancy.
    """
    s = np.asarray(states, dtype=np.int64)
    o = np.asarray(symbols, dtype=np.int64)
    if s.shape != o.shape:
        raise ValueError(f"states and symbols differ in length ({s.size} vs {o.size})")
    if s.size < 2:
        raise ValueError("need at least two observations")
    n = n_states or int(s.max()) + 1
    m = n_symbols or int(o.max()) + 1
    if s.min() < 0 or s.max() >= n or o.min() < 0 or o.max() >= m:
        raise ValueError("state or symbol out of range")
    trans = np.zeros((n, n))
    np.add.at(trans, (s[:-1], s[1:]), 1)
    emit = np.zeros((n, m))
    np.add.at(emit, (s, o), 1)
    occupancy = np.bincount(s, minlength=n).astype(float)
    return HmmModel(occupancy / occupancy.sum(), _normalize_rows(trans + pseudocount),
                    _normalize_rows(emit + pseudocount))


@dataclass
class TrainResult:
    model: HmmModel
    loglik: list[float]
    restart: int
    traces: list[list[float]]

    def __iter__(self):
        return iter((self.model, self.loglik))


def _em(model: HmmModel, seqs: list[np.ndarray], max_iters: int, tol: float,
        emission_floor: float, transition_floor: float) -> tuple[HmmModel, list[float]]:
    n, m = model.n_states, model.n_symbols
    trace: list[float] = []
    for _ in range(max_iters):
        pi_acc = np.zeros(n)
        trans = np.zeros((n, n))
        emit = np.zeros((n, m))
        logs = []
        for obs in seqs:
            E = _emissions(model, obs)
            alpha, c, stop = _kernels.forward(model.pi, model.A, E)
            if stop < len(obs):
                raise ImpossibleSequenceError("training sequence has zero probability under the current model")
            beta = _kernels.backward(model.A, E, c)
            g0, tr, em = _kernels.expected_counts(model.A, E, obs, alpha, beta, c, m)
            pi_acc += g0
            trans += tr
            emit += em
            logs.append(np.log(c))
        ll = math.fsum(np.concatenate(logs))
        if trace and ll - trace[-1] < tol:
            trace.append(ll)
            break
        trace.append(ll)
        if len(trace) == max_iters:
            break
        model = HmmModel(pi_acc / pi_acc.sum(), _normalize_rows(trans, transition_floor),
                         _normalize_rows(emit, emission_floor), model.alphabet)
    return model, trace


def hmm_train(
    sequences: Sequence,
    n_states: int = 5,
    *,
    n_symbols: int | None = None,
    init: HmmModel | None = None,
    max_iters: int = 500,
    tol: float = 1e-6,
    restarts: int = 5,
    seed: int = 0,
    emission_floor: float = 1e-6,
    transition_floor: float = 0.0,
    alphabet: ObservationAlphabet | None = None,
) -> TrainResult:
    """Baum-Welch over several sequences jointly.

    Each restart ``r`` starts from random row-stochastic matrices drawn with
    seed ``seed + r`` (or from `init` for the first restart, if given) and
    iterates until the total log-likelihood gains less than `tol` or
    `max_iters` E-steps have run. Emission (and optionally transition) rows
    are kept at or above their floors by a constrained M-step, which
    preserves the monotone likelihood guarantee. The restart with the
    highest final log-likelihood wins.

    ``loglik[k]`` is the log-likelihood of the k-th iterate; the last entry
    belongs to the returned model.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if max_iters < 1 or tol <= 0 or restarts < 1:
        raise ValueError("need max_iters >= 1, tol > 0, restarts >= 1")
    if isinstance(sequences, np.ndarray) and sequences.ndim == 1:
        sequences = [sequences]
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    if not seqs:
        raise ValueError("no training sequences")
    if any(s.ndim != 1 or s.size < 2 for s in seqs):
        raise ValueError("every training sequence needs at least two symbols")
    m = n_symbols or (alphabet.n_symbols if alphabet else None) or (init.n_symbols if init else None)
    if m is None:
        m = int(max(s.max() for s in seqs)) + 1
    for k, s in enumerate(seqs):
        if s.min() < 0 or s.max() >= m:
            raise ValueError(f"sequence {k} has a symbol outside [0, {m})")

    best: tuple[HmmModel, list[float], int] | None = None
    traces = []
    for r in range(restarts):
        if r == 0 and init is not None:
            start = init.check()
        else:
            start = HmmModel.random(n_states, m, np.random.default_rng(seed + r))
        start = HmmModel(start.pi, _normalize_rows(start.A, transition_floor),
                         _normalize_rows(start.B, emission_floor), alphabet)
        model, trace = _em(start, seqs, max_iters, tol, emission_floor, transition_floor)
        traces.append(trace)
        if best is None or trace[-1] > best[1][-1]:
            best = (model, trace, r)
    model, trace, r = best
    model.alphabet = alphabet
    model.meta = {"training": {"seed": seed, "restarts": restarts, "restart": r,
                               "iterations": len(trace), "final_loglik": trace[-1]}}
    return TrainResult(model, trace, r, traces)


def model_to_dict(model: HmmModel) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "N": model.n_states,
        "M": model.n_symbols,
        "pi": model.pi.tolist(),
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "alphabet": model.alphabet.to_dict() if model.alphabet else None,
        "training_meta": model.meta.get("training", {}),
    }
    if "detector" in model.meta:
        doc["detector"] = model.meta["detector"]
    return doc


def model_from_dict(doc: dict) -> HmmModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {doc.get('format_version')!r}")
    alphabet = ObservationAlphabet.from_dict(doc["alphabet"]) if doc.get("alphabet") else None
    meta = {"training": dict(doc.get("training_meta") or {})}
    if "detector" in doc:
        meta["detector"] = doc["detector"]
    model = HmmModel(doc["pi"], doc["A"], doc["B"], alphabet, meta)
    if model.n_states != doc["N"] or model.n_symbols != doc["M"]:
        raise ModelFormatError("N/M do not match the stored matrices")
    return model.check()


def save_model(model: HmmModel, path: str | Path) -> None:
    """Write the model as JSON; floats use Python's shortest round-trip repr."""
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> HmmModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
