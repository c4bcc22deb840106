"""Turn physical sensor series into discrete observation symbols.

Each channel is resampled onto a common grid, differenced into per-step
gradients, and quantized; the per-channel bins are packed into one joint
symbol with a mixed-radix (row-major) index, the first channel being the
most significant digit.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .codec import PidSample

log = logging.getLogger(__name__)


class ObservationError(ValueError):
    pass


def _as_arrays(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, tuple) and len(series) == 2:
        t, v = series
        return np.asarray(t, dtype=float), np.asarray(v, dtype=float)
    series = list(series)
    if series and isinstance(series[0], PidSample):
        return (np.array([s.timestamp for s in series], dtype=float),
                np.array([s.value for s in series], dtype=float))
    arr = np.asarray(series, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def resample(series, dt: float = 1.0, t0: float | None = None, t1: float | None = None,
             *, gap_limit: float = 3.0) -> np.ndarray:
    """Nearest-sample resampling onto the grid ``t0, t0+dt, ... <= t1``.

    `series` is a sequence of :class:`PidSample`, of ``(ts, value)`` pairs, or
    a ``(timestamps, values)`` tuple, sorted by time. Ties between two
    equally near samples go to the earlier one. A grid point farther than
    ``gap_limit * dt`` from every sample is NaN (missing).
    """
    t, v = _as_arrays(series)
    if t.size == 0:
        raise ObservationError("cannot resample an empty series")
    if dt <= 0:
        raise ObservationError(f"dt must be positive, got {dt}")
    t0 = t[0] if t0 is None else t0
    t1 = t[-1] if t1 is None else t1
    if t1 < t0:
        raise ObservationError(f"t1={t1} precedes t0={t0}")
    n = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
    grid = t0 + dt * np.arange(n)
    right = np.clip(np.searchsorted(t, grid, side="left"), 0, t.size - 1)
    left = np.clip(right - 1, 0, t.size - 1)
    d_left = np.abs(grid - t[left])
    d_right = np.abs(t[right] - grid)
    pick = np.where(d_left <= d_right, left, right)
    out = v[pick].copy()
    out[np.minimum(d_left, d_right) > gap_limit * dt] = np.nan
    return out


def gradients(values) -> np.ndarray:
    """First differences ``v[i+1] - v[i]``; NaN wherever either end is missing."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ObservationError("need at least two values to take gradients")
    return np.diff(v)


def contiguous_runs(values) -> list[tuple[int, int]]:
    """Half-open ``(start, stop)`` index ranges of non-missing values."""
    ok = ~np.isnan(np.asarray(values, dtype=float))
    edges = np.flatnonzero(np.diff(np.concatenate(([0], ok.astype(np.int8), [0]))))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


@dataclass(frozen=True)
class Quantizer:
    channel: str
    edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if not edges:
            raise ObservationError("a quantizer needs at least one edge (two bins)")
        if not all(math.isfinite(e) for e in edges):
            raise ObservationError("bin edges must be finite")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ObservationError(f"bin edges must be strictly increasing: {edges}")

    @property
    def bin_count(self) -> int:
        return len(self.edges) + 1

    def __call__(self, g):
        return quantize(self, g)


def quantize(q: Quantizer, g):
    """Bin index ``i`` with ``edges[i-1] <= g < edges[i]`` (outer edges at +-inf).

    Accepts a scalar or an array; raises on NaN or infinite input.
    """
    arr = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ObservationError("cannot quantize a non-finite gradient")
    idx = np.searchsorted(np.asarray(q.edges), arr, side="right")
    return int(idx) if idx.ndim == 0 else idx.astype(np.int64)


def fit_quantizer(
    gradients,
    bin_count: int = 5,
    scheme: str = "quantile",
    *,
    channel: str = "",
    edges: Sequence[float] | None = None,
    symmetric: bool = True,
    envelope: float | None = None,
) -> Quantizer:
    """Fit per-channel gradient bins.

    ``scheme="quantile"`` puts edges at the k/bin_count quantiles of the
    training gradients (midpoint interpolation), mirrors them around zero
    when `symmetric`, and drops duplicates. ``scheme="fixed"`` takes `edges`
    verbatim.

    `envelope`, when given, appends two outlier bins bounded at
    ``+-envelope * max|g|``: gradients far outside anything seen during
    training then land in bins with no training mass.
    """
    if scheme == "fixed":
        if edges is None:
            raise ObservationError("fixed scheme needs explicit edges")
        return Quantizer(channel, tuple(edges))
    if scheme != "quantile":
        raise ObservationError(f"unknown quantizer scheme {scheme!r}")
    if bin_count < 2:
        raise ObservationError(f"bin_count must be >= 2, got {bin_count}")
    g = np.asarray(gradients, dtype=float)
    g = g[np.isfinite(g)]
    n_edges = bin_count - 1
    if np.unique(g).size < n_edges:
        raise ObservationError(
            f"channel {channel or '?'} has {np.unique(g).size} distinct gradients, "
            f"too few for {bin_count} bins; reduce bin_count"
        )
    cut = np.quantile(g, np.arange(1, bin_count) / bin_count, method="midpoint")
    if symmetric:
        cut = (cut - cut[::-1]) / 2.0
    cut = np.unique(cut)
    if cut.size < n_edges:
        log.warning("channel %s: quantile edges collapsed from %d to %d", channel, n_edges, cut.size)
    if envelope is not None:
        reach = envelope * float(np.max(np.abs(g)))
        if reach > max(abs(cut[0]), abs(cut[-1])):
            cut = np.concatenate(([-reach], cut, [reach]))
    return Quantizer(channel, tuple(cut))


@dataclass(frozen=True)
class ObservationAlphabet:
    quantizers: tuple[Quantizer, ...]
    dt: float = 1.0
    _radix: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "quantizers", tuple(self.quantizers))
        if not self.quantizers:
            raise ObservationError("alphabet needs at least one channel")
        names = self.channels
        if len(set(names)) != len(names):
            raise ObservationError(f"duplicate channel in alphabet: {names}")
        if self.dt <= 0:
            raise ObservationError("dt must be positive")
        weights = []
        w = 1
        for q in reversed(self.quantizers):
            weights.append(w)
            w *= q.bin_count
        object.__setattr__(self, "_radix", tuple(reversed(weights)))

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(q.channel for q in self.quantizers)

    @property
    def bins(self) -> tuple[int, ...]:
        return tuple(q.bin_count for q in self.quantizers)

    @property
    def n_symbols(self) -> int:
        return math.prod(self.bins)

    def __getitem__(self, channel: str) -> Quantizer:
        for q in self.quantizers:
            if q.channel == channel:
                return q
        raise KeyError(channel)

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "edges": {q.channel: list(q.edges) for q in self.quantizers},
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ObservationAlphabet:
        return cls(tuple(Quantizer(c, tuple(d["edges"][c])) for c in d["channels"]), float(d["dt"]))


def encode_joint(alphabet: ObservationAlphabet, symbols: Sequence[int]):
    """Pack one bin index per channel into a joint symbol.

    `symbols` may be a sequence of ints or of equal-length integer arrays.
    """
    if len(symbols) != len(alphabet.quantizers):
        raise ObservationError(f"expected {len(alphabet.quantizers)} components, got {len(symbols)}")
    total = 0
    for s, bins, w, name in zip(symbols, alphabet.bins, alphabet._radix, alphabet.channels):
        s = np.asarray(s)
        if np.any((s < 0) | (s >= bins)):
            raise ObservationError(f"{name} symbol out of range [0, {bins})")
        total = total + s.astype(np.int64) * w
    return int(total) if np.ndim(total) == 0 else total


def decode_joint(alphabet: ObservationAlphabet, symbol) -> tuple:
    """Inverse of :func:`encode_joint`; returns one component per channel."""
    s = np.asarray(symbol, dtype=np.int64)
    if np.any((s < 0) | (s >= alphabet.n_symbols)):
        raise ObservationError(f"joint symbol out of range [0, {alphabet.n_symbols})")
    out = []
    for bins, w in zip(alphabet.bins, alphabet._radix):
        c = (s // w) % bins
        out.append(int(c) if c.ndim == 0 else c)
    return tuple(out)


def fit_alphabet(
    series: Mapping[str, np.ndarray],
    channels: Sequence[str] | None = None,
    *,
    bin_count: int = 5,
    scheme: str = "quantile",
    edges: Mapping[str, Sequence[float]] | None = None,
    envelope: float | None = 2.0,
    dt: float = 1.0,
) -> ObservationAlphabet:
    """Fit one quantizer per channel from uniform training series."""
    channels = list(channels or series)
    qs = []
    for c in channels:
        g = gradients(series[c])
        if scheme == "fixed":
            qs.append(fit_quantizer(g, scheme="fixed", channel=c, edges=(edges or {})[c]))
        else:
            qs.append(fit_quantizer(g, bin_count, scheme, channel=c, envelope=envelope))
    return ObservationAlphabet(tuple(qs), dt)


def encode_runs(alphabet: ObservationAlphabet, series: Mapping[str, np.ndarray]) -> list[tuple[int, np.ndarray]]:
    """Encode multi-channel uniform series into ``(start, symbols)`` runs.

    A grid point missing in any channel breaks the sequence. Symbol ``k`` of
    a run starting at grid index ``start`` describes the step from grid point
    ``start + k`` to ``start + k + 1``. Runs shorter than two grid points
    produce no symbols and are dropped.
    """
    missing = [c for c in alphabet.channels if c not in series]
    if missing:
        raise ObservationError(f"series lacks channels required by the alphabet: {missing}")
    cols = [np.asarray(series[c], dtype=float) for c in alphabet.channels]
    if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
        raise ObservationError("all channels must share the same grid")
    stacked = np.vstack(cols)
    present = np.where(np.all(np.isfinite(stacked), axis=0), 0.0, np.nan)
    runs = []
    for lo, hi in contiguous_runs(present):
        if hi - lo < 2:
            continue
        parts = [quantize(q, np.diff(col[lo:hi])) for q, col in zip(alphabet.quantizers, cols)]
        runs.append((lo, np.asarray(encode_joint(alphabet, parts), dtype=np.int64)))
    return runs


def encode_sequence(alphabet: ObservationAlphabet, series: Mapping[str, np.ndarray]) -> list[np.ndarray]:
    """Symbol sequences for each contiguous run (see :func:`encode_runs`)."""
    return [s for _, s in encode_runs(alphabet, series)]
