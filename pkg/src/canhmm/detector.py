"""Sliding-window anomaly detection over a symbol stream.

Every new observation is scored against the model in the context of the
window of up to ``n`` most recent observations (itself included). The
default "predictive" score is the forward scaling factor of the newest
observation, ``P(o_t | o_{t-n+1} .. o_{t-1})``. An observation whose score
falls strictly below the threshold raises one alert, once, as it enters
the window.
"""

from __future__ import annotations

import json
import math
from collections import deque
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .hmm import HmmModel, hmm_decode
from .observations import decode_joint

SCORE_MODES = ("predictive", "max_posterior")


@dataclass(frozen=True)
class DetectorConfig:
    window: int = 10
    threshold: float = 1.0
    score_mode: str = "predictive"
    quantile: float = 0.0
    margin: float = 0.5

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must lie in (0, 1], got {self.threshold}")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}")
        if not 0 <= self.quantile < 1:
            raise ValueError("quantile must lie in [0, 1)")
        if self.margin <= 0:
            raise ValueError("margin must be positive")


@dataclass
class AnomalyAlert:
    t: int
    window: tuple[int, int]
    score: float
    threshold: float
    channels: dict[str, int] = field(default_factory=dict)
    unknown: bool = False
    mode: str = "predictive"
    ts: float | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["window"] = list(self.window)
        if not self.unknown:
            del d["unknown"]
        return json.dumps(d)


def score_window(model: HmmModel, symbols, score_mode: str = "predictive") -> np.ndarray:
    """Per-observation scores of one window.

    ``predictive``: the decode scaling factors ``c_t``; their product is the
    window likelihood. ``max_posterior``: the largest posterior state
    probability at each step. Steps that the model cannot produce score 0.
    """
    res = hmm_decode(model, symbols)
    if score_mode == "predictive":
        return res.scaling.copy()
    if score_mode == "max_posterior":
        if res.impossible:
            return np.zeros(len(res.scaling))
        return res.posteriors.max(axis=1)
    raise ValueError(f"unknown score_mode {score_mode!r}")


def stream_scores(model: HmmModel, symbols, window: int, score_mode: str = "predictive") -> np.ndarray:
    """Score every observation of a stream against its trailing window.

    Equivalent to feeding the symbols one at a time to a :class:`Detector`
    and collecting each newest-observation score, but batched.
    """
    obs = np.asarray(symbols, dtype=np.int64)
    T = obs.size
    if T == 0:
        return np.zeros(0)
    if score_mode == "max_posterior":
        return np.array([score_window(model, obs[max(0, t - window + 1):t + 1], score_mode)[-1]
                         for t in range(T)])
    warm = min(window - 1, T)
    out = np.empty(T)
    if warm:
        out[:warm] = score_window(model, obs[:warm])
    if T >= window:
        E = model.B[:, sliding_window_view(obs, window)].transpose(1, 2, 0)
        out[warm:] = _kernels.window_scores(model.pi, model.A, np.ascontiguousarray(E))
    return out


class Detector:
    """Streaming detector holding only the last ``window`` symbols.

    Out-of-range symbols raise an ``unknown`` alert with score 0 and clear
    the window, since no context can be carried across them.
    """

    def __init__(self, model: HmmModel, config: DetectorConfig, *, start: int = 0):
        self.model = model
        self.config = config
        self.t = start
        self._buf: deque[int] = deque(maxlen=config.window)

    def reset(self) -> None:
        self._buf.clear()

    def update(self, symbol: int, ts: float | None = None) -> AnomalyAlert | None:
        t = self.t
        self.t += 1
        cfg = self.config
        if not 0 <= symbol < self.model.n_symbols:
            self._buf.clear()
            return AnomalyAlert(t, (t, t), 0.0, cfg.threshold, {}, True, cfg.score_mode, ts)
        self._buf.append(int(symbol))
        score = float(score_window(self.model, np.fromiter(self._buf, np.int64), cfg.score_mode)[-1])
        if score < cfg.threshold:
            return AnomalyAlert(t, (t - len(self._buf) + 1, t), score, cfg.threshold,
                                _channels(self.model, symbol), False, cfg.score_mode, ts)
        return None

    def process(self, symbols: Iterable[int], timestamps: Iterable[float] | None = None) -> Iterator[AnomalyAlert]:
        ts_iter = iter(timestamps) if timestamps is not None else None
        for s in symbols:
            alert = self.update(int(s), next(ts_iter) if ts_iter is not None else None)
            if alert is not None:
                yield alert


def _channels(model: HmmModel, symbol: int) -> dict[str, int]:
    if model.alphabet is None:
        return {}
    parts = decode_joint(model.alphabet, symbol)
    return {f"{c}_bin": int(p) for c, p in zip(model.alphabet.channels, parts)}


def detect_stream(model: HmmModel, config: DetectorConfig, symbols, *, start: int = 0,
                  timestamps: Sequence[float] | None = None) -> list[AnomalyAlert]:
    """All alerts for a finite stream, in stream order.

    Uses the batched scorer when every symbol is in range; the result is the
    same as running a :class:`Detector` over the stream.
    """
    obs = np.asarray(symbols, dtype=np.int64)
    if obs.size and (obs.min() < 0 or obs.max() >= model.n_symbols):
        return list(Detector(model, config, start=start).process(obs, timestamps))
    scores = stream_scores(model, obs, config.window, config.score_mode)
    alerts = []
    for k in np.flatnonzero(scores < config.threshold):
        k = int(k)
        t = start + k
        alerts.append(AnomalyAlert(
            t, (t - min(config.window, k + 1) + 1, t), float(scores[k]), config.threshold,
            _channels(model, int(obs[k])), False, config.score_mode,
            None if timestamps is None else float(timestamps[k]),
        ))
    return alerts


def calibrate_threshold(
    model: HmmModel,
    sequences,
    quantile: float = 0.0,
    margin: float = 0.5,
    *,
    window: int = 10,
    score_mode: str = "predictive",
) -> float:
    """Threshold from the scores of normal validation data.

    Takes the `quantile` of all streaming scores (the minimum for 0) and
    multiplies by `margin`. The result is capped at 1.
    """
    if not 0 <= quantile < 1:
        raise ValueError("quantile must lie in [0, 1)")
    if isinstance(sequences, np.ndarray) and sequences.ndim == 1:
        sequences = [sequences]
    scores = [stream_scores(model, s, window, score_mode) for s in sequences if len(s)]
    if not scores:
        raise ValueError("no scorable observations in the validation data")
    allscores = np.concatenate(scores)
    base = allscores.min() if quantile == 0 else np.quantile(allscores, quantile)
    tau = min(1.0, float(base) * margin)
    if not tau > 0 or not math.isfinite(tau):
        raise ValueError(f"calibration produced an unusable threshold ({tau}); validation data "
                         "contains observations the model considers impossible")
    return tau
