"""Reading inputs (CAN logs or uniform series CSV) onto a common grid."""

from __future__ import annotations

import csv
import io
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import Channel, extract_channel_series, iter_log
from .observations import resample


class InputError(ValueError):
    pass


@dataclass
class GridSeries:
    """Channels sampled on ``t0 + k*dt``; NaN marks missing points."""

    t0: float
    dt: float
    values: dict[str, np.ndarray]

    def __len__(self) -> int:
        return min((v.size for v in self.values.values()), default=0)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def head(self, n: int) -> GridSeries:
        return GridSeries(self.t0, self.dt, {c: v[:n] for c, v in self.values.items()})

    def tail(self, n: int) -> GridSeries:
        return GridSeries(self.t0 + n * self.dt, self.dt, {c: v[n:] for c, v in self.values.items()})


def _read_text(path: str | Path) -> str:
    if str(path) == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def write_series_csv(series: GridSeries, channels: Sequence[str] | None = None, extra: dict | None = None) -> str:
    """``t,<channels...>[,<extra...>]`` with six-decimal fixed formatting; NaN stays empty."""
    chans = list(channels or series.values)
    extra = extra or {}
    buf = io.StringIO()
    buf.write(",".join(["t", *chans, *extra]) + "\n")
    t = series.times()
    for i in range(len(series)):
        cells = [f"{t[i]:.6f}"]
        for c in chans:
            v = series.values[c][i]
            cells.append("" if np.isnan(v) else f"{v:.6f}")
        cells += [str(int(col[i])) for col in extra.values()]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def parse_series_csv(text: str) -> GridSeries:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0].strip() != "t":
        raise InputError("series CSV must start with a 't,<channel>,...' header")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if len(body) < 1:
        return GridSeries(0.0, 1.0, {c: np.zeros(0) for c in header[1:]})
    cols = {h: np.array([float(r[i]) if r[i].strip() else np.nan for r in body]) for i, h in enumerate(header)}
    t = cols.pop("t")
    dt = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    cols.pop("is_injected", None)
    return GridSeries(float(t[0]), dt, cols)


def load_input(path: str | Path, channels: Sequence[str], dt: float = 1.0, gap_limit: float = 3.0,
               **decode_kw) -> GridSeries:
    """Load a series CSV as is, or decode and resample a CAN log.

    A file whose first non-blank line starts with ``t,`` is a series CSV;
    anything else is parsed as a CAN log (candump or bare CSV lines).
    Channels with no decodable samples are absent from the result.
    """
    text = _read_text(path)
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    if first.startswith("t,"):
        return parse_series_csv(text)
    frames = list(iter_log(io.StringIO(text)))
    samples = {c: extract_channel_series(frames, Channel(c), **decode_kw) for c in channels}
    samples = {c: s for c, s in samples.items() if s}
    if not samples:
        return GridSeries(0.0, dt, {})
    t0 = min(s[0].timestamp for s in samples.values())
    t1 = max(s[-1].timestamp for s in samples.values())
    return GridSeries(t0, dt, {c: resample(s, dt, t0, t1, gap_limit=gap_limit) for c, s in samples.items()})
