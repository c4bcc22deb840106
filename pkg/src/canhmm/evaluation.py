"""Anomaly injection and the single/multi-observation scenario matrices.

Shapes of the injected changes, for magnitude ``m`` starting at grid index
``p`` and lasting ``d`` steps:

* ``sudden_increase``: the value climbs by ``m`` per step for ``d`` steps
  (``+m, +2m, ..., +d*m``) and drops back to the original trace at
  ``p + d``. With the default ``d = 1`` this is a one-sample spike. Exactly
  ``d + 1`` gradients change.
* ``gradual_increase``: ``m`` is spread evenly over ``d`` steps and the
  offset is then held to the end of the series; ``d`` gradients change.
* the ``*_decrease`` kinds mirror the above; ``normal`` changes nothing.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .codec import channel_range
from .detector import AnomalyAlert, DetectorConfig, detect_stream
from .hmm import HmmModel
from .observations import encode_runs

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("sudden_increase", "sudden_decrease", "gradual_increase", "gradual_decrease", "normal")
SYMBOLS = {
    "gradual_increase": "up",
    "gradual_decrease": "down",
    "sudden_increase": "up-up",
    "sudden_decrease": "down-down",
    "normal": "normal",
}
DEFAULT_MAGNITUDE = {"speed": 50.0, "rpm": 3000.0}
GRADUAL_STEPS = 20


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AnomalyScenario:
    changes: Mapping[str, str]
    position: int | None = None
    duration: int | None = None
    magnitudes: Mapping[str, float] = field(default_factory=dict)
    expected: bool | None = None
    label: str = ""

    def __post_init__(self):
        for ch, kind in self.changes.items():
            if kind not in KINDS:
                raise ScenarioError(f"unknown change kind {kind!r} for {ch}")
            if kind != "normal" and self.magnitude(ch) <= 0:
                raise ScenarioError(f"magnitude for {ch} must be positive")
        if self.duration is not None and self.duration < 1:
            raise ScenarioError("duration must be >= 1")

    @property
    def active(self) -> dict[str, str]:
        return {c: k for c, k in self.changes.items() if k != "normal"}

    @property
    def steps(self) -> int:
        if self.duration is not None:
            return self.duration
        return GRADUAL_STEPS if any(k.startswith("gradual") for k in self.active.values()) else 1

    def magnitude(self, channel: str) -> float:
        if channel in self.magnitudes:
            return float(self.magnitudes[channel])
        if channel not in DEFAULT_MAGNITUDE:
            raise ScenarioError(f"no default magnitude for channel {channel!r}")
        return DEFAULT_MAGNITUDE[channel]

    @property
    def expected_alert(self) -> bool:
        if self.expected is not None:
            return self.expected
        return any(k.startswith("sudden") for k in self.active.values())


def _offset(kind: str, m: float, p: int, d: int, n: int) -> np.ndarray:
    off = np.zeros(n)
    sign = 1.0 if kind.endswith("increase") else -1.0
    if kind.startswith("sudden"):
        off[p:p + d] = sign * m * np.arange(1, d + 1)
    else:
        off[p:p + d] = sign * m * np.arange(1, d + 1) / d
        off[p + d:] = sign * m
    return off


def injected_mask(scenario: AnomalyScenario, n: int) -> np.ndarray:
    """Grid points whose value the scenario alters."""
    mask = np.zeros(n, dtype=bool)
    if not scenario.active:
        return mask
    p, d = scenario.position, scenario.steps
    gradual = any(k.startswith("gradual") for k in scenario.active.values())
    if gradual:
        mask[p:] = True
    mask[p:p + d] = True
    return mask


def inject_anomaly(series: Mapping[str, np.ndarray], scenario: AnomalyScenario) -> dict[str, np.ndarray]:
    """Copy of `series` with the scenario's changes applied.

    Raises :class:`ScenarioError` when the scenario falls outside the series
    or would push a value outside its channel's decodable range.
    """
    out = {c: np.array(v, dtype=float, copy=True) for c, v in series.items()}
    if not scenario.active:
        return out
    p, d = scenario.position, scenario.steps
    if p is None:
        raise ScenarioError("scenario has no position")
    for ch, kind in scenario.active.items():
        if ch not in out:
            raise ScenarioError(f"series has no channel {ch!r}")
        n = out[ch].size
        if p < 1 or p + d >= n:
            raise ScenarioError(f"position {p} with duration {d} does not fit a series of {n} points")
        new = out[ch] + _offset(kind, scenario.magnitude(ch), p, d, n)
        lo, hi = _range(ch)
        if new.min() < lo or new.max() > hi:
            raise ScenarioError(
                f"{kind} of {scenario.magnitude(ch):g} on {ch} at {p} leaves the range [{lo:g}, {hi:g}]; "
                "choose a smaller magnitude or another position"
            )
        out[ch] = new
    return out


def _range(channel: str) -> tuple[float, float]:
    try:
        return channel_range(channel)
    except (KeyError, ValueError):
        return 0.0, np.inf


def _parse_kind(text: str) -> str:
    aliases = {"up": "gradual_increase", "down": "gradual_decrease", "up-up": "sudden_increase",
               "down-down": "sudden_decrease", "": "normal", "none": "normal"}
    t = text.strip().lower()
    return aliases.get(t, t)


TABLE1_KINDS = ("gradual_increase", "gradual_decrease", "sudden_increase", "sudden_decrease", "normal")
TABLE1_EXPECTED = (False, False, True, True, False)
TABLE2_KINDS = (
    ("sudden_increase", "sudden_increase"),
    ("sudden_increase", "sudden_decrease"),
    ("sudden_decrease", "sudden_increase"),
    ("sudden_decrease", "sudden_decrease"),
    ("sudden_increase", "normal"),
    ("sudden_decrease", "normal"),
    ("normal", "sudden_increase"),
    ("normal", "sudden_decrease"),
    ("normal", "normal"),
)
TABLE2_EXPECTED = (True, True, True, True, True, True, True, True, False)


def table1_matrix(channel: str) -> list[AnomalyScenario]:
    """Single-observation rows: gradual/sudden increase/decrease and normal."""
    return [AnomalyScenario({channel: k}, expected=e, label=f"{i + 1}")
            for i, (k, e) in enumerate(zip(TABLE1_KINDS, TABLE1_EXPECTED))]


def table2_matrix(channels: Sequence[str] = ("speed", "rpm")) -> list[AnomalyScenario]:
    """Joint rows over two channels, sudden changes and the normal baseline."""
    return [AnomalyScenario(dict(zip(channels, ks)), expected=e, label=f"{i + 1}")
            for i, (ks, e) in enumerate(zip(TABLE2_KINDS, TABLE2_EXPECTED))]


def load_matrix(path: str | Path) -> list[AnomalyScenario]:
    """Read scenario rows from TOML (``[[rows]]`` tables) or CSV.

    TOML row keys: one ``<channel> = "<kind>"`` entry per channel, plus
    optional ``position``, ``duration``, ``expected``, ``label`` and a
    ``magnitude`` table. CSV files use a header row with the same names,
    magnitudes as ``magnitude_<channel>`` columns.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        parsed = []
        for r in rows:
            mags = {k[len("magnitude_"):]: float(v) for k, v in r.items() if k.startswith("magnitude_") and v}
            rest = {k: v for k, v in r.items() if not k.startswith("magnitude_")}
            parsed.append((rest, mags))
    else:
        doc = tomllib.loads(text)
        parsed = []
        for r in doc.get("rows", []):
            r = dict(r)
            parsed.append((r, dict(r.pop("magnitude", None) or {})))
    out = []
    for i, (r, mags) in enumerate(parsed):
        try:
            position = r.pop("position", None)
            duration = r.pop("duration", None)
            expected = r.pop("expected", None)
            label = str(r.pop("label", None) or r.pop("no", None) or i + 1)
            if isinstance(expected, str):
                expected = {"true": True, "false": False, "": None}[expected.strip().lower()]
            changes = {ch: _parse_kind(str(kind)) for ch, kind in r.items()}
            out.append(AnomalyScenario(
                changes,
                int(position) if position not in (None, "") else None,
                int(duration) if duration not in (None, "") else None,
                mags, expected, label,
            ))
        except (ScenarioError, KeyError, ValueError) as exc:
            raise ScenarioError(f"matrix row {i + 1}: {exc}") from exc
    return out


def _roughness(series: Mapping[str, np.ndarray]) -> np.ndarray:
    total = None
    for v in series.values():
        g = np.abs(np.diff(np.asarray(v, dtype=float)))
        scale = np.median(g) + 1e-9
        total = g / scale if total is None else total + g / scale
    return total


def choose_position(
    series: Mapping[str, np.ndarray],
    scenario: AnomalyScenario,
    context: int,
    taken: Iterable[tuple[int, int]] = (),
) -> int:
    """Deterministic injection point for a scenario without one.

    Picks the feasible position whose surroundings change least (a steady
    stretch), so that the injected change is the only unusual event nearby.
    Positions overlapping `taken` ranges are skipped.
    """
    n = min(np.asarray(v).size for v in series.values())
    d = scenario.steps
    rough = _roughness(series)
    taken = list(taken)
    best, best_score = None, np.inf
    csum = np.concatenate(([0.0], np.cumsum(rough)))
    for p in range(context + 1, n - d - context - 1):
        lo, hi = p - context, p + d + context
        if any(lo < b and a < hi for a, b in taken):
            continue
        score = csum[min(hi, rough.size)] - csum[lo]
        if score >= best_score:
            continue
        seg = {c: np.asarray(v[lo:hi + 1], dtype=float) for c, v in series.items()}
        try:
            inject_anomaly(seg, replace(scenario, position=p - lo))
        except ScenarioError:
            continue
        best, best_score = p, score
    if best is None:
        raise ScenarioError(f"no feasible position for scenario {scenario.label or scenario.changes}")
    return best


@dataclass
class ScenarioResult:
    scenario: AnomalyScenario
    alert_fired: bool
    expected: bool
    passed: bool
    first_alert: int | None
    score: float | None
    span: tuple[int, int]
    segment: tuple[int, int]
    alerts: list[int] = field(default_factory=list)
    stray_alerts: int = 0

    @property
    def injected(self) -> bool:
        return bool(self.scenario.active)

    def to_dict(self) -> dict:
        return {
            "label": self.scenario.label,
            "changes": dict(self.scenario.changes),
            "position": self.scenario.position,
            "duration": self.scenario.steps if self.injected else None,
            "alert_fired": self.alert_fired,
            "expected": self.expected,
            "pass": self.passed,
            "first_alert": self.first_alert,
            "score": self.score,
            "span": list(self.span),
            "segment": list(self.segment),
            "stray_alerts": self.stray_alerts,
        }


def run_scenario(
    model: HmmModel,
    config: DetectorConfig,
    base: Mapping[str, np.ndarray],
    scenario: AnomalyScenario,
    *,
    context: int | None = None,
) -> ScenarioResult:
    """Inject one scenario, encode with the model's alphabet, and detect.

    Injected rows are evaluated on the stretch ``context`` steps either side
    of the change; the row fires when an alert lands within one step of the
    altered gradients. A row without changes is evaluated over the whole
    base series and fires on any alert. Alerts outside the expected span are
    counted as stray and fail the row.
    """
    if model.alphabet is None:
        raise ScenarioError("model has no observation alphabet")
    unknown = set(scenario.active) - set(model.alphabet.channels)
    if unknown:
        raise ScenarioError(f"scenario alters channels the model does not observe: {sorted(unknown)}")
    context = 3 * config.window if context is None else context
    chans = {c: np.asarray(base[c], dtype=float) for c in model.alphabet.channels}
    n = min(v.size for v in chans.values())
    if scenario.active:
        p, d = scenario.position, scenario.steps
        lo, hi = max(0, p - context), min(n, p + d + context + 1)
        seg = inject_anomaly({c: v[lo:hi] for c, v in chans.items()}, replace(scenario, position=p - lo))
        span = (p - 1, p + d + 1)
    else:
        lo, hi = 0, n
        seg = chans
        span = (0, n - 1)
    alerts: list[AnomalyAlert] = []
    for start, symbols in encode_runs(model.alphabet, seg):
        alerts += detect_stream(model, config, symbols, start=lo + start)
    hits = [a for a in alerts if span[0] <= a.t <= span[1]]
    stray = len(alerts) - len(hits)
    fired = bool(hits)
    expected = scenario.expected_alert
    return ScenarioResult(
        scenario, fired, expected, fired == expected and stray == 0,
        hits[0].t if hits else None, hits[0].score if hits else None,
        span, (lo, hi), [a.t for a in alerts], stray,
    )


def run_scenario_matrix(
    model: HmmModel,
    config: DetectorConfig,
    base: Mapping[str, np.ndarray],
    matrix: Sequence[AnomalyScenario],
    *,
    context: int | None = None,
) -> list[ScenarioResult]:
    """Evaluate each matrix row independently against the same base series.

    `model` must have been trained on normal data disjoint from `base`.
    Rows without a position get one from :func:`choose_position`.
    """
    context = 3 * config.window if context is None else context
    chans = {c: np.asarray(base[c], dtype=float) for c in model.alphabet.channels} if model.alphabet else base
    results = []
    for i, row in enumerate(matrix):
        try:
            if row.active and row.position is None:
                row = replace(row, position=choose_position(chans, row, context))
            results.append(run_scenario(model, config, base, row, context=context))
        except ScenarioError as exc:
            raise ScenarioError(f"matrix row {row.label or i + 1}: {exc}") from exc
    return results


@dataclass
class Metrics:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __add__(self, other: Metrics) -> Metrics:
        return Metrics(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp, self.tn + other.tn)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "fpr": self.fpr}


def confusion_metrics(results: Sequence[ScenarioResult], alerts, series_length: int) -> Metrics:
    """Detection counts over one stream of `series_length` observations.

    Each injected span (from `results`) is one positive event: a true
    positive if any alert falls inside it, otherwise a false negative.
    Observations outside every span are negatives: alerted ones are false
    positives, the rest true negatives.
    """
    ts = sorted({a.t if isinstance(a, AnomalyAlert) else int(a) for a in alerts})
    spans = [r.span for r in results if r.injected]
    inside = np.zeros(series_length, dtype=bool)
    m = Metrics()
    for lo, hi in spans:
        lo_c, hi_c = max(lo, 0), min(hi, series_length - 1)
        inside[lo_c:hi_c + 1] = True
        if any(lo <= t <= hi for t in ts):
            m.tp += 1
        else:
            m.fn += 1
    flagged = np.zeros(series_length, dtype=bool)
    flagged[[t for t in ts if 0 <= t < series_length]] = True
    m.fp = int(np.sum(flagged & ~inside))
    m.tn = int(np.sum(~flagged & ~inside))
    return m


def matrix_metrics(results: Sequence[ScenarioResult]) -> Metrics:
    """Sum of per-row :func:`confusion_metrics` over each row's own segment."""
    total = Metrics()
    for r in results:
        lo, hi = r.segment
        shifted = replace(r, span=(r.span[0] - lo, r.span[1] - lo))
        total = total + confusion_metrics([shifted], [t - lo for t in r.alerts], hi - lo - 1)
    return total


def results_csv(results: Sequence[ScenarioResult], channels: Sequence[str]) -> str:
    """Table-style CSV: ``No, <channel kinds...>, Alert Status, Expected, Result``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["No", *[c.upper() if c == "rpm" else c.capitalize() for c in channels],
                "Alert Status", "Expected", "Result"])
    for i, r in enumerate(results):
        w.writerow([r.scenario.label or i + 1,
                    *[SYMBOLS[r.scenario.changes.get(c, "normal")] for c in channels],
                    r.alert_fired, r.expected, "pass" if r.passed else "FAIL"])
    return buf.getvalue()


def figure_data(
    base: Mapping[str, np.ndarray], matrix: Sequence[AnomalyScenario], context: int
) -> tuple[dict, np.ndarray]:
    """One series with every injected row applied at its own position.

    Returns the altered channels and a per-point ``is_injected`` mask, the
    material for a spikes-over-test-data plot.
    """
    series = {c: np.asarray(v, dtype=float) for c, v in base.items()}
    n = min(v.size for v in series.values())
    mask = np.zeros(n, dtype=bool)
    taken: list[tuple[int, int]] = []
    for row in matrix:
        if not row.active or any(k.startswith("gradual") for k in row.active.values()):
            continue
        p = row.position
        if p is None or any(p - context < b and a < p + row.steps + context for a, b in taken):
            p = choose_position(series, row, context, taken)
        row = replace(row, position=p)
        series = inject_anomaly(series, row)
        mask |= injected_mask(row, n)
        taken.append((p - context, p + row.steps + context))
    return series, mask


def figure_csv(series: Mapping[str, np.ndarray], mask: np.ndarray, dt: float = 1.0) -> str:
    chans = list(series)
    buf = io.StringIO()
    buf.write(",".join(["t", *chans, "is_injected"]) + "\n")
    for i in range(mask.size):
        vals = ",".join(f"{series[c][i]:.6f}" for c in chans)
        buf.write(f"{i * dt:.6f},{vals},{int(mask[i])}\n")
    return buf.getvalue()


def report_json(sections: Mapping[str, Sequence[ScenarioResult]], extra: Mapping | None = None) -> str:
    doc = {name: {"rows": [r.to_dict() for r in rs], "metrics": matrix_metrics(rs).to_dict(),
                  "passed": all(r.passed for r in rs)}
           for name, rs in sections.items()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
