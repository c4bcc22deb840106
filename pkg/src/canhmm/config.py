"""Run configuration: one TOML file per experiment.

Recognized keys (all optional)::

    channels = ["speed", "rpm"]
    dt = 1.0
    gap_limit = 3.0
    train_fraction = 0.75        # share of input used for training, rest calibrates
    iso_tp = false               # OBD payloads carry an ISO-TP length byte

    [quantizer]
    scheme = "quantile"          # or "fixed"
    bins = 5
    envelope = 2.0               # outlier bins at +-envelope*max|g|; 0 disables
    edges = { speed = [-10, -2, 2, 10] }   # fixed scheme only

    [hmm]
    n_states = 5
    restarts = 5
    seed = 0
    max_iters = 500
    tol = 1e-6
    emission_floor = 1e-6
    transition_floor = 0.0

    [detector]
    window = 10
    quantile = 0.0
    margin = 0.5
    score_mode = "predictive"
    threshold = 0.01             # skips calibration when set

    [simulate]
    steps = 40000
    seed = 7
    profile = "mixed"
    split = [0.6, 0.2, 0.2]      # train / validation / test

    [paths]
    logs = ["drive.log"]
    model = "model.json"
    alerts = "-"
    report = "report"
    matrix = "rows.toml"
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .codec import Channel
from .detector import SCORE_MODES
from .simulate import PROFILES

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class QuantizerConfig:
    scheme: str = "quantile"
    bins: int = 5
    envelope: float = 2.0
    edges: Mapping[str, list[float]] = field(default_factory=dict)


@dataclass(frozen=True)
class HmmConfig:
    n_states: int = 5
    restarts: int = 5
    seed: int = 0
    max_iters: int = 500
    tol: float = 1e-6
    emission_floor: float = 1e-6
    transition_floor: float = 0.0


@dataclass(frozen=True)
class DetectConfig:
    window: int = 10
    quantile: float = 0.0
    margin: float = 0.5
    score_mode: str = "predictive"
    threshold: float | None = None


@dataclass(frozen=True)
class SimulateConfig:
    steps: int = 40000
    seed: int = 7
    profile: str = "mixed"
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class PathsConfig:
    logs: tuple[str, ...] = ()
    model: str | None = None
    alerts: str = "-"
    report: str | None = None
    matrix: str | None = None


@dataclass(frozen=True)
class RunConfig:
    channels: tuple[str, ...] = ("speed", "rpm")
    dt: float = 1.0
    gap_limit: float = 3.0
    train_fraction: float = 0.75
    iso_tp: bool = False
    quantizer: QuantizerConfig = QuantizerConfig()
    hmm: HmmConfig = HmmConfig()
    detector: DetectConfig = DetectConfig()
    simulate: SimulateConfig = SimulateConfig()
    paths: PathsConfig = PathsConfig()

    def validate(self, *, need_inputs: bool = False) -> RunConfig:
        """Check value ranges (and input existence when asked); returns self."""
        problems = []
        for c in self.channels:
            try:
                Channel(c)
            except ValueError:
                problems.append(f"unknown channel {c!r}")
        if not self.channels:
            problems.append("no channels selected")
        if self.dt <= 0:
            problems.append("dt must be positive")
        if self.gap_limit <= 0:
            problems.append("gap_limit must be positive")
        if not 0 < self.train_fraction < 1:
            problems.append("train_fraction must lie in (0, 1)")
        q = self.quantizer
        if q.scheme not in ("quantile", "fixed"):
            problems.append(f"unknown quantizer scheme {q.scheme!r}")
        if q.scheme == "quantile" and q.bins < 2:
            problems.append("quantizer.bins must be >= 2")
        if q.scheme == "fixed":
            problems += [f"no fixed edges for channel {c}" for c in self.channels if c not in q.edges]
        if q.envelope < 0:
            problems.append("quantizer.envelope must be >= 0")
        h = self.hmm
        if h.n_states < 1 or h.restarts < 1 or h.max_iters < 1:
            problems.append("hmm.n_states, hmm.restarts and hmm.max_iters must be >= 1")
        if h.tol <= 0:
            problems.append("hmm.tol must be positive")
        if not 0 <= h.emission_floor < 1 or not 0 <= h.transition_floor < 1:
            problems.append("hmm floors must lie in [0, 1)")
        d = self.detector
        if d.window < 2:
            problems.append("detector.window must be >= 2")
        if not 0 <= d.quantile < 1:
            problems.append("detector.quantile must lie in [0, 1)")
        if d.margin <= 0:
            problems.append("detector.margin must be positive")
        if d.score_mode not in SCORE_MODES:
            problems.append(f"detector.score_mode must be one of {SCORE_MODES}")
        if d.threshold is not None and not 0 < d.threshold <= 1:
            problems.append("detector.threshold must lie in (0, 1]")
        s = self.simulate
        if s.profile not in PROFILES:
            problems.append(f"simulate.profile must be one of {PROFILES}")
        if s.steps < d.window + 2:
            problems.append("simulate.steps must exceed detector.window + 1")
        if len(s.split) != 3 or any(x <= 0 for x in s.split):
            problems.append("simulate.split needs three positive fractions")
        if need_inputs:
            problems += [f"input log not found: {p}" for p in self.paths.logs if p != "-" and not Path(p).exists()]
        if problems:
            raise ConfigError("; ".join(problems))
        return self


_SECTIONS = {"quantizer": QuantizerConfig, "hmm": HmmConfig, "detector": DetectConfig,
             "simulate": SimulateConfig, "paths": PathsConfig}


def _build(cls, data: Mapping, where: str):
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    kw = {}
    for k, v in data.items():
        if isinstance(v, list) and k != "edges":
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(doc: Mapping) -> RunConfig:
    top = {k: v for k, v in doc.items() if k not in _SECTIONS}
    cfg = _build(RunConfig, top, "top level")
    parts = {name: _build(cls, doc.get(name, {}), f"[{name}]") for name, cls in _SECTIONS.items()}
    return replace(cfg, **parts)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)


def override(cfg: RunConfig, section: str | None, **values) -> RunConfig:
    """Copy of `cfg` with non-None `values` replaced (in `section`, if given)."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    if section is None:
        return replace(cfg, **values)
    return replace(cfg, **{section: replace(getattr(cfg, section), **values)})
