"""End-to-end pipeline: fit an alphabet and model, calibrate, evaluate."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .detector import DetectorConfig, calibrate_threshold, detect_stream
from .evaluation import (
    ScenarioResult,
    figure_data,
    run_scenario_matrix,
    table1_matrix,
    table2_matrix,
)
from .hmm import HmmModel, TrainResult, hmm_decode, hmm_train
from .observations import ObservationAlphabet, encode_runs, encode_sequence, fit_quantizer, gradients
from .simulate import simulate_drive

log = logging.getLogger(__name__)

Series = Mapping[str, np.ndarray]


class NoObservationsError(ValueError):
    pass


def fit_alphabet_from(series: Sequence[Series], channels: Sequence[str], cfg: RunConfig) -> ObservationAlphabet:
    """Quantizers fitted on the pooled gradients of several series."""
    q = cfg.quantizer
    quantizers = []
    for c in channels:
        g = np.concatenate([gradients(s[c]) for s in series if len(s[c]) >= 2])
        g = g[np.isfinite(g)]
        if g.size == 0:
            raise NoObservationsError(f"no observations for channel {c}")
        if q.scheme == "fixed":
            quantizers.append(fit_quantizer(g, scheme="fixed", channel=c, edges=q.edges[c]))
        else:
            quantizers.append(fit_quantizer(g, q.bins, "quantile", channel=c, envelope=q.envelope or None))
    return ObservationAlphabet(tuple(quantizers), cfg.dt)


def encode_all(alphabet: ObservationAlphabet, series: Sequence[Series]) -> list[np.ndarray]:
    return [seq for s in series for seq in encode_sequence(alphabet, s) if seq.size >= 2]


@dataclass
class FitResult:
    model: HmmModel
    train: TrainResult
    threshold: float
    n_train: int
    n_validation: int


def fit_model(
    train: Sequence[Series],
    validation: Sequence[Series],
    cfg: RunConfig,
    channels: Sequence[str] | None = None,
) -> FitResult:
    """Train on `train`, calibrate the alert threshold on `validation`.

    The threshold and detector settings are stored in ``model.meta`` so that
    a saved model carries everything detection needs.
    """
    channels = tuple(channels or cfg.channels)
    alphabet = fit_alphabet_from(train, channels, cfg)
    seqs = encode_all(alphabet, train)
    if not seqs:
        raise NoObservationsError("no observations in the training data")
    h = cfg.hmm
    result = hmm_train(seqs, h.n_states, alphabet=alphabet, max_iters=h.max_iters, tol=h.tol,
                       restarts=h.restarts, seed=h.seed, emission_floor=h.emission_floor,
                       transition_floor=h.transition_floor)
    # windows open mid-drive, so their first state follows the state occupancy, not the drive start
    model = result.model
    model.pi = state_occupancy(model, seqs)
    d = cfg.detector
    val = encode_all(alphabet, validation)
    if d.threshold is not None:
        tau = d.threshold
    else:
        if not val:
            raise NoObservationsError("no observations in the calibration data")
        tau = calibrate_threshold(model, val, d.quantile, d.margin, window=d.window, score_mode=d.score_mode)
    model.meta["detector"] = {"window": d.window, "threshold": tau, "quantile": d.quantile,
                              "margin": d.margin, "score_mode": d.score_mode}
    log.info("trained %s: %d iterations, loglik %.6f, threshold %.6g",
             "+".join(channels), len(result.loglik), result.loglik[-1], tau)
    return FitResult(model, result, tau, sum(s.size for s in seqs), sum(s.size for s in val))


def state_occupancy(model: HmmModel, sequences: Sequence[np.ndarray]) -> np.ndarray:
    """Average posterior state probability over all observations."""
    total = sum(hmm_decode(model, s).posteriors.sum(axis=0) for s in sequences)
    return total / total.sum()


def detector_config(model: HmmModel, cfg: RunConfig | None = None, threshold: float | None = None) -> DetectorConfig:
    """Detector settings stored with the model, overridden by explicit values."""
    stored = dict(model.meta.get("detector", {}))
    if cfg is not None and cfg.detector.threshold is not None:
        stored["threshold"] = cfg.detector.threshold
    if threshold is not None:
        stored["threshold"] = threshold
    if "threshold" not in stored:
        raise ValueError("model carries no calibrated threshold; set detector.threshold")
    window = stored.get("window", cfg.detector.window if cfg else 10)
    return DetectorConfig(window, stored["threshold"], stored.get("score_mode", "predictive"),
                          stored.get("quantile", 0.0), stored.get("margin", 0.5))


def split_series(series: Series, fractions: Sequence[float]) -> list[dict[str, np.ndarray]]:
    """Consecutive chunks of a uniform series in the given proportions."""
    n = min(len(v) for v in series.values())
    w = np.asarray(fractions, dtype=float)
    cuts = np.round(np.cumsum(w / w.sum()) * n).astype(int)
    bounds = np.concatenate(([0], cuts))
    return [{c: np.asarray(v[a:b], dtype=float) for c, v in series.items()} for a, b in zip(bounds, bounds[1:])]


def count_alerts(model: HmmModel, config: DetectorConfig, series: Series) -> tuple[int, int]:
    """(alerts, observations) over clean data."""
    n_alerts = n_obs = 0
    for start, symbols in encode_runs(model.alphabet, series):
        n_obs += symbols.size
        n_alerts += len(detect_stream(model, config, symbols, start=start))
    return n_alerts, n_obs


@dataclass
class TablesRun:
    sections: dict[str, list[ScenarioResult]]
    fits: dict[str, FitResult]
    heldout: dict[str, dict]
    figures: dict[str, tuple[dict, np.ndarray]]

    @property
    def passed(self) -> bool:
        return all(r.passed for rs in self.sections.values() for r in rs)

    def summary(self) -> dict:
        return {
            "models": {
                name: {"channels": list(f.model.alphabet.channels), "symbols": f.model.n_symbols,
                       "states": f.model.n_states, "iterations": len(f.train.loglik),
                       "restart": f.train.restart, "final_loglik": f.train.loglik[-1],
                       "threshold": f.threshold, "train_observations": f.n_train,
                       "validation_observations": f.n_validation}
                for name, f in self.fits.items()
            },
            "heldout": self.heldout,
            "passed": self.passed,
        }


def reproduce_tables(cfg: RunConfig, base: Series | None = None) -> TablesRun:
    """Simulate a drive, split it, and run both scenario matrices.

    The drive is cut into training, calibration and held-out test parts.
    Three models are fitted (speed only, rpm only, speed+rpm); the
    single-channel ones run the five single-observation rows, the joint one
    the nine joint rows, all injected into the held-out part (or `base`).
    """
    s = cfg.simulate
    drive = simulate_drive(s.steps, s.seed, s.profile)
    train, val, test = split_series(drive, s.split)
    test = dict(base) if base is not None else test
    fits = {
        "speed": fit_model([train], [val], cfg, ["speed"]),
        "rpm": fit_model([train], [val], cfg, ["rpm"]),
        "speed+rpm": fit_model([train], [val], cfg, ["speed", "rpm"]),
    }
    ctx = 3 * cfg.detector.window
    sections, heldout, figures = {}, {}, {}
    for name, matrix in (("table1_speed", table1_matrix("speed")), ("table1_rpm", table1_matrix("rpm")),
                         ("table2", table2_matrix(("speed", "rpm")))):
        fit = fits[{"table1_speed": "speed", "table1_rpm": "rpm", "table2": "speed+rpm"}[name]]
        dcfg = detector_config(fit.model)
        sections[name] = run_scenario_matrix(fit.model, dcfg, test, matrix, context=ctx)
        alerts, obs = count_alerts(fit.model, dcfg, test)
        heldout[name] = {"alerts": alerts, "observations": obs, "threshold": dcfg.threshold}
        chans = {c: test[c] for c in fit.model.alphabet.channels}
        figures[name] = figure_data(chans, matrix, ctx)
    return TablesRun(sections, fits, heldout, figures)
