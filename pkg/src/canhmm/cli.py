"""Command-line entry point: ``canhmm <subcommand> [--config run.toml] ...``.

Exit codes: 0 success (no alerts / all rows pass), 1 evaluation mismatch,
2 usage, configuration, input or schema error, 3 alerts emitted.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, override
from .datafiles import GridSeries, InputError, load_input, parse_series_csv, write_series_csv
from .detector import detect_stream
from .evaluation import (
    AnomalyScenario,
    ScenarioError,
    figure_csv,
    inject_anomaly,
    injected_mask,
    load_matrix,
    report_json,
    results_csv,
    run_scenario_matrix,
    table1_matrix,
    table2_matrix,
)
from .experiment import NoObservationsError, detector_config, fit_model, reproduce_tables, split_series
from .hmm import ModelFormatError, ModelValidationError, load_model, save_model
from .observations import ObservationError, encode_runs
from .simulate import simulate_drive

log = logging.getLogger("canhmm")

EXIT_OK, EXIT_FAIL, EXIT_ERROR, EXIT_ALERTS = 0, 1, 2, 3


class CliError(Exception):
    pass


@contextlib.contextmanager
def _output(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "channels", None):
        cfg = override(cfg, None, channels=tuple(args.channels.split(",")))
    if getattr(args, "iso_tp", False):
        cfg = override(cfg, None, iso_tp=True)
    cfg = override(cfg, "hmm", seed=getattr(args, "seed", None), n_states=getattr(args, "states", None),
                   restarts=getattr(args, "restarts", None), max_iters=getattr(args, "max_iters", None))
    cfg = override(cfg, "detector", threshold=getattr(args, "threshold", None),
                   window=getattr(args, "window", None))
    return cfg


def _inputs(args, cfg: RunConfig) -> list[str]:
    paths = list(getattr(args, "input", None) or cfg.paths.logs)
    if not paths:
        raise CliError("no input given (use --input or paths.logs)")
    return paths


def cmd_train(args) -> int:
    cfg = _config(args).validate()
    inputs = _inputs(args, cfg)
    model_path = args.model or cfg.paths.model
    if not model_path:
        raise CliError("no model path given (use --model or paths.model)")
    for p in inputs:
        if p != "-" and not Path(p).exists():
            raise CliError(f"input not found: {p}")
    train, val = [], []
    for p in inputs:
        g = load_input(p, cfg.channels, cfg.dt, cfg.gap_limit, iso_tp=cfg.iso_tp)
        missing = [c for c in cfg.channels if c not in g.values]
        if missing:
            raise NoObservationsError(f"no observations for channel(s) {missing} in {p}")
        cut = int(round(len(g) * cfg.train_fraction))
        train.append(g.head(cut).values)
        val.append(g.tail(cut).values)
    fit = fit_model(train, val, cfg)
    fit.model.meta["training"]["channels"] = list(cfg.channels)
    save_model(fit.model, model_path)
    report = {
        "model": str(model_path),
        "restart": fit.train.restart,
        "loglik": fit.train.loglik,
        "restart_final_loglik": [t[-1] for t in fit.train.traces],
        "threshold": fit.threshold,
        "train_observations": fit.n_train,
        "validation_observations": fit.n_validation,
    }
    report_path = args.report or cfg.paths.report or f"{model_path}.train.json"
    Path(report_path).write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {model_path} ({len(fit.train.loglik)} iterations, final loglik "
          f"{fit.train.loglik[-1]:.6f}, threshold {fit.threshold:.6g})", file=sys.stderr)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args).validate()
    model = load_model(args.model or cfg.paths.model)
    if model.alphabet is None:
        raise CliError("model has no observation alphabet")
    dcfg = detector_config(model, cfg, args.threshold)
    source = args.input[0] if args.input else (cfg.paths.logs[0] if cfg.paths.logs else "-")
    chans = model.alphabet.channels
    g = load_input(source, chans, model.alphabet.dt, cfg.gap_limit, iso_tp=cfg.iso_tp)
    missing = [c for c in chans if c not in g.values]
    if missing:
        raise CliError(f"schema mismatch: model observes {list(chans)} but input lacks {missing}")
    n_alerts = 0
    times = g.times()
    with _output(args.output or cfg.paths.alerts) as out:
        for start, symbols in encode_runs(model.alphabet, g.values):
            ts = times[start + 1:start + 1 + symbols.size]
            for alert in detect_stream(model, dcfg, symbols, start=start, timestamps=ts):
                out.write(alert.to_json() + "\n")
                n_alerts += 1
    return EXIT_ALERTS if n_alerts else EXIT_OK


def _write_reports(out_dir: Path, sections: dict, channels_for: dict, extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, results in sections.items():
        (out_dir / f"{name}.csv").write_text(results_csv(results, channels_for[name]), encoding="utf-8")
    (out_dir / "report.json").write_text(report_json(sections, extra), encoding="utf-8")


def cmd_evaluate(args) -> int:
    cfg = _config(args).validate()
    out_dir = Path(args.out or cfg.paths.report or "report")
    model_path = args.model or cfg.paths.model
    matrix_path = args.matrix or cfg.paths.matrix
    if model_path is None:
        run = reproduce_tables(cfg)
        chans = {"table1_speed": ["speed"], "table1_rpm": ["rpm"], "table2": ["speed", "rpm"]}
        _write_reports(out_dir, run.sections, chans, run.summary())
        for name, (series, mask) in run.figures.items():
            (out_dir / f"figure_{name}.csv").write_text(figure_csv(series, mask, cfg.dt), encoding="utf-8")
        ok = run.passed
    else:
        model = load_model(model_path)
        if model.alphabet is None:
            raise CliError("model has no observation alphabet")
        dcfg = detector_config(model, cfg, args.threshold)
        chans = list(model.alphabet.channels)
        if args.input:
            base = load_input(args.input[0], chans, model.alphabet.dt, cfg.gap_limit,
                              iso_tp=cfg.iso_tp).values
        else:
            s = cfg.simulate
            base = split_series(simulate_drive(s.steps, s.seed, s.profile), s.split)[2]
        missing = [c for c in chans if c not in base]
        if missing:
            raise CliError(f"schema mismatch: model observes {chans} but evaluation data lacks {missing}")
        if matrix_path:
            matrix = load_matrix(matrix_path)
        elif len(chans) == 1:
            matrix = table1_matrix(chans[0])
        else:
            matrix = table2_matrix(chans[:2])
        results = run_scenario_matrix(model, dcfg, base, matrix, context=3 * dcfg.window)
        _write_reports(out_dir, {"matrix": results}, {"matrix": chans})
        ok = all(r.passed for r in results)
    print(f"wrote {out_dir}/ ({'all rows match' if ok else 'MISMATCH'})", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(args) -> int:
    cfg = _config(args)
    s = cfg.simulate
    s = replace(s, steps=args.steps or s.steps, profile=args.profile or s.profile,
                seed=s.seed if args.seed is None else args.seed)
    cfg = replace(cfg, simulate=s).validate()
    drive = simulate_drive(s.steps, s.seed, s.profile)
    with _output(args.output) as out:
        out.write(write_series_csv(GridSeries(0.0, cfg.dt, drive)))
    return EXIT_OK


def _parse_magnitudes(items) -> dict[str, float]:
    out = {}
    for item in items or ():
        name, _, value = item.partition("=")
        if not value:
            raise CliError(f"--magnitude expects channel=value, got {item!r}")
        out[name] = float(value)
    return out


def cmd_inject(args) -> int:
    text = sys.stdin.read() if args.input in (None, "-") else Path(args.input).read_text(encoding="utf-8")
    series = parse_series_csv(text)
    changes = dict(kv.split("=", 1) for kv in args.change or ())
    scenario = AnomalyScenario(changes, args.position, args.duration, _parse_magnitudes(args.magnitude))
    if scenario.active and scenario.position is None:
        raise CliError("--position is required for an injected change")
    altered = inject_anomaly(series.values, scenario)
    out = GridSeries(series.t0, series.dt, altered)
    with _output(args.output) as fh:
        fh.write(write_series_csv(out))
    if args.plot_data:
        mask = injected_mask(scenario, len(out))
        with _output(args.plot_data) as fh:
            fh.write(write_series_csv(out, extra={"is_injected": mask}))
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    np.set_printoptions(precision=6, suppress=True, linewidth=120)
    print(f"states N = {model.n_states}, symbols M = {model.n_symbols}")
    print(f"pi = {model.pi}")
    print("A =")
    print(model.A)
    print("B =")
    print(model.B)
    if model.alphabet is not None:
        print(f"\nalphabet (dt = {model.alphabet.dt:g} s)")
        print(f"{'channel':<14}{'bins':>5}  edges")
        for q in model.alphabet.quantizers:
            print(f"{q.channel:<14}{q.bin_count:>5}  " + "  ".join(f"{e:.6g}" for e in q.edges))
    for key in ("training", "detector"):
        if model.meta.get(key):
            print(f"\n{key}: {json.dumps(model.meta[key], sort_keys=True)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="canhmm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        sp.add_argument("-c", "--config", help="run configuration (TOML)")
        if model:
            sp.add_argument("-m", "--model", help="model file")
            sp.add_argument("--iso-tp", action="store_true", help="OBD payloads carry an ISO-TP length byte")

    sp = sub.add_parser("train", help="fit a model on normal drive data")
    common(sp)
    sp.add_argument("-i", "--input", nargs="+", help="CAN logs or series CSV files ('-' for stdin)")
    sp.add_argument("--channels", help="comma-separated channel list")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--states", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--window", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--report", help="training report path (JSON)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("detect", help="stream alerts for a log as JSON lines")
    common(sp)
    sp.add_argument("-i", "--input", nargs=1, help="CAN log or series CSV ('-' for stdin)")
    sp.add_argument("-o", "--output", help="alerts file ('-' for stdout)")
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("evaluate", help="run scenario matrices and write reports")
    common(sp)
    sp.add_argument("-i", "--input", nargs=1, help="base series to inject into")
    sp.add_argument("--matrix", help="scenario rows (TOML or CSV)")
    sp.add_argument("-o", "--out", help="report directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("simulate", help="write a synthetic drive as series CSV")
    common(sp, model=False)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--profile")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("inject", help="inject an anomaly into a series CSV")
    sp.add_argument("-i", "--input", help="series CSV ('-' for stdin)")
    sp.add_argument("--change", action="append", metavar="CHANNEL=KIND",
                    help="e.g. speed=sudden_increase (repeatable)")
    sp.add_argument("--position", type=int)
    sp.add_argument("--duration", type=int)
    sp.add_argument("--magnitude", action="append", metavar="CHANNEL=VALUE")
    sp.add_argument("-o", "--output")
    sp.add_argument("--plot-data", help="also write t,<channels>,is_injected")
    sp.set_defaults(func=cmd_inject)

    sp = sub.add_parser("inspect-model", help="print matrices and quantizer edges")
    sp.add_argument("model")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, InputError, ObservationError, ScenarioError, NoObservationsError,
            ModelFormatError, ModelValidationError, FileNotFoundError, ValueError) as exc:
        print(f"canhmm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
