"""Command-line entry point.

    heatiss <check|simulate|sweep|verify|analyze> --config PATH [--out DIR] [--seed N]

Exit status: 0 all verdicts pass, 1 a verdict failed, 2 usage or config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .assembled_spectrum import (
    THRESHOLD_BAND,
    estimate_decay_rate,
    estimate_iss_gain,
    find_threshold_c,
    stability_report,
    steady_state_gain,
)
from .config import ExperimentConfig, load_config
from .delay_sim import DisturbanceSignal, simulate
from .errors import ConfigValidationError, HeatIssError, InputError, NumericalError
from .heat_kernel import Grid
from .invariants import run_suite
from .system_model import check_iss_condition

log = logging.getLogger("heatiss")

COMMANDS = ("check", "simulate", "sweep", "verify", "analyze")
EXIT_PASS, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class CommandError(HeatIssError):
    def __init__(self, command: str, cause: HeatIssError):
        self.command = command
        self.cause = cause
        super().__init__(f"{command}: {type(cause).__name__}: {cause}")


@dataclass
class RunReport:
    command: str
    config: ExperimentConfig
    passed: bool = True
    certificate: dict | None = None
    stability: dict | None = None
    omega: float | None = None
    kappa: float | None = None
    invariants: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "passed": self.passed,
            "certificate": self.certificate,
            "stability": self.stability,
            "omega": self.omega,
            "kappa": self.kappa,
            "invariants": self.invariants,
            **self.extra,
            "config": self.config.data,
            "provenance": {
                "config_sha256": self.config.digest(),
                "seed": self.config.seed,
                "heatiss": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        }


def _initial_data(cfg: ExperimentConfig, grid: Grid):
    init = cfg.section("initial")
    rng = np.random.default_rng(cfg.seed)
    params = cfg.params

    def make(preset, size):
        if preset == "zero":
            return np.zeros(size)
        if preset == "constant":
            return np.full(size, init["value"])
        return rng.uniform(0.0, 1.0, size) * abs(init["value"])

    f = [make(init["f"], grid.size) for _ in params.components]
    phi = [make(init["phi"], 17) for _ in params.components]
    return f, phi


def _disturbance(cfg: ExperimentConfig) -> DisturbanceSignal:
    d = cfg.section("disturbance")
    if d["kind"] == "zero":
        return DisturbanceSignal.zero()
    if d["kind"] == "constant":
        return DisturbanceSignal.constant(d["values"])
    try:
        return DisturbanceSignal.piecewise(d["breakpoints"], d["values"])
    except ValueError as exc:
        raise ConfigValidationError("disturbance.values", str(exc)) from exc


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_check(cfg, report, out):
    cert = check_iss_condition(cfg.params)
    report.certificate = cert.to_dict()
    report.passed = cert.iss_holds


def _cmd_simulate(cfg, report, out):
    sim = cfg.section("simulation")
    grid = Grid(cfg.section("grid")["n"])
    f, phi = _initial_data(cfg, grid)
    tr = simulate(cfg.params, f, phi, _disturbance(cfg), sim["horizon"], sim["dt"], sim["sample_every"], n=grid.n)
    path = out / cfg.section("output")["trace"]
    tr.to_csv(path)
    report.artifacts.append(path.name)
    report.certificate = check_iss_condition(cfg.params).to_dict()
    finite = bool(np.all(np.isfinite(tr.norm_xy)))
    report.extra["simulation"] = {
        "samples": int(tr.times.size),
        "final_norm_X": float(tr.norm_x[-1]),
        "final_norm_XY": float(tr.norm_xy[-1]),
        "initial_jump": float(tr.final_state.initial_jump),
    }
    report.passed = finite


def _sweep_point(args):
    params, c, n, m = args
    return stability_report(params.with_coupling(c), n, m)


def _cmd_sweep(cfg, report, out):
    sw = cfg.section("sweep")
    n, m = cfg.section("grid")["n"], cfg.section("grid")["m"]
    params = cfg.params
    cs = np.linspace(sw["c_lo"], sw["c_hi"], sw["points"])
    with ThreadPoolExecutor(max_workers=sw["workers"]) as pool:
        reps = list(pool.map(_sweep_point, [(params, float(c), n, m) for c in cs]))
    path = out / cfg.section("output")["sweep"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["c", "abscissa", "dominant_eig_im", "spectral_radius_gamma_d0", "iss_closed_form", "agree"])
        for c, rep in zip(cs, reps):
            w.writerow([repr(float(c)), repr(rep.abscissa), repr(rep.dominant_eig_im),
                        repr(rep.spectral_radius_gamma_d0), rep.iss_closed_form, rep.agree])
    report.artifacts.append(path.name)
    signs = [rep.abscissa < 0 for rep in reps]
    bracket, threshold = None, None
    for i in range(len(cs) - 1):
        if signs[i] != signs[i + 1]:
            bracket = [float(cs[i]), float(cs[i + 1])]
            threshold = find_threshold_c(params, bracket, sw["tol"], n, m)
            break
    closed = min(check_iss_condition(params).thresholds)
    report.extra["sweep"] = {
        "points": len(cs),
        "sign_change_bracket": bracket,
        "threshold_numeric": threshold,
        "threshold_closed_form": closed,
        "threshold_band": THRESHOLD_BAND,
    }
    report.certificate = check_iss_condition(params).to_dict()
    report.passed = all(rep.agree for rep in reps)


def _cmd_verify(cfg, report, out):
    report.invariants = run_suite(cfg.params, cfg.seed)
    report.passed = all(item["passed"] for item in report.invariants)


def _cmd_analyze(cfg, report, out):
    params = cfg.params
    n, m = cfg.section("grid")["n"], cfg.section("grid")["m"]
    sim, an = cfg.section("simulation"), cfg.section("analyze")
    cert = check_iss_condition(params)
    rep = stability_report(params, n, m)
    report.certificate = cert.to_dict()
    report.stability = rep.to_json_dict()
    grid = Grid(n)
    f, phi = _initial_data(cfg, grid)
    if not any(np.any(x) for x in f + phi):
        # a decay rate needs a nonzero trajectory
        f = [np.ones(grid.size)] * len(f)
        phi = [np.ones(2)] * len(phi)
    tr = simulate(params, f, phi, DisturbanceSignal.zero(), sim["horizon"], sim["dt"], n=n)
    report.omega = estimate_decay_rate(tr, an["tail_fraction"])
    verdicts = [rep.agree]
    if cert.iss_holds:
        gain = estimate_iss_gain(params, an["gain_levels"], n=n, dt=sim["dt"], horizon=an["gain_horizon"])
        steady = steady_state_gain(params, n, m)
        report.kappa = gain.gain
        report.extra["gain"] = {"per_level": {repr(k): v for k, v in gain.per_level.items()},
                                "spread": gain.spread, "steady_state": steady}
        verdicts.append(abs(gain.gain - steady) <= 0.05 * steady)
        verdicts.append(report.omega > 0)
    report.passed = all(verdicts)


HANDLERS = {
    "check": _cmd_check,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "analyze": _cmd_analyze,
}


def run_command(cmd: str, cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Run one command, write its artifacts and report.json, return the report."""
    if cmd not in HANDLERS:
        raise ValueError(f"unknown command {cmd!r}")
    out = Path(out_dir if out_dir is not None else cfg.section("output")["dir"])
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cmd, cfg)
    try:
        HANDLERS[cmd](cfg, report, out)
    except HeatIssError as exc:
        raise CommandError(cmd, exc) from exc
    path = out / cfg.section("output")["report"]
    report.artifacts.append(path.name)
    _write_json(path, report.to_dict())
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatiss", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        report = run_command(args.command, cfg, args.out)
    except CommandError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC if isinstance(exc.cause, NumericalError) else EXIT_CONFIG
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    status = "PASS" if report.passed else "FAIL"
    print(f"{args.command}: {status} (config {report.config.digest()[:12]})")
    return EXIT_PASS if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
