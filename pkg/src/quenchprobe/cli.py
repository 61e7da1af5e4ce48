"""Command-line driver: ``quenchprobe {evolve,scan,phase-diagram,mle}``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 flagged result
(extremum or MLE on the search boundary), 5 phase diagram less than 80% complete.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .config import METRIC_NAMES, ConfigError, RunConfig, describe
from .estimation import EstimationSetup, estimate_phase
from .hamiltonian import Boundary, ModelSpec
from .hilbert import polarized_state
from .metrology import qfi_curve
from .propagator import EvolutionGrid, KrylovConfig, KrylovError, evolve_to
from .sweep import (
    AveragedQFI,
    AveragedUncertainty,
    AveragedVariance,
    BoundaryExtremumError,
    ScanSpec,
    phase_diagrams,
    refine_extremum,
    run_scan,
)

log = logging.getLogger("quenchprobe")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FLAGGED, EXIT_PARTIAL = 0, 2, 3, 4, 5
PARTIAL_THRESHOLD = 0.8


def _versions() -> dict:
    return {
        "quenchprobe": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _header(cfg: RunConfig) -> str:
    return "# config: " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _write_json(path: Path, obj: dict) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _num(x) -> str:
    return repr(float(x))


# -- config -> objects ------------------------------------------------------------


def _build(cfg: RunConfig, build):
    try:
        return build()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def model_from(cfg: RunConfig) -> ModelSpec:
    return _build(cfg, lambda: ModelSpec(
        cfg["model.n_sites"], cfg["model.kappa"], cfg["model.b"], 1.0, Boundary(cfg["model.boundary"])
    ))


def grid_from(cfg: RunConfig) -> EvolutionGrid:
    return _build(cfg, lambda: EvolutionGrid(cfg["grid.t_max"], cfg["grid.dt_sample"]))


def krylov_from(cfg: RunConfig) -> KrylovConfig:
    return _build(cfg, lambda: KrylovConfig(
        cfg["propagator.subspace_dim"], cfg["propagator.step"], cfg["propagator.tol"]
    ))


def setup_from(cfg: RunConfig) -> EstimationSetup:
    return _build(cfg, lambda: EstimationSetup(
        cfg["estimation.theta_true"], cfg["estimation.n_shots"], cfg["estimation.repeats"],
        cfg["estimation.search_interval"], cfg["estimation.grid_points"],
    ))


def metric_from(cfg: RunConfig, name: str):
    if name == "qfi":
        return AveragedQFI()
    if name == "variance":
        return _build(cfg, lambda: AveragedVariance(cfg["metric.delta"], cfg["metric.m"]))
    if name == "uncertainty":
        return AveragedUncertainty(setup_from(cfg))
    raise ConfigError(f"unknown metric {name!r}; choose from {', '.join(METRIC_NAMES)}")


def scan_template(cfg: RunConfig, metric) -> ScanSpec:
    return _build(cfg, lambda: ScanSpec(
        b=cfg["model.b"], n_sites=cfg["model.n_sites"], grid=grid_from(cfg), metric=metric,
        kappa_grid=cfg["sweep.kappa_grid"], boundary=Boundary(cfg["model.boundary"]),
        seed=cfg["run.seed"], krylov=krylov_from(cfg),
    ))


# -- commands ---------------------------------------------------------------------


def cmd_evolve(cfg: RunConfig, out: Path, jobs: int) -> int:
    curve = qfi_curve(model_from(cfg), grid_from(cfg), krylov_from(cfg))
    rows = "".join(f"{_num(t)},{_num(v)}\n" for t, v in zip(curve.times, curve.values))
    _write(out / "qfi_curve.csv", _header(cfg) + "t,F_Q\n" + rows)
    _write_json(out / "summary.json", {
        "averaged_qfi": curve.average,
        "config": cfg.to_dict(),
        "seed": cfg["run.seed"],
        "versions": _versions(),
    })
    log.info("averaged QFI %.6g", curve.average)
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Path, jobs: int) -> int:
    metric = metric_from(cfg, cfg["metric.name"])
    scan = scan_template(cfg, metric)
    points = run_scan(scan, out / "checkpoint.jsonl", jobs)
    rows = "".join(f"{_num(p.kappa)},{_num(p.value)},{p.status}\n" for p in points)
    _write(out / "scan.csv", _header(cfg) + "kappa,metric_value,status\n" + rows)
    info = {"metric": metric.metric_id, "extremum": metric.extremum,
            "config": cfg.to_dict(), "seed": cfg["run.seed"], "versions": _versions()}
    code = EXIT_OK
    try:
        ext = refine_extremum([p.kappa for p in points], [p.value for p in points], metric.extremum)
        info.update(kappa_c=ext.kappa_c, refinement=ext.to_dict(), flagged=False)
    except BoundaryExtremumError as exc:
        info.update(kappa_c=exc.kappa, flagged=True, message=str(exc))
        code = EXIT_FLAGGED
    except ValueError as exc:
        info.update(kappa_c=None, flagged=True, message=str(exc))
        code = EXIT_NUMERIC
    failed = [p for p in points if not p.ok]
    if failed:
        info["failed_points"] = {_num(p.kappa): p.error for p in failed}
        if code == EXIT_OK:
            code = EXIT_NUMERIC
    _write_json(out / "extremum.json", info)
    return code


def cmd_phase_diagram(cfg: RunConfig, out: Path, jobs: int) -> int:
    if not cfg["sweep.b_grid"]:
        raise ConfigError("sweep.b_grid is empty")
    names = cfg["sweep.metrics"]
    if not names:
        raise ConfigError("sweep.metrics is empty")
    metrics = [metric_from(cfg, n) for n in names]
    template = scan_template(cfg, metrics[0])
    estimates = _build(cfg, lambda: phase_diagrams(
        cfg["sweep.b_grid"], template, metrics, out / "checkpoint.jsonl", jobs
    ))
    lines = ["B,kappa_c_detected,kappa_c_perturbative,metric\n"]
    pert = "".join(f"{_num(b)} {_num(k)}\n" for b, k in
                   zip(estimates[0].b_values, estimates[0].kappa_c_perturbative))
    _write(out / "boundary_perturbative.dat", "# B kappa_c\n" + pert)
    completed, total = 0, 0
    for name, est in zip(names, estimates):
        dat = []
        for b, kd, kp in zip(est.b_values, est.kappa_c_detected, est.kappa_c_perturbative):
            lines.append(f"{_num(b)},{_num(kd)},{_num(kp)},{name}\n")
            if math.isfinite(kd):
                dat.append(f"{_num(b)} {_num(kd)}\n")
        _write(out / f"boundary_{name}.dat", "# B kappa_c\n" + "".join(dat))
        completed += sum(math.isfinite(k) for k in est.kappa_c_detected)
        total += len(est.b_values)
    _write(out / "boundary.csv", _header(cfg) + "".join(lines))
    _write_json(out / "phase_diagram.json", {
        "metrics": {n: {"metric_id": e.metric, "failures": {_num(b): m for b, m in e.failures.items()},
                        "max_deviation": e.max_deviation()} for n, e in zip(names, estimates)},
        "completed_fraction": completed / total,
        "config": cfg.to_dict(), "seed": cfg["run.seed"], "versions": _versions(),
    })
    return EXIT_OK if completed >= PARTIAL_THRESHOLD * total else EXIT_PARTIAL


def cmd_mle(cfg: RunConfig, out: Path, jobs: int) -> int:
    spec = model_from(cfg)
    setup = setup_from(cfg)
    t = cfg["estimation.t"]
    if t < 0:
        raise ConfigError("estimation.t must be >= 0")
    probe = evolve_to(spec, polarized_state(spec.basis), t, krylov_from(cfg))
    res = estimate_phase(probe, setup, cfg["run.seed"])
    _write(out / "estimates.csv", _header(cfg) + res.estimates_csv())
    result = res.to_dict()
    if res.estimates.size:
        # spread alone hides bias, e.g. the estimator pinned at theta = 0 for tiny n_shots
        result["rmse"] = math.sqrt(math.fsum((res.estimates - setup.theta_true) ** 2) / res.estimates.size)
    result.update(theta_true=setup.theta_true, t=t, search_interval=list(setup.search_interval),
                  config=cfg.to_dict(), seed=cfg["run.seed"], versions=_versions())
    _write_json(out / "result.json", result)
    return EXIT_FLAGGED if res.boundary_hits else EXIT_OK


COMMANDS = {
    "evolve": cmd_evolve,
    "scan": cmd_scan,
    "phase-diagram": cmd_phase_diagram,
    "mle": cmd_mle,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="quenchprobe",
        description="Quench-interferometric probing of the ANNNI phase transition.",
        epilog="Config keys (section.key = value):\n" + describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="overrides run.seed")
    p.add_argument("--out", type=Path, help="overrides run.out")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.set("run.seed", args.seed)
    if args.out is not None:
        cfg.set("run.out", str(args.out))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(cfg["run.out"])
        code = COMMANDS[args.command](cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KrylovError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
