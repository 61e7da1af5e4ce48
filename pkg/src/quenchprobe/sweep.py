"""Parameter scans over kappa (and B), extremum location and phase-diagram assembly.

Scan points are pure functions of (model, grid, propagator settings, metric, seed)
and are persisted to a JSON-Lines checkpoint as they finish, so an interrupted
scan resumes where it stopped and yields the same records.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .estimation import EstimationSetup, UncertaintyAccumulator
from .hamiltonian import Boundary, ModelSpec
from .hilbert import Observable, polarized_state
from .measurement import VarianceAccumulator
from .metrology import MetricCurve, outcome_distribution, qfi_pure
from .propagator import EvolutionGrid, KrylovConfig, evolve_krylov

log = logging.getLogger(__name__)

PERTURBATIVE_RESIDUAL_TOL = 1e-10


class BoundaryExtremumError(ValueError):
    """The extremum of a scan lies on its first or last grid point."""

    def __init__(self, message: str, kappa: float):
        super().__init__(message)
        self.kappa = kappa


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class AveragedQFI:
    extremum = "max"

    @property
    def metric_id(self) -> str:
        return "qfi"


@dataclass(frozen=True)
class AveragedVariance:
    """Time-averaged S_x sample variance; ``m == 0`` uses exact variances."""

    delta: float = 0.0
    m: int = 0
    extremum = "max"

    @property
    def metric_id(self) -> str:
        return f"variance(delta={self.delta!r},m={self.m})"


@dataclass(frozen=True)
class AveragedUncertainty:
    setup: EstimationSetup = field(default_factory=EstimationSetup)
    extremum = "min"

    @property
    def metric_id(self) -> str:
        s = self.setup
        lo, hi = s.search_interval
        return (
            f"uncertainty(theta={s.theta_true!r},n_shots={s.n_shots},repeats={s.repeats},"
            f"interval=[{lo!r},{hi!r}],grid_points={s.grid_points})"
        )


Metric = Union[AveragedQFI, AveragedVariance, AveragedUncertainty]


def evaluate_point(
    spec: ModelSpec,
    grid: EvolutionGrid,
    metrics: Sequence[Metric],
    cfg: KrylovConfig = KrylovConfig(),
    seed: int = 0,
) -> dict[str, MetricCurve]:
    """All requested metric curves from a single quench evolution."""
    qfi_times: list[float] = []
    qfi_vals: list[float] = []
    var_accs = {m.metric_id: VarianceAccumulator(spec, m.m, m.delta, seed)
                for m in metrics if isinstance(m, AveragedVariance)}
    unc_accs = {m.metric_id: UncertaintyAccumulator(spec, m.setup, seed)
                for m in metrics if isinstance(m, AveragedUncertainty)}
    want_qfi = any(isinstance(m, AveragedQFI) for m in metrics)
    for k, (t, psi) in enumerate(evolve_krylov(spec, polarized_state(spec.basis), grid, cfg)):
        if want_qfi:
            qfi_times.append(t)
            qfi_vals.append(qfi_pure(psi, Observable.SX))
        if var_accs:
            dist = outcome_distribution(psi, Observable.SX)
            for acc in var_accs.values():
                acc.add(k, t, dist)
        for acc in unc_accs.values():
            acc.add(k, t, psi)
    out: dict[str, MetricCurve] = {}
    if want_qfi:
        out["qfi"] = MetricCurve(qfi_times, qfi_vals, "qfi")
    for key, acc in var_accs.items():
        out[key] = acc.curve()
    for key, acc in unc_accs.items():
        out[key] = acc.curve()
    return out


# -- scans -------------------------------------------------------------------


def default_kappa_grid() -> np.ndarray:
    return np.round(np.arange(41) * 0.0125, 12)


@dataclass(frozen=True)
class ScanSpec:
    b: float
    n_sites: int
    grid: EvolutionGrid
    metric: Metric = AveragedQFI()
    kappa_grid: tuple[float, ...] = tuple(default_kappa_grid())
    boundary: Boundary = Boundary.PERIODIC
    seed: int = 0
    krylov: KrylovConfig = KrylovConfig()
    j: float = 1.0

    def __post_init__(self):
        kg = tuple(float(k) for k in self.kappa_grid)
        object.__setattr__(self, "kappa_grid", kg)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if len(kg) < 5:
            raise ValueError("kappa_grid needs at least 5 points")
        if any(b <= a for a, b in zip(kg, kg[1:])):
            raise ValueError("kappa_grid must be strictly increasing")
        if kg[0] < 0 or kg[-1] > 1:
            raise ValueError("kappa_grid must lie in [0, 1]")
        if not 0 <= self.b <= 2:
            raise ValueError("b must lie in [0, 2] for scans")

    def model(self, kappa: float) -> ModelSpec:
        return ModelSpec(self.n_sites, kappa, self.b, self.j, self.boundary)


@dataclass
class ScanPoint:
    kappa: float
    value: float
    status: str = "ok"
    error: str | None = None
    wall_time: float = 0.0
    diagnostics: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _record_key(model: ModelSpec, grid: EvolutionGrid, cfg: KrylovConfig, metric_id: str, seed: int) -> str:
    return json.dumps(
        {"model": model.to_dict(), "grid": asdict(grid), "krylov": asdict(cfg),
         "metric": metric_id, "seed": seed},
        sort_keys=True,
    )


class Checkpoint:
    """Append-only JSON-Lines store of finished scan points."""

    def __init__(self, path: str | os.PathLike | None):
        self.path = Path(path) if path is not None else None
        self.records: dict[str, dict] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            # drop a torn final line so the next append starts on a fresh line
            keep = data.rfind(b"\n") + 1
            log.warning("truncating torn checkpoint tail in %s", self.path)
            with open(self.path, "r+b") as f:
                f.truncate(keep)
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # torn final line from an interrupted write
                    log.warning("ignoring unreadable checkpoint line in %s", self.path)
                    continue
                self.records[rec["key"]] = rec

    def get(self, key: str) -> dict | None:
        rec = self.records.get(key)
        return rec if rec is not None and rec.get("status") == "ok" else None

    def add(self, rec: dict) -> None:
        self.records[rec["key"]] = rec
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())


def _run_task(model: ModelSpec, grid: EvolutionGrid, cfg: KrylovConfig, metrics, seed: int):
    start = time.perf_counter()
    try:
        curves = evaluate_point(model, grid, metrics, cfg, seed)
    except (ArithmeticError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}", time.perf_counter() - start
    summary = {
        mid: (c.average, c.diagnostics) for mid, c in curves.items()
    }
    return summary, None, time.perf_counter() - start


def run_scans(
    scans: Sequence[ScanSpec],
    checkpoint: Checkpoint | str | os.PathLike | None = None,
    jobs: int = 1,
) -> list[list[ScanPoint]]:
    """Run several scans, sharing one evolution per (model, grid, seed) point.

    Points already present in ``checkpoint`` are not recomputed.
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint(checkpoint)
    tasks: dict[tuple, list[Metric]] = {}
    for scan in scans:
        for kappa in scan.kappa_grid:
            model = scan.model(kappa)
            key = _record_key(model, scan.grid, scan.krylov, scan.metric.metric_id, scan.seed)
            if ckpt.get(key) is None:
                tkey = (model, scan.grid, scan.krylov, scan.seed)
                metrics = tasks.setdefault(tkey, [])
                if scan.metric not in metrics:
                    metrics.append(scan.metric)

    def store(tkey, metrics, summary, error, wall):
        model, grid, cfg, seed = tkey
        for metric in metrics:
            rec = {
                "key": _record_key(model, grid, cfg, metric.metric_id, seed),
                "model": model.to_dict(),
                "grid": asdict(grid),
                "krylov": asdict(cfg),
                "metric": metric.metric_id,
                "seed": seed,
                "wall_time": wall,
            }
            if error is None:
                value, diag = summary[metric.metric_id]
                rec.update(status="ok", value=value, diagnostics=diag)
            else:
                rec.update(status="failed", value=None, error=error)
            ckpt.add(rec)

    ordered = sorted(tasks.items(), key=lambda kv: (kv[0][0].b, kv[0][0].kappa))
    if jobs <= 1 or len(ordered) <= 1:
        for tkey, metrics in ordered:
            store(tkey, metrics, *_run_task(*tkey[:3], metrics, tkey[3]))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_task, *tkey[:3], metrics, tkey[3]): (tkey, metrics)
                       for tkey, metrics in ordered}
            for fut in as_completed(futures):
                tkey, metrics = futures[fut]
                store(tkey, metrics, *fut.result())

    results = []
    for scan in scans:
        points = []
        for kappa in scan.kappa_grid:
            key = _record_key(scan.model(kappa), scan.grid, scan.krylov, scan.metric.metric_id, scan.seed)
            rec = ckpt.records.get(key)
            if rec is not None and rec["status"] == "ok":
                points.append(ScanPoint(kappa, rec["value"], "ok", None, rec["wall_time"],
                                        rec.get("diagnostics")))
            else:
                err = rec.get("error") if rec else "missing"
                points.append(ScanPoint(kappa, math.nan, "failed", err))
        results.append(points)
    return results


def run_scan(scan: ScanSpec, checkpoint=None, jobs: int = 1) -> list[ScanPoint]:
    """Averaged metric at every kappa of ``scan``."""
    return run_scans([scan], checkpoint, jobs)[0]


# -- extremum ------------------------------------------------------------------


@dataclass
class Extremum:
    kappa_c: float
    kind: str
    grid_index: int
    grid_kappa: float
    neighbors: tuple[float, float, float]
    values: tuple[float, float, float]

    def to_dict(self) -> dict:
        return asdict(self)


def refine_extremum(kappas, values, kind: str = "max") -> Extremum:
    """Discrete arg-extremum refined by the vertex of the parabola through it and its neighbours.

    Non-finite values (failed points) are ignored.
    """
    if kind not in ("max", "min"):
        raise ValueError("kind must be 'max' or 'min'")
    x = np.asarray(kappas, dtype=float)
    y = np.asarray(values, dtype=float)
    keep = np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size < 5:
        raise ValueError("need at least 5 finite points to locate an extremum")
    i = int(np.argmax(y) if kind == "max" else np.argmin(y))
    if i == 0 or i == x.size - 1:
        raise BoundaryExtremumError(
            f"{kind}imum at scan edge kappa={x[i]:g}; widen the kappa range", float(x[i])
        )
    x0, x1, x2 = x[i - 1 : i + 2]
    y0, y1, y2 = y[i - 1 : i + 2]
    num = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
    den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
    vertex = x1 if den == 0 else x1 - 0.5 * num / den
    vertex = float(min(max(vertex, x0), x2))
    return Extremum(vertex, kind, i, float(x1), (float(x0), float(x1), float(x2)),
                    (float(y0), float(y1), float(y2)))


def locate_extremum(kappas, values, kind: str = "max") -> float:
    return refine_extremum(kappas, values, kind).kappa_c


# -- perturbative line -----------------------------------------------------------


def transition_residual(kappa: float, b: float) -> float:
    """``(1 - 2k) - (B - k B^2 / (2 - 2k))``; zero on the transition line."""
    return (1 - 2 * kappa) - (b - kappa * b * b / (2 - 2 * kappa))


def perturbative_kappa_c(b: float) -> float:
    """Second-order perturbative paramagnet-ferromagnet transition kappa for field ``b``.

    Root in [0, 0.5] of ``4k^2 + k(2B + B^2 - 6) + (2 - 2B) = 0``.
    """
    if not 0 <= b <= 1:
        raise ValueError(f"b must lie in [0, 1], got {b}")
    lin = 2 * b + b * b - 6
    const = 2 - 2 * b
    disc = lin * lin - 16 * const
    if disc < 0:
        raise ValueError(f"no real transition point for b={b}")
    # smaller root, written to avoid cancellation (lin < 0 on [0, 1])
    kappa = 2 * const / (-lin + math.sqrt(disc))
    if not -1e-12 <= kappa <= 0.5 + 1e-12:
        raise ValueError(f"no transition point in [0, 0.5] for b={b}")
    res = transition_residual(kappa, b)
    if abs(res) > PERTURBATIVE_RESIDUAL_TOL:
        raise ArithmeticError(f"perturbative root residual {res:.2e}")
    return kappa


# -- phase diagram ---------------------------------------------------------------


@dataclass
class BoundaryEstimate:
    metric: str
    b_values: list[float]
    kappa_c_detected: list[float]
    kappa_c_perturbative: list[float]
    failures: dict[float, str] = field(default_factory=dict)

    def max_deviation(self) -> float:
        d = np.abs(np.asarray(self.kappa_c_detected) - np.asarray(self.kappa_c_perturbative))
        return float(np.nanmax(d)) if np.any(np.isfinite(d)) else math.nan

    @property
    def completed_fraction(self) -> float:
        return float(np.mean(np.isfinite(self.kappa_c_detected))) if self.b_values else 0.0


def phase_diagrams(
    b_grid: Sequence[float],
    template: ScanSpec,
    metrics: Sequence[Metric] | None = None,
    checkpoint=None,
    jobs: int = 1,
) -> list[BoundaryEstimate]:
    """One :class:`BoundaryEstimate` per metric; evolutions are shared across metrics."""
    metrics = list(metrics) if metrics else [template.metric]
    b_grid = [float(b) for b in b_grid]
    if not b_grid:
        raise ValueError("b_grid is empty")
    if any(not 0 <= b <= 1 for b in b_grid):
        raise ValueError("b_grid values must lie in [0, 1]")
    scans = [replace(template, b=b, metric=m) for m in metrics for b in b_grid]
    results = run_scans(scans, checkpoint, jobs)
    estimates = []
    for mi, metric in enumerate(metrics):
        detected, failures = [], {}
        for bi, b in enumerate(b_grid):
            points = results[mi * len(b_grid) + bi]
            try:
                kc = locate_extremum([p.kappa for p in points], [p.value for p in points],
                                     metric.extremum)
            except ValueError as exc:
                failures[b] = str(exc)
                kc = math.nan
            detected.append(kc)
        estimates.append(BoundaryEstimate(
            metric.metric_id, b_grid, detected,
            [perturbative_kappa_c(b) for b in b_grid], failures,
        ))
    return estimates


def phase_diagram(b_grid, template: ScanSpec, checkpoint=None, jobs: int = 1) -> BoundaryEstimate:
    return phase_diagrams(b_grid, template, None, checkpoint, jobs)[0]
