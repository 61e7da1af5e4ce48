"""Quantum Fisher information of pure states, phase encoding and time averages."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import ModelSpec
from .hilbert import (
    Observable,
    StateVector,
    apply_uniform_rotation,
    expectation_and_variance,
    polarized_state,
    resolve_observable,
    rotate_to_x_basis,
)
from .propagator import EvolutionGrid, KrylovConfig, evolve_krylov

_PROB_SUM_TOL = 1e-10


@dataclass
class MetricCurve:
    """Metric sampled on a uniform time grid, with its trapezoidal time average."""

    times: np.ndarray
    values: np.ndarray
    name: str = "value"
    stderr: np.ndarray | None = None
    diagnostics: dict | None = None
    average: float = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
        self.average = time_average(self.values, self.times)

    def average_stderr(self) -> float:
        """Standard error of :attr:`average` for independent per-time errors."""
        if self.stderr is None:
            return 0.0
        w = trapezoid_weights(self.values.size)
        return float(np.sqrt(np.sum((w * self.stderr) ** 2)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", self.name])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "average": self.average,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricCurve":
        return cls(d["times"], d["values"], d.get("name", "value"))


@dataclass
class OutcomeDistribution:
    """Exact law of a collective-spin measurement on the lattice ``-N/2 .. N/2``."""

    observable: Observable
    outcomes: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.outcomes.shape != self.probabilities.shape:
            raise ValueError("outcomes and probabilities differ in length")
        if np.any(self.probabilities < -1e-15):
            raise ValueError("negative probability")
        total = float(self.probabilities.sum())
        if abs(total - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @property
    def n_sites(self) -> int:
        return self.outcomes.size - 1

    def mean(self) -> float:
        return float(self.probabilities @ self.outcomes)

    def variance(self) -> float:
        mu = self.mean()
        return float(self.probabilities @ (self.outcomes - mu) ** 2)

    def central_moment(self, k: int) -> float:
        mu = self.mean()
        return float(self.probabilities @ (self.outcomes - mu) ** k)


def qfi_pure(psi: StateVector, obs=Observable.SX) -> float:
    """``4 Var(O)`` in the pure state ``psi``."""
    _, var = expectation_and_variance(obs, psi)
    return 4.0 * var


def _sz_law(psi: StateVector) -> np.ndarray:
    n = psi.n_sites
    by_downs = np.bincount(psi.basis.popcounts(), weights=psi.probabilities(), minlength=n + 1)
    # popcount n is the lowest outcome -n/2
    return by_downs[::-1]


def outcome_distribution(psi: StateVector, obs=Observable.SX) -> OutcomeDistribution:
    obs = resolve_observable(obs, psi.basis)
    target = rotate_to_x_basis(psi) if obs.kind is Observable.SX else psi
    probs = _sz_law(target)
    return OutcomeDistribution(obs.kind, psi.basis.lattice(), probs)


def encode_phase(psi: StateVector, theta: float, generator=Observable.SX) -> StateVector:
    """``exp(-i theta G) |psi>`` for a collective generator ``G`` (default S_x)."""
    gen = resolve_observable(generator, psi.basis)
    if theta == 0:
        return psi.copy()
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if gen.kind is Observable.SX:
        u = np.array([[c, -1j * s], [-1j * s, c]])
    else:
        u = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    return apply_uniform_rotation(psi, u)


def time_average(values, times=None, dt: float | None = None) -> float:
    """Trapezoidal estimate of ``(1/T) int_0^T f(t) dt`` on a uniform grid.

    On a uniform grid the spacing cancels, so the average is the weighted mean
    with half weights at both ends; constants are reproduced exactly.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("time average needs at least two samples")
    if times is None and dt is None:
        raise ValueError("pass either times or dt")
    if times is not None:
        times = np.asarray(times, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have equal length")
        steps = np.diff(times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(times[-1])):
            raise ValueError("time grid must be uniform and increasing")
    elif not dt > 0:
        raise ValueError("dt must be positive")
    inner = math.fsum(values[1:-1])
    return (inner + 0.5 * (values[0] + values[-1])) / (values.size - 1)


def trapezoid_weights(n_samples: int) -> np.ndarray:
    """Weights ``w`` with ``time_average(f) == w @ f`` on a uniform grid."""
    w = np.ones(n_samples)
    w[0] = w[-1] = 0.5
    return w / (n_samples - 1)


def qfi_curve(
    spec: ModelSpec,
    grid: EvolutionGrid,
    cfg: KrylovConfig = KrylovConfig(),
    generator=Observable.SX,
) -> MetricCurve:
    """QFI of the quenched polarized state along the grid."""
    psi0 = polarized_state(spec.basis)
    times, values = [], []
    for t, psi in evolve_krylov(spec, psi0, grid, cfg):
        times.append(t)
        values.append(qfi_pure(psi, generator))
    return MetricCurve(times, values, "qfi")
