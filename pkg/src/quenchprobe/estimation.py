"""Phase estimation from S_z readout of the phase-encoded quench state.

The S_z law of ``exp(-i theta S_x)|psi>`` is a trigonometric polynomial in
``theta`` with integer frequencies ``-N..N`` (differences of S_x eigenvalues).
:class:`PhaseLaw` recovers its coefficients from ``2N + 1`` exact evaluations, after
which likelihoods at arbitrary ``theta`` cost O(N^2) instead of O(N 2^N). The
direct state-based route (:func:`theta_distribution`) is kept as the reference.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import ModelSpec
from .hilbert import Observable, StateVector, apply_observable, polarized_state
from .measurement import MeasurementRecord, make_rng, point_key
from .metrology import (
    MetricCurve,
    OutcomeDistribution,
    _sz_law,
    encode_phase,
    outcome_distribution,
    qfi_pure,
)
from .propagator import EvolutionGrid, KrylovConfig, evolve_krylov

PROB_FLOOR = 1e-300
FISHER_CUTOFF = 1e-14
GOLDEN_TOL = 1e-6
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class IntervalBoundaryError(RuntimeError):
    """The likelihood maximum sits on the edge of the search interval."""


@dataclass(frozen=True)
class EstimationSetup:
    theta_true: float = 0.01
    n_shots: int = 50000
    repeats: int = 2000
    search_interval: tuple[float, float] | None = None
    grid_points: int = 64

    def __post_init__(self):
        if self.search_interval is None:
            # The S_z law is even in theta for quenches of the polarized state, so
            # only |theta| is identifiable; search the half-line containing the truth.
            lo, hi = self.theta_true - 0.2, self.theta_true + 0.2
            if self.theta_true > 0:
                lo = max(lo, 0.0)
            elif self.theta_true < 0:
                hi = min(hi, 0.0)
            object.__setattr__(self, "search_interval", (lo, hi))
        lo, hi = self.search_interval
        object.__setattr__(self, "search_interval", (float(lo), float(hi)))
        if not lo < self.theta_true < hi:
            raise ValueError("theta_true must lie strictly inside search_interval")
        if self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        if self.repeats != 0 and self.repeats < 2:
            raise ValueError("repeats must be 0 (analytic) or >= 2")
        if self.grid_points < 16:
            raise ValueError("grid_points must be >= 16")

    @property
    def analytic(self) -> bool:
        return self.repeats == 0


@dataclass
class EstimatorResult:
    estimates: np.ndarray
    mean: float
    uncertainty: float
    fisher_classical: float
    qfi: float
    n_shots: int
    boundary_hits: int = 0
    floor_hits: int = 0
    zero_estimates: int = 0

    @property
    def cramer_rao(self) -> float:
        """Classical bound ``(n F_C)^(-1/2)``."""
        return _cr_bound(self.n_shots, self.fisher_classical)

    @property
    def quantum_cramer_rao(self) -> float:
        return _cr_bound(self.n_shots, self.qfi)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "uncertainty": self.uncertainty,
            "fisher_classical": self.fisher_classical,
            "qfi": self.qfi,
            "n_shots": self.n_shots,
            "repeats": int(self.estimates.size),
            "cramer_rao_classical": self.cramer_rao,
            "cramer_rao_quantum": self.quantum_cramer_rao,
            "ratio_uncertainty_to_classical_bound": _ratio(self.uncertainty, self.cramer_rao),
            "ratio_fc_to_fq": _ratio(self.fisher_classical, self.qfi),
            "boundary_hits": self.boundary_hits,
            "zero_estimates": self.zero_estimates,
            "floor_hits": self.floor_hits,
        }

    def estimates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "estimate"])
        for i, x in enumerate(self.estimates):
            w.writerow([i, repr(float(x))])
        return buf.getvalue()


def _cr_bound(n, fisher):
    return math.inf if fisher <= 0 else 1.0 / math.sqrt(n * fisher)


def _ratio(a, b):
    return None if b == 0 or not math.isfinite(b) else a / b


def theta_distribution(probe: StateVector, theta: float) -> OutcomeDistribution:
    """S_z law after encoding ``theta`` with generator S_x."""
    return outcome_distribution(encode_phase(probe, theta), Observable.SZ)


def theta_derivative(probe: StateVector, theta: float) -> np.ndarray:
    """``dp_m/dtheta = 2 Im <psi_theta| P_m S_x |psi_theta>`` for every S_z outcome."""
    psi = encode_phase(probe, theta)
    phi = apply_observable(Observable.SX, psi).amplitudes
    w = (np.conj(psi.amplitudes) * phi).imag
    n = probe.n_sites
    return 2.0 * np.bincount(probe.basis.popcounts(), weights=w, minlength=n + 1)[::-1]


def classical_fisher(probe: StateVector, theta: float) -> float:
    """Fisher information of S_z readout about ``theta``."""
    p = theta_distribution(probe, theta).probabilities
    dp = theta_derivative(probe, theta)
    keep = p > FISHER_CUTOFF
    return float(np.sum(dp[keep] ** 2 / p[keep]))


class PhaseLaw:
    """S_z outcome probabilities of a probe as exact functions of ``theta``."""

    def __init__(self, probe: StateVector):
        n = probe.n_sites
        k = 2 * n + 1
        nodes = 2 * np.pi * np.arange(k) / k
        samples = np.array([_sz_law(encode_phase(probe, th)) for th in nodes])
        # samples[j, m] = sum_d c[d, m] exp(-i nodes[j] d), d taken mod k
        coeffs = np.fft.ifft(samples, axis=0)
        self.freqs = np.concatenate([np.arange(n + 1), np.arange(-n, 0)]).astype(float)
        self.coeffs = coeffs
        self.n_sites = n
        self.floor_hits = 0

    def probs(self, theta) -> np.ndarray:
        """Array of shape ``theta.shape + (N+1,)``, outcomes ascending."""
        th = np.asarray(theta, dtype=float)
        phase = np.exp(-1j * np.multiply.outer(th, self.freqs))
        return np.clip((phase @ self.coeffs).real, 0.0, None)

    def dprobs(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        phase = -1j * self.freqs * np.exp(-1j * np.multiply.outer(th, self.freqs))
        return (phase @ self.coeffs).real

    def fisher(self, theta: float) -> float:
        p = self.probs(theta)
        dp = self.dprobs(theta)
        keep = p > FISHER_CUTOFF
        return float(np.sum(dp[keep] ** 2 / p[keep]))

    def log_likelihood(self, theta, counts) -> np.ndarray:
        """``sum_m counts[..., m] log p_theta(m)``; ``theta`` broadcasts against ``counts[..., 0]``."""
        p = self.probs(theta)
        counts = np.asarray(counts, dtype=float)
        low = (p < PROB_FLOOR) & (counts > 0)
        if np.any(low):
            self.floor_hits += int(np.count_nonzero(low))
        return np.sum(counts * np.log(np.maximum(p, PROB_FLOOR)), axis=-1)


def record_counts(record: MeasurementRecord) -> np.ndarray:
    """Histogram of lattice outcomes, ascending (index 0 is ``-N/2``)."""
    idx = np.rint(record.outcomes + record.n_sites / 2).astype(np.int64)
    if np.any(idx < 0) or np.any(idx > record.n_sites):
        raise ValueError("outcomes off the S_z lattice")
    return np.bincount(idx, minlength=record.n_sites + 1)


def log_likelihood(probe, theta: float, record: MeasurementRecord) -> float:
    """Log-likelihood of S_z outcomes at ``theta``; probabilities floored at 1e-300."""
    counts = record_counts(record)
    if isinstance(probe, PhaseLaw):
        return float(probe.log_likelihood(theta, counts))
    p = theta_distribution(probe, theta).probabilities
    return float(counts @ np.log(np.maximum(p, PROB_FLOOR)))


def _mle_batch(law: PhaseLaw, counts: np.ndarray, interval, grid_points: int, tol: float = GOLDEN_TOL):
    """Grid pre-scan plus golden-section refinement for every row of ``counts``.

    Returns ``(estimates, at_window_edge, at_zero)``; an edge at ``theta = 0`` is
    reported as ``at_zero`` rather than as a window problem.
    """
    lo, hi = interval
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    grid = np.linspace(lo, hi, grid_points)
    logp = np.log(np.maximum(law.probs(grid), PROB_FLOOR))
    best = np.argmax(counts @ logp.T, axis=1)
    a = grid[np.maximum(best - 1, 0)]
    b = grid[np.minimum(best + 1, grid_points - 1)]
    n_iter = max(1, math.ceil(math.log(tol / (2 * (grid[1] - grid[0]))) / math.log(_INVPHI)))
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = law.log_likelihood(c, counts)
    fd = law.log_likelihood(d, counts)
    for _ in range(n_iter):
        left = fc >= fd  # maximum bracketed by [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = np.where(left, b - _INVPHI * (b - a), d)
        d_new = np.where(left, c, a + _INVPHI * (b - a))
        fx = law.log_likelihood(np.where(left, c_new, d_new), counts)
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
        c, d = c_new, d_new
    est = 0.5 * (a + b)
    at_lo = est - lo < 2 * tol
    at_hi = hi - est < 2 * tol
    if lo == 0.0 or hi == 0.0:
        # theta = 0 is the symmetry point of an even likelihood, a legitimate MLE
        zero = at_lo if lo == 0.0 else at_hi
        est = np.where(zero, 0.0, est)
        return est, (at_lo | at_hi) & ~zero, zero
    return est, at_lo | at_hi, np.zeros_like(at_lo)


def mle_estimate(
    probe,
    record: MeasurementRecord,
    search_interval: tuple[float, float],
    grid_points: int = 64,
) -> float:
    """Maximum-likelihood phase from one record of S_z outcomes.

    Raises :class:`IntervalBoundaryError` if the maximizer touches the interval edge.
    """
    law = probe if isinstance(probe, PhaseLaw) else PhaseLaw(probe)
    est, edge, _ = _mle_batch(law, record_counts(record), search_interval, grid_points)
    if edge[0]:
        raise IntervalBoundaryError(
            f"MLE {est[0]:.6g} at the edge of {tuple(search_interval)}; widen the interval"
        )
    return float(est[0])


def sample_counts(law: PhaseLaw, theta: float, n_shots: int, repeats: int, rng) -> np.ndarray:
    """``repeats`` independent S_z histograms of ``n_shots`` outcomes each."""
    p = law.probs(theta)
    p = p / p.sum()
    return rng.multinomial(n_shots, p, size=repeats)


def estimate_phase(
    probe: StateVector,
    setup: EstimationSetup,
    seed: int = 0,
    keys: tuple[int, ...] = (),
    law: PhaseLaw | None = None,
) -> EstimatorResult:
    """Repeat the MLE ``setup.repeats`` times at ``setup.theta_true``.

    With ``repeats == 0`` no sampling happens and the uncertainty is the classical
    Cramer-Rao value ``(n F_C)^(-1/2)``.
    """
    fc = classical_fisher(probe, setup.theta_true)
    fq = qfi_pure(probe, Observable.SX)
    n = setup.n_shots
    if setup.analytic:
        return EstimatorResult(np.empty(0), setup.theta_true, _cr_bound(n, fc), fc, fq, n)
    law = law or PhaseLaw(probe)
    rng = make_rng(seed, *keys)
    counts = sample_counts(law, setup.theta_true, n, setup.repeats, rng)
    floor_before = law.floor_hits
    est, edge, zero = _mle_batch(law, counts, setup.search_interval, setup.grid_points)
    mean = math.fsum(est) / est.size
    spread = math.sqrt(math.fsum((est - mean) ** 2) / (est.size - 1))
    return EstimatorResult(
        est, mean, spread, fc, fq, n,
        boundary_hits=int(np.count_nonzero(edge)),
        floor_hits=law.floor_hits - floor_before,
        zero_estimates=int(np.count_nonzero(zero)),
    )


class UncertaintyAccumulator:
    """Per-time phase-estimation uncertainty for one quench."""

    def __init__(self, spec: ModelSpec, setup: EstimationSetup, seed: int):
        self.setup, self.seed = setup, seed
        self.key = point_key(spec)
        self.times: list[float] = []
        self.values: list[float] = []
        self.boundary_hits = 0
        self.floor_hits = 0
        self.cr_violations = 0

    def add(self, k: int, t: float, psi: StateVector) -> EstimatorResult:
        res = estimate_phase(psi, self.setup, self.seed, (k, *self.key))
        self.times.append(t)
        self.values.append(res.uncertainty)
        self.boundary_hits += res.boundary_hits
        self.floor_hits += res.floor_hits
        if res.fisher_classical > res.qfi + 1e-9:
            self.cr_violations += 1
        return res

    def curve(self) -> MetricCurve:
        diag = {
            "boundary_hits": self.boundary_hits,
            "floor_hits": self.floor_hits,
            "cr_violations": self.cr_violations,
        }
        return MetricCurve(self.times, self.values, "uncertainty", diagnostics=diag)


def uncertainty_curve(
    spec: ModelSpec,
    grid: EvolutionGrid,
    setup: EstimationSetup,
    seed: int = 0,
    cfg: KrylovConfig = KrylovConfig(),
) -> MetricCurve:
    """Spread of the MLE along the quench (analytic Cramer-Rao proxy if ``repeats == 0``)."""
    acc = UncertaintyAccumulator(spec, setup, seed)
    for k, (t, psi) in enumerate(evolve_krylov(spec, polarized_state(spec.basis), grid, cfg)):
        acc.add(k, t, psi)
    return acc.curve()
