"""Real-time evolution ``|psi_t> = exp(-iHt)|psi_0>`` sampled on a uniform grid.

Two routes: a short-step Lanczos propagator working matrix-free at any size, and
a dense eigendecomposition used as an oracle for small chains.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hamiltonian import DENSE_MAX_SITES, DimensionError, ModelSpec, apply_hamiltonian, dense_matrix
from .hilbert import StateVector

log = logging.getLogger(__name__)

_NORM_DRIFT_TOL = 1e-8
_MAX_HALVINGS = 30


class KrylovError(ArithmeticError):
    """Lanczos step failed to reach the requested accuracy."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


@dataclass(frozen=True)
class KrylovConfig:
    subspace_dim: int = 30
    step: float = 0.05
    tol: float = 1e-10

    def __post_init__(self):
        if self.subspace_dim < 4:
            raise ValueError("subspace_dim must be >= 4")
        if not self.step > 0 or not self.tol > 0:
            raise ValueError("step and tol must be positive")


@dataclass(frozen=True)
class EvolutionGrid:
    """Sample times ``0, dt_sample, ..., t_max``; ``t_max`` must be a multiple of ``dt_sample``."""

    t_max: float
    dt_sample: float = 0.1

    def __post_init__(self):
        if not self.dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        if self.t_max < self.dt_sample * (1 - 1e-12):
            raise ValueError("t_max must be at least dt_sample")
        n = round(self.t_max / self.dt_sample)
        if abs(n * self.dt_sample - self.t_max) > 1e-9 * max(1.0, self.t_max):
            raise ValueError(
                f"t_max={self.t_max} is not a multiple of dt_sample={self.dt_sample}"
            )

    @property
    def n_intervals(self) -> int:
        return round(self.t_max / self.dt_sample)

    @property
    def times(self) -> np.ndarray:
        return self.dt_sample * np.arange(self.n_intervals + 1)


def _expm_tridiag_e1(alpha, beta, dt):
    """``exp(-i T dt) e_1`` for the symmetric tridiagonal ``T``."""
    if len(alpha) == 1:
        return np.array([np.exp(-1j * alpha[0] * dt)])
    w, z = eigh_tridiagonal(alpha, beta)
    return z @ (np.exp(-1j * w * dt) * z[0])


class _Lanczos:
    """Orthonormal Krylov basis of ``H`` started from a unit vector.

    Full reorthogonalization against all previous basis vectors.
    """

    def __init__(self, spec: ModelSpec, v0: np.ndarray, max_dim: int):
        self.spec = spec
        self.basis_vectors = np.empty((max_dim, v0.size), dtype=np.complex128)
        self.basis_vectors[0] = v0
        self.alpha: list[float] = []
        self.beta: list[float] = []
        self.next_beta = 0.0
        self.exhausted = False
        self._scratch = np.empty_like(v0)

    @property
    def dim(self) -> int:
        return len(self.alpha)

    def extend(self) -> None:
        j = self.dim
        V = self.basis_vectors
        state = StateVector(self.spec.basis, V[j])
        w = apply_hamiltonian(self.spec, state, out=self._scratch).amplitudes
        a = float(np.vdot(V[j], w).real)
        w = w - a * V[j]
        if j > 0:
            w -= self.beta[-1] * V[j - 1]
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = float(np.linalg.norm(w))
        self.alpha.append(a)
        self.next_beta = b
        scale = max(abs(a), self.beta[-1] if self.beta else 0.0, 1.0)
        if b <= 1e-13 * scale:
            # invariant subspace: the projection is exact
            self.exhausted = True
            self.next_beta = 0.0
            return
        if j + 1 < V.shape[0]:
            self.beta.append(b)
            V[j + 1] = w / b

    def coefficients(self, dt):
        """Krylov coefficients of ``exp(-iH dt) v0`` and the truncation error estimate."""
        m = self.dim
        c = _expm_tridiag_e1(np.array(self.alpha), np.array(self.beta[: m - 1]), dt)
        err = self.next_beta * abs(c[-1])
        return c, err

    def combine(self, c) -> np.ndarray:
        return c @ self.basis_vectors[: len(c)]


def _krylov_step(spec: ModelSpec, v: np.ndarray, dt: float, cfg: KrylovConfig, t_now: float):
    """Advance ``v`` by ``dt``; returns the new vector. Subdivides when inaccurate."""
    beta0 = float(np.linalg.norm(v))
    lz = _Lanczos(spec, v / beta0, cfg.subspace_dim)
    while True:
        lz.extend()
        if lz.exhausted:
            break
        if lz.dim >= 3 or lz.dim == cfg.subspace_dim:
            _, err = lz.coefficients(dt)
            if err <= cfg.tol:
                break
        if lz.dim == cfg.subspace_dim:
            break
    c, err = lz.coefficients(dt)
    if err <= cfg.tol or lz.exhausted:
        return beta0 * lz.combine(c)
    # Krylov space too small for dt: reuse it over shorter sub-steps.
    sub = dt
    for _ in range(_MAX_HALVINGS):
        sub /= 2
        c, err = lz.coefficients(sub)
        if err <= cfg.tol:
            break
    else:
        raise KrylovError("Lanczos step did not converge at minimum sub-step", t_now)
    n_sub = 2 ** round(math.log2(dt / sub))
    log.debug("subdividing step %.3g into %d pieces at t=%.4g", dt, n_sub, t_now)
    out = beta0 * lz.combine(c)
    for k in range(1, n_sub):
        out = _krylov_step(spec, out, sub, cfg, t_now + k * sub)
    return out


def evolve_krylov(
    spec: ModelSpec,
    psi0: StateVector,
    grid: EvolutionGrid,
    cfg: KrylovConfig = KrylovConfig(),
) -> Iterator[tuple[float, StateVector]]:
    """Yield ``(t, psi_t)`` for every grid time, streaming.

    Between samples the state is advanced in equal sub-steps no longer than
    ``cfg.step``. Only the current state is kept alive.
    """
    if spec.n_sites != psi0.n_sites:
        raise ValueError("spec and state disagree on n_sites")
    n_sub = max(1, math.ceil(grid.dt_sample / cfg.step - 1e-9))
    h = grid.dt_sample / n_sub
    v = psi0.amplitudes.copy()
    times = grid.times
    yield float(times[0]), StateVector(psi0.basis, v.copy())
    for k in range(1, times.size):
        t0 = float(times[k - 1])
        for s in range(n_sub):
            v = _krylov_step(spec, v, h, cfg, t0 + s * h)
        drift = abs(float(np.linalg.norm(v)) - 1.0)
        if drift > _NORM_DRIFT_TOL:
            raise KrylovError(f"norm drift {drift:.2e} exceeds {_NORM_DRIFT_TOL}", float(times[k]))
        yield float(times[k]), StateVector(psi0.basis, v.copy())


class SpectralPropagator:
    """Dense eigendecomposition ``H = V diag(w) V^T`` for small chains."""

    def __init__(self, spec: ModelSpec):
        if spec.n_sites > DENSE_MAX_SITES:
            raise DimensionError(
                f"exact evolution limited to {DENSE_MAX_SITES} sites, got {spec.n_sites}"
            )
        self.spec = spec
        self.energies, self.vectors = np.linalg.eigh(dense_matrix(spec))

    def evolve(self, psi: StateVector, t: float) -> StateVector:
        if t == 0:
            return psi.copy()
        coeff = self.vectors.T @ psi.amplitudes
        amps = self.vectors @ (np.exp(-1j * self.energies * t) * coeff)
        return StateVector(psi.basis, amps)


def evolve_exact(
    spec: ModelSpec, psi0: StateVector, grid: EvolutionGrid
) -> Iterator[tuple[float, StateVector]]:
    """Same contract as :func:`evolve_krylov`, via dense diagonalization."""
    prop = SpectralPropagator(spec)
    for t in grid.times:
        yield float(t), prop.evolve(psi0, float(t))


def evolve_to(
    spec: ModelSpec, psi0: StateVector, t: float, cfg: KrylovConfig = KrylovConfig()
) -> StateVector:
    """State at a single time ``t``."""
    if t == 0:
        return psi0.copy()
    *_, (_, psi) = evolve_krylov(spec, psi0, EvolutionGrid(t, t), cfg)
    return psi
