"""Computational basis, state vectors and collective spin operators for spin-1/2 chains.

Bit convention: bit ``i`` of a basis index describes site ``i``. A cleared bit is
spin up (sigma^z = +1), a set bit is spin down (sigma^z = -1). The fully polarized
state is therefore basis index 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

DEFAULT_MAX_SITES = 24
_NEG_VARIANCE_TOL = 1e-12
_NORM_TOL = 1e-8


class BasisMismatchError(ValueError):
    """Raised when an operator and a state live on different bases."""


@dataclass(frozen=True)
class SpinBasis:
    """Full ``2**n_sites`` computational basis of ``n_sites`` spins."""

    n_sites: int
    max_sites: int = DEFAULT_MAX_SITES

    def __post_init__(self):
        if not isinstance(self.n_sites, (int, np.integer)) or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites!r}")
        if self.n_sites > self.max_sites:
            raise ValueError(f"n_sites={self.n_sites} exceeds the configured maximum {self.max_sites}")

    @property
    def dimension(self) -> int:
        return 1 << self.n_sites

    def popcounts(self) -> np.ndarray:
        return _popcounts(self.n_sites)

    def lattice(self) -> np.ndarray:
        """Collective-spin eigenvalues ``-N/2, -N/2 + 1, ..., N/2`` in ascending order."""
        return np.arange(self.n_sites + 1) - self.n_sites / 2


@lru_cache(maxsize=8)
def _popcounts(n_sites: int) -> np.ndarray:
    pc = _kernels.popcounts(n_sites)
    pc.setflags(write=False)
    return pc


@lru_cache(maxsize=8)
def _sz_diagonal(n_sites: int) -> np.ndarray:
    diag = (n_sites - 2.0 * _popcounts(n_sites)) / 2.0
    diag.setflags(write=False)
    return diag


@dataclass
class StateVector:
    """Complex amplitudes over a :class:`SpinBasis`.

    Operator applications may return unnormalized vectors; evolution and phase
    encoding keep the norm at one.
    """

    basis: SpinBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.basis.dimension,):
            raise ValueError(
                f"expected {self.basis.dimension} amplitudes, got shape {amps.shape}"
            )
        self.amplitudes = amps

    @property
    def n_sites(self) -> int:
        return self.basis.n_sites

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def vdot(self, other: "StateVector") -> complex:
        """``<self|other>``."""
        _check_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.amplitudes.copy())

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = int(amps.size).bit_length() - 1
        if amps.ndim != 1 or (1 << n) != amps.size:
            raise ValueError("amplitude count must be a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(SpinBasis(n), amps)


class Observable(enum.Enum):
    SX = "Sx"
    SZ = "Sz"


@dataclass(frozen=True)
class CollectiveObservable:
    """Collective spin operator ``sum_i sigma_i^a / 2`` for ``a`` in {x, z}."""

    kind: Observable
    basis: SpinBasis

    @classmethod
    def sx(cls, basis: SpinBasis) -> "CollectiveObservable":
        return cls(Observable.SX, basis)

    @classmethod
    def sz(cls, basis: SpinBasis) -> "CollectiveObservable":
        return cls(Observable.SZ, basis)

    def eigenvalues(self) -> np.ndarray:
        return self.basis.lattice()


def resolve_observable(obs, basis: SpinBasis) -> CollectiveObservable:
    """Accept an :class:`Observable`, its string name, or a bound observable."""
    if isinstance(obs, CollectiveObservable):
        _check_same_basis(obs.basis, basis)
        return obs
    return CollectiveObservable(Observable(obs), basis)


def _check_same_basis(a: SpinBasis, b: SpinBasis) -> None:
    if a.n_sites != b.n_sites:
        raise BasisMismatchError(f"basis mismatch: {a.n_sites} vs {b.n_sites} sites")


def polarized_state(basis: SpinBasis) -> StateVector:
    """All spins up: unit amplitude on basis index 0."""
    amps = np.zeros(basis.dimension, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(basis, amps)


def apply_observable(obs, psi: StateVector, out: np.ndarray | None = None) -> StateVector:
    """Return ``O|psi>`` without building a matrix.

    ``out`` is an optional scratch buffer of the state's length; when given, the
    result is written into it and wrapped without copying.
    """
    obs = resolve_observable(obs, psi.basis)
    if out is None:
        out = np.empty_like(psi.amplitudes)
    if obs.kind is Observable.SZ:
        np.multiply(_sz_diagonal(psi.n_sites), psi.amplitudes, out=out)
    else:
        _kernels.apply_sx(psi.amplitudes, out, psi.n_sites)
    return StateVector(psi.basis, out)


def _require_normalized(psi: StateVector) -> None:
    n2 = float(np.vdot(psi.amplitudes, psi.amplitudes).real)
    if abs(n2 - 1.0) > _NORM_TOL:
        raise ValueError(f"state is not normalized (norm^2 = {n2:.12g})")


def expectation_and_variance(obs, psi: StateVector) -> tuple[float, float]:
    """Mean and variance of a collective observable in a normalized state."""
    _require_normalized(psi)
    obs = resolve_observable(obs, psi.basis)
    if obs.kind is Observable.SZ:
        probs = psi.probabilities()
        diag = _sz_diagonal(psi.n_sites)
        mean = float(probs @ diag)
        second = float(probs @ (diag * diag))
    else:
        phi = apply_observable(obs, psi).amplitudes
        mean = float(np.vdot(psi.amplitudes, phi).real)
        second = float(np.vdot(phi, phi).real)
    var = second - mean * mean
    if var < 0.0:
        if var < -_NEG_VARIANCE_TOL:
            raise ArithmeticError(f"negative variance {var:.3e}")
        var = 0.0
    return mean, var


def apply_uniform_rotation(psi: StateVector, u: np.ndarray) -> StateVector:
    """Apply the same 2x2 matrix ``u`` to every site (``u`` acts on (up, down))."""
    u = np.asarray(u, dtype=np.complex128)
    v = psi.amplitudes.copy()
    for i in range(psi.n_sites):
        w = v.reshape(-1, 2, 1 << i)
        up = w[:, 0, :].copy()
        down = w[:, 1, :]
        w[:, 0, :] = u[0, 0] * up + u[0, 1] * down
        w[:, 1, :] = u[1, 0] * up + u[1, 1] * down
    return StateVector(psi.basis, v)


_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def rotate_to_x_basis(psi: StateVector) -> StateVector:
    """Hadamard every site, mapping S_x eigenstates onto S_z eigenstates.

    The S_x outcome law of ``psi`` equals the S_z outcome law of the result. The
    rotation is an involution.
    """
    return apply_uniform_rotation(psi, _HADAMARD)
