"""ANNNI chain Hamiltonian

    H = -J sum_i X_i X_{i+1} + kappa sum_i X_i X_{i+2} - B sum_i Z_i

applied matrix-free on the full computational basis. Each XX bond is a double
bit flip, the field term is diagonal.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .hilbert import SpinBasis, StateVector

DENSE_MAX_SITES = 12
MIN_PERIODIC_SITES = 5


class Boundary(enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"


class DimensionError(ValueError):
    """Requested a dense object for a system that is too large."""


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of one quench Hamiltonian. Energies in units of ``j``."""

    n_sites: int
    kappa: float = 0.0
    b: float = 0.0
    j: float = 1.0
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        for name in ("kappa", "b", "j"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.j > 0:
            raise ValueError(f"j must be positive, got {self.j}")
        _check_sites(self.n_sites, self.boundary)

    @property
    def basis(self) -> SpinBasis:
        return SpinBasis(self.n_sites)

    def bonds(self) -> list[tuple[int, int, float]]:
        """``(site_a, site_b, coefficient)`` for every X_a X_b term."""
        return _bonds(self.n_sites, self.boundary, self.j, self.kappa)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["boundary"] = self.boundary.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def _check_sites(n_sites, boundary: Boundary) -> None:
    if not isinstance(n_sites, (int, np.integer)) or n_sites < 2:
        raise ValueError(f"n_sites must be an integer >= 2, got {n_sites!r}")
    if boundary is Boundary.PERIODIC and n_sites < MIN_PERIODIC_SITES:
        # next-nearest bonds (i, i+2) repeat themselves for N <= 4
        raise ValueError(
            f"periodic boundaries need n_sites >= {MIN_PERIODIC_SITES}, got {n_sites}"
        )


def _bonds(n, boundary, j, kappa):
    if boundary is Boundary.PERIODIC:
        nn = [(i, (i + 1) % n) for i in range(n)]
        nnn = [(i, (i + 2) % n) for i in range(n)]
    else:
        nn = [(i, i + 1) for i in range(n - 1)]
        nnn = [(i, i + 2) for i in range(n - 2)]
    return [(a, c, -j) for a, c in nn] + [(a, c, kappa) for a, c in nnn]


@lru_cache(maxsize=4)
def _operator_tables(spec: ModelSpec):
    bonds = [(a, c, v) for a, c, v in spec.bonds() if v != 0.0]
    masks = np.array([(1 << a) | (1 << c) for a, c, _ in bonds], dtype=np.int64)
    coeffs = np.array([v for _, _, v in bonds], dtype=np.float64)
    pc = spec.basis.popcounts()
    diag = -spec.b * (spec.n_sites - 2.0 * pc)
    for arr in (masks, coeffs, diag):
        arr.setflags(write=False)
    return diag, masks, coeffs


def apply_hamiltonian(
    spec: ModelSpec, psi: StateVector, out: np.ndarray | None = None
) -> StateVector:
    """Return ``H|psi>``; ``out`` may supply a scratch buffer of the state length."""
    if spec.n_sites != psi.n_sites:
        raise ValueError(f"spec has {spec.n_sites} sites, state has {psi.n_sites}")
    diag, masks, coeffs = _operator_tables(spec)
    if out is None:
        out = np.empty_like(psi.amplitudes)
    _kernels.apply_xx_diag(psi.amplitudes, out, diag, masks, coeffs)
    return StateVector(psi.basis, out)


def energy(spec: ModelSpec, psi: StateVector) -> float:
    return float(np.vdot(psi.amplitudes, apply_hamiltonian(spec, psi).amplitudes).real)


def dense_matrix(spec: ModelSpec) -> np.ndarray:
    """Explicit real symmetric matrix of ``H``; only for ``n_sites <= 12``."""
    if spec.n_sites > DENSE_MAX_SITES:
        raise DimensionError(
            f"dense matrix limited to {DENSE_MAX_SITES} sites, got {spec.n_sites}"
        )
    diag, masks, coeffs = _operator_tables(spec)
    dim = spec.basis.dimension
    h = np.diag(diag.astype(np.float64))
    rows = np.arange(dim)
    for mask, c in zip(masks, coeffs):
        h[rows ^ mask, rows] += c
    if not np.allclose(h, h.T, rtol=0.0, atol=1e-12):
        raise ArithmeticError("assembled Hamiltonian is not symmetric")
    return h
