"""Shared independent oracles: Kronecker-product operators and the free-fermion TFIM."""

from functools import reduce

import numpy as np
import pytest

from quenchprobe.hamiltonian import Boundary, ModelSpec
from quenchprobe.hilbert import SpinBasis, StateVector

I2 = np.eye(2)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.diag([1.0, -1.0])


def site_op(op, site, n):
    """``op`` on ``site`` of ``n`` spins.

    Site 0 is the least-significant bit of the basis index, so it is the last
    factor of the Kronecker product.
    """
    factors = [I2] * n
    factors[n - 1 - site] = op
    return reduce(np.kron, factors)


def collective(op, n):
    return 0.5 * sum(site_op(op, i, n) for i in range(n))


def kron_hamiltonian(n, j, kappa, b, periodic=True):
    """ANNNI Hamiltonian summed term by term from Kronecker products."""
    h = np.zeros((2**n, 2**n))
    nn = n if periodic else n - 1
    nnn = n if periodic else n - 2
    for i in range(nn):
        h -= j * site_op(X, i, n) @ site_op(X, (i + 1) % n, n)
    for i in range(nnn):
        h += kappa * site_op(X, i, n) @ site_op(X, (i + 2) % n, n)
    for i in range(n):
        h -= b * site_op(Z, i, n)
    return h


def tfim_ground_energy(n, j, b):
    """Free-fermion ground energy of ``-J sum XX - B sum Z`` on an even periodic ring.

    The ground state lives in the even-parity sector, whose fermions obey
    antiperiodic boundary conditions: ``k = pi (2m + 1) / N``.
    """
    k = np.pi * (2 * np.arange(n) + 1) / n
    return -np.sum(np.sqrt(j * j + b * b - 2 * j * b * np.cos(k)))


def field_only_spec(n, b, boundary=Boundary.PERIODIC):
    """Test-only model with the nearest-neighbour coupling switched off (J = 0)."""
    spec = object.__new__(ModelSpec)
    for name, value in dict(n_sites=n, kappa=0.0, b=float(b), j=0.0, boundary=boundary).items():
        object.__setattr__(spec, name, value)
    return spec


def random_state(n, rng):
    a = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector.from_amplitudes(a, normalize=True)


def plus_state(n):
    return StateVector(SpinBasis(n), np.full(2**n, 2 ** (-n / 2), dtype=complex))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE = {}
CRITERIA = {
    1: "QFI identity (operator vs distribution moments)",
    2: "product-state QFI baseline",
    3: "Krylov propagator vs dense oracle",
    4: "kappa = 0 free-fermion ground energy",
    5: "averaged-QFI peak near the critical point",
    6: "variance probe robust to resolution",
    7: "variance offset law",
    8: "MLE estimation suite",
    9: "phase diagram vs perturbative line",
    10: "CLI determinism across --jobs",
}


def record_criterion(number, ok, detail):
    """Log one acceptance criterion and fail the calling test if it did not hold."""
    ACCEPTANCE[number] = (bool(ok), detail)
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {CRITERIA[number]} | {detail}"
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in ACCEPTANCE:
            ok, detail = ACCEPTANCE[number]
            status = "PASS" if ok else "FAIL"
        else:
            status, detail = "FAIL", "did not complete"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} | {detail}")
