import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import X, Z, collective, plus_state, random_state
from quenchprobe.hilbert import (
    BasisMismatchError,
    CollectiveObservable,
    Observable,
    SpinBasis,
    StateVector,
    apply_observable,
    expectation_and_variance,
    polarized_state,
    rotate_to_x_basis,
)
from quenchprobe.metrology import outcome_distribution


def test_basis_dimension_and_limits():
    assert SpinBasis(10).dimension == 1024
    with pytest.raises(ValueError):
        SpinBasis(0)
    with pytest.raises(ValueError):
        SpinBasis(25)
    assert SpinBasis(26, max_sites=26).dimension == 2**26
    np.testing.assert_array_equal(SpinBasis(3).lattice(), [-1.5, -0.5, 0.5, 1.5])


def test_polarized_state_small():
    np.testing.assert_array_equal(polarized_state(SpinBasis(2)).amplitudes, [1, 0, 0, 0])
    assert polarized_state(SpinBasis(4)).norm() == 1.0


def test_polarized_state_twenty_sites():
    psi = polarized_state(SpinBasis(20))
    assert psi.amplitudes.size == 1048576
    assert np.count_nonzero(psi.amplitudes) == 1
    assert psi.amplitudes[0] == 1


def test_sz_on_all_up():
    psi = polarized_state(SpinBasis(2))
    out = apply_observable(Observable.SZ, psi)
    np.testing.assert_array_equal(out.amplitudes, [1, 0, 0, 0])


def test_sx_single_spin_flip():
    psi = polarized_state(SpinBasis(1))
    out = apply_observable(Observable.SX, psi)
    np.testing.assert_array_equal(out.amplitudes, [0, 0.5])


@pytest.mark.parametrize("kind,op", [(Observable.SX, X), (Observable.SZ, Z)])
def test_matrix_free_matches_dense(kind, op, rng):
    for n in range(2, 9):
        psi = random_state(n, rng)
        dense = collective(op, n)
        np.testing.assert_allclose(apply_observable(kind, psi).amplitudes, dense @ psi.amplitudes,
                                   atol=1e-12)
        if n == 6:
            mean, _ = expectation_and_variance(kind, psi)
            assert abs(mean - np.vdot(psi.amplitudes, dense @ psi.amplitudes).real) < 1e-12


def test_scratch_buffer_is_reused(rng):
    psi = random_state(5, rng)
    buf = np.empty(32, dtype=complex)
    out = apply_observable(Observable.SX, psi, out=buf)
    assert out.amplitudes is buf


def test_basis_mismatch_raises():
    psi = polarized_state(SpinBasis(3))
    with pytest.raises(BasisMismatchError):
        apply_observable(CollectiveObservable.sx(SpinBasis(4)), psi)
    with pytest.raises(BasisMismatchError):
        psi.vdot(polarized_state(SpinBasis(4)))


@pytest.mark.parametrize("n", [2, 5, 9])
def test_moments_of_product_states(n):
    up = polarized_state(SpinBasis(n))
    assert expectation_and_variance(Observable.SX, up) == pytest.approx((0.0, n / 4), abs=1e-14)
    assert expectation_and_variance(Observable.SZ, up) == (n / 2, 0.0)
    mean, var = expectation_and_variance(Observable.SX, plus_state(n))
    assert mean == pytest.approx(n / 2, abs=1e-12)
    assert var == 0.0  # round-off clamped


def test_unnormalized_state_rejected():
    psi = StateVector(SpinBasis(2), np.array([1, 1, 0, 0], dtype=complex))
    with pytest.raises(ValueError):
        expectation_and_variance(Observable.SX, psi)


def test_rotation_two_spins():
    dist = outcome_distribution(rotate_to_x_basis(polarized_state(SpinBasis(2))), Observable.SZ)
    np.testing.assert_array_equal(dist.outcomes, [-1, 0, 1])
    np.testing.assert_allclose(dist.probabilities, [0.25, 0.5, 0.25], atol=1e-15)


def test_rotation_is_involution_and_maps_variances(rng):
    psi = random_state(8, rng)
    rot = rotate_to_x_basis(psi)
    assert abs(rot.norm() - 1) < 1e-12
    np.testing.assert_allclose(rotate_to_x_basis(rot).amplitudes, psi.amplitudes, atol=1e-12)
    _, vx = expectation_and_variance(Observable.SX, psi)
    _, vz = expectation_and_variance(Observable.SZ, rot)
    assert abs(vx - vz) < 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(list(Observable)))
def test_hermiticity(n, seed, kind):
    rng = np.random.default_rng(seed)
    phi, psi = random_state(n, rng), random_state(n, rng)
    lhs = phi.vdot(apply_observable(kind, psi))
    rhs = apply_observable(kind, phi).vdot(psi)
    assert abs(lhs - rhs) < 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
def test_outcomes_on_lattice_and_norm_preserved(n, seed):
    psi = random_state(n, np.random.default_rng(seed))
    assert abs(rotate_to_x_basis(psi).norm() - 1) < 1e-10
    dist = outcome_distribution(psi, Observable.SX)
    k = dist.outcomes + n / 2
    np.testing.assert_array_equal(k, np.arange(n + 1))
