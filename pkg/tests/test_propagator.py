import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import field_only_spec, kron_hamiltonian, plus_state, random_state
from quenchprobe.hamiltonian import Boundary, ModelSpec, energy
from quenchprobe.hilbert import Observable, SpinBasis, expectation_and_variance, polarized_state
from quenchprobe.metrology import qfi_curve
from quenchprobe.propagator import (
    EvolutionGrid,
    KrylovConfig,
    KrylovError,
    SpectralPropagator,
    evolve_exact,
    evolve_krylov,
    evolve_to,
)


def test_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(subspace_dim=3)
    with pytest.raises(ValueError):
        KrylovConfig(step=0)
    with pytest.raises(ValueError):
        KrylovConfig(tol=0)
    with pytest.raises(ValueError):
        EvolutionGrid(1.0, 0.0)
    with pytest.raises(ValueError):
        EvolutionGrid(0.05, 0.1)
    with pytest.raises(ValueError):
        EvolutionGrid(1.05, 0.1)


def test_grid_times():
    g = EvolutionGrid(15.0, 0.1)
    assert g.times.size == 151
    assert g.times[-1] == pytest.approx(15.0)
    np.testing.assert_allclose(np.diff(g.times), 0.1)


def test_eigenstate_is_stationary():
    spec = ModelSpec(6, 0.0, 0.0, boundary=Boundary.OPEN)
    psi0 = plus_state(6)
    for _, psi in evolve_krylov(spec, psi0, EvolutionGrid(3.0, 0.5)):
        assert abs(abs(psi.vdot(psi0)) - 1) < 1e-9


def test_field_only_keeps_polarized_state():
    spec = field_only_spec(6, 0.8)
    for _, psi in evolve_krylov(spec, polarized_state(SpinBasis(6)), EvolutionGrid(2.0, 0.5)):
        _, var = expectation_and_variance(Observable.SX, psi)
        assert var == pytest.approx(1.5, abs=1e-12)


def test_krylov_matches_exact_at_n8():
    spec = ModelSpec(8, 0.15, 0.75)
    psi0 = polarized_state(spec.basis)
    a = evolve_to(spec, psi0, 7.5)
    b = SpectralPropagator(spec).evolve(psi0, 7.5)
    assert abs(a.vdot(b)) > 1 - 1e-9


def test_exact_matches_scipy_expm():
    from scipy.linalg import expm

    h = kron_hamiltonian(6, 1.0, 0.3, 0.9)
    psi0 = polarized_state(SpinBasis(6))
    ref = expm(-1j * 1.7 * h) @ psi0.amplitudes
    got = SpectralPropagator(ModelSpec(6, 0.3, 0.9)).evolve(psi0, 1.7)
    np.testing.assert_allclose(got.amplitudes, ref, atol=1e-12)


def test_exact_identity_and_composition(rng):
    spec = ModelSpec(8, 0.2, 0.6)
    prop = SpectralPropagator(spec)
    psi = random_state(8, rng)
    np.testing.assert_array_equal(prop.evolve(psi, 0.0).amplitudes, psi.amplitudes)
    two = prop.evolve(prop.evolve(psi, 0.7), 1.9)
    one = prop.evolve(psi, 2.6)
    np.testing.assert_allclose(two.amplitudes, one.amplitudes, atol=1e-10)


def test_exact_energy_conservation():
    spec = ModelSpec(8, 0.15, 0.75)
    psi0 = polarized_state(spec.basis)
    e0 = energy(spec, psi0)
    for _, psi in evolve_exact(spec, psi0, EvolutionGrid(5.0, 0.5)):
        assert abs(energy(spec, psi) - e0) < 1e-10


def test_krylov_unitarity_and_energy():
    spec = ModelSpec(12, 0.15, 0.75)
    psi0 = polarized_state(spec.basis)
    e0 = energy(spec, psi0)
    for _, psi in evolve_krylov(spec, psi0, EvolutionGrid(30.0, 0.5)):
        assert abs(psi.norm() - 1) < 1e-8
        assert abs(energy(spec, psi) - e0) / spec.n_sites < 1e-8


def test_small_subspace_triggers_substeps():
    spec = ModelSpec(8, 0.15, 0.75)
    psi0 = polarized_state(spec.basis)
    cfg = KrylovConfig(subspace_dim=4, step=0.5, tol=1e-10)
    a = evolve_to(spec, psi0, 2.0, cfg)
    b = SpectralPropagator(spec).evolve(psi0, 2.0)
    assert abs(a.vdot(b)) > 1 - 1e-8


def test_non_convergence_reports_time():
    spec = ModelSpec(6, 0.15, 0.75)
    cfg = KrylovConfig(subspace_dim=4, step=0.5, tol=1e-300)
    with pytest.raises(KrylovError) as info:
        list(evolve_krylov(spec, polarized_state(spec.basis), EvolutionGrid(1.0, 0.5), cfg))
    assert info.value.time == 0.0


def test_step_halving_changes_qfi_little():
    spec = ModelSpec(10, 0.15, 0.75)
    grid = EvolutionGrid(5.0, 0.1)
    a = qfi_curve(spec, grid, KrylovConfig(step=0.05)).values
    b = qfi_curve(spec, grid, KrylovConfig(step=0.025)).values
    assert np.max(np.abs(a - b) / np.abs(b)) < 1e-6


@settings(max_examples=8, deadline=None)
@given(
    n=st.integers(5, 10),
    kappa=st.floats(0, 1),
    b=st.floats(0, 2),
    boundary=st.sampled_from(list(Boundary)),
    seed=st.integers(0, 2**32 - 1),
)
def test_oracle_agreement_random_specs(n, kappa, b, boundary, seed):
    spec = ModelSpec(n, kappa, b, 1.0, boundary)
    psi0 = random_state(n, np.random.default_rng(seed))
    grid = EvolutionGrid(2.0, 0.25)
    for (_, a), (_, e) in zip(evolve_krylov(spec, psi0, grid), evolve_exact(spec, psi0, grid)):
        assert 1 - abs(a.vdot(e)) < 1e-8
