import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import plus_state, random_state
from quenchprobe.estimation import (
    EstimationSetup,
    IntervalBoundaryError,
    PhaseLaw,
    classical_fisher,
    estimate_phase,
    log_likelihood,
    mle_estimate,
    theta_derivative,
    theta_distribution,
    uncertainty_curve,
)
from quenchprobe.hamiltonian import ModelSpec
from quenchprobe.hilbert import Observable, SpinBasis, polarized_state
from quenchprobe.measurement import MeasurementRecord, sample_outcomes
from quenchprobe.metrology import outcome_distribution, qfi_pure
from quenchprobe.propagator import EvolutionGrid, evolve_to


def quenched(n, kappa=0.15, b=0.75, t=7.5):
    spec = ModelSpec(n, kappa, b)
    return evolve_to(spec, polarized_state(spec.basis), t)


@pytest.fixture(scope="module")
def probe8():
    return quenched(8)


@pytest.fixture(scope="module")
def probe12():
    return quenched(12)


def sz_record(probe, theta, n_shots, seed):
    dist = theta_distribution(probe, theta)
    return sample_outcomes(dist, n_shots, 0.0, seed)


def test_setup_defaults_and_validation():
    s = EstimationSetup()
    assert (s.theta_true, s.n_shots, s.repeats, s.grid_points) == (0.01, 50000, 2000, 64)
    assert s.search_interval == pytest.approx((0.0, 0.21))
    assert EstimationSetup(theta_true=-0.05).search_interval == pytest.approx((-0.25, 0.0))
    assert EstimationSetup(theta_true=0.0).search_interval == pytest.approx((-0.2, 0.2))
    assert EstimationSetup(repeats=0).analytic
    for bad in (dict(search_interval=(0.02, 0.3)), dict(n_shots=0), dict(repeats=1),
                dict(grid_points=8)):
        with pytest.raises(ValueError):
            EstimationSetup(**bad)


def test_theta_zero_gives_probe_law(probe8):
    a = theta_distribution(probe8, 0.0).probabilities
    b = outcome_distribution(probe8, Observable.SZ).probabilities
    np.testing.assert_array_equal(a, b)


def test_half_turn_flips_all_spins():
    dist = theta_distribution(polarized_state(SpinBasis(2)), np.pi)
    np.testing.assert_allclose(dist.probabilities, [1, 0, 0], atol=1e-15)


def test_derivative_matches_finite_difference(probe8):
    h = 1e-5
    for theta in (0.01, 0.3, -1.2):
        fd = (theta_distribution(probe8, theta + h).probabilities
              - theta_distribution(probe8, theta - h).probabilities) / (2 * h)
        np.testing.assert_allclose(theta_derivative(probe8, theta), fd, atol=1e-6)


def test_fisher_matches_finite_difference(probe8):
    h = 1e-5
    for theta in (0.01, 0.2):
        p = theta_distribution(probe8, theta).probabilities
        dp = (theta_distribution(probe8, theta + h).probabilities
              - theta_distribution(probe8, theta - h).probabilities) / (2 * h)
        keep = p > 1e-14
        fd = np.sum(dp[keep] ** 2 / p[keep])
        assert classical_fisher(probe8, theta) == pytest.approx(fd, rel=1e-5)


def test_eigenstate_probe_carries_no_information():
    for theta in (0.0, 0.01, 1.0):
        assert classical_fisher(plus_state(6), theta) == pytest.approx(0.0, abs=1e-20)


def test_phase_law_matches_direct_route(probe8):
    law = PhaseLaw(probe8)
    for theta in (0.0, 0.01, 0.7, -2.0, 4.0):
        np.testing.assert_allclose(law.probs(theta), theta_distribution(probe8, theta).probabilities,
                                   atol=1e-13)
        np.testing.assert_allclose(law.dprobs(theta), theta_derivative(probe8, theta), atol=1e-12)
    assert law.fisher(0.01) == pytest.approx(classical_fisher(probe8, 0.01), rel=1e-9)


def test_law_is_even_in_theta(probe12):
    # the Z-parity string commutes with H, fixes the polarized state and flips S_x
    for theta in (0.01, 0.3, 1.1):
        np.testing.assert_allclose(theta_distribution(probe12, theta).probabilities,
                                   theta_distribution(probe12, -theta).probabilities, atol=1e-14)


def test_log_likelihood_basics(probe8):
    up = polarized_state(SpinBasis(3))
    rec = MeasurementRecord(np.array([1.5]), 0.0, 0, 3)
    assert log_likelihood(up, 0.0, rec) == 0.0
    single = MeasurementRecord(np.array([1.0]), 0.0, 0, 8)
    double = MeasurementRecord(np.array([1.0, 1.0]), 0.0, 0, 8)
    assert log_likelihood(probe8, 0.2, double) == pytest.approx(2 * log_likelihood(probe8, 0.2, single))
    law = PhaseLaw(probe8)
    assert log_likelihood(law, 0.2, double) == pytest.approx(log_likelihood(probe8, 0.2, double))


def test_log_likelihood_floor_is_finite():
    up = polarized_state(SpinBasis(3))
    rec = MeasurementRecord(np.array([-1.5]), 0.0, 0, 3)
    assert log_likelihood(up, 0.0, rec) == pytest.approx(math.log(1e-300))
    law = PhaseLaw(up)
    log_likelihood(law, 0.0, rec)
    assert law.floor_hits == 1


def test_likelihood_grid_argmax_near_truth(probe12):
    rec = sz_record(probe12, 0.01, 50000, seed=4)
    grid = np.linspace(0.0, 0.05, 501)
    ll = [log_likelihood(probe12, th, rec) for th in grid]
    sigma = 1 / math.sqrt(50000 * qfi_pure(probe12))
    assert abs(grid[int(np.argmax(ll))] - 0.01) < 5 * sigma


def test_mle_matches_brute_force(probe8):
    rec = sz_record(probe8, 0.05, 2000, seed=8)
    est = mle_estimate(probe8, rec, (0.0, 0.25))
    grid = np.linspace(0.0, 0.25, 25001)
    law = PhaseLaw(probe8)
    counts = np.bincount((rec.outcomes + 4).astype(int), minlength=9)
    brute = grid[np.argmax(law.log_likelihood(grid, counts[None, :]))]
    assert abs(est - brute) < 2e-5


def test_mle_at_truth_zero(probe12):
    rec = sz_record(probe12, 0.0, 50000, seed=21)
    est = mle_estimate(probe12, rec, (-0.2, 0.2))
    fc = classical_fisher(probe12, 0.01)
    assert abs(est) < 5 / math.sqrt(50000 * fc)


def test_mle_flags_interval_edge(probe12):
    rec = sz_record(probe12, 0.3, 5000, seed=2)
    with pytest.raises(IntervalBoundaryError):
        mle_estimate(probe12, rec, (0.0, 0.1))


def test_mle_spread_scales_as_inverse_sqrt_n(probe12):
    wide = estimate_phase(probe12, EstimationSetup(n_shots=2500, repeats=400), seed=1)
    narrow = estimate_phase(probe12, EstimationSetup(n_shots=10000, repeats=400), seed=1)
    assert wide.uncertainty / narrow.uncertainty == pytest.approx(2.0, rel=0.25)


def test_mle_consistency_with_n(probe12):
    rmse = []
    for n in (10**3, 10**4, 10**5):
        res = estimate_phase(probe12, EstimationSetup(n_shots=n, repeats=200), seed=n)
        rmse.append(math.sqrt(np.mean((res.estimates - 0.01) ** 2)))
    assert rmse[0] > rmse[1] > rmse[2]
    # once the spread is well below theta_true the estimator is centred on it
    assert abs(res.mean - 0.01) < 4 * res.uncertainty / math.sqrt(200)
    assert res.zero_estimates == 0


def test_estimate_phase_reference_scale(probe12):
    res = estimate_phase(probe12, EstimationSetup(n_shots=5000, repeats=200), seed=3)
    assert abs(res.mean - 0.01) < 3 * res.uncertainty / math.sqrt(200)
    ratio = res.uncertainty**2 * 5000 * res.fisher_classical
    assert 0.8 <= ratio <= 1.5
    assert res.fisher_classical <= res.qfi + 1e-9
    assert res.boundary_hits == 0 and res.floor_hits == 0
    assert res.uncertainty >= res.cramer_rao * (1 - 3 / math.sqrt(200))
    d = res.to_dict()
    assert d["repeats"] == 200 and d["ratio_fc_to_fq"] <= 1 + 1e-9
    assert res.estimates_csv().splitlines()[0] == "repeat,estimate"


def test_estimate_phase_is_deterministic(probe8):
    setup = EstimationSetup(n_shots=1000, repeats=20)
    a = estimate_phase(probe8, setup, seed=77)
    b = estimate_phase(probe8, setup, seed=77)
    np.testing.assert_array_equal(a.estimates, b.estimates)


def test_analytic_mode(probe12):
    res = estimate_phase(probe12, EstimationSetup(n_shots=5000, repeats=0))
    assert res.estimates.size == 0
    assert res.uncertainty == pytest.approx(1 / math.sqrt(5000 * classical_fisher(probe12, 0.01)))


def test_single_shot_runs(probe8):
    res = estimate_phase(probe8, EstimationSetup(n_shots=1, repeats=50), seed=0)
    assert math.isfinite(res.uncertainty)
    assert res.fisher_classical <= res.qfi + 1e-9


def test_uncertainty_curve_modes():
    spec, grid = ModelSpec(8, 0.15, 0.75), EvolutionGrid(1.0, 0.5)
    analytic = uncertainty_curve(spec, grid, EstimationSetup(n_shots=5000, repeats=0))
    mc = uncertainty_curve(spec, grid, EstimationSetup(n_shots=5000, repeats=100), seed=5)
    assert analytic.values.shape == mc.values.shape == (3,)
    assert mc.diagnostics["cr_violations"] == 0
    np.testing.assert_array_less(analytic.values * (1 - 3 / math.sqrt(100)), mc.values)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 2**32 - 1), theta=st.floats(-3, 3))
def test_fisher_bounded_by_qfi(n, seed, theta):
    probe = random_state(n, np.random.default_rng(seed))
    assert classical_fisher(probe, theta) <= qfi_pure(probe) + 1e-9
