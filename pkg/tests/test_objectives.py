import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sparse_ballot.exceptions import CapacityError
from sparse_ballot.experiments import committee_agreement, greedy_counterexample, random_committee_agreement
from sparse_ballot.geometry import RngStream, sample_uniform_sphere
from sparse_ballot.objectives import (
    Candidate, brute_force_committee, chebyshev_log, greedy_committee, nash_exact, nash_welfare,
    risk_adjusted, select_best, tcw_mc, utility_range, welfare,
)
from sparse_ballot.populations import FiniteMixture, UniformSphere

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
AXES = np.array([E1, -E1, E2, -E2])


def test_candidate_bound():
    assert Candidate((3.0, 4.0)).bound == 5.0
    with pytest.raises(ValueError):
        Candidate((3.0, 4.0), 4.0)
    with pytest.raises(ValueError):
        Candidate((np.nan, 1.0))


def test_welfare_examples():
    assert welfare(E1, 2 * E1) == 2.0
    assert welfare(np.zeros(2), Candidate((1.0, 1.0))) == 0.0
    theta = np.array([0.6, 0.8])
    assert np.isclose(welfare(FiniteMixture.point_mass(theta).exact_moment(1), [1.0, 2.0]), 2.2)


def test_select_best_examples():
    assert select_best(E1, [E1, E2]) == 0
    assert select_best(E1, [-E1, 0.5 * E1, E2]) == 1
    assert select_best(E1, [E2, -E2]) == 0  # tie -> lowest index
    with pytest.raises(ValueError):
        select_best(E1, [])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_argmax_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    m, slate = rng.standard_normal(4), rng.standard_normal((6, 4))
    assert select_best(m, slate) == select_best(m, c * slate)


def test_risk_adjusted_examples():
    theta0 = np.array([0.6, 0.8])
    beta = 1.7
    M1, M2 = np.zeros(2), np.outer(theta0, theta0)
    assert np.isclose(risk_adjusted(M1, M2, beta * theta0, 2.0), -2.0 * beta)
    pm = FiniteMixture.point_mass(theta0)
    phi = np.array([1.0, -0.3])
    assert np.isclose(risk_adjusted(pm.exact_moment(1), pm.exact_moment(2), phi, 3.0), theta0 @ phi)
    with pytest.raises(ValueError):
        risk_adjusted(M1, M2, phi, -1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_risk_adjusted_alpha_zero_is_welfare(seed):
    rng = np.random.default_rng(seed)
    m1, m2, phi = rng.standard_normal(3), rng.standard_normal((3, 3)), rng.standard_normal(3)
    assert risk_adjusted(m1, m2 + m2.T, phi, 0.0) == welfare(m1, phi)


def test_variance_clamp():
    # m2 < m1^2 from noise must not produce NaN
    assert risk_adjusted(np.array([1.0, 0.0]), np.zeros((2, 2)), E1, 1.0) == 1.0


@pytest.mark.parametrize("k,a,b", [(8, 1.0, 4.0), (1, 1.0, math.e), (12, 0.5, 2.0), (4, 0.1, 1.0), (20, 0.02, 1.0)])
def test_chebyshev_grid_within_bound(k, a, b):
    approx = chebyshev_log(k, a, b)
    assert approx.grid_error(1000) <= approx.error_bound
    assert len(approx.coeffs) == k + 1


def test_chebyshev_degenerate_interval_and_domain():
    approx = chebyshev_log(5, 2.0, 2.0)
    assert approx.coeffs[0] == math.log(2.0) and approx.error_bound == 0.0
    assert not any(approx.coeffs[1:])
    with pytest.raises(ValueError):
        chebyshev_log(3, 0.0, 1.0)
    with pytest.raises(ValueError):
        chebyshev_log(3, 2.0, 1.0)


def test_chebyshev_degree_one_closed_form():
    a, b = 1.0, math.e
    r = a / b
    alpha = (math.sqrt(r) - 1) / (math.sqrt(r) + 1)
    approx = chebyshev_log(1, a, b)
    slope = -2 * alpha * 2 / (b - a)
    assert np.isclose(approx.coeffs[1], slope)


def test_simplified_bound_is_not_uniform():
    """The closed form |sqrt(r) - 1| |alpha|^k / (k + 1) is exceeded on the grid at k = 8, [1, 4]."""
    approx = chebyshev_log(8, 1.0, 4.0)
    assert approx.stated_bound < approx.grid_error(1000) <= approx.error_bound


def test_nash_examples():
    theta0 = np.array([0.6, 0.8])
    phi = np.array([1.0, 1.0])
    pm = FiniteMixture.point_mass(theta0)
    u = theta0 @ phi
    approx = chebyshev_log(6, 1.0, 2.0)
    est = nash_welfare([pm.exact_moment(j) for j in range(1, 7)], phi, 1.0, 2.0)
    assert abs(est - math.log(u)) <= approx.error_bound
    mix = FiniteMixture([[0.6, 0.8], [0.8, 0.6]])
    phi2 = np.array([1.5, 1.0])
    a, b = utility_range(mix, phi2)
    est = nash_welfare([mix.exact_moment(j) for j in range(1, 13)], phi2, a, b, 12)
    assert abs(est - nash_exact(mix, phi2)) <= chebyshev_log(12, a, b).error_bound + 1e-12
    with pytest.raises(ValueError):
        nash_welfare([mix.exact_moment(1)], phi2, a, b, 3)


def test_nash_random_instances():
    from sparse_ballot.experiments import nash_instance
    for i in range(20):
        assert nash_instance(i, seed=4)["bound_held"]


def test_tcw_examples():
    theta0 = np.array([0.6, 0.8])
    pm = FiniteMixture.point_mass(theta0)
    assert tcw_mc(pm, [E1])[0] == 0.6
    assert tcw_mc(pm, AXES)[0] == 0.8
    oracle, _ = integrate.quad(lambda t: abs(math.cos(t)) / (2 * math.pi), 0, 2 * math.pi)
    assert np.isclose(oracle, 2 / math.pi)
    val, se = tcw_mc(UniformSphere(2), [E1, -E1], n=400_000, rng=RngStream(1))
    assert abs(val - oracle) <= 5 * se
    assert tcw_mc(UniformSphere(2), [E1], n=100_000, rng=0)[1] > 0
    with pytest.raises(ValueError):
        tcw_mc(pm, [])


def test_tcw_monotone_on_finite_support():
    rng = np.random.default_rng(3)
    pop = FiniteMixture(sample_uniform_sphere(3, rng, size=6))
    slate = sample_uniform_sphere(3, rng, size=6)
    for i in range(5):
        assert tcw_mc(pop, slate[: i + 1])[0] >= tcw_mc(pop, slate[:i] if i else slate[:1])[0] - 1e-15


def test_greedy_examples():
    mix = FiniteMixture(np.column_stack([np.cos(np.arange(64) * np.pi / 32), np.sin(np.arange(64) * np.pi / 32)]))
    g = greedy_committee(mix, AXES, 2)
    assert g.indices in ((0, 1), (2, 3))
    assert greedy_committee(mix, AXES, 4).indices == (0, 1, 2, 3)
    theta0 = np.array([0.28, 0.96])
    assert greedy_committee(FiniteMixture.point_mass(theta0), AXES, 1).indices == (2,)
    with pytest.raises(ValueError):
        greedy_committee(mix, AXES, 5)


def test_greedy_on_uniform_circle_picks_antipodal_pair():
    g = greedy_committee(UniformSphere(2), AXES, 2, n=200_000, rng=RngStream(5))
    assert g.indices in ((0, 1), (2, 3))
    assert abs(g.tcw_estimate - 2 / math.pi) <= 5 * g.stderr


def test_brute_force_examples():
    mix = FiniteMixture([[1.0, 0.0], [0.0, 1.0]])
    bf = brute_force_committee(mix, AXES, 2)
    assert bf.indices == (0, 2) and bf.tcw_estimate == 1.0
    bf1 = brute_force_committee(mix, AXES, 1)
    assert bf1.indices == (select_best(mix.exact_moment(1), AXES),)
    with pytest.raises(CapacityError):
        brute_force_committee(mix, np.tile(AXES, (10, 1)), 5)


def test_greedy_is_not_always_optimal():
    pop, slate, ell = greedy_counterexample()
    res = committee_agreement(pop, slate, ell)
    assert res["greedy"]["tcw_estimate"] == 0.5 and res["brute_force"]["tcw_estimate"] == 1.0


def test_random_agreement_rate_is_high_but_below_one():
    rate = random_committee_agreement(300, seed=1)
    assert 0.85 <= rate < 1.0
