import math

import numpy as np
import pytest
from scipy import integrate

from sparse_ballot.exceptions import NotExactError, UnsupportedPopulationError
from sparse_ballot.geometry import RngStream, basis_vector, random_rotation
from sparse_ballot.populations import (
    AntipodalCaps, FiniteMixture, HarmonicPerturbedUniform, UniformSphere, exact_Q, from_spec,
    oracle_moment_mc,
)
from sparse_ballot.tensors import apply


def test_uniform_moments_match_monte_carlo():
    for d, k in ((2, 2), (3, 2), (3, 4)):
        exact = UniformSphere(d).exact_moment(k)
        mc, se = oracle_moment_mc(UniformSphere(d), k, 200_000, RngStream(k * 10 + d))
        assert np.all(np.abs(mc.array - exact.array) <= 5 * se + 1e-12)


def test_uniform_second_moment_is_scaled_identity():
    assert np.allclose(UniformSphere(4).exact_moment(2).array, np.eye(4) / 4)
    # E[x_1^4] = 3 / (d (d + 2))
    assert np.isclose(UniformSphere(3).exact_moment(4).array[0, 0, 0, 0], 3 / 15)
    assert not np.any(UniformSphere(3).exact_moment(3).array)


def test_finite_mixture_moment_and_validation():
    pop = FiniteMixture([[1.0, 0.0], [0.0, 1.0]], [0.25, 0.75])
    assert np.allclose(pop.exact_moment(2).array, np.diag([0.25, 0.75]))
    assert pop.exact_moment(0).array == 1.0
    with pytest.raises(ValueError):
        FiniteMixture([[1.0, 0.0]], [0.5])
    with pytest.raises(ValueError):
        FiniteMixture([[1.0, 1.0]])


def test_rotated_mixture_conjugates_moments():
    pop = FiniteMixture([[0.6, 0.8, 0.0], [0.0, 0.0, 1.0]], [0.3, 0.7])
    r = random_rotation(3, 5)
    assert np.allclose(pop.rotated(r).exact_moment(2).array, r @ pop.exact_moment(2).array @ r.T)


def test_exact_q_tie_rule_and_batch():
    pop = FiniteMixture([[1.0, 0.0], [-1.0, 0.0]])
    assert exact_Q(pop, [[0.0, 1.0]]) == 1.0  # <theta, q> = 0 counts as a yes
    assert exact_Q(pop, [[1.0, 0.0]]) == 0.5
    assert exact_Q(pop, [[1.0, 0.0], [-1.0, 0.0]]) == 0.0
    assert np.allclose(exact_Q(pop, np.array([[[1.0, 0.0]], [[0.0, 1.0]]])), [0.5, 1.0])
    with pytest.raises(UnsupportedPopulationError):
        exact_Q(UniformSphere(2), [[1.0, 0.0]])


def test_antipodal_caps_support_and_symmetry():
    pop = AntipodalCaps((0.0, 0.0, 1.0), 0.3)
    x = pop.sample(RngStream(3), 50_000)
    assert np.allclose(np.linalg.norm(x, axis=1), 1)
    assert np.all(np.abs(x[:, 2]) >= math.cos(0.3) - 1e-12)
    assert abs(np.mean(x[:, 2] > 0) - 0.5) < 0.01
    with pytest.raises(NotExactError):
        pop.exact_moment(2)
    with pytest.raises(ValueError):
        AntipodalCaps((1.0, 0.0), 1.0)


def test_antipodal_cap_is_uniform_within_cap():
    # For the uniform law on the sphere in d=3, the height t = <x, axis> on a cap is uniform.
    pop = AntipodalCaps((1.0, 0.0, 0.0), 0.5)
    t = np.abs(pop.sample(RngStream(4), 100_000)[:, 0])
    lo = math.cos(0.5)
    hist, _ = np.histogram(t, bins=10, range=(lo, 1))
    assert np.all(np.abs(hist / len(t) - 0.1) < 0.006)


def _h_sq_quadrature(d: int, m: int) -> float:
    """Independent oracle: E[r^{2m}] cos^2 over the plane angle, by 1-D quadrature in x_1^2 + x_2^2."""
    if d == 2:
        return 0.5
    # for d >= 3, s = x1^2 + x2^2 has density proportional to (1 - s)^{(d-4)/2} on [0, 1]
    w = lambda s: (1 - s) ** ((d - 4) / 2)
    num, _ = integrate.quad(lambda s: s**m * w(s), 0, 1)
    den, _ = integrate.quad(w, 0, 1)
    return 0.5 * num / den


@pytest.mark.parametrize("d,m", [(2, 3), (3, 3), (4, 2), (5, 4)])
def test_h_norm_sq_against_quadrature(d, m):
    pop = HarmonicPerturbedUniform(d, m, 0.5)
    assert np.isclose(pop.h_norm_sq(), _h_sq_quadrature(d, m), rtol=1e-8)


def test_h_norm_sq_d3_direct_surface_integral():
    # brute-force 2-D surface integral with polar angles
    f = lambda ph, th: (math.sin(th) ** 3 * math.cos(3 * ph)) ** 2 * math.sin(th) / (4 * math.pi)
    val, _ = integrate.dblquad(f, 0, math.pi, 0, 2 * math.pi)
    assert np.isclose(HarmonicPerturbedUniform(3, 3, 0.5).h_norm_sq(), val, rtol=1e-8)
    assert np.isclose(val, 8 / 35)


def test_harmonic_perturbed_tensor_reproduces_h():
    pop = HarmonicPerturbedUniform(4, 3, 0.4)
    x = np.random.default_rng(0).standard_normal((6, 4))
    H = pop.h_poly_tensor()
    assert np.allclose([apply(H, v) for v in x], pop.h(x))


def test_harmonic_perturbed_sampler_shifts_h_mean():
    pop = HarmonicPerturbedUniform(3, 3, 0.5, -1)
    theta = pop.sample(RngStream(8), 200_000)
    h = pop.h(theta)
    target = -0.5 * pop.h_norm_sq()
    assert abs(h.mean() - target) <= 5 * h.std() / math.sqrt(len(h))


def test_from_spec_round_trips():
    pops = [UniformSphere(3), FiniteMixture([[1.0, 0.0]]), AntipodalCaps((0.0, 1.0), 0.2),
            HarmonicPerturbedUniform(3, 2, 0.3, -1)]
    for pop in pops:
        back = from_spec(pop.to_spec())
        assert back.to_spec() == pop.to_spec()
    assert from_spec({"type": "point_mass", "theta": [2.0, 0.0]}).atoms.tolist() == [[1.0, 0.0]]


def test_oracle_needs_enough_samples():
    with pytest.raises(ValueError):
        oracle_moment_mc(UniformSphere(2), 1, 10, 0)


def test_point_mass_sample_shapes():
    pop = FiniteMixture.point_mass(basis_vector(3, 1))
    assert pop.sample(0).shape == (3,)
    assert pop.sample(0, 5).shape == (5, 3)
