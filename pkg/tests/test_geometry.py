import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_ballot.exceptions import DegenerateVectorError, InvalidDimensionError
from sparse_ballot.geometry import (
    RngStream, as_generator, basis_vector, check_unit, geodesic_distance, normalize,
    random_rotation, sample_uniform_sphere,
)


def test_normalize_and_zero_vector():
    assert np.allclose(normalize([3.0, 4.0]), [0.6, 0.8])
    with pytest.raises(DegenerateVectorError):
        normalize([0.0, 1e-13])


def test_dimension_checks():
    with pytest.raises(InvalidDimensionError):
        sample_uniform_sphere(1, 0)
    with pytest.raises(ValueError):
        check_unit([1.0, 1.0])


def test_sphere_samples_are_unit_and_centered():
    x = sample_uniform_sphere(5, RngStream(1), size=40000)
    assert x.shape == (40000, 5)
    assert np.allclose(np.linalg.norm(x, axis=1), 1, atol=1e-12)
    assert np.all(np.abs(x.mean(axis=0)) < 5 / np.sqrt(5 * 40000))
    # E[x x^T] = I/d
    assert np.allclose(x.T @ x / len(x), np.eye(5) / 5, atol=0.01)


def test_single_sample_shape():
    assert sample_uniform_sphere(3, 0).shape == (3,)


def test_stream_keys_are_reproducible_and_distinct():
    a = RngStream(7, 2, ("x", 3)).generator().standard_normal(4)
    b = RngStream(7, 2, ("x", 3)).generator().standard_normal(4)
    c = RngStream(7, 3, ("x", 3)).generator().standard_normal(4)
    d = RngStream(7).child("x", 3).trial(2).generator().standard_normal(4)
    assert np.array_equal(a, b) and np.array_equal(a, d)
    assert not np.array_equal(a, c)


def test_as_generator_passthrough():
    g = np.random.default_rng(0)
    assert as_generator(g) is g


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10**6))
def test_rotation_is_special_orthogonal(d, seed):
    r = random_rotation(d, seed)
    assert np.allclose(r @ r.T, np.eye(d), atol=1e-10)
    assert np.isclose(np.linalg.det(r), 1.0)


def test_geodesic_distance():
    assert np.isclose(geodesic_distance(basis_vector(3, 0), basis_vector(3, 1)), np.pi / 2)
    assert geodesic_distance([1.0, 0.0], [1.0 + 1e-16, 0.0]) == 0.0
