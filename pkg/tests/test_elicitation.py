import numpy as np
import pytest

from sparse_ballot.elicitation import (
    BLOCK, Deterministic, Graded, ResponseDataset, Stochastic, TabulatedLink, bradley_terry,
    check_skew, collect, model_from_dict, respond,
)
from sparse_ballot.geometry import RngStream
from sparse_ballot.populations import FiniteMixture, UniformSphere


def test_deterministic_tie_is_yes():
    assert respond([1.0, 0.0], [0.0, 1.0], Deterministic()) == 1
    assert respond([1.0, 0.0], [-1.0, 0.0], Deterministic()) == 0


def test_graded_threshold():
    assert respond([1.0, 0.0], [0.6, 0.8], Graded(0.5)) == 1
    assert respond([1.0, 0.0], [0.4, np.sqrt(0.84)], Graded(0.5)) == 0
    with pytest.raises(ValueError):
        respond([1.0, 0.0], [2.0, 0.0], Graded(0.5))
    for tau in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            Graded(tau)


def test_bradley_terry_skew_and_stability():
    t = np.array([-800.0, -1.0, 0.0, 2.0, 800.0])
    assert np.allclose(bradley_terry(t) + bradley_terry(-t), 1.0)
    assert np.all(np.isfinite(bradley_terry(t)))
    check_skew(bradley_terry)
    with pytest.raises(ValueError):
        Stochastic(lambda t: np.clip(0.6 + 0 * t, 0, 1))


def test_stochastic_frequency_matches_link():
    theta, q = np.array([1.0, 0.0]), np.array([0.6, 0.8])
    bits = respond(np.tile(theta, (200_000, 1)), q, Stochastic(), np.random.default_rng(0))
    p = bradley_terry(0.6)
    assert abs(bits.mean() - p) < 5 * np.sqrt(p * (1 - p) / 200_000)


def test_tabulated_link_validates_skew():
    grid = np.linspace(-1, 1, 5)
    link = TabulatedLink(grid, 0.5 + 0.4 * grid)
    assert np.isclose(link(0.25), 0.6)
    with pytest.raises(ValueError):
        TabulatedLink(grid, 0.6 + 0.4 * grid)
    m = model_from_dict(Stochastic(link).to_dict())
    assert np.isclose(m.link(0.5), 0.7)


def test_collect_shapes_and_determinism():
    pop = UniformSphere(3)
    a = collect(pop, 2, 1000, Deterministic(), 5)
    b = collect(pop, 2, 1000, Deterministic(), RngStream(5))
    assert a.queries.shape == (1000, 2, 3) and a.bits.shape == (1000, 2)
    assert np.array_equal(a.queries, b.queries) and np.array_equal(a.bits, b.bits)
    assert not a.queries.flags.writeable


def test_collect_prefix_stable_across_blocks():
    pop = FiniteMixture([[1.0, 0.0], [0.0, 1.0]])
    small = collect(pop, 1, BLOCK + 10, Deterministic(), 1)
    big = collect(pop, 1, 2 * BLOCK + 3, Deterministic(), 1)
    assert np.array_equal(small.queries[:BLOCK], big.queries[:BLOCK])


def test_dataset_validation_and_select():
    with pytest.raises(ValueError):
        ResponseDataset(np.zeros((3, 2, 2)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        ResponseDataset(np.zeros((3, 1, 2)), 2 * np.ones((3, 1)))
    data = collect(UniformSphere(2), 3, 10, Deterministic(), 0)
    sub = data.select([2])
    assert sub.arity == 1 and np.array_equal(sub.bits[:, 0], data.bits[:, 2])


def test_ndjson_round_trip(tmp_path):
    data = collect(UniformSphere(3), 2, 50, Graded(0.3), 2)
    path = tmp_path / "d.ndjson"
    data.to_ndjson(path)
    back = ResponseDataset.from_ndjson(path)
    assert np.array_equal(back.queries, data.queries)
    assert np.array_equal(back.bits, data.bits)
    assert back.model == data.model and back.seed == 2


def test_model_from_dict():
    assert isinstance(model_from_dict("deterministic"), Deterministic)
    assert model_from_dict({"type": "graded", "tau": 0.5}).tau == 0.5
    with pytest.raises(ValueError):
        model_from_dict({"type": "oracle"})
