"""Moment estimators from sparse comparison data, plus a scikit-learn style wrapper."""
from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .elicitation import Deterministic, Graded, ResponseDataset, Stochastic, hard_threshold
from .exceptions import CapacityError, DegenerateLinkError, WrongEstimatorError
from .geometry import check_dimension
from .harmonics import HarmonicCache, default_cache, graded_lambda, monomials, zonal_integral
from .tensors import MAX_ENTRIES, SymTensor, apply, batch_outer_power, batch_outer_product, \
    identity_power_sym, symmetrize_batch

CHUNK = 1 << 14


def c_d(d: int) -> float:
    """Gamma(d/2) / (2 sqrt(pi) Gamma((d+1)/2)): the hemisphere mean E[1{<theta,q> >= 0} <theta,q>]."""
    d = check_dimension(d)
    return math.exp(gammaln(d / 2) - gammaln((d + 1) / 2)) / (2 * math.sqrt(math.pi))


def c_d_psi(psi: Callable, d: int) -> float:
    """E[psi(q_1) q_1] for q uniform on the sphere; reduces to c_d for the hard threshold."""
    d = check_dimension(d)
    if psi is hard_threshold:
        return c_d(d)
    val = zonal_integral(lambda t: float(psi(t)) * t, d, -1.0, 1.0)
    if abs(val) < 1e-12:
        raise DegenerateLinkError("link carries no signal: c_d(psi) vanishes")
    return val


@dataclass(frozen=True)
class MomentEstimate:
    tensor: SymTensor
    order: int
    voter_count: int
    query_arity: int
    model: str
    stderr: np.ndarray | None = None

    def __post_init__(self):
        if self.tensor.order != self.order:
            raise ValueError("tensor order does not match the declared order")

    @property
    def dim(self) -> int:
        return self.tensor.dim

    def to_dict(self) -> dict:
        out = {"order": self.order, "dim": self.dim, "T": self.voter_count,
               "arity": self.query_arity, "model": self.model, "tensor": self.tensor.to_dict()}
        if self.stderr is not None:
            out["stderr"] = np.asarray(self.stderr).reshape(-1).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _accumulate(n: int, rows: Callable[[int, int], np.ndarray]):
    """Mean and standard error of per-record contributions, summed chunk by chunk in fixed order."""
    s1 = s2 = None
    for start in range(0, n, CHUNK):
        x = rows(start, min(n, start + CHUNK))
        if s1 is None:
            s1, s2 = np.zeros(x.shape[1]), np.zeros(x.shape[1])
        s1 += x.sum(axis=0)
        s2 += (x * x).sum(axis=0)
    mean = s1 / n
    if n > 1:
        var = np.clip(s2 / n - mean**2, 0, None) * n / (n - 1)
    else:
        var = np.full_like(mean, np.nan)
    return mean, np.sqrt(var / n)


def _check_data(data: ResponseDataset, arity: int | None = None) -> None:
    if data.n_voters == 0:
        raise ValueError("empty dataset")
    if arity is not None and data.arity != arity:
        raise ValueError(f"estimator needs {arity} queries per voter, dataset has {data.arity}")


def _signal_constant(data: ResponseDataset) -> float:
    model = data.model
    if isinstance(model, Deterministic):
        return c_d(data.dim)
    if isinstance(model, Stochastic):
        return c_d_psi(model.link, data.dim)
    raise WrongEstimatorError(f"{type(model).__name__} responses need a different estimator")


def _wrap(flat, se, d, k, data, tag) -> MomentEstimate:
    shape = (d,) * k
    tensor = SymTensor(flat.reshape(shape), dim=d, symmetric=False)
    return MomentEstimate(tensor, k, data.n_voters, data.arity, tag, se.reshape(shape))


def estimate_M1(data: ResponseDataset) -> MomentEstimate:
    """(1 / (c T)) sum_i b_i q_i with c = c_d, or c_d(psi) for stochastic responses."""
    _check_data(data, 1)
    c = _signal_constant(data)
    q, b = data.queries[:, 0], data.bits[:, 0].astype(float)
    mean, se = _accumulate(data.n_voters, lambda i, j: q[i:j] * (b[i:j, None] / c))
    return _wrap(mean, se, data.dim, 1, data, data.model.tag)


def estimate_Mk_kwise(data: ResponseDataset, k: int) -> MomentEstimate:
    """(1/T) sum_i chi_i q_{i1} ⊗ ... ⊗ q_{ik} / c^k, symmetrized; chi_i = all k bits positive."""
    if k < 1:
        raise ValueError("order must be >= 1")
    _check_data(data, k)
    d = data.dim
    if d**k > MAX_ENTRIES:
        raise CapacityError(f"order-{k} tensor in dimension {d} exceeds capacity")
    c = _signal_constant(data)
    chi = np.all(data.bits == 1, axis=1).astype(float) / c**k
    q = data.queries

    def rows(i, j):
        x = batch_outer_product([q[i:j, r] for r in range(k)]) * chi[i:j, None]
        return symmetrize_batch(x, d, k)

    mean, se = _accumulate(data.n_voters, rows)
    return _wrap(mean, se, d, k, data, data.model.tag)


@functools.lru_cache(maxsize=None)
def _monomial_gather(d: int, k: int) -> np.ndarray:
    """Column of each row-major tensor index in the ``monomials(d, k)`` ordering."""
    pos = {e: i for i, e in enumerate(monomials(d, k))}
    out = np.empty(d**k, dtype=np.intp)
    for flat, idx in enumerate(itertools.product(range(d), repeat=k)):
        e = [0] * d
        for i in idx:
            e[i] += 1
        out[flat] = pos[tuple(e)]
    return out


def two_query_split(k: int) -> tuple:
    """Odd degrees (s, k - s) for the even-order two-query product; s is the largest odd <= k/2."""
    if k % 2:
        return (k,)
    s = k // 2 if (k // 2) % 2 else k // 2 - 1
    return s, k - s


def estimate_Mk_two_query(data: ResponseDataset, k: int, cache: HarmonicCache | None = None) -> MomentEstimate:
    """Order-k moment from pairs of queries via harmonic reconstruction weights.

    Odd k uses the first query of each record only; even k multiplies the
    weights of the two queries at odd degrees (s, k - s).
    """
    if k < 1:
        raise ValueError("order must be >= 1")
    _check_data(data, 2)
    if not isinstance(data.model, Deterministic):
        raise WrongEstimatorError("two-query reconstruction is available for deterministic responses only")
    d = data.dim
    if d**k > MAX_ENTRIES:
        raise CapacityError(f"order-{k} tensor in dimension {d} exceeds capacity")
    cache = cache or default_cache()
    q, b = data.queries, data.bits.astype(float)
    split = two_query_split(k)
    for deg in split:
        cache.warm(d, deg)

    if len(split) == 1:
        gather = _monomial_gather(d, k)

        def rows(i, j):
            w = cache.psi_matrix(q[i:j, 0], k) * b[i:j, 0, None]
            return w[:, gather]
    else:
        s, r = split
        g1, g2 = _monomial_gather(d, s), _monomial_gather(d, r)

        def rows(i, j):
            w1 = (cache.psi_matrix(q[i:j, 0], s) * b[i:j, 0, None])[:, g1]
            w2 = (cache.psi_matrix(q[i:j, 1], r) * b[i:j, 1, None])[:, g2]
            return symmetrize_batch(batch_outer_product([w1, w2]), d, k)

    mean, se = _accumulate(data.n_voters, rows)
    return _wrap(mean, se, d, k, data, "deterministic")


def estimate_moments_graded(data: ResponseDataset, K: int) -> list:
    """Moments of orders 1..K from single graded queries by the lambda recursion.

    Reported standard errors cover the leading term T_hat_k / lambda_{k,0}
    only; noise propagated from lower orders is not included.
    """
    if K < 1:
        raise ValueError("max order must be >= 1")
    _check_data(data, 1)
    if not isinstance(data.model, Graded):
        raise WrongEstimatorError("graded recursion needs a Graded response model")
    tau, d = data.model.tau, data.dim
    if d**K > MAX_ENTRIES:
        raise CapacityError(f"order-{K} tensor in dimension {d} exceeds capacity")
    lams = {k: [graded_lambda(k, j, tau, d, check=(j == 0)) for j in range(k // 2 + 1)] for k in range(1, K + 1)}
    q, b = data.queries[:, 0], data.bits[:, 0].astype(float)
    moments = {0: SymTensor(np.asarray(1.0), dim=d)}
    out = []
    for k in range(1, K + 1):
        t_hat, se = _accumulate(data.n_voters, lambda i, j: batch_outer_power(q[i:j], k) * b[i:j, None])
        acc = t_hat.reshape((d,) * k)
        for j in range(1, k // 2 + 1):
            acc = acc - lams[k][j] * identity_power_sym(moments[k - 2 * j], j, d).array
        m = SymTensor(acc / lams[k][0], dim=d, symmetric=False)
        moments[k] = m
        out.append(MomentEstimate(m, k, data.n_voters, 1, "graded", (se / abs(lams[k][0])).reshape((d,) * k)))
    return out


ESTIMATOR_METHODS = ("m1", "kwise", "two_query", "graded")


class MomentEstimator(BaseEstimator):
    """Estimate the order-``order`` moment tensor from query/response arrays.

    ``fit(X, y)`` takes queries ``X`` of shape (T, t, d) and bits ``y`` of shape
    (T, t).  ``predict(candidates)`` returns <M_hat, phi^{⊗k}> for each row,
    which for order 1 is the estimated welfare of each candidate.
    """

    def __init__(self, method: str = "m1", order: int = 1, tau: float | None = None,
                 link: str | None = None):
        self.method = method
        self.order = order
        self.tau = tau
        self.link = link

    def _model(self):
        if self.method == "graded":
            if self.tau is None:
                raise ValueError("graded method needs tau")
            return Graded(float(self.tau))
        if self.link is not None:
            return Stochastic(self.link)
        return Deterministic()

    def fit(self, X, y):
        if self.method not in ESTIMATOR_METHODS:
            raise ValueError(f"method must be one of {ESTIMATOR_METHODS}, got {self.method!r}")
        X = check_array(X, dtype=float, allow_nd=True)
        if X.ndim == 2:
            X = X[:, None, :]
        y = check_array(y, dtype=None, ensure_2d=False).reshape(len(X), -1)
        data = ResponseDataset(X, y.astype(np.int8), self._model())
        k = int(self.order)
        if self.method == "m1":
            if k != 1:
                raise ValueError("m1 estimates order 1 only")
            est = estimate_M1(data)
        elif self.method == "kwise":
            est = estimate_Mk_kwise(data, k)
        elif self.method == "two_query":
            est = estimate_Mk_two_query(data, k)
        else:
            est = estimate_moments_graded(data, k)[-1]
        self.estimate_ = est
        self.moment_ = est.tensor.array
        self.n_features_in_ = data.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "estimate_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"candidates have {X.shape[1]} features, estimator was fit with {self.n_features_in_}")
        return np.array([apply(self.estimate_.tensor, x) for x in X])
