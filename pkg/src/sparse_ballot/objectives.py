"""Social-choice objectives evaluated from moment tensors, and committee selection."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import chebyshev as cheb

from .exceptions import CapacityError
from .geometry import RngLike, as_generator
from .populations import FiniteMixture, Population
from .tensors import SymTensor, apply

BRUTE_FORCE_BUDGET = 10**5
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Candidate:
    embedding: tuple
    bound: float | None = None

    def __post_init__(self):
        v = np.asarray(self.embedding, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("candidate embedding must be a finite vector")
        norm = float(np.linalg.norm(v))
        b = norm if self.bound is None else float(self.bound)
        if b < norm - 1e-12:
            raise ValueError(f"norm bound {b} is below the embedding norm {norm}")
        object.__setattr__(self, "embedding", tuple(v.tolist()))
        object.__setattr__(self, "bound", b)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding)

    @property
    def dim(self) -> int:
        return len(self.embedding)


def _vec(phi) -> np.ndarray:
    return phi.vector if isinstance(phi, Candidate) else np.asarray(phi, dtype=float)


def _tensor(m) -> SymTensor | np.ndarray:
    # MomentEstimate, SymTensor or a bare array
    return m.tensor if hasattr(m, "tensor") else m


def _embeddings(cands) -> np.ndarray:
    if isinstance(cands, np.ndarray):
        return np.atleast_2d(cands.astype(float))
    return np.array([_vec(c) for c in cands], dtype=float)


def welfare(M1, phi) -> float:
    return apply(_tensor(M1), _vec(phi))


def select_best(M1, candidates) -> int:
    """Index of the candidate with the highest estimated welfare; the lowest index wins ties."""
    phis = _embeddings(candidates)
    if len(phis) == 0:
        raise ValueError("no candidates to choose from")
    m = np.asarray(_tensor(M1), dtype=float)
    if phis.shape[1] != m.shape[0]:
        raise ValueError("candidate dimension does not match the moment")
    return int(np.argmax(phis @ m))


def risk_adjusted(M1, M2, phi, alpha: float) -> float:
    """m1 - alpha * sqrt(max(0, m2 - m1^2)) with m_j = <M_j, phi^{⊗j}>."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    v = _vec(phi)
    m1 = apply(_tensor(M1), v)
    if alpha == 0:
        return m1
    m2 = apply(_tensor(M2), v)
    return m1 - alpha * math.sqrt(max(0.0, m2 - m1 * m1))


def select_best_risk_adjusted(M1, M2, candidates, alpha: float) -> int:
    vals = [risk_adjusted(M1, M2, c, alpha) for c in candidates]
    if not vals:
        raise ValueError("no candidates to choose from")
    return int(np.argmax(vals))


def welfare_selection_bound(eps: float, B: float) -> float:
    return 2 * eps * B


def risk_selection_bound(eps: float, alpha: float, B: float) -> float:
    """Twice the per-candidate error sqrt(3)(alpha + 1) B sqrt(eps)."""
    return 2 * math.sqrt(3) * (alpha + 1) * B * math.sqrt(eps)


@dataclass(frozen=True)
class ChebyshevLogApprox:
    """Degree-k polynomial P with |P(x) - ln x| <= error_bound on [a, b].

    ``stated_bound`` is the simplified closed form |sqrt(r) - 1| |alpha|^k / (k + 1)
    kept for comparison; it is not a valid uniform bound (see the tests).
    """

    degree: int
    a: float
    b: float
    coeffs: tuple
    error_bound: float
    stated_bound: float

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def grid_error(self, n: int = 1000) -> float:
        x = np.linspace(self.a, self.b, n)
        return float(np.max(np.abs(self(x) - np.log(x))))


def chebyshev_log(k: int, a: float, b: float) -> ChebyshevLogApprox:
    """Truncated Chebyshev series of ln on [a, b], expanded to power basis in x.

    With x = (a+b)/2 (1 + delta t), delta = (b-a)/(b+a):
    ln(1 + delta t) = -ln(1 + alpha^2) - 2 sum_j alpha^j T_j(t) / j,
    alpha = (sqrt(r) - 1)/(sqrt(r) + 1), r = a/b.  The tail after degree k is
    bounded by 2 |alpha|^{k+1} / ((k+1)(1 - |alpha|)).
    """
    if a <= 0:
        raise ValueError("Nash welfare needs strictly positive utilities: a must be > 0")
    if b < a:
        raise ValueError("need a <= b")
    if k < 0:
        raise ValueError("degree must be >= 0")
    if a == b:
        return ChebyshevLogApprox(k, a, b, (math.log(a),) + (0.0,) * k, 0.0, 0.0)
    r = a / b
    alpha = (math.sqrt(r) - 1) / (math.sqrt(r) + 1)
    series = np.zeros(k + 1)
    series[0] = math.log((a + b) / 2) - math.log1p(alpha * alpha)
    for j in range(1, k + 1):
        series[j] = -2 * alpha**j / j
    in_t = Polynomial(cheb.cheb2poly(series))
    t_of_x = Polynomial([-(a + b) / (b - a), 2 / (b - a)])
    coeffs = in_t(t_of_x).coef
    coeffs = np.pad(coeffs, (0, k + 1 - len(coeffs)))
    bound = 2 * abs(alpha) ** (k + 1) / ((k + 1) * (1 - abs(alpha)))
    stated = abs(math.sqrt(r) - 1) / (k + 1) * abs(alpha) ** k
    return ChebyshevLogApprox(k, float(a), float(b), tuple(coeffs.tolist()), bound, stated)


def nash_welfare(moments, phi, a: float, b: float, k: int | None = None) -> float:
    """sum_j c_j <M_j, phi^{⊗j}> for the degree-k Chebyshev approximation of ln on [a, b].

    ``moments`` lists M_1, M_2, ... (order 0 is the constant 1).
    """
    k = len(moments) if k is None else k
    if len(moments) < k:
        raise ValueError(f"degree-{k} Nash estimate needs {k} moments, got {len(moments)}")
    approx = chebyshev_log(k, a, b)
    v = _vec(phi)
    total = approx.coeffs[0]
    for j in range(1, k + 1):
        total += approx.coeffs[j] * apply(_tensor(moments[j - 1]), v)
    return float(total)


def nash_exact(pop: FiniteMixture, phi) -> float:
    u = pop.atoms @ _vec(phi)
    if np.any(u <= 0):
        raise ValueError("Nash welfare needs strictly positive utilities")
    return float(pop.weights @ np.log(u))


def utility_range(pop: FiniteMixture, phi) -> tuple:
    u = pop.atoms @ _vec(phi)
    return float(u.min()), float(u.max())


def _eval_samples(pop: Population, n: int, rng: RngLike):
    if isinstance(pop, FiniteMixture):
        return pop.atoms, pop.weights, True
    theta = pop.sample(as_generator(rng), n)
    return theta, np.full(n, 1.0 / n), False


def _tcw_from_utilities(u: np.ndarray, w: np.ndarray, exact: bool):
    best = u.max(axis=1)
    mean = float(w @ best)
    if exact:
        return mean, 0.0
    n = len(best)
    return mean, float(best.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan


def tcw_mc(pop: Population, W, n: int = 100_000, rng: RngLike = 0):
    """Top-choice welfare E[max_{phi in W} <theta, phi>] and its standard error.

    Finite mixtures are summed exactly over atoms (stderr 0).
    """
    phis = _embeddings(W)
    if len(phis) == 0:
        raise ValueError("committee must be non-empty")
    theta, w, exact = _eval_samples(pop, n, rng)
    return _tcw_from_utilities(theta @ phis.T, w, exact)


@dataclass(frozen=True)
class Committee:
    indices: tuple
    tcw_estimate: float
    stderr: float

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "tcw_estimate": self.tcw_estimate, "stderr": self.stderr}


def _first_max(vals) -> int:
    vals = np.asarray(vals)
    return int(np.flatnonzero(vals >= vals.max() - TIE_TOL)[0])


def greedy_committee(pop: Population, candidates, ell: int, n: int = 100_000, rng: RngLike = 0) -> Committee:
    """Add the candidate of largest marginal tcw gain, ell times.

    One sample of voter types is drawn up front and shared by every
    comparison (common random numbers), so the output is fixed per seed.
    """
    phis = _embeddings(candidates)
    m = len(phis)
    if not 1 <= ell <= m:
        raise ValueError(f"committee size {ell} must lie in [1, {m}]")
    theta, w, exact = _eval_samples(pop, n, rng)
    u = theta @ phis.T
    chosen: list = []
    current = np.full(len(theta), -np.inf)
    for _ in range(ell):
        rest = [i for i in range(m) if i not in chosen]
        vals = [float(w @ np.maximum(current, u[:, i])) for i in rest]
        pick = rest[_first_max(vals)]
        chosen.append(pick)
        current = np.maximum(current, u[:, pick])
    val, se = _tcw_from_utilities(u[:, chosen], w, exact)
    return Committee(tuple(sorted(chosen)), val, se)


def brute_force_committee(pop: Population, candidates, ell: int, n: int = 100_000,
                          rng: RngLike = 0) -> Committee:
    """Exhaustive tcw maximizer over all size-ell subsets (lexicographically first on ties)."""
    phis = _embeddings(candidates)
    m = len(phis)
    if not 1 <= ell <= m:
        raise ValueError(f"committee size {ell} must lie in [1, {m}]")
    if math.comb(m, ell) > BRUTE_FORCE_BUDGET:
        raise CapacityError(f"C({m}, {ell}) subsets exceed the enumeration budget {BRUTE_FORCE_BUDGET}")
    theta, w, exact = _eval_samples(pop, n, rng)
    u = theta @ phis.T
    subsets = list(itertools.combinations(range(m), ell))
    vals = [float(w @ u[:, list(s)].max(axis=1)) for s in subsets]
    best = subsets[_first_max(vals)]
    val, se = _tcw_from_utilities(u[:, list(best)], w, exact)
    return Committee(tuple(best), val, se)
