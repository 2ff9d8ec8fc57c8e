"""Spherical-harmonic machinery on homogeneous polynomials, with Funk-Hecke constants.

Integrals against the zonal weight (1 - t^2)^{(d-3)/2} are taken after the
substitution t = sin(u), which removes the endpoint singularity at d = 2 and
leaves a smooth integrand cos(u)^{d-2} for every d.  All constants use the
uniform probability measure on the sphere.
"""
from __future__ import annotations

import functools
import itertools
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .exceptions import (
    BlindSpotError,
    CapacityError,
    InternalConsistencyError,
    NormalizationError,
    PrecomputationRequired,
)
from .tensors import MAX_ENTRIES, SymTensor, multinomial

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
BLIND_SPOT_TOL = 1e-8
CACHE_ENV = "SPARSE_BALLOT_CACHE"


@functools.lru_cache(maxsize=None)
def monomials(d: int, k: int) -> tuple:
    """Exponent vectors of total degree k in d variables, in lexicographic order (descending)."""
    if d == 1:
        return ((k,),)
    out = []
    for first in range(k, -1, -1):
        for rest in monomials(d - 1, k - first):
            out.append((first,) + rest)
    return tuple(out)


@dataclass(frozen=True)
class HomoPoly:
    dim: int
    degree: int
    coeffs: dict

    def __post_init__(self):
        clean = {}
        for e, c in self.coeffs.items():
            e = tuple(int(x) for x in e)
            if len(e) != self.dim or sum(e) != self.degree or min(e) < 0:
                raise ValueError(f"exponent {e} is not a degree-{self.degree} monomial in {self.dim} variables")
            if c != 0:
                clean[e] = clean.get(e, 0.0) + float(c)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def monomial(cls, exps) -> "HomoPoly":
        exps = tuple(exps)
        return cls(len(exps), sum(exps), {exps: 1.0})

    @classmethod
    def zero(cls, d: int, k: int) -> "HomoPoly":
        return cls(d, k, {})

    def vector(self) -> np.ndarray:
        basis = monomials(self.dim, self.degree)
        return np.array([self.coeffs.get(e, 0.0) for e in basis])

    @classmethod
    def from_vector(cls, d: int, k: int, v, prune: float = 0.0) -> "HomoPoly":
        basis = monomials(d, k)
        return cls(d, k, {e: c for e, c in zip(basis, v) if abs(c) > prune})

    def __add__(self, other: "HomoPoly") -> "HomoPoly":
        self._same(other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0.0) + c
        return HomoPoly(self.dim, self.degree, out)

    def __sub__(self, other: "HomoPoly") -> "HomoPoly":
        return self + other * -1.0

    def __mul__(self, c: float) -> "HomoPoly":
        return HomoPoly(self.dim, self.degree, {e: v * c for e, v in self.coeffs.items()})

    __rmul__ = __mul__

    def _same(self, other):
        if (self.dim, self.degree) != (other.dim, other.degree):
            raise ValueError("polynomials differ in dimension or degree")

    def times_norm_sq(self) -> "HomoPoly":
        """Multiply by |x|^2."""
        out = {}
        for e, c in self.coeffs.items():
            for i in range(self.dim):
                f = list(e)
                f[i] += 2
                f = tuple(f)
                out[f] = out.get(f, 0.0) + c
        return HomoPoly(self.dim, self.degree + 2, out)

    def __call__(self, x):
        return eval_poly(self, x)


def laplacian(p: HomoPoly) -> HomoPoly:
    if p.degree < 2:
        return HomoPoly.zero(p.dim, max(p.degree - 2, 0))
    out = {}
    for e, c in p.coeffs.items():
        for i, ei in enumerate(e):
            if ei >= 2:
                f = list(e)
                f[i] -= 2
                f = tuple(f)
                out[f] = out.get(f, 0.0) + c * ei * (ei - 1)
    return HomoPoly(p.dim, p.degree - 2, out)


def eval_poly(p: HomoPoly, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.dim:
        raise ValueError(f"point of dimension {x.shape[-1]} for a polynomial in {p.dim} variables")
    out = np.zeros(x.shape[:-1])
    for e, c in p.coeffs.items():
        out = out + c * np.prod(x ** np.asarray(e), axis=-1)
    return float(out) if out.ndim == 0 else out


def monomial_features(x: np.ndarray, k: int) -> np.ndarray:
    """Values of every degree-k monomial at the rows of ``x``; columns follow ``monomials(d, k)``."""
    exps = np.asarray(monomials(x.shape[-1], k))
    pw = x[:, None, :] ** exps[None, :, :]
    return np.prod(pw, axis=-1)


def poly_to_tensor(p: HomoPoly) -> SymTensor:
    """Symmetric coefficient tensor T with <T, x^{⊗k}> = p(x)."""
    d, k = p.dim, p.degree
    a = np.zeros((d,) * k)
    for idx in itertools.product(range(d), repeat=k):
        e = [0] * d
        for i in idx:
            e[i] += 1
        c = p.coeffs.get(tuple(e))
        if c:
            a[idx] = c / multinomial(e)
    if k == 0:
        return SymTensor(np.asarray(p.coeffs.get((0,) * d, 0.0)), dim=d)
    return SymTensor(a, dim=d, symmetric=False)


@functools.lru_cache(maxsize=None)
def _lift_operator(d: int, m: int) -> np.ndarray:
    """Matrix of q -> Laplacian(|x|^2 q) on degree-m polynomials (invertible)."""
    basis = monomials(d, m)
    cols = [laplacian(HomoPoly.monomial(e).times_norm_sq()).vector() for e in basis]
    return np.column_stack(cols)


@dataclass(frozen=True)
class HarmonicDecomposition:
    source: HomoPoly
    parts: tuple  # ((j, HomoPoly h_j), ...) with degree decreasing by 2

    def part(self, j: int) -> HomoPoly:
        for deg, h in self.parts:
            if deg == j:
                return h
        return HomoPoly.zero(self.source.dim, j)

    def reconstruct(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        k = self.source.degree
        return sum(r2 ** ((k - j) // 2) * eval_poly(h, x) for j, h in self.parts)


def harmonic_decompose(p: HomoPoly) -> HarmonicDecomposition:
    """Split p = sum_j |x|^{k-j} h_j with each h_j harmonic of degree j.

    One step writes p = h + |x|^2 g where g solves Laplacian(|x|^2 g) =
    Laplacian(p) in coefficient space, so h = p - |x|^2 g is harmonic; the
    step recurses on g.
    """
    d, k = p.dim, p.degree
    if d**k > MAX_ENTRIES:
        raise CapacityError(f"degree {k} in dimension {d} exceeds decomposition capacity")
    if k < 2:
        return HarmonicDecomposition(p, ((k, p),))
    lap = laplacian(p).vector()
    op = _lift_operator(d, k - 2)
    if np.linalg.cond(op) > 1e12:
        raise InternalConsistencyError(f"singular harmonic lift operator at d={d}, degree {k - 2}")
    g = HomoPoly.from_vector(d, k - 2, np.linalg.solve(op, lap), prune=1e-15)
    h = p - g.times_norm_sq()
    h = HomoPoly(d, k, {e: c for e, c in h.coeffs.items() if abs(c) > 1e-14})
    parts = ((k, h),) + harmonic_decompose(g).parts
    # vanishing components are dropped; part(j) still returns the zero polynomial for them
    kept = tuple((j, q) for j, q in parts if q.coeffs) or parts[:1]
    return HarmonicDecomposition(p, kept)


def gegenbauer(j: int, lambda_param: float, t):
    """Gegenbauer polynomial C_j^{(lambda)}(t) by the three-term recurrence.

    At lambda = 0 (the circle) C_j vanishes identically for j >= 1; we return
    the standard limit lim C_j^{(lambda)}/lambda = (2/j) T_j instead.
    """
    t = np.asarray(t, dtype=float)
    lam = float(lambda_param)
    if j == 0:
        return np.ones_like(t) if t.ndim else 1.0
    if lam == 0.0:
        out = (2.0 / j) * np.cos(j * np.arccos(np.clip(t, -1, 1))) if np.all(np.abs(t) <= 1) \
            else (2.0 / j) * _chebyshev_t(j, t)
        return out if np.ndim(out) else float(out)
    c_prev, c = np.ones_like(t), 2 * lam * t
    for n in range(2, j + 1):
        c_prev, c = c, (2 * t * (n + lam - 1) * c - (n + 2 * lam - 2) * c_prev) / n
    return c if np.ndim(c) else float(c)


def _chebyshev_t(j, t):
    t_prev, tj = np.ones_like(t), t
    for _ in range(2, j + 1):
        t_prev, tj = tj, 2 * t * tj - t_prev
    return tj if j >= 1 else t_prev


def zonal(j: int, d: int, t):
    """Gegenbauer polynomial of parameter (d-2)/2 normalized to 1 at t = 1."""
    lam = (d - 2) / 2
    return np.asarray(gegenbauer(j, lam, t)) / gegenbauer(j, lam, 1.0)


def sphere_density_constant(d: int) -> float:
    """Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)): density normalizer of <x, e_1> under the uniform law."""
    return math.exp(gammaln(d / 2) - gammaln((d - 1) / 2)) / math.sqrt(math.pi)


def zonal_integral(f, d: int, lo: float, hi: float) -> float:
    """A_d * integral_lo^hi f(t) (1 - t^2)^{(d-3)/2} dt, via t = sin(u)."""
    ulo, uhi = math.asin(max(-1.0, min(1.0, lo))), math.asin(max(-1.0, min(1.0, hi)))
    if uhi <= ulo:
        return 0.0
    pts = [0.0] if ulo < 0 < uhi else None
    val, _ = integrate.quad(
        lambda u: f(math.sin(u)) * math.cos(u) ** (d - 2),
        ulo, uhi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400, points=pts,
    )
    return sphere_density_constant(d) * val


@functools.lru_cache(maxsize=None)
def funk_hecke_mu(j: int, d: int) -> float:
    """Eigenvalue of the hemisphere kernel 1{t >= 0} on degree-j harmonics (uniform measure)."""
    if j < 0:
        raise ValueError("degree must be >= 0")
    val = zonal_integral(lambda t: float(zonal(j, d, t)), d, 0.0, 1.0)
    if j % 2 and abs(val) < 1e-12:
        raise NormalizationError(f"Funk-Hecke coefficient mu_{j} vanished for d={d}")
    if j % 2 == 0 and j > 0:
        # even degrees >= 2 integrate to zero by orthogonality; snap quadrature dust
        if abs(val) > 1e-10:
            raise InternalConsistencyError(f"mu_{j} = {val} should vanish for even j")
        val = 0.0
    return val


@functools.lru_cache(maxsize=None)
def _graded_lambda_all(k: int, tau: float, d: int) -> tuple:
    m = k // 2
    lam0 = zonal_integral(lambda t: float(zonal(k, d, t)), d, tau, 1.0)
    if tau == 0.0 and k % 2 == 0:
        lam0 = 0.0  # half-range integral of an even zonal harmonic vanishes
    if m == 0:
        return (lam0,)
    # p(x) = integral 1{q_1 >= tau} <q, x>^k dsigma(q) at x = cos(a) e1 + sin(a) e2, reduced
    # to a 1-D integral over t = q_1: only even powers n of q_2 survive, and
    # E[q_2^n | q_1 = t] = (1 - t^2)^{n/2} * E[u_1^n] for u uniform on S^{d-2}.
    def sub_moment(n):
        if n == 0:
            return 1.0
        return math.prod(range(1, n, 2)) / math.prod(d - 1 + 2 * i for i in range(n // 2))

    radial = {}
    for n in range(0, k + 1, 2):
        radial[n] = math.comb(k, n) * sub_moment(n) * zonal_integral(
            lambda t, n=n: t ** (k - n) * (1 - t * t) ** (n // 2), d, tau, 1.0)
    angles = (np.arange(m + 1) + 0.5) * (math.pi / 2) / (m + 1)
    c, s = np.cos(angles), np.sin(angles)
    rhs = np.array([sum(radial[n] * ci ** (k - n) * si ** n for n in radial) for ci, si in zip(c, s)])
    lhs = np.column_stack([c ** (k - 2 * j) for j in range(m + 1)])
    sol = np.linalg.solve(lhs, rhs)
    if abs(sol[0] - lam0) > 1e-8 * max(1.0, abs(lam0)):
        raise InternalConsistencyError(
            f"graded coefficient mismatch at k={k}, tau={tau}: {sol[0]} vs {lam0}")
    return (lam0,) + tuple(float(v) for v in sol[1:])


def graded_lambda(k: int, j: int, tau: float, d: int, check: bool = False) -> float:
    """Coefficient lambda_{k,j}(tau) of Sym(theta^{⊗(k-2j)} ⊗ I^{⊗j}) in the graded identity.

    With ``check=True`` a vanishing lambda_{k,0} (|value| < 1e-8) raises
    :class:`BlindSpotError`; endpoint and blind-spot values are otherwise returned as-is.
    """
    if k < 1 or not 0 <= j <= k // 2:
        raise ValueError(f"need k >= 1 and 0 <= j <= k//2, got k={k}, j={j}")
    if not 0 <= tau <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    vals = _graded_lambda_all(int(k), float(tau), int(d))
    if check and abs(vals[0]) < BLIND_SPOT_TOL:
        raise BlindSpotError(k, tau, vals[0])
    return vals[j]


def graded_blind_spots(k: int, d: int, step: float = 1e-3) -> list:
    """Roots of tau -> lambda_{k,0}(tau) strictly inside (0, 1), bracketed on a grid and refined."""
    from scipy.optimize import brentq

    def lam0(t):
        return zonal_integral(lambda s: float(zonal(k, d, s)), d, t, 1.0)

    grid = np.arange(step, 1.0, step)
    vals = np.array([lam0(float(t)) for t in grid])
    return [brentq(lam0, grid[i], grid[i + 1], xtol=1e-14)
            for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]]


class HarmonicCache:
    """Write-once store of monomial decompositions and reconstruction weights per (d, k).

    For odd k the weight polynomial of monomial alpha is
    W_alpha(q) = sum_{odd j} f_j^alpha(q) / mu_j, so that
    E_q[1{<theta, q> >= 0} W_alpha(q)] = theta^alpha on the sphere.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        if directory is None:
            directory = os.environ.get(CACHE_ENV) or None
        self.directory = Path(directory) if directory else None
        self._decomp: dict = {}
        self._weights: dict = {}

    def warm(self, d: int, k: int) -> None:
        key = (int(d), int(k))
        if key in self._weights:
            return
        if d**k > MAX_ENTRIES:
            raise CapacityError(f"harmonic cache for d={d}, k={k} exceeds capacity")
        if not self._load(key):
            self._decomp[key] = {e: harmonic_decompose(HomoPoly.monomial(e)) for e in monomials(d, k)}
            self._save(key)
        self._weights[key] = self._build_weights(d, k)

    def is_warm(self, d: int, k: int) -> bool:
        return (d, k) in self._weights

    def decompositions(self, d: int, k: int) -> dict:
        try:
            return self._decomp[(d, k)]
        except KeyError:
            raise PrecomputationRequired(f"harmonic decompositions for d={d}, k={k} not warmed") from None

    def _build_weights(self, d, k):
        # columns: monomials of degree k; rows: all monomials of degrees k, k-2, ... (odd parts only)
        degrees = [j for j in range(k, -1, -2) if j % 2 == 1]
        blocks = []
        for j in degrees:
            mu = funk_hecke_mu(j, d)
            basis = monomials(d, j)
            pos = {e: i for i, e in enumerate(basis)}
            blk = np.zeros((len(basis), len(monomials(d, k))))
            for col, e in enumerate(monomials(d, k)):
                for ex, c in self._decomp[(d, k)][e].part(j).coeffs.items():
                    blk[pos[ex], col] += c / mu
            blocks.append((j, blk))
        return blocks

    def weights(self, d: int, k: int):
        try:
            return self._weights[(d, k)]
        except KeyError:
            raise PrecomputationRequired(f"reconstruction weights for d={d}, k={k} not warmed") from None

    def psi_matrix(self, q: np.ndarray, k: int) -> np.ndarray:
        """Unscaled weights W_alpha(q) for rows of q; shape (n, #monomials of degree k). k odd."""
        if k % 2 == 0:
            raise ValueError("single-query weights exist only for odd degree")
        d = q.shape[-1]
        out = np.zeros((q.shape[0], len(monomials(d, k))))
        for j, blk in self.weights(d, k):
            out += monomial_features(q, j) @ blk
        return out

    def to_json(self, d: int, k: int) -> str:
        dec = self.decompositions(d, k)
        payload = {
            "d": d, "k": k,
            "decompositions": {
                ",".join(map(str, e)): [
                    {"degree": j, "coeffs": [[list(ex), c] for ex, c in h.coeffs.items()]}
                    for j, h in dd.parts
                ]
                for e, dd in dec.items()
            },
        }
        return json.dumps(payload)

    def load_json(self, text: str) -> tuple:
        payload = json.loads(text)
        d, k = int(payload["d"]), int(payload["k"])
        dec = {}
        for key, parts in payload["decompositions"].items():
            e = tuple(int(x) for x in key.split(","))
            ps = tuple((int(p["degree"]), HomoPoly(d, int(p["degree"]), {tuple(ex): c for ex, c in p["coeffs"]}))
                       for p in parts)
            dec[e] = HarmonicDecomposition(HomoPoly.monomial(e), ps)
        self._decomp[(d, k)] = dec
        return d, k

    def _path(self, key):
        return self.directory / f"harmonics_d{key[0]}_k{key[1]}.json"

    def _load(self, key) -> bool:
        if self.directory is None or not self._path(key).exists():
            return False
        self.load_json(self._path(key).read_text())
        return True

    def _save(self, key) -> None:
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_text(self.to_json(*key))
        tmp.replace(self._path(key))


_default_cache: HarmonicCache | None = None


def default_cache() -> HarmonicCache:
    global _default_cache
    if _default_cache is None:
        _default_cache = HarmonicCache()
    return _default_cache


def psi_weight(alpha, q, bit, cache: HarmonicCache | None = None) -> float:
    """Reconstruction weight of monomial ``alpha`` (exponent vector) at query ``q``.

    For odd degree, ``q`` is one query and ``bit`` its response.  For even
    degree, pass ``(alpha_1, alpha_2)`` as two odd-degree exponent vectors,
    ``q = (q1, q2)`` and ``bit = (b1, b2)``: the weight is the product of the
    two single-query weights.
    """
    cache = cache or default_cache()
    if isinstance(alpha[0], (tuple, list)):
        a1, a2 = alpha
        return psi_weight(a1, q[0], bit[0], cache) * psi_weight(a2, q[1], bit[1], cache)
    alpha = tuple(int(a) for a in alpha)
    d, k = len(alpha), sum(alpha)
    if not cache.is_warm(d, k):
        raise PrecomputationRequired(f"warm the harmonic cache for d={d}, k={k} first")
    col = monomials(d, k).index(alpha)
    row = cache.psi_matrix(np.asarray(q, dtype=float)[None, :], k)[0]
    return float(bit) * float(row[col])
