"""Dense symmetric tensors and the tensor operations the estimators rely on."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from math import factorial

import numpy as np

from .exceptions import CapacityError
from .geometry import RngLike, as_generator, normalize

MAX_ENTRIES = 10**7
MAX_SYM_ORDER = 6
SYM_TOL = 1e-10


def _check_capacity(d: int, k: int) -> None:
    if d**k > MAX_ENTRIES:
        raise CapacityError(f"dense tensor d^k = {d}^{k} exceeds cap {MAX_ENTRIES}")


class SymTensor:
    """An order-``k`` tensor on R^d stored densely as an ndarray of shape (d,)*k.

    Construct with ``symmetric=True`` (the default) to have the permutation
    invariant checked.  The stored array is read-only.
    """

    __slots__ = ("_a", "dim")

    def __init__(self, coeffs, dim: int | None = None, symmetric: bool = True, tol: float = SYM_TOL):
        a = np.array(coeffs, dtype=float)
        if a.ndim == 0:
            if dim is None:
                raise ValueError("order-0 tensors need an explicit dim")
        else:
            if len(set(a.shape)) != 1:
                raise ValueError(f"tensor must be cubical, got shape {a.shape}")
            if dim is not None and a.shape[0] != dim:
                raise ValueError("dim does not match coefficient shape")
            dim = a.shape[0]
        _check_capacity(dim, a.ndim)
        if symmetric and a.ndim >= 2:
            dev = np.max(np.abs(_symmetrize_array(a) - a)) if a.size else 0.0
            if dev > tol * max(1.0, float(np.max(np.abs(a)))):
                raise ValueError(f"tensor is not symmetric (max deviation {dev:.2e})")
        a.setflags(write=False)
        self._a = a
        self.dim = int(dim)

    @property
    def order(self) -> int:
        return self._a.ndim

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def coeffs(self) -> np.ndarray:
        """Flat row-major coefficients."""
        return self._a.reshape(-1)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._a, dtype=dtype)

    def __add__(self, other):
        return SymTensor(self._a + _arr(other), self.dim, symmetric=False)

    def __sub__(self, other):
        return SymTensor(self._a - _arr(other), self.dim, symmetric=False)

    def __mul__(self, c):
        return SymTensor(self._a * float(c), self.dim, symmetric=False)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SymTensor(self._a / float(c), self.dim, symmetric=False)

    def __neg__(self):
        return SymTensor(-self._a, self.dim, symmetric=False)

    def __repr__(self):
        return f"SymTensor(order={self.order}, dim={self.dim})"

    def allclose(self, other, atol=1e-10) -> bool:
        return bool(np.allclose(self._a, _arr(other), rtol=0, atol=atol))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "dim": self.dim,
            "coeffs": self.coeffs.tolist(),
            "layout": "row-major",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict, symmetric: bool = True) -> "SymTensor":
        if obj.get("layout", "row-major") != "row-major":
            raise ValueError(f"unsupported layout {obj['layout']!r}")
        k, d = int(obj["order"]), int(obj["dim"])
        a = np.asarray(obj["coeffs"], dtype=float)
        if a.size != d**k:
            raise ValueError(f"expected {d**k} coefficients, got {a.size}")
        return cls(a.reshape((d,) * k), dim=d, symmetric=symmetric)

    @classmethod
    def from_json(cls, s: str, symmetric: bool = True) -> "SymTensor":
        return cls.from_dict(json.loads(s), symmetric=symmetric)


def _arr(t) -> np.ndarray:
    return t.array if isinstance(t, SymTensor) else np.asarray(t, dtype=float)


def zeros(d: int, k: int) -> SymTensor:
    return SymTensor(np.zeros((d,) * k), dim=d)


def scalar(value: float, d: int) -> SymTensor:
    return SymTensor(np.asarray(float(value)), dim=d)


def outer_power(v, k: int) -> SymTensor:
    v = np.asarray(v, dtype=float)
    if k < 0:
        raise ValueError("order must be non-negative")
    d = v.shape[0]
    _check_capacity(d, k)
    out = np.asarray(1.0)
    for _ in range(k):
        out = np.multiply.outer(out, v)
    return SymTensor(out, dim=d, symmetric=False)


def batch_outer_power(x: np.ndarray, k: int) -> np.ndarray:
    """Rows of ``x`` (n, d) raised to the k-th tensor power, flattened to (n, d^k)."""
    n, d = x.shape
    out = np.ones((n, 1))
    for _ in range(k):
        out = (out[:, :, None] * x[:, None, :]).reshape(n, -1)
    return out


def batch_outer_product(xs) -> np.ndarray:
    """Row-wise ``x_1 ⊗ ... ⊗ x_t`` for a list of (n, d) arrays, flattened."""
    n = xs[0].shape[0]
    out = np.ones((n, 1))
    for x in xs:
        out = (out[:, :, None] * x[:, None, :]).reshape(n, -1)
    return out


def _symmetrize_array(a: np.ndarray) -> np.ndarray:
    k = a.ndim
    if k <= 1:
        return a.copy()
    acc = np.zeros_like(a)
    for perm in itertools.permutations(range(k)):
        acc += np.transpose(a, perm)
    return acc / factorial(k)


def symmetrize(t, max_order: int = MAX_SYM_ORDER) -> SymTensor:
    a = _arr(t)
    if a.ndim > max_order:
        raise CapacityError(f"symmetrize over S_{a.ndim} exceeds order cap {max_order}")
    return SymTensor(_symmetrize_array(a), dim=a.shape[0] if a.ndim else None, symmetric=False)


def symmetrize_batch(flat: np.ndarray, d: int, k: int) -> np.ndarray:
    """Symmetrize each row of an (n, d^k) array of flattened order-k tensors."""
    if k <= 1:
        return flat
    n = flat.shape[0]
    a = flat.reshape((n,) + (d,) * k)
    acc = np.zeros_like(a)
    for perm in itertools.permutations(range(k)):
        acc += np.transpose(a, (0,) + tuple(p + 1 for p in perm))
    return (acc / factorial(k)).reshape(n, -1)


def identity_power_sym(base, j: int, d: int) -> SymTensor:
    """Sym(base ⊗ I^{⊗j}); ``base`` may be an order-0 scalar."""
    a = _arr(base)
    eye = np.eye(d)
    for _ in range(j):
        a = np.multiply.outer(a, eye)
    if a.ndim == 0:
        return SymTensor(a, dim=d, symmetric=False)
    return symmetrize(a)


@dataclass(frozen=True)
class Matricization:
    rows: tuple
    cols: tuple
    dim: int
    matrix: np.ndarray

    def to_tensor(self) -> np.ndarray:
        k = len(self.rows) + len(self.cols)
        perm = self.rows + self.cols
        a = self.matrix.reshape((self.dim,) * k)
        return np.transpose(a, np.argsort(perm))


def matricize(t, rows) -> Matricization:
    """Flatten ``t`` into a matrix with modes ``rows`` (0-based) indexing rows."""
    a = _arr(t)
    k = a.ndim
    rows = tuple(int(i) for i in rows)
    if len(set(rows)) != len(rows) or any(i < 0 or i >= k for i in rows):
        raise ValueError(f"invalid index set {rows!r} for an order-{k} tensor")
    cols = tuple(i for i in range(k) if i not in rows)
    d = a.shape[0] if k else 1
    m = np.transpose(a, rows + cols).reshape(d ** len(rows), d ** len(cols))
    return Matricization(rows, cols, d, m)


def unmatricize(m: Matricization) -> np.ndarray:
    return m.to_tensor()


def contract(t, v, times: int) -> np.ndarray:
    """Contract the last ``times`` modes of ``t`` with ``v``."""
    a = _arr(t)
    for _ in range(times):
        a = a @ v
    return a


def apply(t, v) -> float:
    """<T, v^{⊗k}> by iterated mode contraction."""
    a = _arr(t)
    v = np.asarray(v, dtype=float)
    if a.ndim and v.shape != (a.shape[0],):
        raise ValueError(f"vector of shape {v.shape} does not match tensor dim {a.shape[0]}")
    return float(contract(a, v, a.ndim))


def inner(s, t) -> float:
    return float(np.sum(_arr(s) * _arr(t)))


def spectral_norm_upper(t) -> float:
    """Smallest operator norm over balanced matricizations, |I| = floor(k/2).

    Every matricization norm dominates the tensor spectral norm, so this is
    a certified upper bound.
    """
    a = _arr(t)
    k = a.ndim
    if k < 1:
        raise ValueError("spectral norm needs order >= 1")
    if not np.any(a):
        return 0.0
    if k == 1:
        return float(np.linalg.norm(a))
    s = k // 2
    best = math.inf
    for rows in itertools.combinations(range(k), s):
        m = matricize(a, rows).matrix
        best = min(best, float(np.linalg.norm(m, 2)))
    return best


def spectral_norm_lower(t, restarts: int = 8, iters: int = 300, rng: RngLike = 0) -> float:
    """Best |<T, u^{⊗k}>| found by shifted symmetric higher-order power iteration.

    The tensor is symmetrized first (the symmetric part has the same values
    on u^{⊗k}).  The shift makes each iteration ascend a convex surrogate,
    so runs converge monotonically; both T and -T are maximized.
    """
    a = _arr(t)
    k = a.ndim
    if k < 1:
        raise ValueError("spectral norm needs order >= 1")
    if not np.any(a):
        return 0.0
    if k == 1:
        return float(np.linalg.norm(a))
    a = _symmetrize_array(a) if k <= MAX_SYM_ORDER else a
    d = a.shape[0]
    gen = as_generator(rng)
    shift = (k - 1) * spectral_norm_upper(a)
    best = 0.0
    starts = normalize(gen.standard_normal((restarts, d)))
    for sign in (1.0, -1.0):
        b = sign * a
        for u in starts:
            for _ in range(iters):
                g = contract(b, u, k - 1) + shift * u
                nu = np.linalg.norm(g)
                if nu == 0:
                    break
                u_new = g / nu
                if np.max(np.abs(u_new - u)) < 1e-13:
                    u = u_new
                    break
                u = u_new
            best = max(best, abs(float(contract(a, u, k))))
    return best


def multi_index_counts(index: tuple, d: int) -> tuple:
    """Exponent vector of an index tuple, e.g. (0, 0, 2) -> (2, 0, 1) for d=3."""
    e = [0] * d
    for i in index:
        e[i] += 1
    return tuple(e)


def multinomial(exps) -> int:
    out = factorial(sum(exps))
    for e in exps:
        out //= factorial(e)
    return out
