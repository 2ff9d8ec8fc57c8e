"""Unit-sphere primitives and the reproducible randomness contract.

Every stochastic routine in the package accepts either an :class:`RngStream`
or a ready :class:`numpy.random.Generator`.  Streams are keyed by
``(seed, stream_id, *path)`` through :class:`numpy.random.SeedSequence`, and
drive a counter-based Philox bit generator, so a given key always yields the
same draws regardless of execution order or thread placement.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import DegenerateVectorError, InvalidDimensionError

UNIT_TOL = 1e-12
ZERO_NORM = 1e-12


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode())


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0
    path: tuple = field(default=())

    def generator(self) -> np.random.Generator:
        keys = (_key(self.stream_id),) + tuple(_key(p) for p in self.path)
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=keys)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *keys) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(keys))

    def trial(self, index: int) -> "RngStream":
        """Stream for trial ``index``; trials never share draws."""
        return RngStream(self.seed, int(index), self.path)


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def check_dimension(d: int) -> int:
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"sphere dimension must be an integer >= 2, got {d!r}")
    return int(d)


def normalize(v, axis: int = -1) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm along ``axis``.

    Raises :class:`DegenerateVectorError` when any norm is below 1e-12; the
    zero vector has no direction and we do not perturb it.
    """
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(n < ZERO_NORM):
        raise DegenerateVectorError("cannot normalize a vector with norm < 1e-12")
    return v / n


def check_unit(v, tol: float = UNIT_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 2:
        raise InvalidDimensionError("unit vectors need d >= 2")
    err = np.abs(np.linalg.norm(v, axis=-1) - 1.0)
    if np.any(err > tol):
        raise ValueError(f"vector(s) not unit norm (max deviation {err.max():.2e})")
    return v


def sample_uniform_sphere(d: int, rng: RngLike, size=None) -> np.ndarray:
    """Uniform draw(s) on S^{d-1} via normalized standard Gaussians.

    With ``size=None`` a single vector of shape ``(d,)`` is returned,
    otherwise an array of shape ``(*size, d)``.
    """
    d = check_dimension(d)
    gen = as_generator(rng)
    shape = (d,) if size is None else tuple(np.atleast_1d(size)) + (d,)
    g = gen.standard_normal(shape)
    return normalize(g)


def random_rotation(d: int, rng: RngLike) -> np.ndarray:
    """Haar-distributed element of SO(d).

    QR of a Gaussian matrix with the diagonal of R made positive gives a
    Haar element of O(d); flipping one column when det = -1 lands in SO(d).
    """
    d = check_dimension(d)
    gen = as_generator(rng)
    a = gen.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def basis_vector(d: int, i: int) -> np.ndarray:
    e = np.zeros(d)
    e[i] = 1.0
    return e


def geodesic_distance(u, v) -> float:
    return float(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0)))
