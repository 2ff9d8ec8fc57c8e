"""Voter-type distributions on the sphere, with exact and Monte Carlo moment oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import NotExactError, UnsupportedPopulationError
from .geometry import RngLike, as_generator, check_dimension, check_unit, normalize, sample_uniform_sphere
from .tensors import SymTensor, batch_outer_power, identity_power_sym, outer_power

MC_CHUNK = 1 << 16


class Population:
    """Base class; subclasses provide ``dim`` and ``sample``."""

    dim: int

    def sample(self, rng: RngLike, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def is_exact(self, k: int) -> bool:
        return False

    def exact_moment(self, k: int) -> SymTensor:
        raise NotExactError(f"{type(self).__name__} has no closed-form moment of order {k}")

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _single(self, x, n):
        return x[0] if n is None else x


@dataclass(frozen=True)
class UniformSphere(Population):
    dim: int

    def __post_init__(self):
        check_dimension(self.dim)

    def sample(self, rng, n=None):
        return sample_uniform_sphere(self.dim, rng, size=n)

    def is_exact(self, k):
        return True

    def exact_moment(self, k: int) -> SymTensor:
        d = self.dim
        if k % 2:
            return SymTensor(np.zeros((d,) * k), dim=d)
        # theta = g/|g| with g ~ N(0, I); E[g^{⊗k}] = (k-1)!! Sym(I^{⊗k/2})
        # and |g| is independent of the direction, E|g|^k = prod (d + 2j).
        h = k // 2
        c = math.prod(range(1, k, 2)) / math.prod(d + 2 * j for j in range(h))
        return identity_power_sym(np.asarray(1.0), h, d) * c

    def to_spec(self):
        return {"type": "uniform", "d": self.dim}


class FiniteMixture(Population):
    def __init__(self, atoms, weights=None):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        check_unit(atoms)
        check_dimension(atoms.shape[1])
        if weights is None:
            weights = np.full(len(atoms), 1.0 / len(atoms))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(atoms),):
            raise ValueError("need exactly one weight per atom")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        self.atoms = atoms
        self.weights = weights
        self.dim = atoms.shape[1]

    @classmethod
    def point_mass(cls, theta):
        return cls([theta], [1.0])

    def sample(self, rng, n=None):
        gen = as_generator(rng)
        m = 1 if n is None else n
        idx = gen.choice(len(self.atoms), size=m, p=self.weights)
        return self._single(self.atoms[idx], n)

    def is_exact(self, k):
        return True

    def exact_moment(self, k: int) -> SymTensor:
        if k == 0:
            return SymTensor(np.asarray(1.0), dim=self.dim)
        flat = self.weights @ batch_outer_power(self.atoms, k)
        return SymTensor(flat.reshape((self.dim,) * k), dim=self.dim, symmetric=False)

    def rotated(self, rot: np.ndarray) -> "FiniteMixture":
        return FiniteMixture(normalize(self.atoms @ rot.T), self.weights)

    def to_spec(self):
        return {"type": "finite_mixture", "atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class AntipodalCaps(Population):
    """Half the mass uniform in a geodesic cap around ``axis``, half around ``-axis``."""

    axis: tuple
    cap_angle: float

    def __post_init__(self):
        a = check_unit(np.asarray(self.axis, dtype=float), tol=1e-9)
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))
        if not 0 < self.cap_angle < math.pi / 4:
            raise ValueError("cap_angle must lie in (0, pi/4)")

    @property
    def dim(self):
        return len(self.axis)

    def sample(self, rng, n=None):
        gen = as_generator(rng)
        m = 1 if n is None else n
        d = self.dim
        axis = np.asarray(self.axis)
        # cos-angle t to the axis: for uniform q on the sphere, q_1^2 ~ Beta(1/2, (d-1)/2);
        # truncate to t >= cos(cap_angle) by inverting the survival function.
        beta = stats.beta(0.5, (d - 1) / 2)
        tail = beta.sf(math.cos(self.cap_angle) ** 2)
        t = np.sqrt(beta.isf(gen.uniform(size=m) * tail))
        w = gen.standard_normal((m, d))
        w -= np.outer(w @ axis, axis)
        w = normalize(w)
        x = t[:, None] * axis + np.sqrt(np.clip(1 - t**2, 0, None))[:, None] * w
        sign = np.where(gen.uniform(size=m) < 0.5, 1.0, -1.0)
        return self._single(normalize(x * sign[:, None]), n)

    def to_spec(self):
        return {"type": "antipodal_caps", "axis": list(self.axis), "cap_angle": self.cap_angle}


@dataclass(frozen=True)
class HarmonicPerturbedUniform(Population):
    """Density (1 + sign*eps*h) against the uniform law, h(x) = Re((x1 + i x2)^degree).

    Two members with opposite signs share every moment below ``degree`` and
    differ at order ``degree``.
    """

    dim: int
    degree: int
    eps: float
    sign: int = 1

    def __post_init__(self):
        check_dimension(self.dim)
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1] for a non-negative density")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def h(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.real((x[..., 0] + 1j * x[..., 1]) ** self.degree)

    def sample(self, rng, n=None):
        gen = as_generator(rng)
        m = 1 if n is None else n
        out = np.empty((m, self.dim))
        filled = 0
        while filled < m:
            batch = max(64, int(1.1 * (m - filled) * (1 + self.eps)))
            x = sample_uniform_sphere(self.dim, gen, size=batch)
            accept = gen.uniform(size=batch) * (1 + self.eps) <= 1 + self.sign * self.eps * self.h(x)
            x = x[accept][: m - filled]
            out[filled:filled + len(x)] = x
            filled += len(x)
        return self._single(out, n)

    def h_norm_sq(self) -> float:
        """Integral of h^2 against the uniform law.

        h = r^m cos(m phi) in the (x1, x2) plane, so the integral is E[r^{2m}] / 2
        with r^2 = x1^2 + x2^2 ~ Beta(1, (d-2)/2) on the sphere.
        """
        m, d = self.degree, self.dim
        return 0.5 * math.prod((1 + i) / (d / 2 + i) for i in range(m))

    def h_poly_tensor(self) -> SymTensor:
        """Symmetric tensor H with <H, x^{⊗degree}> = h(x)."""
        from .harmonics import HomoPoly, poly_to_tensor

        k, d = self.degree, self.dim
        coeffs = {}
        for m in range(0, k + 1, 2):
            # Re (x1 + i x2)^k = sum over even m of C(k, m) (-1)^{m/2} x1^{k-m} x2^m
            e = [0] * d
            e[0], e[1] = k - m, m
            coeffs[tuple(e)] = math.comb(k, m) * (-1) ** (m // 2)
        return poly_to_tensor(HomoPoly(d, k, coeffs))

    def to_spec(self):
        return {"type": "harmonic_perturbed", "d": self.dim, "degree": self.degree,
                "eps": self.eps, "sign": self.sign}


def exact_moment(pop: Population, k: int) -> SymTensor:
    return pop.exact_moment(k)


def oracle_moment_mc(pop: Population, k: int, n: int, rng: RngLike):
    """Monte Carlo moment (1/N) sum theta_i^{⊗k} and its per-entry standard error."""
    if n < 1000:
        raise ValueError("oracle needs N >= 1000 samples")
    gen = as_generator(rng)
    d = pop.dim
    s1 = np.zeros(d**k)
    s2 = np.zeros(d**k)
    done = 0
    while done < n:
        m = min(MC_CHUNK, n - done)
        x = batch_outer_power(pop.sample(gen, m), k)
        s1 += x.sum(axis=0)
        s2 += (x * x).sum(axis=0)
        done += m
    mean = s1 / n
    var = np.clip(s2 / n - mean**2, 0, None) * n / (n - 1)
    se = np.sqrt(var / n)
    shape = (d,) * k
    return SymTensor(mean.reshape(shape), dim=d, symmetric=False), se.reshape(shape)


def exact_Q(pop: Population, queries) -> np.ndarray | float:
    """Probability that a voter answers every query in the tuple with 1.

    ``queries`` has shape (t, d) for one tuple or (..., t, d) for a batch.
    """
    if not isinstance(pop, FiniteMixture):
        raise UnsupportedPopulationError("exact_Q needs a finite-support population")
    q = np.asarray(queries, dtype=float)
    single = q.ndim == 2
    if single:
        q = q[None]
    # (..., t, atoms)
    ok = (q @ pop.atoms.T) >= 0
    out = np.all(ok, axis=-2).astype(float) @ pop.weights
    return float(out[0]) if single else out


def from_spec(spec: dict) -> Population:
    kind = spec.get("type")
    if kind == "finite_mixture":
        return FiniteMixture(normalize(np.asarray(spec["atoms"], dtype=float)), spec.get("weights"))
    if kind == "point_mass":
        return FiniteMixture.point_mass(normalize(np.asarray(spec["theta"], dtype=float)))
    if kind == "uniform":
        return UniformSphere(int(spec["d"]))
    if kind == "antipodal_caps":
        return AntipodalCaps(tuple(normalize(np.asarray(spec["axis"], dtype=float))), float(spec["cap_angle"]))
    if kind == "harmonic_perturbed":
        return HarmonicPerturbedUniform(int(spec["d"]), int(spec["degree"]), float(spec["eps"]),
                                        int(spec.get("sign", 1)))
    raise ValueError(f"unknown population type {kind!r}")
