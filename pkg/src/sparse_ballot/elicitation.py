"""Voter responses to comparison queries, and simulated data collection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import RngLike, RngStream, as_generator, check_unit, sample_uniform_sphere
from .populations import Population

# Voters are simulated in fixed-size blocks; block b draws from sub-streams
# keyed (seed, stream_id, kind, b) so chunking never changes the result.
BLOCK = 1 << 15
SKEW_TOL = 1e-10


def bradley_terry(t):
    """Logistic link 1/(1 + exp(-t)); exactly skew-symmetric."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def hard_threshold(t):
    t = np.asarray(t, dtype=float)
    out = (t >= 0).astype(float)
    return out if out.ndim else float(out)


class TabulatedLink:
    """Piecewise-linear link through tabulated (t, psi(t)) pairs on a symmetric grid."""

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(grid)
        self.grid, self.values = grid[order], values[order]
        if not np.allclose(self.grid, -self.grid[::-1], rtol=0, atol=1e-12):
            raise ValueError("tabulated link needs a grid symmetric about 0")
        if np.max(np.abs(self.values + self.values[::-1] - 1)) > SKEW_TOL:
            raise ValueError("tabulated link violates psi(t) + psi(-t) = 1")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("link values must be probabilities")

    def __call__(self, t):
        out = np.interp(t, self.grid, self.values)
        return out if np.ndim(out) else float(out)


LINKS: dict[str, Callable] = {"bradley_terry": bradley_terry}


def check_skew(psi: Callable, tol: float = SKEW_TOL) -> None:
    grid = np.linspace(-1, 1, 201)
    dev = np.max(np.abs(np.asarray(psi(grid)) + np.asarray(psi(-grid)) - 1))
    if dev > tol:
        raise ValueError(f"link violates psi(t) + psi(-t) = 1 (max deviation {dev:.2e})")


@dataclass(frozen=True)
class Deterministic:
    tag = "deterministic"

    def to_dict(self):
        return {"type": self.tag}


@dataclass(frozen=True)
class Stochastic:
    psi: str | Callable = "bradley_terry"
    tag = "stochastic"

    def __post_init__(self):
        check_skew(self.link)

    @property
    def link(self) -> Callable:
        if isinstance(self.psi, str):
            try:
                return LINKS[self.psi]
            except KeyError:
                raise ValueError(f"unknown link {self.psi!r}") from None
        return self.psi

    def to_dict(self):
        if isinstance(self.psi, str):
            return {"type": self.tag, "psi": self.psi}
        if isinstance(self.psi, TabulatedLink):
            return {"type": self.tag, "psi": "tabulated",
                    "grid": self.psi.grid.tolist(), "values": self.psi.values.tolist()}
        return {"type": self.tag, "psi": "custom"}


@dataclass(frozen=True)
class Graded:
    tau: float
    tag = "graded"

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"graded threshold must lie strictly in (0, 1), got {self.tau!r}")

    def to_dict(self):
        return {"type": self.tag, "tau": self.tau}


ResponseModel = Deterministic | Stochastic | Graded


def model_from_dict(obj: dict | str) -> ResponseModel:
    if isinstance(obj, str):
        obj = {"type": obj}
    kind = obj.get("type", "deterministic")
    if kind == "deterministic":
        return Deterministic()
    if kind == "stochastic":
        psi = obj.get("psi", "bradley_terry")
        if psi == "tabulated":
            psi = TabulatedLink(obj["grid"], obj["values"])
        return Stochastic(psi)
    if kind == "graded":
        return Graded(float(obj["tau"]))
    raise ValueError(f"unknown response model {kind!r}")


def respond(theta, q, model: ResponseModel, rng: RngLike = None):
    """Response bit(s) of voter(s) ``theta`` to query(ies) ``q`` (broadcast over leading axes)."""
    theta = np.asarray(theta, dtype=float)
    q = np.asarray(q, dtype=float)
    s = np.sum(theta * q, axis=-1)
    if isinstance(model, Deterministic):
        out = (s >= 0).astype(np.int8)
    elif isinstance(model, Graded):
        check_unit(q)
        out = (s >= model.tau).astype(np.int8)
    elif isinstance(model, Stochastic):
        gen = as_generator(rng)
        p = np.asarray(model.link(s), dtype=float)
        out = (gen.uniform(size=np.shape(s)) < p).astype(np.int8)
    else:
        raise TypeError(f"unknown response model {model!r}")
    return out if out.ndim else int(out)


@dataclass(frozen=True)
class ResponseDataset:
    """Raw query/bit records; voters' types never enter this object."""

    queries: np.ndarray  # (T, t, d)
    bits: np.ndarray  # (T, t) int8
    model: ResponseModel = field(default_factory=Deterministic)
    seed: int | None = None

    def __post_init__(self):
        q = np.asarray(self.queries, dtype=float)
        b = np.asarray(self.bits, dtype=np.int8)
        if q.ndim != 3 or b.shape != q.shape[:2]:
            raise ValueError("queries must be (T, t, d) and bits (T, t)")
        if not np.all((b == 0) | (b == 1)):
            raise ValueError("bits must be 0/1")
        q.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "bits", b)

    @property
    def n_voters(self) -> int:
        return self.queries.shape[0]

    @property
    def arity(self) -> int:
        return self.queries.shape[1]

    @property
    def dim(self) -> int:
        return self.queries.shape[2]

    def __len__(self):
        return self.n_voters

    def select(self, positions) -> "ResponseDataset":
        """Keep only the given query positions of each record."""
        positions = list(positions)
        return ResponseDataset(self.queries[:, positions], self.bits[:, positions], self.model, self.seed)

    def header(self) -> dict:
        return {"d": self.dim, "t": self.arity, "T": self.n_voters,
                "model": self.model.to_dict(), "seed": self.seed}

    def to_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header()) + "\n")
            for q, b in zip(self.queries, self.bits):
                fh.write(json.dumps({"q": q.tolist(), "b": b.tolist()}) + "\n")

    @classmethod
    def from_ndjson(cls, path) -> "ResponseDataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            recs = [json.loads(line) for line in fh if line.strip()]
        d, t = header["d"], header["t"]
        q = np.asarray([r["q"] for r in recs], dtype=float).reshape(len(recs), t, d)
        b = np.asarray([r["b"] for r in recs], dtype=np.int8).reshape(len(recs), t)
        return cls(q, b, model_from_dict(header["model"]), header.get("seed"))


def collect(pop: Population, t: int, T: int, model: ResponseModel, rng: RngStream | int) -> ResponseDataset:
    """Simulate T voters, each answering t fresh uniform queries."""
    if T < 1 or t < 1:
        raise ValueError("need T >= 1 voters and t >= 1 queries each")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    d = pop.dim
    queries = np.empty((T, t, d))
    bits = np.empty((T, t), dtype=np.int8)
    for b, start in enumerate(range(0, T, BLOCK)):
        m = min(BLOCK, T - start)
        theta = pop.sample(rng.child("voters", b).generator(), m)
        q = sample_uniform_sphere(d, rng.child("queries", b).generator(), size=(m, t))
        queries[start:start + m] = q
        bits[start:start + m] = respond(theta[:, None, :], q, model, rng.child("responses", b).generator())
    return ResponseDataset(queries, bits, model, rng.seed)
