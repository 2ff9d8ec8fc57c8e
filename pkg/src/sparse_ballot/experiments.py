"""Seeded experiment runners behind the command-line interface and the acceptance tests."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .elicitation import Deterministic, Graded, Stochastic, collect, model_from_dict, respond
from .estimators import estimate_M1, estimate_Mk_kwise, estimate_Mk_two_query, estimate_moments_graded
from .exceptions import ConfigError, NotExactError
from .geometry import RngStream, basis_vector, sample_uniform_sphere
from .objectives import (
    brute_force_committee,
    chebyshev_log,
    greedy_committee,
    nash_exact,
    nash_welfare,
    risk_adjusted,
    risk_selection_bound,
    select_best,
    select_best_risk_adjusted,
    utility_range,
    welfare_selection_bound,
)
from .populations import AntipodalCaps, FiniteMixture, HarmonicPerturbedUniform, from_spec, oracle_moment_mc
from .tensors import inner, spectral_norm_upper

SCHEMA_VERSION = 1
ESTIMATORS = ("m1", "kwise", "two_query", "graded")
BOOTSTRAP = 200


def spectral_error(estimate, truth) -> float:
    """Spectral-norm error; exact for orders 1 and 2, a certified upper bound beyond."""
    return spectral_norm_upper(np.asarray(estimate) - np.asarray(truth))


def random_mixture(d: int, n_atoms: int, rng: RngStream) -> FiniteMixture:
    gen = rng.generator()
    atoms = sample_uniform_sphere(d, gen, size=n_atoms)
    w = gen.dirichlet(np.ones(n_atoms))
    return FiniteMixture(atoms, w / w.sum())


def fmt(x) -> str:
    """Stable text form of a number for CSV output."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


@dataclass(frozen=True)
class ExperimentConfig:
    population: dict
    estimator: str = "m1"
    k: int = 1
    model: dict = field(default_factory=lambda: {"type": "deterministic"})
    T_grid: tuple = (1000, 4000, 16000, 64000)
    trials: int = 50
    seed: int = 0
    oracle_samples: int = 10**6
    expected_slope: tuple | None = None

    @property
    def arity(self) -> int:
        return {"m1": 1, "kwise": self.k, "two_query": 2, "graded": 1}[self.estimator]

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known - {"d", "out"}
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "population" not in obj:
            raise ConfigError("config needs a population")
        kw = dict(obj)
        kw.pop("out", None)
        d = kw.pop("d", None)
        if "T_grid" in kw:
            kw["T_grid"] = tuple(int(t) for t in kw["T_grid"])
        if kw.get("expected_slope") is not None:
            kw["expected_slope"] = tuple(float(v) for v in kw["expected_slope"])
        cfg = cls(**kw)
        cfg.validate(d)
        return cfg

    def validate(self, d=None) -> None:
        try:
            pop = from_spec(self.population)
            model = model_from_dict(self.model)
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid population or model: {err}") from err
        if d is not None and int(d) != pop.dim:
            raise ConfigError(f"config d={d} does not match population dimension {pop.dim}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.estimator == "m1" and self.k != 1:
            raise ConfigError("m1 estimates order 1 only")
        if self.estimator == "graded":
            if not isinstance(model, Graded):
                raise ConfigError("graded estimator needs a graded response model")
        elif isinstance(model, Graded):
            raise ConfigError(f"{self.estimator} cannot use graded responses")
        if self.estimator == "two_query" and isinstance(model, Stochastic):
            raise ConfigError("two_query supports deterministic responses only")
        if not self.T_grid or min(self.T_grid) < 2:
            raise ConfigError("T_grid needs values >= 2")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["T_grid"] = list(self.T_grid)
        if self.expected_slope is not None:
            out["expected_slope"] = list(self.expected_slope)
        return out


def estimate(cfg: ExperimentConfig, data) -> np.ndarray:
    if cfg.estimator == "m1":
        return estimate_M1(data).tensor.array
    if cfg.estimator == "kwise":
        return estimate_Mk_kwise(data, cfg.k).tensor.array
    if cfg.estimator == "two_query":
        return estimate_Mk_two_query(data, cfg.k).tensor.array
    return estimate_moments_graded(data, cfg.k)[-1].tensor.array


def oracle(pop, k: int, n: int, seed: int) -> np.ndarray:
    try:
        return pop.exact_moment(k).array
    except NotExactError:
        if n < 1000:
            raise NotExactError(f"no exact order-{k} moment for {type(pop).__name__} and no MC oracle budget")
        return oracle_moment_mc(pop, k, n, RngStream(seed, 0, ("oracle",)))[0].array


@dataclass(frozen=True)
class ConvergenceResult:
    rows: list
    slope: float
    slope_se: float
    intercept: float

    def to_csv(self, cfg: ExperimentConfig) -> str:
        lines = [f"# schema_version={SCHEMA_VERSION}",
                 "# config=" + json.dumps(cfg.to_dict(), sort_keys=True),
                 "T,trials,median_error,median_error_se,q25,q25_se,q75,q75_se"]
        for r in self.rows:
            lines.append(",".join(fmt(r[c]) for c in
                                  ("T", "trials", "median_error", "median_error_se", "q25", "q25_se", "q75", "q75_se")))
        lines.append(f"# slope={fmt(self.slope)},slope_se={fmt(self.slope_se)},intercept={fmt(self.intercept)}")
        return "\n".join(lines) + "\n"


def _bootstrap_se(errors: np.ndarray, q: float, stream: RngStream) -> float:
    if len(errors) < 2:
        return math.nan
    gen = stream.generator()
    idx = gen.integers(0, len(errors), size=(BOOTSTRAP, len(errors)))
    return float(np.std(np.quantile(errors[idx], q, axis=1), ddof=1))


def fit_slope(T, median):
    """Least-squares slope of log median error on log T, with its standard error."""
    x, y = np.log(np.asarray(T, float)), np.log(np.asarray(median, float))
    fit = stats.linregress(x, y)
    se = float(fit.stderr) if len(x) >= 3 else math.nan
    return float(fit.slope), se, float(fit.intercept)


def run_convergence(cfg: ExperimentConfig, threads: int = 1) -> ConvergenceResult:
    pop = from_spec(cfg.population)
    model = model_from_dict(cfg.model)
    truth = oracle(pop, cfg.k, cfg.oracle_samples, cfg.seed)

    def trial(args):
        T, r = args
        data = collect(pop, cfg.arity, T, model, RngStream(cfg.seed, r + 1, ("convergence", T)))
        return spectral_error(estimate(cfg, data), truth)

    jobs = [(T, r) for T in cfg.T_grid for r in range(cfg.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            errs = list(ex.map(trial, jobs))
    else:
        errs = [trial(j) for j in jobs]
    errs = np.asarray(errs).reshape(len(cfg.T_grid), cfg.trials)
    rows = []
    for T, e in zip(cfg.T_grid, errs):
        row = {"T": T, "trials": cfg.trials}
        for name, q in (("median_error", 0.5), ("q25", 0.25), ("q75", 0.75)):
            row[name] = float(np.quantile(e, q))
            row[name + "_se"] = _bootstrap_se(e, q, RngStream(cfg.seed, 0, ("bootstrap", T, name)))
        rows.append(row)
    slope, se, icpt = fit_slope(cfg.T_grid, [r["median_error"] for r in rows])
    return ConvergenceResult(rows, slope, se, icpt)


# ---- demonstrations ---------------------------------------------------------------


def demo_antipodal(seed: int = 0, d: int = 3, cap_angle: float = 0.2, n_queries: int = 100,
                   T_q: int = 10**4, T_m1: int = 10**5, T_m2: int = 10**6) -> dict:
    """Pairwise answers cannot see the axis of an antipodal population; pairs of queries can."""
    axis = basis_vector(d, 0)
    pop = AntipodalCaps(tuple(axis), cap_angle)
    root = RngStream(seed, 0, ("demo-antipodal",))
    qs = sample_uniform_sphere(d, root.child("q").generator(), size=n_queries)
    theta = pop.sample(root.child("voters").generator(), T_q)
    frac = respond(theta[:, None, :], qs[None, :, :], Deterministic()).mean(axis=0)
    sigma = math.sqrt(0.25 / T_q)
    dev = np.abs(frac - 0.5) / sigma

    m1 = estimate_M1(collect(pop, 1, T_m1, Deterministic(), root.child("m1")))
    m1_norm = float(np.linalg.norm(m1.tensor.array))
    m2 = estimate_Mk_kwise(collect(pop, 2, T_m2, Deterministic(), root.child("m2")), 2)
    target = np.outer(axis, axis)
    m2_err = spectral_error(m2.tensor.array, target)
    m2_oracle = oracle_moment_mc(pop, 2, 10**6, root.child("oracle"))[0].array
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "q1_max_dev_sigma": float(dev.max()),
        "q1_within_3sigma": int(np.sum(dev <= 3)),
        "q1_queries": n_queries,
        "q1_sigma": sigma,
        "m1_norm": m1_norm,
        "m1_norm_se": float(np.linalg.norm(m1.stderr)),
        "m2_error_vs_axis": m2_err,
        "m2_error_vs_oracle": spectral_error(m2.tensor.array, m2_oracle),
        "m2_stderr_max": float(np.max(m2.stderr)),
        "pass": bool(np.all(dev <= 3) and m1_norm <= 0.05 and m2_err <= 0.1),
    }


def demo_momentgap(seed: int = 0, d: int = 3, degree: int = 3, eps: float = 0.5, n: int = 10**6) -> dict:
    """Two perturbations of the uniform law that agree below order ``degree``."""
    plus = HarmonicPerturbedUniform(d, degree, eps, 1)
    minus = HarmonicPerturbedUniform(d, degree, eps, -1)
    root = RngStream(seed, 0, ("demo-momentgap",))
    lower = []
    for k in range(1, degree):
        mp, sp = oracle_moment_mc(plus, k, n, root.child("plus", k))
        mm, sm = oracle_moment_mc(minus, k, n, root.child("minus", k))
        z = np.abs(mp.array - mm.array) / np.sqrt(sp**2 + sm**2 + 1e-300)
        lower.append({"order": k, "max_z": float(z.max())})
    H = plus.h_poly_tensor()
    vals, ses = [], []
    for pop, name in ((plus, "plus"), (minus, "minus")):
        theta = pop.sample(root.child(name, degree).generator(), n)
        h = pop.h(theta)
        # <M_degree, H> equals the sample mean of h(theta); checked against the tensor contraction
        vals.append(float(h.mean()))
        ses.append(float(h.std(ddof=1) / math.sqrt(n)))
        m = oracle_moment_mc(pop, degree, 1000, root.child(name, "contraction-check"))[0]
        check = inner(m, H)
        direct = float(pop.h(pop.sample(root.child(name, "contraction-check").generator(), 1000)).mean())
        if abs(check - direct) > 1e-9:
            raise AssertionError("moment contraction disagrees with direct evaluation of h")
    gap = vals[0] - vals[1]
    gap_se = math.sqrt(ses[0] ** 2 + ses[1] ** 2)
    predicted = 2 * eps * plus.h_norm_sq()
    lower_ok = all(r["max_z"] <= 5 for r in lower)
    gap_ok = abs(gap - predicted) <= 5 * gap_se
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "lower_orders": lower,
        "gap": gap,
        "gap_se": gap_se,
        "predicted_gap": predicted,
        "pass": bool(lower_ok and gap_ok),
    }


# ---- objective pipelines ----------------------------------------------------------


def random_slate(d: int, n: int, B: float, stream: RngStream) -> np.ndarray:
    gen = stream.generator()
    dirs = sample_uniform_sphere(d, gen, size=n)
    return dirs * gen.uniform(0.5 * B, B, size=(n, 1))


def welfare_trial(index: int, seed: int, d: int = 8, n_atoms: int = 5, n_cands: int = 10,
                  T: int = 10**5, eps: float = 0.1, B: float = 1.0, pop=None, slate=None) -> dict:
    root = RngStream(seed, index + 1, ("welfare",))
    pop = pop or random_mixture(d, n_atoms, root.child("population"))
    slate = random_slate(pop.dim, n_cands, B, root.child("slate")) if slate is None else np.asarray(slate, float)
    B = float(np.max(np.linalg.norm(slate, axis=1)))
    m1 = estimate_M1(collect(pop, 1, T, Deterministic(), root.child("data")))
    true = slate @ pop.exact_moment(1).array
    pick = select_best(m1, slate)
    regret = float(true.max() - true[pick])
    bound = welfare_selection_bound(eps, B)
    return {"index": index, "chosen": pick, "true_best": int(np.argmax(true)), "regret": regret,
            "bound": bound, "moment_error": spectral_error(m1.tensor.array, pop.exact_moment(1).array),
            "bound_held": regret <= bound}


def risk_trial(index: int, seed: int, d: int = 8, n_atoms: int = 5, n_cands: int = 10, T: int = 10**5,
               eps: float = 0.1, alpha: float = 1.0, B: float = 1.0, pop=None, slate=None) -> dict:
    root = RngStream(seed, index + 1, ("risk",))
    pop = pop or random_mixture(d, n_atoms, root.child("population"))
    slate = random_slate(pop.dim, n_cands, B, root.child("slate")) if slate is None else np.asarray(slate, float)
    B = float(np.max(np.linalg.norm(slate, axis=1)))
    data = collect(pop, 2, T, Deterministic(), root.child("data"))
    m1 = estimate_M1(data.select([0]))
    m2 = estimate_Mk_kwise(data, 2)
    e1, e2 = pop.exact_moment(1), pop.exact_moment(2)
    true = np.array([risk_adjusted(e1, e2, phi, alpha) for phi in slate])
    pick = select_best_risk_adjusted(m1, m2, slate, alpha)
    regret = float(true.max() - true[pick])
    bound = risk_selection_bound(eps, alpha, B)
    err = max(spectral_error(m1.tensor.array, e1.array), spectral_error(m2.tensor.array, e2.array))
    return {"index": index, "chosen": pick, "true_best": int(np.argmax(true)), "regret": regret,
            "bound": bound, "moment_error": err, "bound_held": regret <= bound}


def nash_instance(index: int, seed: int, d: int = 3, n_atoms: int = 4, k: int = 12) -> dict:
    """Exact-moment Nash estimate on a mixture whose utilities are bounded away from zero."""
    root = RngStream(seed, index + 1, ("nash",))
    gen = root.generator()
    v = sample_uniform_sphere(d, gen)
    atoms = []
    while len(atoms) < n_atoms:
        x = sample_uniform_sphere(d, gen)
        if x @ v >= 0.3:
            atoms.append(x)
    w = gen.dirichlet(np.ones(n_atoms))
    pop = FiniteMixture(np.asarray(atoms), w / w.sum())
    phi = v * gen.uniform(0.5, 2.0)
    a, b = utility_range(pop, phi)
    moments = [pop.exact_moment(j) for j in range(1, k + 1)]
    est = nash_welfare(moments, phi, a, b, k)
    exact = nash_exact(pop, phi)
    approx = chebyshev_log(k, a, b)
    err = abs(est - exact)
    return {"index": index, "a": a, "b": b, "estimate": est, "exact": exact, "error": err,
            "bound": approx.error_bound, "stated_bound": approx.stated_bound,
            "bound_held": err <= approx.error_bound + 1e-9}


def committee_instances(seed: int = 0, n_random: int = 10):
    """Finite-support instances on which greedy selection is exact.

    Point-mass populations and one-seat or all-seat committees on random mixtures.
    Also evenly spaced circle mixtures with the four axis candidates.
    """
    root = RngStream(seed, 0, ("committee",))
    for i in range(n_random):
        s = root.child(i)
        n = 4 + i % 5
        d = 2 + i % 3
        slate = sample_uniform_sphere(d, s.child("slate").generator(), size=n)
        theta = sample_uniform_sphere(d, s.child("theta").generator())
        mix = random_mixture(d, 3 + i % 4, s.child("mixture"))
        for ell in range(1, min(3, n) + 1):
            yield f"point_mass/{i}/ell={ell}", FiniteMixture.point_mass(theta), slate, ell
        yield f"single_seat/{i}", mix, slate, 1
        yield f"full_slate/{i}", mix, slate, n
    axes = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    for m in (8, 16, 64, 360):
        ang = 2 * np.pi * np.arange(m) / m
        circle = FiniteMixture(np.column_stack([np.cos(ang), np.sin(ang)]))
        for ell in (1, 2, 3, 4):
            yield f"circle{m}/ell={ell}", circle, axes, ell


def committee_agreement(pop, slate, ell, n: int = 100_000, seed: int = 0) -> dict:
    g = greedy_committee(pop, slate, ell, n=n, rng=RngStream(seed, 0, ("tcw",)))
    bf = brute_force_committee(pop, slate, ell, n=n, rng=RngStream(seed, 0, ("tcw",)))
    return {"greedy": g.to_dict(), "brute_force": bf.to_dict(),
            "same_subset": g.indices == bf.indices,
            "same_value": abs(g.tcw_estimate - bf.tcw_estimate) <= 1e-12}


def random_committee_agreement(n_instances: int = 2000, seed: int = 0) -> float:
    """Fraction of random finite-mixture instances (n <= 8, ell <= 3) where greedy hits the optimum."""
    root = RngStream(seed, 0, ("committee-random",))
    hits = 0
    for i in range(n_instances):
        gen = root.child(i).generator()
        d = int(gen.integers(2, 5))
        n = int(gen.integers(3, 9))
        ell = int(gen.integers(1, 4))
        atoms = sample_uniform_sphere(d, gen, size=int(gen.integers(2, 7)))
        pop = FiniteMixture(atoms)
        slate = sample_uniform_sphere(d, gen, size=n)
        g = greedy_committee(pop, slate, min(ell, n))
        b = brute_force_committee(pop, slate, min(ell, n))
        hits += abs(g.tcw_estimate - b.tcw_estimate) <= 1e-12
    return hits / n_instances


def greedy_counterexample():
    """Two antipodal voters and three candidates on their axis: greedy gets 1/2, the optimum is 1."""
    pop = FiniteMixture([[1.0, 0.0], [-1.0, 0.0]])
    slate = np.array([[0.0, 1.0], [1.0, 0.0], [-1.0, 0.0]])
    return pop, slate, 2


def json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


__all__ = [
    "ExperimentConfig", "ConvergenceResult", "run_convergence", "fit_slope", "spectral_error",
    "demo_antipodal", "demo_momentgap", "welfare_trial", "risk_trial", "nash_instance",
    "committee_instances", "committee_agreement", "random_committee_agreement", "greedy_counterexample",
    "random_mixture", "random_slate", "json_dumps", "SCHEMA_VERSION",
]
