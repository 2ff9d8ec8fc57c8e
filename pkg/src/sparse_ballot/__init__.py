"""Recover voter-type distributions on the sphere from sparse comparison queries."""
from .elicitation import Deterministic, Graded, ResponseDataset, Stochastic, bradley_terry, collect, respond
from .estimators import (
    MomentEstimate,
    MomentEstimator,
    c_d,
    c_d_psi,
    estimate_M1,
    estimate_Mk_kwise,
    estimate_Mk_two_query,
    estimate_moments_graded,
)
from .geometry import RngStream, normalize, random_rotation, sample_uniform_sphere
from .harmonics import HarmonicCache, HomoPoly, funk_hecke_mu, gegenbauer, graded_lambda, harmonic_decompose
from .objectives import (
    Candidate,
    brute_force_committee,
    chebyshev_log,
    greedy_committee,
    nash_welfare,
    risk_adjusted,
    select_best,
    tcw_mc,
    welfare,
)
from .populations import AntipodalCaps, FiniteMixture, HarmonicPerturbedUniform, UniformSphere, exact_Q
from .tensors import SymTensor, outer_power, spectral_norm_lower, spectral_norm_upper, symmetrize

__version__ = "0.1.0"
