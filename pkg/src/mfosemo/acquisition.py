"""Information-gain-per-cost acquisition over (input, fidelity-vector) pairs.

The score is the expected reduction in entropy of the joint observation at a
candidate, conditioned on sampled highest-fidelity Pareto fronts, divided by
the normalized evaluation cost.  The unconditioned term is the closed-form
entropy of a factorizable Gaussian; the conditional term is handled per
objective: exact truncated-Gaussian entropy when the objective is queried at
its highest fidelity, and otherwise either the truncated-Gaussian (TG)
closed form at the queried fidelity or a one-dimensional quadrature (NI)
that conditions through the cross-fidelity Gaussian.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, xlogy

from .errors import InvalidStateError
from .gp import MultiFidelityGP, PosteriorSummary
from .moo import ParetoFrontSample

# Standard-normal entropy constant and the numerical floors applied before
# logs and divisions (the formulas are undefined at zero cdf / zero sigma).
GAUSS_ENTROPY_CONST = 0.5 * (1.0 + math.log(2.0 * math.pi))
CDF_FLOOR = 1e-12
SIGMA_FLOOR = 1e-9

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _npdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


@dataclass(frozen=True)
class FidelityVector:
    """One fidelity index per objective plus its normalized total cost.

    The normalized cost sums, over objectives, the chosen fidelity's raw cost
    divided by that objective's highest-fidelity raw cost; the all-highest
    vector therefore costs exactly the number of objectives.
    """

    indices: tuple[int, ...]
    normalized_cost: float

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(m) for m in self.indices))
        if any(m < 1 for m in self.indices):
            raise ValueError("fidelity indices start at 1")
        if self.normalized_cost <= 0.0:
            raise ValueError("normalized cost must be positive")

    @classmethod
    def from_costs(cls, indices, cost_table) -> "FidelityVector":
        indices = tuple(int(m) for m in indices)
        if len(indices) != len(cost_table):
            raise ValueError("need one fidelity index per objective")
        cost = 0.0
        for j, m in enumerate(indices):
            costs_j = cost_table[j]
            if not 1 <= m <= len(costs_j):
                raise ValueError(f"fidelity {m} out of range for objective {j}")
            cost += costs_j[m - 1] / costs_j[-1]
        return cls(indices=indices, normalized_cost=cost)


def enumerate_fidelity_vectors(fidelity_counts, cost_table,
                               max_cost: float | None = None) -> list[FidelityVector]:
    """All fidelity vectors in lexicographic order, optionally cost-capped."""
    ranges = [range(1, int(M) + 1) for M in fidelity_counts]
    vectors = [FidelityVector.from_costs(idx, cost_table) for idx in itertools.product(*ranges)]
    if max_cost is not None:
        vectors = [v for v in vectors if v.normalized_cost <= max_cost + 1e-12]
    return vectors


@dataclass(frozen=True)
class TruncationStats:
    """Standardized truncation bound with its normal pdf/cdf values."""

    gamma: float
    pdf_at_gamma: float
    cdf_at_gamma: float

    @classmethod
    def from_bound(cls, mean: float, sigma: float, upper: float) -> "TruncationStats":
        sigma = max(sigma, SIGMA_FLOOR)
        gamma = (upper - mean) / sigma
        return cls(gamma=float(gamma), pdf_at_gamma=float(_npdf(gamma)),
                   cdf_at_gamma=float(max(ndtr(gamma), CDF_FLOOR)))


def entropy_gaussian(sigma) -> float | np.ndarray:
    """Differential entropy of a univariate Gaussian."""
    return GAUSS_ENTROPY_CONST + np.log(np.maximum(sigma, SIGMA_FLOOR))


def entropy_unconditioned(summaries) -> float:
    """Entropy of the factorizable joint Gaussian over K objectives."""
    total = 0.0
    for s in summaries:
        sigma = math.sqrt(max(s.variance, 0.0))
        total += entropy_gaussian(sigma)
    return float(total)


def _tg_gain(gamma):
    """Entropy reduction of upper truncation at standardized bound ``gamma``.

    Equals the Gaussian entropy minus the truncated-Gaussian entropy and is
    non-negative; also the classic max-value search score.
    """
    cdf = np.maximum(ndtr(gamma), CDF_FLOOR)
    return -np.log(cdf) + gamma * _npdf(gamma) / (2.0 * cdf)


def entropy_truncated_gaussian(mean, sigma, upper) -> float | np.ndarray:
    """Entropy of N(mean, sigma^2) truncated to values at most ``upper``."""
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    gamma = (np.asarray(upper, dtype=float) - mean) / sigma
    out = entropy_gaussian(sigma) - _tg_gain(gamma)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class CrossFidelityConditional:
    """Affine Gaussian conditional of the highest-fidelity value given a
    lower-fidelity value at the same input: mean ``intercept + slope * y``
    and variance ``cond_var`` (zero when the fidelities coincide)."""

    slope: float
    intercept: float
    cond_var: float

    def cond_mean(self, y) -> float | np.ndarray:
        return self.intercept + self.slope * np.asarray(y, dtype=float)


def cross_fidelity_conditional(summary_m: PosteriorSummary,
                               summary_high: PosteriorSummary) -> CrossFidelityConditional:
    """Condition the highest-fidelity value on the lower-fidelity one."""
    var_m = max(summary_m.variance, SIGMA_FLOOR ** 2)
    slope = summary_m.cross_cov_to_highest / var_m
    intercept = summary_high.mean - slope * summary_m.mean
    cond_var = max(summary_high.variance - summary_m.cross_cov_to_highest ** 2 / var_m, 0.0)
    return CrossFidelityConditional(slope=float(slope), intercept=float(intercept),
                                    cond_var=float(cond_var))


# ----------------------------------------------------------------------
# numerical-integration entropy


def _ni_entropy_core(mu_m, sigma_m, mu_high, sigma_high, cov, upper, nodes: int):
    """Vectorized NI entropy for arrays of posterior stats and scalar bound.

    The integrand is the lower-fidelity Gaussian density reweighted by the
    probability that the conditionally Gaussian highest-fidelity value stays
    below the bound, renormalized over the quadrature window
    [mu - 8 sigma, min(upper, mu + 8 sigma)].
    """
    mu_m = np.atleast_1d(np.asarray(mu_m, dtype=float))
    sigma_m = np.maximum(np.atleast_1d(np.asarray(sigma_m, dtype=float)), SIGMA_FLOOR)
    mu_high = np.atleast_1d(np.asarray(mu_high, dtype=float))
    sigma_high = np.maximum(np.atleast_1d(np.asarray(sigma_high, dtype=float)), SIGMA_FLOOR)
    cov = np.atleast_1d(np.asarray(cov, dtype=float))

    var_m = sigma_m ** 2
    slope = cov / var_m
    intercept = mu_high - slope * mu_m
    s2 = np.maximum(sigma_high ** 2 - cov ** 2 / var_m, 0.0)
    s = np.sqrt(s2)

    out = np.empty_like(mu_m)
    degenerate = s < SIGMA_FLOOR
    if np.any(degenerate):
        out[degenerate] = _degenerate_ni(mu_m[degenerate], sigma_m[degenerate],
                                         slope[degenerate], intercept[degenerate], upper)
    active = ~degenerate
    if np.any(active):
        out[active] = _quadrature_ni(mu_m[active], sigma_m[active], mu_high[active],
                                     sigma_high[active], slope[active], intercept[active],
                                     s[active], upper, nodes)
    return out


def _degenerate_ni(mu_m, sigma_m, slope, intercept, upper):
    """Zero conditional variance: the bound maps to an exact truncation of the
    lower-fidelity Gaussian (or carries no information when the slope is 0)."""
    out = entropy_gaussian(sigma_m) * np.ones_like(mu_m)
    pos = slope > 1e-12
    neg = slope < -1e-12
    if np.any(pos):
        eff = (upper - intercept[pos]) / slope[pos]
        out[pos] = entropy_truncated_gaussian(mu_m[pos], sigma_m[pos], eff)
    if np.any(neg):
        # lower truncation; reflect to reuse the upper-truncation form
        eff = (upper - intercept[neg]) / slope[neg]
        out[neg] = entropy_truncated_gaussian(-mu_m[neg], sigma_m[neg], -eff)
    return out


def _quadrature_ni(mu_m, sigma_m, mu_high, sigma_high, slope, intercept, s, upper, nodes: int):
    lo = mu_m - 8.0 * sigma_m
    hi = np.minimum(upper, mu_m + 8.0 * sigma_m)
    empty = hi <= lo
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    y = mid[None, :] + half[None, :] * gl_nodes[:, None]          # (Q, N)
    w = half[None, :] * gl_weights[:, None]
    gamma_high = (upper - mu_high) / sigma_high
    cdf_high = np.maximum(ndtr(gamma_high), CDF_FLOOR)
    cond_prob = ndtr((upper - (intercept[None, :] + slope[None, :] * y)) / s[None, :])
    density = cond_prob * _npdf((y - mu_m[None, :]) / sigma_m[None, :]) / sigma_m[None, :]
    density = density / cdf_high[None, :]
    mass = np.sum(w * density, axis=0)
    ok = (mass > 1e-12) & ~empty
    entropy = np.where(ok, -np.sum(w * xlogy(density, density), axis=0) / np.maximum(mass, 1e-300)
                       + np.log(np.maximum(mass, 1e-300)), 0.0)
    if np.any(~ok):
        # vanishing mass inside the window: fall back to the closed form
        fallback = entropy_truncated_gaussian(mu_m[~ok], sigma_m[~ok], upper)
        entropy[~ok] = fallback
    return entropy


def entropy_ni(summary_m: PosteriorSummary, summary_high: PosteriorSummary,
               upper: float, quadrature_nodes: int = 128) -> float:
    """Conditional entropy of a lower-fidelity value given that the
    highest-fidelity value stays below ``upper``, by quadrature."""
    if quadrature_nodes < 16:
        raise ValueError("quadrature_nodes must be at least 16")
    out = _ni_entropy_core(
        summary_m.mean, math.sqrt(max(summary_m.variance, 0.0)),
        summary_high.mean, math.sqrt(max(summary_high.variance, 0.0)),
        summary_m.cross_cov_to_highest, float(upper), quadrature_nodes)
    return float(out[0])


# ----------------------------------------------------------------------
# batch scoring over a candidate grid


def gain_tables(posteriors, fronts, approximation: str = "TG",
                quadrature_nodes: int = 128):
    """Per-objective, per-fidelity expected entropy reduction over a grid.

    ``posteriors`` is a list over objectives of ``(means, variances, cross)``
    arrays shaped ``(M_j, N)``.  Returns a list over objectives of arrays
    ``(M_j, N)`` holding the front-sample average of the information gain of
    querying that objective at that fidelity.
    """
    if not fronts:
        raise InvalidStateError("at least one Pareto-front sample is required")
    approximation = approximation.upper()
    if approximation not in ("TG", "NI"):
        raise ValueError("approximation must be 'TG' or 'NI'")
    tables = []
    S = len(fronts)
    for j, (means, variances, cross) in enumerate(posteriors):
        M, N = means.shape
        sigmas = np.sqrt(np.maximum(variances, 0.0))
        G = np.zeros((M, N))
        for m in range(1, M + 1):
            sig_m = np.maximum(sigmas[m - 1], SIGMA_FLOOR)
            acc = np.zeros(N)
            for front in fronts:
                upper = float(front.per_dim_max[j])
                if m == M or approximation == "TG":
                    gamma = (upper - means[m - 1]) / sig_m
                    acc += _tg_gain(gamma)
                else:
                    h_cond = _ni_entropy_core(means[m - 1], sigmas[m - 1],
                                              means[M - 1], sigmas[M - 1],
                                              cross[m - 1], upper, quadrature_nodes)
                    acc += entropy_gaussian(sig_m) - h_cond
            G[m - 1] = acc / S
        tables.append(G)
    return tables


def acquisition_scores(posteriors, fid_vectors, fronts, approximation: str = "TG",
                       quadrature_nodes: int = 128) -> np.ndarray:
    """Score matrix ``(len(fid_vectors), N)`` of information gain per cost."""
    tables = gain_tables(posteriors, fronts, approximation, quadrature_nodes)
    N = tables[0].shape[1]
    scores = np.zeros((len(fid_vectors), N))
    for v, vec in enumerate(fid_vectors):
        gain = np.zeros(N)
        for j, m in enumerate(vec.indices):
            gain += tables[j][m - 1]
        scores[v] = gain / vec.normalized_cost
    return scores


def acquisition(x, fid_vector: FidelityVector, models: list[MultiFidelityGP],
                fronts: list[ParetoFrontSample], approximation: str = "TG",
                quadrature_nodes: int = 128) -> float:
    """Information gain about the highest-fidelity Pareto front per unit cost
    for evaluating input ``x`` at ``fid_vector``."""
    x = np.asarray(x, dtype=float).ravel()
    posteriors = [model.posterior_table(x[None, :]) for model in models]
    scores = acquisition_scores(posteriors, [fid_vector], fronts,
                                approximation, quadrature_nodes)
    return float(scores[0, 0])
