"""Multi-fidelity Gaussian process regression.

Each objective gets an independent surrogate over (input, fidelity) pairs.
Fidelity ``1`` is the cheapest approximation and fidelity ``M`` the ground
truth.  The prior stacks a base squared-exponential process with ``m - 1``
independent squared-exponential increment processes, so two evaluations at
fidelities ``m <= m'`` share the covariance of the lower one:

    k_m(x, x')            = k_base(x, x') + (m - 1) * k_err(x, x')
    k((x, m), (x', m'))   = k_min(m, m')(x, x')

Posterior mean/variance at any fidelity, the cross-fidelity covariance at a
shared input, the log marginal likelihood, and restart-based hyperparameter
fitting all live here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import NumericalError

log = logging.getLogger(__name__)

# Box bounds applied to every hyperparameter during fitting.
PARAM_LOWER = 1e-3
PARAM_UPPER = 1e3

# Jitter escalation: start tiny, multiply by 10 until the Cholesky succeeds
# or the ceiling is hit.
JITTER_START = 1e-10
JITTER_CEILING = 1e-4


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the two-block squared-exponential fidelity kernel.

    ``base_*`` parameterizes the shared process, ``error_*`` the per-level
    increment process, and ``noise_variance`` the observation noise shared by
    all fidelities of one objective.  All entries must be strictly positive.
    """

    base_lengthscales: np.ndarray
    base_variance: float
    error_lengthscales: np.ndarray
    error_variance: float
    noise_variance: float

    def __post_init__(self):
        bl = np.atleast_1d(np.asarray(self.base_lengthscales, dtype=float))
        el = np.atleast_1d(np.asarray(self.error_lengthscales, dtype=float))
        object.__setattr__(self, "base_lengthscales", bl)
        object.__setattr__(self, "error_lengthscales", el)
        if bl.shape != el.shape:
            raise ValueError("base and error lengthscale blocks must share the input dimension")
        values = np.concatenate([bl, el, [self.base_variance, self.error_variance, self.noise_variance]])
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("all kernel hyperparameters must be strictly positive and finite")

    @property
    def input_dim(self) -> int:
        return self.base_lengthscales.shape[0]

    def to_log_vector(self) -> np.ndarray:
        """Pack into the log-space vector used by the fitter."""
        return np.log(np.concatenate([
            self.base_lengthscales,
            [self.base_variance],
            self.error_lengthscales,
            [self.error_variance],
            [self.noise_variance],
        ]))

    @classmethod
    def from_log_vector(cls, theta: np.ndarray, input_dim: int) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        d = input_dim
        vals = np.exp(theta)
        return cls(
            base_lengthscales=vals[:d],
            base_variance=float(vals[d]),
            error_lengthscales=vals[d + 1:2 * d + 1],
            error_variance=float(vals[2 * d + 1]),
            noise_variance=float(vals[2 * d + 2]),
        )

    @classmethod
    def default(cls, input_dim: int) -> "KernelParams":
        return cls(
            base_lengthscales=np.full(input_dim, 0.3),
            base_variance=1.0,
            error_lengthscales=np.full(input_dim, 0.3),
            error_variance=0.1,
            noise_variance=1e-3,
        )


@dataclass(frozen=True)
class FidelityObservation:
    """One training triple: input, fidelity index, observed value."""

    input: np.ndarray
    fidelity: int
    value: float
    raw_cost: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input", np.asarray(self.input, dtype=float).ravel())
        if self.fidelity < 1:
            raise ValueError("fidelity indices start at 1")
        if self.raw_cost <= 0.0:
            raise ValueError("raw_cost must be positive")


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior at one (input, fidelity) pair.

    ``cross_cov_to_highest`` is the predictive covariance between the value at
    the queried fidelity and the value at the highest fidelity for the same
    input.  At the highest fidelity it equals ``variance`` exactly.
    """

    mean: float
    variance: float
    cross_cov_to_highest: float


def _sq_dists(X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape (n1, n2, d)."""
    diff = X1[:, None, :] - X2[None, :, :]
    return diff * diff


def _se_from_sq(sq: np.ndarray, lengthscales: np.ndarray, variance: float) -> np.ndarray:
    return variance * np.exp(-0.5 * np.sum(sq / (lengthscales ** 2), axis=-1))


def se_kernel(X1: np.ndarray, X2: np.ndarray, lengthscales: np.ndarray, variance: float) -> np.ndarray:
    """Squared-exponential kernel matrix with per-dimension lengthscales."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    return _se_from_sq(_sq_dists(X1, X2), np.asarray(lengthscales, dtype=float), variance)


def kernel_same_fidelity(x, xp, m: int, params: KernelParams) -> float:
    """Covariance of two evaluations at the same fidelity ``m``."""
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    if x.shape != xp.shape:
        raise ValueError(f"input dimension mismatch: {x.shape} vs {xp.shape}")
    if x.shape[0] != params.input_dim:
        raise ValueError("input dimension does not match kernel parameters")
    if m < 1:
        raise ValueError("fidelity indices start at 1")
    kb = se_kernel(x[None, :], xp[None, :], params.base_lengthscales, params.base_variance)[0, 0]
    ke = se_kernel(x[None, :], xp[None, :], params.error_lengthscales, params.error_variance)[0, 0]
    return float(kb + (m - 1) * ke)


def kernel_cross_fidelity(x, m: int, xp, mp: int, params: KernelParams) -> float:
    """Covariance of evaluations at fidelities ``m`` and ``mp``: the kernel of the lower one."""
    if m < 1 or mp < 1:
        raise ValueError("fidelity indices start at 1")
    return kernel_same_fidelity(x, xp, min(m, mp), params)


def _chol_with_jitter(K: np.ndarray):
    """Cholesky of a symmetric matrix with escalating diagonal jitter."""
    jitter = JITTER_START
    eye = np.eye(K.shape[0])
    while True:
        try:
            return cho_factor(K + jitter * eye, lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_CEILING:
                raise NumericalError(
                    f"Gram matrix not positive definite after jitter escalation to {JITTER_CEILING:g} "
                    f"(n={K.shape[0]}, diag range [{K.diagonal().min():.3g}, {K.diagonal().max():.3g}])"
                )


class MultiFidelityGP:
    """Surrogate for one objective observed at several fidelities.

    The model is immutable for readers once fitted: prediction never mutates
    state, so concurrent read-only use is safe.  ``add_observations`` and
    ``fit`` require exclusive access.
    """

    def __init__(self, input_dim: int, n_fidelities: int, params: KernelParams | None = None):
        if input_dim < 1 or n_fidelities < 1:
            raise ValueError("input_dim and n_fidelities must be at least 1")
        self.input_dim = input_dim
        self.n_fidelities = n_fidelities
        self.params = params if params is not None else KernelParams.default(input_dim)
        if self.params.input_dim != input_dim:
            raise ValueError("params dimensionality does not match input_dim")
        self.X = np.empty((0, input_dim))
        self.fidelities = np.empty(0, dtype=int)
        self.y = np.empty(0)
        self.last_fit_improved: bool | None = None
        self._cache: dict | None = None

    # ------------------------------------------------------------------
    # data handling

    @property
    def n_observations(self) -> int:
        return self.X.shape[0]

    def add_observations(self, X, fidelities, y) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        fidelities = np.atleast_1d(np.asarray(fidelities, dtype=int))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValueError("observation inputs have the wrong dimension")
        if not (len(X) == len(fidelities) == len(y)):
            raise ValueError("X, fidelities and y must have matching lengths")
        if np.any(fidelities < 1) or np.any(fidelities > self.n_fidelities):
            raise ValueError(f"fidelity indices must lie in [1, {self.n_fidelities}]")
        self.X = np.vstack([self.X, X])
        self.fidelities = np.concatenate([self.fidelities, fidelities])
        self.y = np.concatenate([self.y, y])
        self._cache = None

    def set_data(self, X, fidelities, y) -> None:
        """Replace the training set wholesale."""
        self.X = np.empty((0, self.input_dim))
        self.fidelities = np.empty(0, dtype=int)
        self.y = np.empty(0)
        self._cache = None
        if len(np.atleast_1d(y)):
            self.add_observations(X, fidelities, y)

    def set_params(self, params: KernelParams) -> None:
        if params.input_dim != self.input_dim:
            raise ValueError("params dimensionality does not match input_dim")
        self.params = params
        self._cache = None

    # ------------------------------------------------------------------
    # Gram assembly and factorization

    def gram(self, params: KernelParams | None = None) -> np.ndarray:
        """Noise-free Gram matrix over the training (input, fidelity) pairs."""
        params = params or self.params
        sq = _sq_dists(self.X, self.X)
        coeff = np.minimum(self.fidelities[:, None], self.fidelities[None, :]) - 1
        Kb = _se_from_sq(sq, params.base_lengthscales, params.base_variance)
        Ke = _se_from_sq(sq, params.error_lengthscales, params.error_variance)
        return Kb + coeff * Ke

    def _factorization(self):
        if self._cache is None:
            K = self.gram() + self.params.noise_variance * np.eye(self.n_observations)
            cf, jitter = _chol_with_jitter(K)
            alpha = cho_solve(cf, self.y, check_finite=False)
            self._cache = {"chol": cf, "alpha": alpha, "jitter": jitter}
        return self._cache

    # ------------------------------------------------------------------
    # prediction

    def _cross_kernels(self, X: np.ndarray):
        """Base/error kernel blocks between query points and training data."""
        sq = _sq_dists(X, self.X)
        Rb = _se_from_sq(sq, self.params.base_lengthscales, self.params.base_variance)
        Re = _se_from_sq(sq, self.params.error_lengthscales, self.params.error_variance)
        return Rb, Re

    def _prior_variance(self, m: int) -> float:
        return self.params.base_variance + (m - 1) * self.params.error_variance

    def predict_batch(self, X, m: int):
        """Posterior mean, variance, and cross-covariance to the highest fidelity.

        Returns three arrays of shape ``(len(X),)``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValueError("query inputs have the wrong dimension")
        if not 1 <= m <= self.n_fidelities:
            raise ValueError(f"fidelity must lie in [1, {self.n_fidelities}]")
        n = X.shape[0]
        kxx = self._prior_variance(m)
        if self.n_observations == 0:
            prior = np.full(n, kxx)
            return np.zeros(n), prior, prior.copy()
        cache = self._factorization()
        Rb, Re = self._cross_kernels(X)
        Km = Rb + (np.minimum(m, self.fidelities)[None, :] - 1) * Re
        KM = Rb + (np.minimum(self.n_fidelities, self.fidelities)[None, :] - 1) * Re
        Vm = cho_solve(cache["chol"], Km.T, check_finite=False)
        mean = Km @ cache["alpha"]
        var = np.maximum(kxx - np.einsum("ij,ji->i", Km, Vm), 0.0)
        if m == self.n_fidelities:
            cross = var.copy()
        else:
            VM = cho_solve(cache["chol"], KM.T, check_finite=False)
            cross = kxx - np.einsum("ij,ji->i", Km, VM)
        return mean, var, cross

    def predict(self, x, m: int) -> PosteriorSummary:
        x = np.asarray(x, dtype=float).ravel()
        mean, var, cross = self.predict_batch(x[None, :], m)
        return PosteriorSummary(float(mean[0]), float(var[0]), float(cross[0]))

    def posterior_table(self, X):
        """Mean/variance/cross arrays of shape ``(n_fidelities, len(X))`` for a grid.

        The cross row for fidelity ``m`` holds cov(value at m, value at the
        highest fidelity) at the same input; the last row therefore equals the
        variance row exactly.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        M = self.n_fidelities
        means = np.zeros((M, n))
        variances = np.zeros((M, n))
        cross = np.zeros((M, n))
        if self.n_observations == 0:
            for m in range(1, M + 1):
                variances[m - 1] = self._prior_variance(m)
                cross[m - 1] = variances[m - 1]
            return means, variances, cross
        cache = self._factorization()
        Rb, Re = self._cross_kernels(X)
        Kms = []
        for m in range(1, M + 1):
            Km = Rb + (np.minimum(m, self.fidelities)[None, :] - 1) * Re
            Kms.append(Km)
            means[m - 1] = Km @ cache["alpha"]
        VM = cho_solve(cache["chol"], Kms[-1].T, check_finite=False)
        for m in range(1, M + 1):
            kxx = self._prior_variance(m)
            Vm = VM if m == M else cho_solve(cache["chol"], Kms[m - 1].T, check_finite=False)
            variances[m - 1] = np.maximum(kxx - np.einsum("ij,ji->i", Kms[m - 1], Vm), 0.0)
            if m == M:
                cross[m - 1] = variances[m - 1]
            else:
                cross[m - 1] = kxx - np.einsum("ij,ji->i", Kms[m - 1], VM)
        return means, variances, cross

    # ------------------------------------------------------------------
    # marginal likelihood and fitting

    def log_marginal_likelihood(self, params: KernelParams | None = None) -> float:
        """Gaussian log evidence of the training targets; 0.0 when empty."""
        n = self.n_observations
        if n == 0:
            return 0.0
        params = params or self.params
        K = self.gram(params) + params.noise_variance * np.eye(n)
        cf, _ = _chol_with_jitter(K)
        alpha = cho_solve(cf, self.y, check_finite=False)
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        return float(-0.5 * self.y @ alpha - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi))

    def _nll_and_grad(self, theta: np.ndarray):
        """Negative log marginal likelihood and its gradient in log-parameter space."""
        d = self.input_dim
        n = self.n_observations
        params = KernelParams.from_log_vector(theta, d)
        sq = _sq_dists(self.X, self.X)
        coeff = np.minimum(self.fidelities[:, None], self.fidelities[None, :]) - 1
        Kb = _se_from_sq(sq, params.base_lengthscales, params.base_variance)
        Ke = _se_from_sq(sq, params.error_lengthscales, params.error_variance)
        K = Kb + coeff * Ke + params.noise_variance * np.eye(n)
        try:
            cf, _ = _chol_with_jitter(K)
        except NumericalError:
            return 1e25, np.zeros_like(theta)
        alpha = cho_solve(cf, self.y, check_finite=False)
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        nll = 0.5 * self.y @ alpha + 0.5 * logdet + 0.5 * n * math.log(2.0 * math.pi)
        # dL/dtheta_k = 0.5 tr((aa^T - K^-1) dK/dtheta_k); flip sign for the NLL.
        Kinv = cho_solve(cf, np.eye(n), check_finite=False)
        W = np.outer(alpha, alpha) - Kinv
        CKe = coeff * Ke
        grad = np.zeros(2 * d + 3)
        inv_lb2 = 1.0 / params.base_lengthscales ** 2
        inv_le2 = 1.0 / params.error_lengthscales ** 2
        for i in range(d):
            grad[i] = 0.5 * np.sum(W * (Kb * (sq[:, :, i] * inv_lb2[i])))
            grad[d + 1 + i] = 0.5 * np.sum(W * (CKe * (sq[:, :, i] * inv_le2[i])))
        grad[d] = 0.5 * np.sum(W * Kb)
        grad[2 * d + 1] = 0.5 * np.sum(W * CKe)
        grad[2 * d + 2] = 0.5 * params.noise_variance * np.trace(W)
        return float(nll), -grad

    def fit(self, restarts: int = 2, seed: int = 0, maxiter: int = 80) -> KernelParams:
        """Restart-best maximization of the log marginal likelihood.

        Start 1 is the incumbent; the remaining ``restarts - 1`` starts are
        seeded random draws inside the box bounds.  ``restarts = 0`` returns
        the incumbent untouched.  If no start improves on the incumbent the
        incumbent is kept and a warning is logged.
        """
        if restarts <= 0:
            self.last_fit_improved = False
            return self.params
        if self.n_observations < 2:
            raise ValueError("hyperparameter fitting requires at least 2 observations")
        d = self.input_dim
        lo, hi = math.log(PARAM_LOWER), math.log(PARAM_UPPER)
        bounds = [(lo, hi)] * (2 * d + 3)
        incumbent_theta = np.clip(self.params.to_log_vector(), lo, hi)
        incumbent_nll = self._nll_and_grad(incumbent_theta)[0]

        rng = np.random.default_rng(seed)
        starts = [incumbent_theta]
        yvar = max(float(np.var(self.y)), PARAM_LOWER)
        for _ in range(restarts - 1):
            lengths = rng.uniform(math.log(0.05), math.log(2.0), size=2 * d)
            base_var = math.log(min(max(yvar * rng.uniform(0.3, 3.0), PARAM_LOWER), PARAM_UPPER))
            err_var = base_var + rng.uniform(math.log(0.01), 0.0)
            noise = rng.uniform(math.log(PARAM_LOWER), math.log(1e-1))
            theta = np.concatenate([lengths[:d], [base_var], lengths[d:], [err_var], [noise]])
            starts.append(np.clip(theta, lo, hi))

        best_theta, best_nll = incumbent_theta, incumbent_nll
        for theta0 in starts:
            res = minimize(self._nll_and_grad, theta0, jac=True, method="L-BFGS-B",
                           bounds=bounds, options={"maxiter": maxiter})
            if np.all(np.isfinite(res.x)) and res.fun < best_nll:
                best_nll, best_theta = res.fun, res.x
        improved = best_nll < incumbent_nll - 1e-12
        self.last_fit_improved = improved
        if not improved:
            log.warning("hyperparameter fit did not improve on the incumbent (n=%d)", self.n_observations)
            return self.params
        self.set_params(KernelParams.from_log_vector(np.clip(best_theta, lo, hi), d))
        return self.params


# ----------------------------------------------------------------------
# module-level operation wrappers


def posterior_predict(model: MultiFidelityGP, x, m: int) -> PosteriorSummary:
    """Posterior summary of ``model`` at input ``x`` and fidelity ``m``."""
    return model.predict(x, m)


def log_marginal_likelihood(model: MultiFidelityGP, params: KernelParams | None = None) -> float:
    return model.log_marginal_likelihood(params)


def fit_hyperparameters(model: MultiFidelityGP, restarts: int, seed: int = 0) -> KernelParams:
    return model.fit(restarts=restarts, seed=seed)
