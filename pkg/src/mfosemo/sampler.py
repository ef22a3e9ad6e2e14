"""Random-Fourier-feature sampling of highest-fidelity posterior functions.

A feature map is built per surrogate: one cosine block approximating the base
kernel plus one block per fidelity increment, each with its own spectral
draw.  Observations at fidelity ``m`` activate the base block and the first
``m - 1`` increment blocks of their feature row, so data from every fidelity
shapes the weight posterior while the sampled function itself is evaluated
with all blocks active, i.e. at the highest fidelity.

``n_features`` is the total feature count, split evenly across the blocks.
The Bayesian linear model over the weights has posterior
N(A^-1 Phi^T y, noise * A^-1) with A = Phi^T Phi + noise * I; draws use
whichever of the primal/dual formulations is cheaper for the current data
size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import NumericalError
from .gp import JITTER_CEILING, JITTER_START, KernelParams


@dataclass(frozen=True)
class FeatureMap:
    """Cosine feature map whose prior covariance approximates the kernel.

    ``block_index`` assigns each feature to block 0 (base kernel) or block
    ``b >= 1`` (the b-th fidelity increment).  With weights ``theta ~ N(0, I)``
    the prior covariance of ``phi(x)^T theta`` converges to the
    highest-fidelity kernel as the per-block feature count grows.
    """

    frequencies: np.ndarray  # (F, d)
    phases: np.ndarray       # (F,)
    amplitudes: np.ndarray   # (F,)
    block_index: np.ndarray  # (F,)
    n_fidelities: int

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    def features(self, X, fidelities=None) -> np.ndarray:
        """Feature matrix, shape (n, F).

        ``fidelities`` (one index per row) zeroes the increment blocks a row's
        fidelity does not reach; omit it to evaluate at the highest fidelity.
        """
        Z = self._raw_features(X)
        Z *= self.amplitudes
        if fidelities is not None:
            fidelities = np.atleast_1d(np.asarray(fidelities, dtype=int))
            if len(fidelities) != Z.shape[0]:
                raise ValueError("need one fidelity per row")
            Z[self.block_index[None, :] > fidelities[:, None] - 1] = 0.0
        return Z

    def _raw_features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValueError("input dimension does not match the feature map")
        Z = X @ self.frequencies.T
        Z += self.phases
        np.cos(Z, out=Z)
        return Z


@dataclass(frozen=True)
class SampledFunction:
    """One posterior function draw: deterministic given (map, weights)."""

    feature_map: FeatureMap
    weights: np.ndarray

    def __call__(self, X) -> np.ndarray:
        # amplitudes folded into the weights to skip one (n, F) product
        return self.feature_map._raw_features(X) @ (self.feature_map.amplitudes * self.weights)


def build_feature_map(params: KernelParams, highest_fidelity: int, n_features: int,
                      seed: int) -> FeatureMap:
    """Spectral draw for the highest-fidelity kernel.

    SE spectral density: frequencies are Gaussian with per-dimension scale
    1/lengthscale; phases uniform on [0, 2pi); per-feature amplitude
    sqrt(2 * variance / block size).  ``n_features`` total features are split
    evenly across the base and increment blocks.
    """
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    if highest_fidelity < 1:
        raise ValueError("highest_fidelity must be at least 1")
    rng = np.random.default_rng(seed)
    d = params.input_dim
    freqs, phases, amps, blocks = [], [], [], []
    specs = [(0, params.base_lengthscales, params.base_variance)]
    specs += [(b, params.error_lengthscales, params.error_variance)
              for b in range(1, highest_fidelity)]
    base_count, extra = divmod(n_features, len(specs))
    for block, lengthscales, variance in specs:
        count = base_count + (1 if block < extra else 0)
        if count == 0:
            continue
        freqs.append(rng.standard_normal((count, d)) / lengthscales)
        phases.append(rng.uniform(0.0, 2.0 * np.pi, size=count))
        amps.append(np.full(count, np.sqrt(2.0 * variance / count)))
        blocks.append(np.full(count, block, dtype=int))
    return FeatureMap(
        frequencies=np.vstack(freqs),
        phases=np.concatenate(phases),
        amplitudes=np.concatenate(amps),
        block_index=np.concatenate(blocks),
        n_fidelities=highest_fidelity,
    )


def _chol(A: np.ndarray):
    jitter = JITTER_START
    eye = np.eye(A.shape[0])
    while True:
        try:
            return cho_factor(A + jitter * eye, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_CEILING:
                raise NumericalError("feature normal equations not invertible after jitter escalation")


def draw_posterior_weights(feature_map: FeatureMap, X, fidelities, y, noise: float,
                           seed: int, unified_rows: bool = False) -> SampledFunction:
    """Draw weights from the Bayesian linear-model posterior given the data.

    With no data the weights are standard normal.  ``unified_rows=True`` is a
    documented simplification that builds every observation row with all
    blocks active instead of masking by the row's fidelity.
    """
    rng = np.random.default_rng(seed)
    F = feature_map.n_features
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = len(y)
    if n == 0:
        return SampledFunction(feature_map, rng.standard_normal(F))
    Phi = feature_map.features(X, None if unified_rows else fidelities)
    if F <= n:
        # primal: factor A = Phi^T Phi + noise I directly
        A = Phi.T @ Phi + noise * np.eye(F)
        cf = _chol(A)
        mean = cho_solve(cf, Phi.T @ y, check_finite=False)
        z = rng.standard_normal(F)
        dev = np.sqrt(noise) * solve_triangular(cf[0].T, z, lower=False, check_finite=False)
        theta = mean + dev
    else:
        # dual: prior draw corrected through an n x n solve; same posterior law
        theta0 = rng.standard_normal(F)
        eps = np.sqrt(noise) * rng.standard_normal(n)
        G = Phi @ Phi.T + noise * np.eye(n)
        cf = _chol(G)
        resid = cho_solve(cf, y - Phi @ theta0 - eps, check_finite=False)
        theta = theta0 + Phi.T @ resid
    return SampledFunction(feature_map, theta)


def evaluate_sample(sample: SampledFunction, x) -> float | np.ndarray:
    """Evaluate a sampled highest-fidelity function at one input or a batch."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(sample(x[None, :])[0])
    return sample(x)
