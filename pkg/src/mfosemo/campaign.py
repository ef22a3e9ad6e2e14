"""The budgeted optimization loop.

Each iteration samples highest-fidelity posterior functions, solves cheap
evolutionary problems over them to obtain Pareto-front samples, scores a
fresh quasi-random candidate grid jointly against every affordable fidelity
vector, evaluates the argmax pair, and updates the surrogates.  The loop
stops before the next evaluation would overflow the budget.

Objective values are standardized and negated per objective inside the loop
(transform refreshed at refit time); the information-gain score is invariant
to the affine change, and the negation puts the surrogates on the scale where
the front's per-dimension maxima genuinely bound candidate observations.
Recommendations are mapped back to raw units before any hypervolume is
computed.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .acquisition import FidelityVector, acquisition_scores, enumerate_fidelity_vectors
from .benchmarks import BenchmarkProblem, thin_front
from .errors import ConfigurationError, InvalidStateError
from .gp import KernelParams, MultiFidelityGP, se_kernel
from .metrics import hypervolume
from .moo import ParetoFrontSample, non_dominated_mask, nsga2_minimize
from .sampler import build_feature_map, draw_posterior_weights

log = logging.getLogger(__name__)

# role tags for deriving independent, reproducible random streams
_ROLE_INIT, _ROLE_GRID, _ROLE_MAP, _ROLE_WEIGHTS, _ROLE_MOO, _ROLE_FIT, _ROLE_RECOMMEND = range(7)

_COST_TOL = 1e-9


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0])


def _sobol_points(n: int, d: int, seed: int) -> np.ndarray:
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)


@dataclass
class CampaignConfig:
    """Everything a campaign needs besides the problem itself."""

    total_budget: float
    mc_samples: int = 1
    approximation: str = "TG"
    candidate_grid_size: int = 1000
    seed: int = 0
    refit_interval: int = 5
    n_features: int = 500
    initial_lower_points: int = 5
    initial_highest_points: int = 1
    recommend_grid_size: int = 10000
    moo_population: int = 100
    moo_generations: int = 100
    fit_restarts: int = 2
    ni_quadrature_nodes: int = 128
    abort_on_eval_error: bool = False

    def validate(self) -> None:
        if self.total_budget <= 0:
            raise ConfigurationError("total_budget must be positive")
        if self.mc_samples < 1:
            raise ConfigurationError("mc_samples must be at least 1")
        if self.approximation.upper() not in ("TG", "NI"):
            raise ConfigurationError("approximation must be 'TG' or 'NI'")
        for name in ("candidate_grid_size", "refit_interval", "n_features",
                     "initial_lower_points", "initial_highest_points",
                     "recommend_grid_size", "moo_population", "moo_generations",
                     "ni_quadrature_nodes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass
class EvaluationRecord:
    """One problem evaluation: iteration 0 marks the initial design."""

    iteration: int
    input: np.ndarray
    fidelity_vector: FidelityVector
    outputs: np.ndarray
    cumulative_cost: float


@dataclass
class CampaignResult:
    problem_name: str
    records: list[EvaluationRecord]
    phv_trace: list[float]
    models: list[MultiFidelityGP] = field(repr=False, default_factory=list)
    transforms: list[tuple[float, float]] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return self.records[-1].cumulative_cost if self.records else 0.0


# ----------------------------------------------------------------------
# initial design


def initialize_design(problem: BenchmarkProblem, config: CampaignConfig) -> list[EvaluationRecord]:
    """Quasi-random initial evaluations: a batch per lower-fidelity round plus
    a final batch at the all-highest vector.

    Round ``r`` evaluates the full objective vector with objective ``j`` at
    fidelity ``min(r, M_j - 1)``, so problems whose objectives share a common
    fidelity count get exactly ``initial_lower_points`` per lower fidelity and
    ``initial_highest_points`` at the top.
    """
    counts = problem.fidelity_counts
    rounds = max(counts) - 1
    n_points = rounds * config.initial_lower_points + config.initial_highest_points
    points = _sobol_points(n_points, problem.input_dim, _seed(config.seed, _ROLE_INIT))
    records: list[EvaluationRecord] = []
    cost = 0.0
    idx = 0
    vectors = []
    for r in range(1, rounds + 1):
        vec = FidelityVector.from_costs(
            [max(1, min(r, M - 1)) for M in counts], problem.cost_table)
        vectors.extend([vec] * config.initial_lower_points)
    vectors.extend([FidelityVector.from_costs(counts, problem.cost_table)]
                   * config.initial_highest_points)
    for vec in vectors:
        x = points[idx]
        idx += 1
        y = problem.evaluate(x, vec.indices)
        cost += vec.normalized_cost
        records.append(EvaluationRecord(iteration=0, input=x, fidelity_vector=vec,
                                        outputs=y, cumulative_cost=cost))
    if cost > config.total_budget + _COST_TOL:
        raise ConfigurationError(
            f"budget {config.total_budget} is smaller than the initialization cost {cost:.6g}")
    return records


# ----------------------------------------------------------------------
# per-iteration selection


def sample_front(models: list[MultiFidelityGP], problem: BenchmarkProblem,
                 config: CampaignConfig, iteration: int, sample_index: int) -> ParetoFrontSample:
    """One Pareto-front sample from posterior function draws.

    Model space carries negated objectives (see the module docstring), so the
    front of the original minimization is found by minimizing the negated
    samples and flipping the resulting points back into model space.
    """
    sampled = []
    for j, model in enumerate(models):
        fmap = build_feature_map(model.params, model.n_fidelities, config.n_features,
                                 _seed(config.seed, _ROLE_MAP, iteration, sample_index, j))
        fn = draw_posterior_weights(fmap, model.X, model.fidelities, model.y,
                                    model.params.noise_variance,
                                    _seed(config.seed, _ROLE_WEIGHTS, iteration, sample_index, j))
        sampled.append(fn)
    flipped = [(lambda X, fn=fn: -fn(X)) for fn in sampled]
    solution = nsga2_minimize(flipped, np.zeros(problem.input_dim), np.ones(problem.input_dim),
                              population_size=config.moo_population,
                              generations=config.moo_generations,
                              seed=_seed(config.seed, _ROLE_MOO, iteration, sample_index))
    return ParetoFrontSample(points=-solution.points)


def select_next(models: list[MultiFidelityGP], problem: BenchmarkProblem,
                config: CampaignConfig, iteration: int = 1,
                max_cost: float | None = None, score_hook=None):
    """Argmax of information gain per cost over a fresh candidate grid and all
    affordable fidelity vectors.  Deterministic given the configured seed;
    ties resolve to the lexicographically first fidelity vector, then the
    lowest grid index.
    """
    vectors = enumerate_fidelity_vectors(problem.fidelity_counts, problem.cost_table, max_cost)
    if not vectors:
        return None
    fronts = [sample_front(models, problem, config, iteration, s)
              for s in range(config.mc_samples)]
    grid = _sobol_points(config.candidate_grid_size, problem.input_dim,
                         _seed(config.seed, _ROLE_GRID, iteration))
    posteriors = [model.posterior_table(grid) for model in models]
    scores = acquisition_scores(posteriors, vectors, fronts,
                                config.approximation, config.ni_quadrature_nodes)
    if score_hook is not None:
        score_hook(scores, vectors, grid)
    if not np.any(np.isfinite(scores)):
        raise InvalidStateError(
            f"no finite acquisition value among {scores.size} candidates at iteration {iteration}")
    flat = int(np.argmax(np.where(np.isfinite(scores), scores, -np.inf)))
    v, i = divmod(flat, grid.shape[0])
    return grid[i].copy(), vectors[v], float(scores[v, i])


# ----------------------------------------------------------------------
# recommendation


def recommend_front(models: list[MultiFidelityGP], grid_size: int = 10000, seed: int = 0,
                    transforms=None) -> ParetoFrontSample:
    """Non-dominated set of highest-fidelity posterior means over a uniform
    random grid.  ``transforms`` maps standardized model outputs back to raw
    units as ``raw = offset + scale * value``."""
    d = models[0].input_dim
    grid = np.random.default_rng(seed).random((grid_size, d))
    cols = []
    for j, model in enumerate(models):
        mean = model.predict_batch(grid, model.n_fidelities)[0]
        if transforms is not None:
            offset, scale = transforms[j]
            mean = offset + scale * mean
        cols.append(mean)
    F = np.column_stack(cols)
    front = np.unique(F[non_dominated_mask(F)], axis=0)
    return ParetoFrontSample(points=front)


class _RecommendCache:
    """Incremental highest-fidelity posterior means over a fixed grid.

    Cross-kernel blocks against training data are extended column-wise as
    observations arrive and rebuilt only when hyperparameters change.
    """

    def __init__(self, model: MultiFidelityGP, grid: np.ndarray):
        self.model = model
        self.grid = grid
        self.params: KernelParams | None = None
        self.n = 0
        self.Rb = np.empty((grid.shape[0], 0))
        self.Re = np.empty((grid.shape[0], 0))

    def highest_mean(self) -> np.ndarray:
        model = self.model
        if model.n_observations == 0:
            return np.zeros(self.grid.shape[0])
        p = model.params
        if p is not self.params:
            self.params = p
            self.Rb = se_kernel(self.grid, model.X, p.base_lengthscales, p.base_variance)
            self.Re = se_kernel(self.grid, model.X, p.error_lengthscales, p.error_variance)
            self.n = model.n_observations
        elif model.n_observations > self.n:
            new = model.X[self.n:]
            self.Rb = np.hstack([self.Rb, se_kernel(self.grid, new, p.base_lengthscales, p.base_variance)])
            self.Re = np.hstack([self.Re, se_kernel(self.grid, new, p.error_lengthscales, p.error_variance)])
            self.n = model.n_observations
        coeff = np.minimum(model.n_fidelities, model.fidelities) - 1
        KM = self.Rb + coeff[None, :] * self.Re
        return KM @ model._factorization()["alpha"]


# ----------------------------------------------------------------------
# the campaign proper


class _Campaign:
    def __init__(self, problem: BenchmarkProblem, config: CampaignConfig, score_hook=None):
        config.validate()
        self.problem = problem
        self.config = config
        self.score_hook = score_hook
        self.records: list[EvaluationRecord] = []
        self.phv: list[float] = []
        self.models = [MultiFidelityGP(problem.input_dim, M) for M in problem.fidelity_counts]
        self.transforms = [(0.0, 1.0)] * problem.n_objectives
        self.ref_front = problem.reference_front()
        self.ref_point = problem.reference_point()
        self.ref_hv = problem.reference_hypervolume()
        grid = np.random.default_rng(_seed(config.seed, _ROLE_RECOMMEND)).random(
            (config.recommend_grid_size, problem.input_dim))
        self.rec_caches = [_RecommendCache(m, grid) for m in self.models]

    # -- data plumbing ---------------------------------------------------

    def _raw_arrays(self):
        X = np.vstack([r.input for r in self.records])
        M = np.array([r.fidelity_vector.indices for r in self.records], dtype=int)
        Y = np.vstack([r.outputs for r in self.records])
        return X, M, Y

    def _refresh_transforms_and_data(self):
        """Standardize and negate objective values for the surrogates.

        Working on the negated scale makes the front's per-dimension maxima
        genuine upper bounds for every candidate observation (the truncation
        argument needs the front to consist of maximal points), so the
        entropy truncation behaves as intended while the raw problem stays a
        minimization.  ``raw = offset + scale * model_value`` with negative
        ``scale`` restores raw units.
        """
        X, M, Y = self._raw_arrays()
        for j, model in enumerate(self.models):
            mu = float(np.mean(Y[:, j]))
            sd = float(np.std(Y[:, j]))
            self.transforms[j] = (mu, -(sd if sd > 1e-8 else 1.0))
            offset, scale = self.transforms[j]
            model.set_data(X, M[:, j], (Y[:, j] - offset) / scale)

    def _append_to_models(self, record: EvaluationRecord):
        for j, model in enumerate(self.models):
            offset, scale = self.transforms[j]
            model.add_observations(record.input[None, :],
                                   [record.fidelity_vector.indices[j]],
                                   [(record.outputs[j] - offset) / scale])

    def _fit_models(self, tag: int):
        for j, model in enumerate(self.models):
            model.fit(restarts=self.config.fit_restarts,
                      seed=_seed(self.config.seed, _ROLE_FIT, tag, j))

    def _measure_phv(self) -> float:
        """PHV-difference of the current recommendation.

        The recommended inputs are the Pareto set of the highest-fidelity
        posterior means over the fixed grid; their quality is scored on the
        true top-fidelity values, as in the standard evaluation protocol.
        """
        cols = []
        for j, cache in enumerate(self.rec_caches):
            offset, scale = self.transforms[j]
            cols.append(offset + scale * cache.highest_mean())
        F = np.column_stack(cols)
        rec_inputs = self.rec_caches[0].grid[non_dominated_mask(F)]
        truth = self.problem.evaluate_batch_highest(rec_inputs)
        truth = truth[np.all(truth <= self.ref_point, axis=1)]
        if truth.shape[0] == 0:
            return self.ref_hv
        front = truth[non_dominated_mask(truth)]
        front = thin_front(front, self.problem.front_cap)
        hv_rec = hypervolume(front, self.ref_point).value
        return max(self.ref_hv - hv_rec, 0.0)

    # -- main loop ---------------------------------------------------------

    def run(self) -> CampaignResult:
        config = self.config
        self.records = initialize_design(self.problem, config)
        self._refresh_transforms_and_data()
        self._fit_models(tag=0)
        phv0 = self._measure_phv()
        self.phv = [phv0] * len(self.records)

        cheapest = min(v.normalized_cost for v in enumerate_fidelity_vectors(
            self.problem.fidelity_counts, self.problem.cost_table))
        cost = self.records[-1].cumulative_cost
        t = 0
        while config.total_budget - cost + _COST_TOL >= cheapest:
            t += 1
            selection = select_next(self.models, self.problem, config, iteration=t,
                                    max_cost=config.total_budget - cost,
                                    score_hook=self.score_hook)
            if selection is None:
                break
            x, vec, value = selection
            try:
                y = self.problem.evaluate(x, vec.indices)
            except Exception:
                if config.abort_on_eval_error:
                    raise
                log.exception("evaluation failed at iteration %d; cost consumed, record skipped", t)
                cost += vec.normalized_cost
                continue
            cost += vec.normalized_cost
            record = EvaluationRecord(iteration=t, input=x, fidelity_vector=vec,
                                      outputs=y, cumulative_cost=cost)
            self.records.append(record)
            if t % config.refit_interval == 0:
                self._refresh_transforms_and_data()
                self._fit_models(tag=t)
            else:
                self._append_to_models(record)
            self.phv.append(self._measure_phv())
        return CampaignResult(problem_name=self.problem.name, records=self.records,
                              phv_trace=self.phv, models=self.models,
                              transforms=list(self.transforms))


def run_campaign(problem: BenchmarkProblem, config: CampaignConfig,
                 score_hook=None) -> CampaignResult:
    """Run one full budgeted campaign; fully reproducible from the seed."""
    return _Campaign(problem, config, score_hook=score_hook).run()
