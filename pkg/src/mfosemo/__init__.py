"""Multi-fidelity multi-objective Bayesian optimization with an
information-gain-per-cost acquisition over sampled Pareto fronts."""

from .acquisition import (CrossFidelityConditional, FidelityVector, TruncationStats,
                          acquisition, cross_fidelity_conditional,
                          entropy_ni, entropy_truncated_gaussian, entropy_unconditioned,
                          enumerate_fidelity_vectors)
from .benchmarks import (BenchmarkProblem, evaluate, make_problem, problem_names,
                         reference_front, single_fidelity_view)
from .campaign import (CampaignConfig, CampaignResult, EvaluationRecord,
                       initialize_design, recommend_front, run_campaign, select_next)
from .errors import ConfigurationError, InvalidStateError, MfosemoError, NumericalError
from .gp import (FidelityObservation, KernelParams, MultiFidelityGP, PosteriorSummary,
                 fit_hyperparameters, kernel_cross_fidelity, kernel_same_fidelity,
                 log_marginal_likelihood, posterior_predict)
from .metrics import (HypervolumeResult, hypervolume, hypervolume_monte_carlo,
                      phv_difference)
from .moo import (Individual, ParetoFrontSample, dominates, fast_non_dominated_sort,
                  non_dominated_mask, nsga2_minimize)
from .sampler import (FeatureMap, SampledFunction, build_feature_map,
                      draw_posterior_weights, evaluate_sample)
from .traces import RunManifest, Trace, aggregate_traces, first_crossing, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
