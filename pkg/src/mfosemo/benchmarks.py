"""Synthetic multi-fidelity multi-objective test problems.

Four problems, addressable by name through :func:`make_problem`:

=======  ===  ===  ==========================  =================
name      K    d   objective families          raw costs
=======  ===  ===  ==========================  =================
BC        2    2   Branin, Currin              [1, 10] each
SPP       3    4   Shekel, Park 1, Park 2      [0.1, 1, 10], [1, 10], [1, 10]
ZDT3      2    6   Zitzler-Deb-Thiele no. 3    [1, 10] each
DTLZ1     6    5   Deb-Thiele-Laumanns-Zitzler [0.1, 1, 10] each
=======  ===  ===  ==========================  =================

Inputs are taken on the unit hypercube and mapped to each family's raw
domain internally (Branin: [-5, 10] x [0, 15]; Shekel: [0, 10]^4; the others
already live on unit boxes).  All objectives are minimized and deterministic.

Low-fidelity versions of Branin, Currin, Shekel and the Park functions are
the standard published variants (shifted-square-root Branin, the averaged
offset Currin, 5/7/10-term Shekel, and the scaled/offset Park forms).  ZDT3
and DTLZ1 have no standard low fidelities, so cheaper levels subtract a
smooth positive bias that vanishes at the top level; the bias keeps lower
values below higher ones everywhere.  Note that several of the published
variants do *not* under-estimate their high-fidelity counterparts on most of
the domain; the acquisition applies its truncation bounds regardless.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .metrics import hypervolume
from .moo import non_dominated_mask, nsga2_minimize

_REFERENCE_MARGIN = 0.10
_CONVERGENCE_FRACTION = 0.02


# ----------------------------------------------------------------------
# objective families (vectorized over rows of a unit-cube input array)


def _branin_raw(x1, x2):
    b = 5.1 / (4.0 * np.pi ** 2)
    c = 5.0 / np.pi
    t = 1.0 / (8.0 * np.pi)
    return (x2 - b * x1 ** 2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * np.cos(x1) + 10.0


def branin_high(U):
    x1 = -5.0 + 15.0 * U[:, 0]
    x2 = 15.0 * U[:, 1]
    return _branin_raw(x1, x2)


def branin_low(U):
    x1 = -5.0 + 15.0 * U[:, 0]
    x2 = 15.0 * U[:, 1]
    return 10.0 * np.sqrt(_branin_raw(x1 - 2.0, x2 - 2.0)) + 2.0 * (x1 - 0.5) - 3.0 * (3.0 * x2 - 1.0) - 1.0


def _currin_raw(x1, x2):
    with np.errstate(divide="ignore"):
        damp = 1.0 - np.exp(np.where(x2 > 0.0, -0.5 / np.maximum(x2, 1e-300), -np.inf))
    num = 2300.0 * x1 ** 3 + 1900.0 * x1 ** 2 + 2092.0 * x1 + 60.0
    den = 100.0 * x1 ** 3 + 500.0 * x1 ** 2 + 4.0 * x1 + 20.0
    return damp * num / den


def currin_high(U):
    return _currin_raw(U[:, 0], U[:, 1])


def currin_low(U):
    x1, x2 = U[:, 0], U[:, 1]
    yp = x2 + 0.05
    ym = np.maximum(x2 - 0.05, 0.0)
    return 0.25 * (_currin_raw(x1 + 0.05, yp) + _currin_raw(x1 + 0.05, ym)
                   + _currin_raw(x1 - 0.05, yp) + _currin_raw(x1 - 0.05, ym))


_SHEKEL_BETA = np.array([1, 2, 2, 4, 4, 6, 3, 7, 5, 5], dtype=float) / 10.0
_SHEKEL_C = np.array([
    [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
    [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
    [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
    [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
], dtype=float)


def _shekel(U, terms):
    X = 10.0 * U
    val = np.zeros(len(X))
    for i in range(terms):
        val -= 1.0 / (np.sum((X - _SHEKEL_C[:, i]) ** 2, axis=1) + _SHEKEL_BETA[i])
    return val


def shekel_m5(U):
    return _shekel(U, 5)


def shekel_m7(U):
    return _shekel(U, 7)


def shekel_m10(U):
    return _shekel(U, 10)


def park1_high(U):
    x1, x2, x3, x4 = U[:, 0], U[:, 1], U[:, 2], U[:, 3]
    c = (x2 + x3 ** 2) * x4
    # algebraically equal to x1/2 (sqrt(1 + c/x1^2) - 1), stable at x1 -> 0
    return 0.5 * (np.sqrt(x1 ** 2 + c) - x1) + (x1 + 3.0 * x4) * np.exp(1.0 + np.sin(x3))


def park1_low(U):
    x1, x2, x3 = U[:, 0], U[:, 1], U[:, 2]
    return (1.0 + np.sin(x1) / 10.0) * park1_high(U) - 2.0 * x1 + x2 ** 2 + x3 ** 2 + 0.5


def park2_high(U):
    x1, x2, x3, x4 = U[:, 0], U[:, 1], U[:, 2], U[:, 3]
    return (2.0 / 3.0) * np.exp(x1 + x2) - x4 * np.sin(x3) + x3


def park2_low(U):
    return 1.2 * park2_high(U) - 1.0


def zdt3_objectives(d):
    def f1(U):
        return U[:, 0].copy()

    def f2(U):
        g = 1.0 + 9.0 * np.sum(U[:, 1:], axis=1) / (d - 1)
        ratio = U[:, 0] / g
        return g * (1.0 - np.sqrt(ratio) - ratio * np.sin(10.0 * np.pi * U[:, 0]))

    return f1, f2


def dtlz1_objectives(d, n_obj):
    k = d - n_obj + 1

    def g_of(U):
        if k <= 0:
            return np.zeros(len(U))
        Z = U[:, n_obj - 1:] - 0.5
        return 100.0 * (k + np.sum(Z ** 2 - np.cos(20.0 * np.pi * Z), axis=1))

    def make(i):
        def f(U):
            g = g_of(U)
            val = 0.5 * (1.0 + g)
            if n_obj - 1 - i > 0:
                val = val * np.prod(U[:, :n_obj - 1 - i], axis=1)
            if i > 0:
                val = val * (1.0 - U[:, n_obj - 1 - i])
            return val
        return f

    return [make(i) for i in range(n_obj)]


def _biased(fn, scale, coord):
    """Lower-fidelity construction: subtract a smooth positive bias."""
    def low(U):
        return fn(U) - scale * (0.6 + 0.4 * np.cos(2.0 * np.pi * U[:, coord]))
    return low


# ----------------------------------------------------------------------
# problem container


class BenchmarkProblem:
    """A set of objective families with per-fidelity implementations and costs.

    ``objectives[j][m - 1]`` evaluates objective ``j`` at fidelity ``m`` on an
    ``(n, d)`` unit-cube array.  Costs are strictly increasing per objective;
    the last entry of each row is the highest (ground-truth) fidelity.
    """

    def __init__(self, name, input_dim, objectives, cost_table,
                 reference_effort=100_000, front_cap=2000,
                 nsga_population=100, nsga_generations=150):
        self.name = name
        self.input_dim = input_dim
        self.objectives = objectives
        self.cost_table = tuple(tuple(float(c) for c in row) for row in cost_table)
        self.n_objectives = len(objectives)
        self.fidelity_counts = tuple(len(fns) for fns in objectives)
        self.reference_effort = reference_effort
        self.front_cap = front_cap
        self.nsga_population = nsga_population
        self.nsga_generations = nsga_generations
        self._ref_cache: dict = {}
        for j, row in enumerate(self.cost_table):
            if len(row) != self.fidelity_counts[j]:
                raise ValueError("one cost per fidelity is required")
            if any(b <= a for a, b in zip(row, row[1:])):
                raise ValueError("costs must be strictly increasing in fidelity")

    # -- evaluation ----------------------------------------------------

    def _check_input(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValueError(f"{self.name} expects inputs of dimension {self.input_dim}")
        if np.any(X < -1e-9) or np.any(X > 1.0 + 1e-9):
            raise ValueError("inputs must lie in the unit hypercube")
        return np.clip(X, 0.0, 1.0)

    def evaluate(self, x, fidelity_indices) -> np.ndarray:
        """Evaluate all objectives at one input under a fidelity vector."""
        X = self._check_input(np.asarray(x, dtype=float).reshape(1, -1))
        indices = tuple(int(m) for m in fidelity_indices)
        if len(indices) != self.n_objectives:
            raise ValueError("need one fidelity index per objective")
        out = np.empty(self.n_objectives)
        for j, m in enumerate(indices):
            if not 1 <= m <= self.fidelity_counts[j]:
                raise ValueError(f"fidelity {m} out of range for objective {j}")
            out[j] = float(self.objectives[j][m - 1](X)[0])
        return out

    def evaluate_objective(self, j: int, m: int, X) -> np.ndarray:
        X = self._check_input(X)
        return np.asarray(self.objectives[j][m - 1](X), dtype=float)

    def evaluate_batch_highest(self, X) -> np.ndarray:
        X = self._check_input(X)
        return np.column_stack([fns[-1](X) for fns in self.objectives])

    # -- reference data ------------------------------------------------

    def reference_front(self, effort: int | None = None) -> np.ndarray:
        """Dense search + evolutionary front over the true top fidelities; cached."""
        effort = int(effort if effort is not None else self.reference_effort)
        if effort < 10_000:
            raise ValueError("reference-front effort must be at least 10^4")
        if effort not in self._ref_cache:
            rng = np.random.default_rng(2024)
            candidates = [self.evaluate_batch_highest(rng.random((effort, self.input_dim)))]
            for seed in (0, 1):
                sample = nsga2_minimize(
                    [fns[-1] for fns in self.objectives],
                    np.zeros(self.input_dim), np.ones(self.input_dim),
                    population_size=self.nsga_population,
                    generations=self.nsga_generations, seed=seed)
                candidates.append(sample.points)
            merged = np.vstack(candidates)
            front = merged[non_dominated_mask(merged)]
            front = np.unique(front, axis=0)
            front = thin_front(front, self.front_cap)
            self._ref_cache[effort] = front
        return self._ref_cache[effort]

    def reference_point(self, effort: int | None = None) -> np.ndarray:
        """Componentwise front maximum plus a 10% margin of the front's span."""
        front = self.reference_front(effort)
        hi = front.max(axis=0)
        span = hi - front.min(axis=0)
        pad = np.where(span > 0, span, np.maximum(np.abs(hi), 1.0))
        return hi + _REFERENCE_MARGIN * pad

    def reference_hypervolume(self, effort: int | None = None) -> float:
        key = ("hv", int(effort if effort is not None else self.reference_effort))
        if key not in self._ref_cache:
            self._ref_cache[key] = hypervolume(self.reference_front(effort),
                                               self.reference_point(effort)).value
        return self._ref_cache[key]

    def convergence_threshold(self, effort: int | None = None) -> float:
        """Campaign counts as converged once the PHV-difference drops below
        this fraction of the reference-front hypervolume."""
        return _CONVERGENCE_FRACTION * self.reference_hypervolume(effort)


def thin_front(front: np.ndarray, cap: int) -> np.ndarray:
    """Deterministic stride thinning of an oversized front (keeps extremes)."""
    front = np.unique(np.atleast_2d(front), axis=0)
    if front.shape[0] <= cap:
        return front
    idx = np.unique(np.linspace(0, front.shape[0] - 1, cap).round().astype(int))
    return front[idx]


# ----------------------------------------------------------------------
# registry


def _make_bc() -> BenchmarkProblem:
    return BenchmarkProblem(
        name="BC", input_dim=2,
        objectives=[[branin_low, branin_high], [currin_low, currin_high]],
        cost_table=[[1.0, 10.0], [1.0, 10.0]],
    )


def _make_spp() -> BenchmarkProblem:
    return BenchmarkProblem(
        name="SPP", input_dim=4,
        objectives=[[shekel_m5, shekel_m7, shekel_m10],
                    [park1_low, park1_high],
                    [park2_low, park2_high]],
        cost_table=[[0.1, 1.0, 10.0], [1.0, 10.0], [1.0, 10.0]],
    )


def _make_zdt3() -> BenchmarkProblem:
    d = 6
    f1, f2 = zdt3_objectives(d)
    return BenchmarkProblem(
        name="ZDT3", input_dim=d,
        objectives=[[_biased(f1, 0.3, 0), f1], [_biased(f2, 1.5, 1), f2]],
        cost_table=[[1.0, 10.0], [1.0, 10.0]],
        nsga_generations=250,
    )


def _make_dtlz1() -> BenchmarkProblem:
    d, k = 5, 6
    fns = dtlz1_objectives(d, k)
    objectives = []
    for j, f in enumerate(fns):
        coord = j % d
        objectives.append([_biased(f, 0.12, coord), _biased(f, 0.05, coord), f])
    return BenchmarkProblem(
        name="DTLZ1", input_dim=d,
        objectives=objectives,
        cost_table=[[0.1, 1.0, 10.0]] * k,
        reference_effort=10_000, front_cap=120,
        nsga_population=80, nsga_generations=60,
    )


_REGISTRY = {"BC": _make_bc, "SPP": _make_spp, "ZDT3": _make_zdt3, "DTLZ1": _make_dtlz1}


def problem_names() -> list[str]:
    return sorted(_REGISTRY)


def make_problem(name: str) -> BenchmarkProblem:
    """Instantiate a registered problem by (case-insensitive) name."""
    key = str(name).upper()
    if key not in _REGISTRY:
        raise ConfigurationError(f"unknown problem {name!r}; choose from {problem_names()}")
    return _REGISTRY[key]()


def evaluate(problem: BenchmarkProblem, x, fidelity_indices) -> np.ndarray:
    """Evaluate ``problem`` at one input under a fidelity vector."""
    return problem.evaluate(x, fidelity_indices)


def reference_front(problem: BenchmarkProblem, effort: int) -> np.ndarray:
    return problem.reference_front(effort)


def single_fidelity_view(problem: BenchmarkProblem) -> BenchmarkProblem:
    """Collapse a problem to its highest fidelities only.

    The view exposes a single fidelity per objective (priced at the original
    top cost, so its normalized cost per evaluation equals the number of
    objectives) and shares the parent's reference-front cache.
    """
    view = BenchmarkProblem(
        name=problem.name, input_dim=problem.input_dim,
        objectives=[[fns[-1]] for fns in problem.objectives],
        cost_table=[[row[-1]] for row in problem.cost_table],
        reference_effort=problem.reference_effort, front_cap=problem.front_cap,
        nsga_population=problem.nsga_population,
        nsga_generations=problem.nsga_generations,
    )
    view._ref_cache = problem._ref_cache
    return view
