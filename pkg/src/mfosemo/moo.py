"""Cheap multi-objective optimization: dominance tools and NSGA-II.

Everything minimizes.  The evolutionary solver runs on cheap callables (the
sampled surrogate functions), vectorized over the population.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def dominates(a, b) -> bool:
    """True iff ``a`` is no worse everywhere and strictly better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def _domination_matrix(F: np.ndarray) -> np.ndarray:
    """dom[i, j] True iff row i dominates row j (pairwise, O(n^2 K))."""
    n, k = F.shape
    le = np.ones((n, n), dtype=bool)
    lt = np.zeros((n, n), dtype=bool)
    for j in range(k):
        col_i = F[:, j][:, None]
        col_j = F[:, j][None, :]
        le &= col_i <= col_j
        lt |= col_i < col_j
    return le & lt


def _non_dominated_mask_2d(F: np.ndarray) -> np.ndarray:
    """O(n log n) mask for two objectives via a sorted sweep."""
    n = F.shape[0]
    order = np.lexsort((F[:, 1], F[:, 0]))
    f1, f2 = F[order, 0], F[order, 1]
    cummin = np.minimum.accumulate(f2)
    group_start = np.empty(n, dtype=bool)
    group_start[0] = True
    group_start[1:] = f1[1:] > f1[:-1]
    start_idx = np.maximum.accumulate(np.where(group_start, np.arange(n), 0))
    prev_end = start_idx - 1
    prev_min = np.where(prev_end >= 0, cummin[np.maximum(prev_end, 0)], np.inf)
    dominated = prev_min <= f2            # beaten by a strictly smaller f1
    dominated |= f2 > f2[start_idx]       # beaten within an equal-f1 group
    mask = np.empty(n, dtype=bool)
    mask[order] = ~dominated
    return mask


def non_dominated_mask(F: np.ndarray) -> np.ndarray:
    """Boolean mask of rows not dominated by any other row.

    Two objectives use a sorted sweep; otherwise pairwise comparison for small
    sets and an archive sweep in ascending objective-sum order for large ones
    (a dominator always has a strictly smaller sum).
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = F.shape[0]
    if F.shape[1] == 2 and n > 1:
        return _non_dominated_mask_2d(F)
    if n <= 512:
        return ~_domination_matrix(F).any(axis=0)
    order = np.argsort(F.sum(axis=1), kind="stable")
    Fs = F[order]
    keep: list[int] = []
    archive = np.empty((0, F.shape[1]))
    for i in range(n):
        p = Fs[i]
        if archive.shape[0]:
            dominated = np.any(np.all(archive <= p, axis=1) & np.any(archive < p, axis=1))
            if dominated:
                continue
        keep.append(i)
        archive = Fs[np.array(keep)]
    mask = np.zeros(n, dtype=bool)
    mask[order[np.array(keep, dtype=int)]] = True
    return mask


def pareto_ranks(F: np.ndarray) -> np.ndarray:
    """Front index per row (0 = non-dominated), by repeated peeling."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = F.shape[0]
    dom = _domination_matrix(F)
    counts = dom.sum(axis=0).astype(int)
    ranks = np.full(n, -1, dtype=int)
    current = np.where(counts == 0)[0]
    rank = 0
    while current.size:
        ranks[current] = rank
        counts[current] = -1
        counts -= dom[current].sum(axis=0)
        current = np.where(counts == 0)[0]
        rank += 1
    return ranks


def crowding_distances(F: np.ndarray) -> np.ndarray:
    """NSGA-II crowding distance within one front (infinite at extremes)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n, k = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(k):
        order = np.argsort(F[:, j], kind="stable")
        fj = F[order, j]
        span = fj[-1] - fj[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (fj[2:] - fj[:-2]) / span
    return dist


@dataclass
class Individual:
    """Population member with its non-dominated rank and crowding distance."""

    input: np.ndarray
    objectives: np.ndarray
    rank: int = 0
    crowding: float = 0.0


def fast_non_dominated_sort(population: list[Individual]) -> list[list[Individual]]:
    """Partition a population into ranked fronts; sets rank and crowding."""
    if not population:
        raise ValueError("population must be non-empty")
    F = np.vstack([ind.objectives for ind in population])
    ranks = pareto_ranks(F)
    fronts: list[list[Individual]] = [[] for _ in range(ranks.max() + 1)]
    for ind, r in zip(population, ranks):
        ind.rank = int(r)
        fronts[r].append(ind)
    for front in fronts:
        dist = crowding_distances(np.vstack([ind.objectives for ind in front]))
        for ind, c in zip(front, dist):
            ind.crowding = float(c)
    return fronts


@dataclass(frozen=True)
class ParetoFrontSample:
    """A mutually non-dominated set of objective vectors.

    ``per_dim_max`` holds the componentwise maximum over the points; these are
    the truncation bounds used by the acquisition.
    """

    points: np.ndarray
    per_dim_max: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "per_dim_max", pts.max(axis=0))

    @property
    def size(self) -> int:
        return self.points.shape[0]


# ----------------------------------------------------------------------
# NSGA-II


def _tournament(rng, ranks, crowding, size):
    """Binary tournaments on (rank, crowding); index breaks exact ties."""
    a = rng.integers(0, size, size=size)
    b = rng.integers(0, size, size=size)
    a_wins = (ranks[a] < ranks[b]) | (
        (ranks[a] == ranks[b]) & (
            (crowding[a] > crowding[b]) | ((crowding[a] == crowding[b]) & (a <= b))
        )
    )
    return np.where(a_wins, a, b)


def _sbx_crossover(rng, parents, lower, upper, eta=15.0, prob=0.9):
    """Simulated binary crossover, vectorized over pairs and variables."""
    child = parents.copy()
    half = len(parents) // 2
    p1 = parents[:half]
    p2 = parents[half:2 * half]
    do_pair = rng.random(half) < prob
    do_var = rng.random(p1.shape) < 0.5
    u = rng.random(p1.shape)
    beta = np.where(u <= 0.5,
                    (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))
    mask = do_pair[:, None] & do_var
    c1 = np.where(mask, 0.5 * ((1 + beta) * p1 + (1 - beta) * p2), p1)
    c2 = np.where(mask, 0.5 * ((1 - beta) * p1 + (1 + beta) * p2), p2)
    child[:half] = c1
    child[half:2 * half] = c2
    return np.clip(child, lower, upper)


def _polynomial_mutation(rng, X, lower, upper, eta=20.0):
    """Polynomial mutation with per-variable probability 1/d."""
    n, d = X.shape
    span = upper - lower
    do = rng.random((n, d)) < (1.0 / d)
    u = rng.random((n, d))
    delta = np.where(u < 0.5,
                     (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
                     1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)))
    return np.clip(np.where(do, X + delta * span, X), lower, upper)


def _evaluate(objectives, X):
    return np.column_stack([np.asarray(f(X), dtype=float).ravel() for f in objectives])


def _select_survivors(F, pop_size):
    """Indices of the next generation by (rank asc, crowding desc, index asc)."""
    ranks = pareto_ranks(F)
    crowding = np.zeros(len(F))
    for r in range(ranks.max() + 1):
        idx = np.where(ranks == r)[0]
        crowding[idx] = crowding_distances(F[idx])
    neg_crowd = np.where(np.isinf(crowding), -np.inf, -crowding)
    order = np.lexsort((np.arange(len(F)), neg_crowd, ranks))
    return order[:pop_size], ranks, crowding


def nsga2_minimize(objectives, lower, upper, population_size: int = 100,
                   generations: int = 100, seed: int = 0) -> ParetoFrontSample:
    """Run NSGA-II over ``K`` cheap callables on a box domain.

    Each callable must map an ``(n, d)`` array to ``(n,)`` values.  Returns
    the mutually non-dominated archive of the final population, deterministic
    for a fixed seed.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise ValueError("domain box must have strictly positive volume")
    if population_size < 4 or generations < 1:
        raise ValueError("population_size >= 4 and generations >= 1 required")
    rng = np.random.default_rng(seed)
    d = lower.shape[0]
    X = rng.uniform(lower, upper, size=(population_size, d))
    F = _evaluate(objectives, X)
    ranks = pareto_ranks(F)
    crowding = np.zeros(population_size)
    for r in range(ranks.max() + 1):
        idx = np.where(ranks == r)[0]
        crowding[idx] = crowding_distances(F[idx])
    for _ in range(generations):
        parents = _tournament(rng, ranks, crowding, population_size)
        children = _sbx_crossover(rng, X[parents], lower, upper)
        children = _polynomial_mutation(rng, children, lower, upper)
        Fc = _evaluate(objectives, children)
        X_all = np.vstack([X, children])
        F_all = np.vstack([F, Fc])
        survivors, all_ranks, all_crowding = _select_survivors(F_all, population_size)
        X, F = X_all[survivors], F_all[survivors]
        # tournaments reuse the combined-population ranking, as in the
        # classical elitist formulation
        ranks, crowding = all_ranks[survivors], all_crowding[survivors]
    front = F[ranks == 0]
    front = np.unique(front, axis=0)  # also sorts rows lexicographically
    return ParetoFrontSample(points=front)
