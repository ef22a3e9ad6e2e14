"""Pareto hypervolume (minimization convention) and PHV-difference.

Two objectives use an exact sorted sweep; three to six use the exact
exclusive-volume recursion; a Monte-Carlo estimator backs both as an
independent cross-check.  Front points that do not dominate the reference
point are excluded with a logged warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .moo import non_dominated_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HypervolumeResult:
    value: float
    reference_point: np.ndarray
    method: str


def _clean_front(front, reference):
    front = np.atleast_2d(np.asarray(front, dtype=float))
    reference = np.asarray(reference, dtype=float).ravel()
    if front.size == 0:
        return np.empty((0, len(reference))), reference
    if front.shape[1] != len(reference):
        raise ValueError("front and reference point disagree on the number of objectives")
    inside = np.all(front <= reference, axis=1)
    if not np.all(inside):
        log.warning("excluding %d front point(s) outside the reference box", int((~inside).sum()))
    front = front[inside]
    if front.shape[0]:
        front = front[non_dominated_mask(front)]
        front = np.unique(front, axis=0)
    return front, reference


def _hv_2d(front: np.ndarray, reference: np.ndarray) -> float:
    order = np.lexsort((front[:, 1], front[:, 0]))
    pts = front[order]
    hv = 0.0
    prev_f2 = reference[1]
    for f1, f2 in pts:
        if f2 < prev_f2:
            hv += (reference[0] - f1) * (prev_f2 - f2)
            prev_f2 = f2
    return hv


def _hv_recursive(front: np.ndarray, reference: np.ndarray) -> float:
    """Exclusive-volume recursion: sum over points of inclusive volume minus
    the hypervolume of the remaining points clipped to the point's box."""
    if front.shape[0] == 0:
        return 0.0
    if front.shape[0] == 1:
        return float(np.prod(reference - front[0]))
    order = np.argsort(front[:, 0], kind="stable")[::-1]
    pts = front[order]
    hv = 0.0
    for i in range(pts.shape[0]):
        p = pts[i]
        rest = pts[i + 1:]
        inclusive = float(np.prod(reference - p))
        if rest.shape[0]:
            limited = np.maximum(rest, p)
            limited = limited[non_dominated_mask(limited)]
            limited = np.unique(limited, axis=0)
            hv += inclusive - _hv_recursive(limited, reference)
        else:
            hv += inclusive
    return hv


def hypervolume(front, reference, method: str | None = None) -> HypervolumeResult:
    """Exact hypervolume of ``front`` with respect to ``reference``.

    ``method`` forces ``"exact-2d"`` or ``"recursive-nd"``; by default two
    objectives use the sweep and higher dimensions the recursion.
    """
    front, reference = _clean_front(front, reference)
    k = len(reference)
    if front.shape[0] == 0:
        log.warning("hypervolume of an empty front is 0")
        return HypervolumeResult(0.0, reference, method or ("exact-2d" if k == 2 else "recursive-nd"))
    if method is None:
        method = "exact-2d" if k == 2 else "recursive-nd"
    if method == "exact-2d":
        if k != 2:
            raise ValueError("exact-2d requires exactly two objectives")
        value = _hv_2d(front, reference)
    elif method == "recursive-nd":
        if k > 6:
            raise ValueError("exact recursion supported up to six objectives")
        value = _hv_recursive(front, reference)
    else:
        raise ValueError(f"unknown hypervolume method: {method}")
    return HypervolumeResult(float(value), reference, method)


def hypervolume_monte_carlo(front, reference, n_samples: int = 10**6,
                            seed: int = 0, chunk: int = 200_000) -> HypervolumeResult:
    """Domination-counting estimate: uniform samples in the bounding box."""
    front, reference = _clean_front(front, reference)
    if front.shape[0] == 0:
        return HypervolumeResult(0.0, reference, "monte-carlo")
    lower = front.min(axis=0)
    box = float(np.prod(reference - lower))
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = n_samples
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        pts = rng.uniform(lower, reference, size=(m, len(reference)))
        dominated = np.zeros(m, dtype=bool)
        for p in front:
            dominated |= np.all(pts >= p, axis=1)
        hits += int(dominated.sum())
    return HypervolumeResult(box * hits / n_samples, reference, "monte-carlo")


def phv_difference(recommended, reference_front, reference_point) -> float:
    """Hypervolume of the reference front minus that of the recommendation.

    Floored at zero; both volumes share ``reference_point``.
    """
    hv_ref = hypervolume(reference_front, reference_point).value
    hv_rec = hypervolume(recommended, reference_point).value
    return max(hv_ref - hv_rec, 0.0)
