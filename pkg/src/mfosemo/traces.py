"""Trace/aggregate file formats and run manifests.

A trace is one CSV per seed::

    iteration,cumulative_cost,fidelity_vector,x0,...,y0,...,phv_diff

with the fidelity vector dash-joined (``2-1``) and floats written as their
shortest round-trip decimal, so ``parse(emit(trace)) == trace`` exactly.  The
aggregate file carries mean/variance of log10 PHV-difference on a common cost
grid, recomputable from the traces alone.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .campaign import CampaignConfig, CampaignResult, EvaluationRecord
from .errors import ConfigurationError

PHV_FLOOR = 1e-12  # applied before log10 so exact zeros stay plottable


@dataclass
class Trace:
    iterations: np.ndarray
    costs: np.ndarray
    fidelity_vectors: list[tuple[int, ...]]
    inputs: np.ndarray
    outputs: np.ndarray
    phv_diff: np.ndarray

    def __eq__(self, other) -> bool:
        return (np.array_equal(self.iterations, other.iterations)
                and np.array_equal(self.costs, other.costs)
                and self.fidelity_vectors == other.fidelity_vectors
                and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.outputs, other.outputs)
                and np.array_equal(self.phv_diff, other.phv_diff))


def trace_from_result(result: CampaignResult) -> Trace:
    records = result.records
    return Trace(
        iterations=np.array([r.iteration for r in records], dtype=int),
        costs=np.array([r.cumulative_cost for r in records]),
        fidelity_vectors=[tuple(r.fidelity_vector.indices) for r in records],
        inputs=np.vstack([r.input for r in records]),
        outputs=np.vstack([r.outputs for r in records]),
        phv_diff=np.array(result.phv_trace),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(path: str, trace: Trace) -> None:
    d = trace.inputs.shape[1]
    k = trace.outputs.shape[1]
    header = (["iteration", "cumulative_cost", "fidelity_vector"]
              + [f"x{i}" for i in range(d)] + [f"y{j}" for j in range(k)] + ["phv_diff"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(trace.iterations)):
            row = [str(int(trace.iterations[i])), _fmt(trace.costs[i]),
                   "-".join(str(m) for m in trace.fidelity_vectors[i])]
            row += [_fmt(v) for v in trace.inputs[i]]
            row += [_fmt(v) for v in trace.outputs[i]]
            row.append(_fmt(trace.phv_diff[i]))
            writer.writerow(row)


def read_trace(path: str) -> Trace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("x"))
        k = sum(1 for h in header if h.startswith("y"))
        iters, costs, vecs, xs, ys, phv = [], [], [], [], [], []
        for row in reader:
            iters.append(int(row[0]))
            costs.append(float(row[1]))
            vecs.append(tuple(int(m) for m in row[2].split("-")))
            xs.append([float(v) for v in row[3:3 + d]])
            ys.append([float(v) for v in row[3 + d:3 + d + k]])
            phv.append(float(row[3 + d + k]))
    return Trace(np.array(iters, dtype=int), np.array(costs), vecs,
                 np.array(xs), np.array(ys), np.array(phv))


def step_values(costs: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Last observed value at or before each grid cost (step interpolation)."""
    idx = np.searchsorted(costs, grid, side="right") - 1
    idx = np.clip(idx, 0, len(values) - 1)
    return values[idx]


def aggregate_traces(traces: list[Trace], n_grid: int = 256):
    """Common cost grid with per-cost mean/variance of log10 PHV-difference."""
    if not traces:
        raise ConfigurationError("no traces to aggregate")
    start = max(t.costs[0] for t in traces)
    end = max(t.costs[-1] for t in traces)
    grid = np.linspace(start, end, n_grid)
    logs = np.vstack([
        np.log10(np.maximum(step_values(t.costs, t.phv_diff, grid), PHV_FLOOR))
        for t in traces])
    return grid, logs.mean(axis=0), logs.var(axis=0), len(traces)


def write_aggregate(path: str, grid, mean, var, n_seeds: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cost", "mean_log10_phv_diff", "var_log10_phv_diff", "n_seeds"])
        for c, m, v in zip(grid, mean, var):
            writer.writerow([_fmt(c), _fmt(m), _fmt(v), str(n_seeds)])


def read_aggregate(path: str):
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return data[:, 0], data[:, 1], data[:, 2], int(data[0, 3])


def first_crossing(costs: np.ndarray, phv: np.ndarray, threshold: float) -> float | None:
    """Earliest cumulative cost at which the PHV-difference reaches the threshold."""
    hits = np.where(phv <= threshold)[0]
    if hits.size == 0:
        return None
    return float(costs[hits[0]])


# ----------------------------------------------------------------------
# manifests


_CONFIG_ALIASES = {"budget": "total_budget", "grid_size": "candidate_grid_size"}
_MODES = ("mf", "sf")


@dataclass
class RunManifest:
    """A batch of campaigns: one problem, several seeds, one mode."""

    problem: str
    config: CampaignConfig
    seeds: list[int]
    out_dir: str
    mode: str = "mf"

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be unique")
        if self.mode not in _MODES:
            raise ConfigurationError(f"mode must be one of {_MODES}")
        self.config.validate()

    def to_dict(self) -> dict:
        payload = {"problem": self.problem, "seeds": list(self.seeds),
                   "mode": self.mode, "out": self.out_dir}
        cfg = dataclasses.asdict(self.config)
        cfg.pop("seed")  # per-campaign seeds come from `seeds`
        for alias, fieldname in _CONFIG_ALIASES.items():
            cfg[alias] = cfg.pop(fieldname)
        payload.update(cfg)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "RunManifest":
        payload = dict(payload)
        try:
            problem = payload.pop("problem")
        except KeyError:
            raise ConfigurationError("manifest is missing 'problem'")
        seeds = [int(s) for s in payload.pop("seeds", [0])]
        mode = str(payload.pop("mode", "mf")).lower()
        out_dir = payload.pop("out", None) or payload.pop("out_dir", None) or default_output_dir()
        for alias, fieldname in _CONFIG_ALIASES.items():
            if alias in payload:
                payload[fieldname] = payload.pop(alias)
        if "total_budget" not in payload:
            raise ConfigurationError("manifest is missing 'budget'")
        known = {f.name for f in dataclasses.fields(CampaignConfig)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(f"unknown manifest fields: {sorted(unknown)}")
        if "approximation" in payload:
            payload["approximation"] = str(payload["approximation"]).upper()
        config = CampaignConfig(**payload)
        manifest = cls(problem=problem, config=config, seeds=seeds, out_dir=out_dir, mode=mode)
        manifest.validate()
        return manifest

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"malformed manifest {path}: {exc}")
        return cls.from_dict(payload)


def default_output_dir() -> str:
    return os.environ.get("MFOSEMO_OUT", "mfosemo-runs")


def trace_filename(seed: int) -> str:
    return f"trace_seed{seed}.csv"
