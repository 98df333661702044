"""Turn per-node fits into a symmetric coupling estimate and an edge set."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SampleSet
from .estimators import (
    NoDataError,
    RegularizationConfig,
    SolverConfig,
    fit_node,
    lambda_value,
)
from .model import IsingModel, ModelError, _pair


@dataclass(frozen=True)
class CouplingMatrixEstimate:
    """Averaged couplings, one value per unordered pair ``i < j``."""

    n: int
    values: dict
    estimates: tuple = field(default=(), repr=False, compare=False)

    def get(self, i, j) -> float:
        return self.values.get(_pair(i, j), 0.0)

    def dense(self) -> np.ndarray:
        mat = np.zeros((self.n, self.n))
        for (i, j), v in self.values.items():
            mat[i, j] = mat[j, i] = v
        return mat

    def to_dict(self):
        return {"n": self.n, "couplings": [[i, j, v] for (i, j), v in sorted(self.values.items())]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n"]), {(int(i), int(j)): float(v) for i, j, v in d["couplings"]})


@dataclass(frozen=True)
class EdgeSetEstimate:
    edges: frozenset

    def __post_init__(self):
        clean = frozenset(_pair(i, j) for i, j in self.edges)
        object.__setattr__(self, "edges", clean)

    def __contains__(self, e):
        return _pair(*e) in self.edges

    def __len__(self):
        return len(self.edges)

    def sorted(self):
        return sorted(self.edges)

    def to_json(self) -> str:
        return json.dumps([list(e) for e in self.sorted()])

    @classmethod
    def from_json(cls, text):
        return cls(frozenset(tuple(e) for e in json.loads(text)))


def average_couplings(estimates) -> CouplingMatrixEstimate:
    """Symmetrise per-node fits: ``J_ij = (J_ij from node i + J_ji from node j) / 2``."""
    estimates = list(estimates)
    if not estimates:
        raise ModelError("no estimates supplied")
    n = len(estimates[0].couplings) + 1
    by_node = {}
    for est in estimates:
        if len(est.couplings) != n - 1:
            raise ModelError("estimates disagree on n")
        if est.node in by_node:
            raise ModelError(f"two estimates for node {est.node}")
        by_node[est.node] = est.full_couplings()
    missing = sorted(set(range(n)) - set(by_node))
    if missing:
        raise ModelError(f"missing estimate for node(s) {missing}")
    rows = np.stack([by_node[i] for i in range(n)])
    values = {}
    for i in range(n):
        for j in range(i + 1, n):
            values[(i, j)] = 0.5 * (rows[i, j] + rows[j, i])
    return CouplingMatrixEstimate(n, values, tuple(sorted(estimates, key=lambda e: e.node)))


def threshold_edges(est: CouplingMatrixEstimate, alpha: float) -> EdgeSetEstimate:
    """Keep pairs with ``|J| >= alpha / 2``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    cut = alpha / 2.0
    return EdgeSetEstimate(frozenset(e for e, v in est.values.items() if abs(v) >= cut))


def fit_all_nodes(
    samples: SampleSet,
    reg: RegularizationConfig = RegularizationConfig(),
    solver: SolverConfig = SolverConfig(),
    estimator: str = "drise",
    workers: int = 1,
    init=None,
    lambda_mode: str = "per_node",
):
    """One neighbourhood fit per node; ``lambda_mode="mean"`` uses ``m / n`` for every node."""
    n = samples.n
    counts = samples.per_node_counts
    for u in range(n):
        if counts[u] == 0:
            raise NoDataError(u)
    if lambda_mode == "per_node":
        lams = [lambda_value(reg, n, int(counts[u])) for u in range(n)]
    elif lambda_mode == "mean":
        lam = reg.c_lambda * math.sqrt(math.log(n**3 / reg.delta) / (samples.m / n))
        lams = [lam] * n
    else:
        raise ValueError(f"unknown lambda_mode {lambda_mode!r}")

    def one(u):
        start = None if init is None else init.get(u) if isinstance(init, dict) else init[u]
        return fit_node(samples, u, lams[u], estimator, solver, start)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(n)))
    return [one(u) for u in range(n)]


def learn_structure(
    samples: SampleSet,
    reg: RegularizationConfig = RegularizationConfig(),
    solver: SolverConfig = SolverConfig(),
    alpha: float = 0.4,
    estimator: str = "drise",
    workers: int = 1,
    init=None,
    lambda_mode: str = "per_node",
):
    """Fit every node, average and threshold.  Returns ``(edges, couplings)``."""
    estimates = fit_all_nodes(samples, reg, solver, estimator, workers, init, lambda_mode)
    couplings = average_couplings(estimates)
    return threshold_edges(couplings, alpha), couplings


def structure_success(est: EdgeSetEstimate, truth: IsingModel) -> bool:
    return est.edges == truth.edges


def edge_errors(est: EdgeSetEstimate, truth: IsingModel):
    """Diagnostic report: (missing edges, spurious edges)."""
    return sorted(truth.edges - est.edges), sorted(est.edges - truth.edges)


def info_theoretic_lower_bound(beta: float, d: float, alpha: float, n: float) -> float:
    """Sample count below which no method can recover the graph reliably."""
    if min(beta, d, alpha, n) <= 0:
        raise ValueError("all arguments must be positive")
    return math.exp(2 * beta * d / 3) / (32 * d * alpha * math.exp(d + 3 * beta + 6)) * n * math.log(n)


__all__ = [
    "CouplingMatrixEstimate",
    "EdgeSetEstimate",
    "average_couplings",
    "threshold_edges",
    "fit_all_nodes",
    "learn_structure",
    "structure_success",
    "edge_errors",
    "info_theoretic_lower_bound",
]
