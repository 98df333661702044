"""Sample-complexity protocols: m* search, beta sweeps and c_lambda selection.

m* is the smallest grid value of the total sample count m at which a run of
``consecutive_successes`` independent trials all recover the exact edge set.
The grid is geometric from ``m_min`` (default ``100 * n``); after the first
passing level one bisection step between it and the last failing level is
tried.  Every trial draws from its own stream keyed by
``(master_seed, beta, m, trial)``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .active import active_trial
from .dynamics import InitialDistribution, run_m_regime, run_t_regime
from .estimators import ESTIMATORS, RegularizationConfig, SolverConfig
from .model import TopologySpec, build_topology, model_stats
from .reconstruction import learn_structure, structure_success
from .seeding import stream

# Optimal prefactors per (family, regime, estimator)
DEFAULT_C_LAMBDA = {
    ("lattice", "T", "drise"): 0.1,
    ("lattice", "T", "drple"): 0.05,
    ("lattice", "M", "drise"): 0.1,
    ("lattice", "M", "drple"): 0.05,
    ("random_regular", "T", "drise"): 0.45,
    ("random_regular", "T", "drple"): 0.1,
    ("random_regular", "M", "drise"): 0.7,
    ("random_regular", "M", "drple"): 0.3,
}


def default_c_lambda(kind: str, regime: str, estimator: str) -> float:
    family = "lattice" if kind == "periodic_lattice" else kind
    return DEFAULT_C_LAMBDA[(family, regime, estimator)]


@dataclass(frozen=True)
class MStarSpec:
    topology: TopologySpec
    regime: str = "M"
    estimator: str = "drise"
    reg: RegularizationConfig = None
    consecutive_successes: int = 10
    grid_factor: float = 1.3
    m_min: int = None
    m_max: int = 10_000_000
    bisect: bool = True
    master_seed: int = 0
    solver: SolverConfig = SolverConfig()
    burn_in: int = 0
    method: str = "plain"  # or "active"
    active_rounds: int = 15
    workers: int = 1

    def __post_init__(self):
        if self.consecutive_successes < 1:
            raise ValueError("consecutive_successes must be >= 1")
        if not self.grid_factor > 1:
            raise ValueError("grid_factor must exceed 1")
        if self.regime not in ("T", "M"):
            raise ValueError("regime must be 'T' or 'M'")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.method not in ("plain", "active"):
            raise ValueError("method must be 'plain' or 'active'")
        if self.method == "active" and (self.regime != "M" or self.estimator != "drise"):
            raise ValueError("active learning runs D-RISE in the M regime")
        if self.reg is None:
            reg = RegularizationConfig(default_c_lambda(self.topology.kind, self.regime, self.estimator))
            object.__setattr__(self, "reg", reg)

    @property
    def start(self) -> int:
        return int(self.m_min) if self.m_min is not None else 100 * self.topology.node_count

    def grid(self):
        m = float(self.start)
        while True:
            v = int(math.ceil(m))
            if v > self.m_max:
                return
            yield v
            m *= self.grid_factor

    def with_beta(self, beta):
        return replace(self, topology=self.topology.with_beta(beta))

    def to_dict(self):
        d = asdict(self)
        d["topology"] = self.topology.to_dict()
        return d


@dataclass
class MStarResult:
    m_star: int | None
    found: bool
    n: int
    beta: float
    history: list = field(default_factory=list)
    trials_run: int = 0

    @property
    def m_i_mean(self) -> float:
        return float("nan") if self.m_star is None else self.m_star / self.n


class BoundedSearchFailure(RuntimeError):
    """Raised by callers that need every m* to exist."""


def trial_seed_keys(spec: MStarSpec, m: int, trial: int):
    return ("trial", float(spec.topology.beta_value), int(m), int(trial))


def run_trial(spec: MStarSpec, model, m: int, trial: int) -> bool:
    """One independent structure-recovery attempt at total sample size ``m``."""
    rng = stream(spec.master_seed, *trial_seed_keys(spec, m, trial))
    alpha = model_stats(model).alpha
    if spec.method == "active":
        return active_trial(model, m, rng, spec.reg, spec.solver, spec.active_rounds, alpha)
    p0 = InitialDistribution.uniform()
    if spec.regime == "M":
        samples = run_m_regime(model, p0, m, rng)
    else:
        samples = run_t_regime(model, p0, m, rng, burn_in=spec.burn_in)
    if np.any(samples.per_node_counts == 0):
        return False
    edges, _ = learn_structure(samples, spec.reg, spec.solver, alpha, spec.estimator)
    return structure_success(edges, model)


def _level(spec, model, m):
    """Run trials in order until one fails; returns (passed, trials run)."""
    k = spec.consecutive_successes
    if spec.workers <= 1:
        for t in range(k):
            if not run_trial(spec, model, m, t):
                return False, t + 1
        return True, k
    done = 0
    with ThreadPoolExecutor(spec.workers) as pool:
        while done < k:
            batch = range(done, min(k, done + spec.workers))
            results = list(pool.map(lambda t: run_trial(spec, model, m, t), batch))
            for t, ok in zip(batch, results):
                if not ok:
                    return False, t + 1
            done += len(batch)
    return True, k


def find_m_star(spec: MStarSpec, progress=None) -> MStarResult:
    model = build_topology(spec.topology)
    res = MStarResult(None, False, model.n, spec.topology.beta_value)
    last_fail = None
    for m in spec.grid():
        ok, ran = _level(spec, model, m)
        res.history.append({"m": m, "passed": ok, "trials": ran})
        res.trials_run += ran
        if progress:
            progress(m, ok, ran)
        if not ok:
            last_fail = m
            continue
        res.m_star, res.found = m, True
        if spec.bisect and last_fail is not None:
            mid = (last_fail + m) // 2
            if last_fail < mid < m:
                ok_mid, ran = _level(spec, model, mid)
                res.history.append({"m": mid, "passed": ok_mid, "trials": ran, "bisection": True})
                res.trials_run += ran
                if ok_mid:
                    res.m_star = mid
        return res
    return res


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ScalingResult:
    beta_values: list
    m_star_values: list
    d: int
    fitted_exponent: float = float("nan")
    intercept: float = float("nan")
    fit_residual: float = float("nan")
    fit_betas: list = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    @property
    def failures(self):
        return [b for b, m in zip(self.beta_values, self.m_star_values) if m is None]


def fit_exponent(betas, m_stars, d):
    """OLS of ``ln m*`` on ``d * beta``; returns (slope, intercept, rms residual)."""
    b = np.asarray(betas, dtype=float)
    y = np.asarray(m_stars, dtype=float)
    if b.shape != y.shape or b.size < 3:
        raise ValueError("need at least 3 (beta, m*) pairs")
    if np.any(y <= 0):
        raise ValueError("m* values must be positive")
    x = d * b
    if np.ptp(x) == 0:
        raise ValueError("all beta values are equal")
    X = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    resid = np.log(y) - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def upper_window(betas, min_points=3):
    """Top half of the sorted betas, at least ``min_points`` of them."""
    s = sorted(betas)
    k = max(min_points, int(math.ceil(len(s) / 2)))
    return s[-k:]


def beta_sweep(base: MStarSpec, betas, window=None, progress=None) -> ScalingResult:
    betas = [float(b) for b in betas]
    if len(betas) < 3:
        raise ValueError("a beta sweep needs at least 3 values")
    d = model_stats(build_topology(base.topology)).d
    results = [find_m_star(base.with_beta(b), progress) for b in betas]
    out = ScalingResult(betas, [r.m_star for r in results], d, results=results)
    win = set(upper_window(betas) if window is None else window)
    pts = [(b, r.m_star) for b, r in zip(betas, results) if b in win]
    out.fit_betas = [b for b, _ in pts]
    if all(m is not None for _, m in pts):
        out.fitted_exponent, out.intercept, out.fit_residual = fit_exponent([b for b, _ in pts], [m for _, m in pts], d)
    return out


def clambda_sweep(spec: MStarSpec, c_values, progress=None):
    """Return ``(best c, {c: MStarResult})``; unresolved searches count as +inf, ties go to the smaller c."""
    c_values = sorted(float(c) for c in c_values)
    if len(c_values) < 2:
        raise ValueError("need at least 2 candidate values")
    table = {}
    for c in c_values:
        table[c] = find_m_star(replace(spec, reg=replace(spec.reg, c_lambda=c)), progress)
    scored = [(math.inf if r.m_star is None else r.m_star, c) for c, r in table.items()]
    best_m, best_c = min(scored)
    return (None if math.isinf(best_m) else best_c), table


CSV_FIELDS = ["topology", "pattern", "regime", "estimator", "method", "c_lambda", "beta", "m_star", "m_i_mean", "trials"]


def sweep_rows(spec: MStarSpec, results):
    rows = []
    for r in results:
        rows.append(
            {
                "topology": spec.topology.kind,
                "pattern": spec.topology.pattern,
                "regime": spec.regime,
                "estimator": spec.estimator,
                "method": spec.method,
                "c_lambda": spec.reg.c_lambda,
                "beta": r.beta,
                "m_star": "" if r.m_star is None else r.m_star,
                "m_i_mean": "" if r.m_star is None else r.m_i_mean,
                "trials": r.trials_run,
            }
        )
    return rows


def write_csv(path, rows, fields=CSV_FIELDS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


__all__ = [
    "MStarSpec",
    "MStarResult",
    "ScalingResult",
    "BoundedSearchFailure",
    "DEFAULT_C_LAMBDA",
    "default_c_lambda",
    "find_m_star",
    "run_trial",
    "beta_sweep",
    "clambda_sweep",
    "fit_exponent",
    "upper_window",
    "sweep_rows",
    "write_csv",
]
