"""Active learning of Glauber dynamics by entropy-guided choice of starting configurations.

Each round refits D-RISE on everything collected so far, scores every
possible starting configuration by the predicted entropy of the next update,
mixes that score with the uniform law and draws a mini-batch of queries.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import one_step_oracle
from .estimators import NeighborhoodEstimate, RegularizationConfig, SolverConfig, fit_drise, lambda_value
from .model import IsingModel, ModelError, all_configurations, model_stats
from .reconstruction import average_couplings, fit_all_nodes, structure_success, threshold_edges

MAX_QUERY_N = 20


class ActiveLearningError(RuntimeError):
    def __init__(self, round_index, cause):
        super().__init__(f"oracle failed in round {round_index}: {cause}")
        self.round_index = round_index


def _entropy_terms(A):
    # ln(2 cosh A) - A tanh A, written so that large |A| loses nothing
    a = np.abs(A)
    e = np.exp(-2.0 * a)
    return np.log1p(e) + 2.0 * a * e / (1.0 + e)


def glauber_entropy(model: IsingModel, sigma0) -> float:
    """Entropy (nats) of the spin produced by one Glauber update, summed over the chosen node."""
    s = np.asarray(sigma0, dtype=float)
    if s.shape != (model.n,):
        raise ModelError(f"configuration length {s.shape} != ({model.n},)")
    return math.fsum(_entropy_terms(model.J @ s + model.H))


def entropy_table(model: IsingModel, configs, chunk=1 << 16) -> np.ndarray:
    """``glauber_entropy`` for each row of ``configs``."""
    configs = np.asarray(configs)
    out = np.empty(configs.shape[0])
    for a in range(0, configs.shape[0], chunk):
        block = configs[a : a + chunk].astype(float)
        out[a : a + chunk] = _entropy_terms(block @ model.J + model.H).sum(axis=1)
    return out


def mixing_coefficient(sample_count: int) -> float:
    """``1 - sample_count**(-1/6)``; weight on the entropy-driven part of the query law."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    return 1.0 - 1.0 / float(np.cbrt(np.sqrt(float(sample_count))))


@dataclass(frozen=True)
class QueryDistribution:
    """Law over all ``2**n`` configurations, indexed as in :func:`all_configurations`."""

    n: int
    probs: np.ndarray
    entropies: np.ndarray = field(default=None, repr=False)

    @property
    def configs(self):
        return all_configurations(self.n)

    def decode(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        bits = (idx[:, None] >> np.arange(self.n - 1, -1, -1)) & 1
        return (2 * bits - 1).astype(np.int8)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` configurations drawn i.i.d. (with replacement)."""
        return self.decode(rng.choice(self.probs.shape[0], size=size, p=self.probs))


def build_query_distribution(model: IsingModel, mu: float) -> QueryDistribution:
    if model.n > MAX_QUERY_N:
        raise ModelError(f"query distribution enumerates 2^n states; n <= {MAX_QUERY_N} required")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    size = 1 << model.n
    S = entropy_table(model, all_configurations(model.n))
    total = S.sum()
    uniform = np.full(size, 1.0 / size)
    raw = S / total if total > 0 else uniform
    q = mu * raw + (1.0 - mu) * uniform
    q /= q.sum()
    return QueryDistribution(model.n, q, S)


@dataclass(frozen=True)
class ActiveConfig:
    """Budget and fitting settings.

    With ``initial_size`` unset the seed set holds ``initial_fraction`` of the
    total budget ``initial + i_max * m_b``.
    """

    i_max: int = 15
    m_b: int = 100
    initial_fraction: float = 1.0 / 3.0
    initial_size: int = None
    reg: RegularizationConfig = RegularizationConfig()
    solver: SolverConfig = SolverConfig()
    mu_override: float = None

    def __post_init__(self):
        if self.i_max < 1 or self.m_b < 1:
            raise ValueError("i_max and m_b must be >= 1")
        if not 0.0 < self.initial_fraction < 1.0:
            raise ValueError("initial_fraction must lie in (0, 1)")

    @classmethod
    def from_budget(cls, m: int, i_max: int = 15, initial_fraction: float = 1.0 / 3.0, **kw):
        """Seed set ``floor(m * initial_fraction)``; the rest split into ``i_max`` equal batches."""
        initial = int(math.floor(m * initial_fraction))
        m_b = (m - initial) // i_max
        if m_b < 1:
            raise ValueError(f"budget {m} too small for {i_max} mini-batches")
        return cls(i_max=i_max, m_b=m_b, initial_fraction=initial_fraction, initial_size=initial, **kw)

    @property
    def seed_size(self) -> int:
        if self.initial_size is not None:
            return int(self.initial_size)
        f = self.initial_fraction
        # tolerance so that f = 1/3 with 200 batch samples gives 100, not 99
        return max(1, int(math.floor(f / (1.0 - f) * self.i_max * self.m_b + 1e-9)))

    @property
    def total(self) -> int:
        return self.seed_size + self.i_max * self.m_b


def _fit(samples, cfg, init):
    # nodes never updated so far keep a zero row rather than aborting the loop
    counts = samples.per_node_counts
    if np.all(counts > 0):
        return fit_all_nodes(samples, cfg.reg, cfg.solver, "drise", init=init)
    out = []
    for u in range(samples.n):
        if counts[u] == 0:
            out.append(NeighborhoodEstimate(u, np.zeros(samples.n - 1), 0.0, float("nan"), 0, False))
        else:
            lam = lambda_value(cfg.reg, samples.n, int(counts[u]))
            out.append(fit_drise(samples, u, lam, cfg.solver, None if init is None else init.get(u)))
    return out


def estimate_model(estimates) -> IsingModel:
    """Symmetrised model used to score queries."""
    avg = average_couplings(estimates)
    H = np.zeros(avg.n)
    for e in estimates:
        H[e.node] = e.field
    return IsingModel(avg.n, avg.values, tuple(H))


def active_learn(oracle, config: ActiveConfig, rng: np.random.Generator, n: int, log=None):
    """Run the query loop; returns ``(estimates, samples)``.

    ``oracle(s0, rng)`` must answer a batch of starting configurations with an
    M-regime :class:`SampleSet`.  ``log`` may be a list (records appended) or
    a writable text file (one JSON line per round).
    """
    if n > MAX_QUERY_N:
        raise ModelError(f"active learning enumerates 2^n states; n <= {MAX_QUERY_N} required")
    s0 = (2 * rng.integers(0, 2, size=(config.seed_size, n), dtype=np.int8) - 1).astype(np.int8)
    try:
        X = oracle(s0, rng)
    except Exception as exc:
        raise ActiveLearningError(0, exc) from exc
    estimates = None
    for r in range(1, config.i_max + 1):
        init = None if estimates is None else {e.node: e.theta() for e in estimates}
        estimates = _fit(X, config, init)
        mu = mixing_coefficient(X.m) if config.mu_override is None else float(config.mu_override)
        q = build_query_distribution(estimate_model(estimates), mu)
        queries = q.sample(rng, config.m_b)
        try:
            batch = oracle(queries, rng)
        except Exception as exc:
            raise ActiveLearningError(r, exc) from exc
        if log is not None:
            rec = {
                "round": r,
                "samples": int(X.m),
                "mu": mu,
                "entropy_min": float(q.entropies.min()),
                "entropy_mean": float(q.entropies.mean()),
                "entropy_max": float(q.entropies.max()),
                "lambda": [float(e.lam) for e in estimates],
            }
            if isinstance(log, list):
                log.append(rec)
            else:
                log.write(json.dumps(rec) + "\n")
        X = X.concat(batch)
    init = {e.node: e.theta() for e in estimates}
    estimates = _fit(X, config, init)
    return estimates, X


def active_trial(model: IsingModel, m: int, rng: np.random.Generator, reg=RegularizationConfig(), solver=SolverConfig(), i_max=15, alpha=None):
    """One structure-recovery attempt with total budget ``m`` spent through :func:`active_learn`."""
    cfg = ActiveConfig.from_budget(m, i_max=i_max, reg=reg, solver=solver)
    estimates, X = active_learn(one_step_oracle(model), cfg, rng, model.n)
    if np.any(X.per_node_counts == 0):
        return False
    a = model_stats(model).alpha if alpha is None else alpha
    return structure_success(threshold_edges(average_couplings(estimates), a), model)


__all__ = [
    "ActiveConfig",
    "ActiveLearningError",
    "QueryDistribution",
    "glauber_entropy",
    "entropy_table",
    "mixing_coefficient",
    "build_query_distribution",
    "estimate_model",
    "active_learn",
    "active_trial",
]
