"""Glauber dynamics sampling in the single-trajectory (T) and multi-start (M) regimes.

Random-draw order, which the replay guarantees rely on:

* :func:`glauber_step` draws the node index, then one uniform for the spin.
* :func:`run_t_regime` draws the initial configuration, then all ``m`` node
  indices, then all ``m`` uniforms.
* :func:`run_m_regime` draws all ``m`` initial configurations, then the node
  indices, then the uniforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .model import IsingModel, ModelError

REGIMES = ("T", "M", "B")


class DynamicsError(ValueError):
    pass


class DynamicsSample(NamedTuple):
    sigma0: np.ndarray
    sigma1: np.ndarray
    updated_node: int


def conditional_prob(model: IsingModel, node: int, sigma, value: int) -> float:
    """Probability that ``node`` takes ``value`` after a Glauber update from ``sigma``."""
    if not 0 <= node < model.n:
        raise IndexError(f"node {node} out of range for n={model.n}")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (model.n,):
        raise ModelError("configuration length mismatch")
    h = model.J[node] @ sigma + model.H[node]
    return 1.0 / (1.0 + math.exp(-2.0 * value * h))


# ---------------------------------------------------------------------------
# initial distributions


@dataclass(frozen=True)
class InitialDistribution:
    """Law of the starting configuration ``sigma^0``.

    ``kind`` is one of ``uniform``, ``fixed`` (``config``), ``categorical``
    (``configs`` with ``probs``) or ``external`` (``sampler(rng, size, n)``
    returning an int array of shape ``(size, n)``).
    """

    kind: str = "uniform"
    config: tuple = None
    configs: np.ndarray = None
    probs: np.ndarray = None
    sampler: Callable = None

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def fixed(cls, sigma):
        return cls("fixed", config=tuple(int(s) for s in sigma))

    @classmethod
    def categorical(cls, configs, probs):
        configs = np.asarray(configs, dtype=np.int8)
        probs = np.asarray(probs, dtype=float)
        if configs.ndim != 2 or probs.shape != (configs.shape[0],):
            raise DynamicsError("categorical table needs one probability per configuration")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DynamicsError("categorical probabilities must be nonnegative and sum to 1")
        if not np.all(np.abs(configs) == 1):
            raise DynamicsError("categorical configurations must be +-1")
        return cls("categorical", configs=configs, probs=probs)

    @classmethod
    def external(cls, sampler):
        return cls("external", sampler=sampler)

    def sample(self, n: int, rng: np.random.Generator, size: int = None) -> np.ndarray:
        k = 1 if size is None else int(size)
        if self.kind == "uniform":
            out = (2 * rng.integers(0, 2, size=(k, n), dtype=np.int8) - 1).astype(np.int8)
        elif self.kind == "fixed":
            if len(self.config) != n:
                raise DynamicsError(f"fixed configuration has length {len(self.config)}, expected {n}")
            out = np.tile(np.asarray(self.config, dtype=np.int8), (k, 1))
        elif self.kind == "categorical":
            if self.configs.shape[1] != n:
                raise DynamicsError("categorical configurations have the wrong length")
            out = self.configs[rng.choice(len(self.probs), size=k, p=self.probs)]
        elif self.kind == "external":
            out = np.asarray(self.sampler(rng, k, n), dtype=np.int8).reshape(k, n)
        else:
            raise DynamicsError(f"unknown initial distribution {self.kind!r}")
        return out[0] if size is None else out


def sample_initial(p0: InitialDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    return p0.sample(n, rng)


# ---------------------------------------------------------------------------
# sample containers


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Ordered Glauber samples ``(sigma0[t], sigma1[t], nodes[t])``.

    Arrays are int8 spins of shape ``(m, n)`` and int64 node ids; they are
    marked read-only.  In the T regime ``s0``/``s1`` are offset views of a
    single trajectory.
    """

    s0: np.ndarray
    s1: np.ndarray
    nodes: np.ndarray
    regime: str
    n: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise DynamicsError(f"regime must be one of {REGIMES}")
        if self.s0.shape != self.s1.shape or self.s0.shape[1:] != (self.n,):
            raise DynamicsError("s0/s1 must both have shape (m, n)")
        if self.nodes.shape != (self.s0.shape[0],):
            raise DynamicsError("one node id per sample is required")
        for a in (self.s0, self.s1, self.nodes):
            a.flags.writeable = False

    @classmethod
    def from_trajectory(cls, traj, nodes, n=None):
        traj = np.asarray(traj, dtype=np.int8)
        return cls(traj[:-1], traj[1:], np.asarray(nodes, dtype=np.int64), "T", traj.shape[1] if n is None else n)

    @classmethod
    def from_arrays(cls, s0, s1, nodes, regime="M"):
        s0 = np.ascontiguousarray(s0, dtype=np.int8)
        s1 = np.ascontiguousarray(s1, dtype=np.int8)
        return cls(s0, s1, np.ascontiguousarray(nodes, dtype=np.int64), regime, s0.shape[1])

    @property
    def m(self) -> int:
        return int(self.nodes.shape[0])

    def __len__(self):
        return self.m

    def __getitem__(self, t) -> DynamicsSample:
        return DynamicsSample(self.s0[t], self.s1[t], int(self.nodes[t]))

    def __iter__(self):
        for t in range(self.m):
            yield self[t]

    @property
    def per_node_counts(self) -> np.ndarray:
        if "counts" not in self._cache:
            self._cache["counts"] = np.bincount(self.nodes, minlength=self.n)
        return self._cache["counts"]

    def node_rows(self, u: int) -> np.ndarray:
        key = ("rows", u)
        if key not in self._cache:
            self._cache[key] = np.flatnonzero(self.nodes == u)
        return self._cache[key]

    def node_design(self, u: int) -> np.ndarray:
        """``(n, m_u)`` int8 design for node ``u`` (see :mod:`isingdyn.kernels`)."""
        key = ("design", u)
        if key not in self._cache:
            rows = self.node_rows(u)
            y = self.s1[rows, u]
            Z = self.s0[rows] * y[:, None]
            Z[:, u] = y
            self._cache[key] = np.ascontiguousarray(Z.T, dtype=np.int8)
        return self._cache[key]

    def validate(self):
        """Check spins are +-1 and each sample changes at most the updated node."""
        if not (np.all(np.abs(self.s0) == 1) and np.all(np.abs(self.s1) == 1)):
            raise DynamicsError("spins must be +-1")
        if np.any((self.nodes < 0) | (self.nodes >= self.n)):
            raise DynamicsError("node id out of range")
        diff = self.s0 != self.s1
        diff[np.arange(self.m), self.nodes] = False
        if diff.any():
            raise DynamicsError(f"sample {int(np.argmax(diff.any(axis=1)))} changes a non-updated node")
        if self.regime == "T" and self.m > 1 and not np.array_equal(self.s0[1:], self.s1[:-1]):
            raise DynamicsError("T-regime samples are not chained")
        return self

    def concat(self, other: "SampleSet") -> "SampleSet":
        if other.n != self.n:
            raise DynamicsError("cannot join sample sets of different size")
        regime = self.regime if self.regime == other.regime == "M" else "B"
        return SampleSet.from_arrays(
            np.concatenate([self.s0, other.s0]),
            np.concatenate([self.s1, other.s1]),
            np.concatenate([self.nodes, other.nodes]),
            regime,
        )

    def subset(self, idx) -> "SampleSet":
        regime = "M" if self.regime != "T" else "B"
        return SampleSet.from_arrays(self.s0[idx], self.s1[idx], self.nodes[idx], regime)

    def relabel(self, perm) -> "SampleSet":
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return SampleSet.from_arrays(self.s0[:, inv], self.s1[:, inv], perm[self.nodes], self.regime if self.regime != "T" else "B")


# ---------------------------------------------------------------------------
# samplers


def _check_sigma(model, sigma):
    sigma = np.asarray(sigma, dtype=np.int8)
    if sigma.shape != (model.n,):
        raise ModelError(f"configuration length {sigma.shape} != ({model.n},)")
    return sigma


def glauber_step(model: IsingModel, sigma, rng: np.random.Generator) -> DynamicsSample:
    sigma = _check_sigma(model, sigma)
    node = int(rng.integers(0, model.n))
    u = rng.random()
    s1 = kernels.glauber_one_step(model.J, model.H, sigma[None, :], np.array([node]), np.array([u]))[0]
    return DynamicsSample(sigma.copy(), s1, node)


def run_t_regime(model: IsingModel, p0: InitialDistribution, m: int, rng: np.random.Generator, burn_in: int = 0) -> SampleSet:
    """One trajectory of ``m`` chained Glauber steps (after ``burn_in`` discarded steps)."""
    if m < 1:
        raise DynamicsError("m must be >= 1")
    s0 = p0.sample(model.n, rng)
    total = m + burn_in
    nodes = rng.integers(0, model.n, size=total)
    unif = rng.random(total)
    traj = kernels.glauber_chain(model.J, model.H, s0, nodes, unif)
    return SampleSet.from_trajectory(traj[burn_in:], nodes[burn_in:], model.n)


def run_m_regime(model: IsingModel, p0: InitialDistribution, m: int, rng: np.random.Generator) -> SampleSet:
    """``m`` independent single Glauber steps, each from a fresh ``sigma^0 ~ p0``."""
    if m < 1:
        raise DynamicsError("m must be >= 1")
    s0 = p0.sample(model.n, rng, size=m)
    nodes = rng.integers(0, model.n, size=m)
    unif = rng.random(m)
    s1 = kernels.glauber_one_step(model.J, model.H, s0, nodes, unif)
    return SampleSet(s0, s1, nodes, "M", model.n)


def run_batches(model: IsingModel, p0: InitialDistribution, batch_sizes, rng: np.random.Generator) -> SampleSet:
    """Independent restarts from ``p0``, batch ``r`` running ``batch_sizes[r]`` chained steps."""
    sizes = [int(b) for b in batch_sizes]
    if not sizes or min(sizes) < 1:
        raise DynamicsError("batch sizes must be positive")
    parts = [run_t_regime(model, p0, b, rng) for b in sizes]
    if len(parts) == 1:
        return parts[0]
    regime = "M" if max(sizes) == 1 else "B"
    return SampleSet.from_arrays(
        np.concatenate([p.s0 for p in parts]),
        np.concatenate([p.s1 for p in parts]),
        np.concatenate([p.nodes for p in parts]),
        regime,
    )


def one_step_oracle(model: IsingModel):
    """Query handle answering M-regime queries: ``oracle(s0_batch, rng) -> SampleSet``."""

    def oracle(s0, rng):
        s0 = np.ascontiguousarray(s0, dtype=np.int8)
        nodes = rng.integers(0, model.n, size=s0.shape[0])
        unif = rng.random(s0.shape[0])
        s1 = kernels.glauber_one_step(model.J, model.H, s0, nodes, unif)
        return SampleSet(s0, s1, nodes, "M", model.n)

    return oracle
