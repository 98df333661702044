"""Ising models, the benchmark topologies and brute-force equilibrium oracles."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Mapping

import numpy as np

from .seeding import stream

MAX_ENUMERATION_N = 24


class ModelError(ValueError):
    pass


def _pair(i, j):
    i, j = int(i), int(j)
    if i == j:
        raise ModelError(f"self-loop on node {i}")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class IsingModel:
    """Pairwise binary model; couplings stored once per unordered pair ``i < j``."""

    n: int
    couplings: Mapping[tuple, float]
    fields: tuple = None

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("n must be positive")
        clean = {}
        for (i, j), v in dict(self.couplings).items():
            key = _pair(i, j)
            if not (0 <= key[0] and key[1] < self.n):
                raise ModelError(f"edge {key} out of range for n={self.n}")
            v = float(v)
            if not np.isfinite(v):
                raise ModelError(f"non-finite coupling on {key}")
            if v == 0.0:
                continue
            if key in clean:
                raise ModelError(f"duplicate edge {key}")
            clean[key] = v
        object.__setattr__(self, "couplings", dict(sorted(clean.items())))
        h = np.zeros(self.n) if self.fields is None else np.asarray(self.fields, dtype=float)
        if h.shape != (self.n,) or not np.all(np.isfinite(h)):
            raise ModelError("fields must be a finite vector of length n")
        object.__setattr__(self, "fields", tuple(float(x) for x in h))

    @cached_property
    def J(self) -> np.ndarray:
        """Dense symmetric coupling matrix (read-only)."""
        mat = np.zeros((self.n, self.n))
        for (i, j), v in self.couplings.items():
            mat[i, j] = mat[j, i] = v
        mat.flags.writeable = False
        return mat

    @cached_property
    def H(self) -> np.ndarray:
        h = np.array(self.fields, dtype=float)
        h.flags.writeable = False
        return h

    @property
    def edges(self) -> frozenset:
        return frozenset(self.couplings)

    def neighbors(self, i):
        return [j for j in range(self.n) if self.J[i, j] != 0.0]

    def degree(self, i):
        return len(self.neighbors(i))

    @classmethod
    def from_dense(cls, J, H=None, atol=0.0):
        J = np.asarray(J, dtype=float)
        n = J.shape[0]
        if J.shape != (n, n) or not np.allclose(J, J.T):
            raise ModelError("coupling matrix must be square and symmetric")
        edges = {(i, j): J[i, j] for i in range(n) for j in range(i + 1, n) if abs(J[i, j]) > atol}
        return cls(n, edges, None if H is None else tuple(H))

    def relabel(self, perm):
        """Model with node ``i`` renamed ``perm[i]``."""
        perm = [int(p) for p in perm]
        H = np.empty(self.n)
        H[perm] = self.H
        return IsingModel(self.n, {(perm[i], perm[j]): v for (i, j), v in self.couplings.items()}, tuple(H))

    # -- serialisation ----------------------------------------------------
    def to_dict(self):
        return {
            "n": self.n,
            "edges": [[i, j, v] for (i, j), v in self.couplings.items()],
            "fields": list(self.fields),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        try:
            n = int(d["n"])
            edges = {}
            for i, j, v in d["edges"]:
                if not int(i) < int(j):
                    raise ModelError(f"edge [{i}, {j}] violates i < j")
                edges[(int(i), int(j))] = float(v)
            fields = d.get("fields")
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc}") from exc
        return cls(n, edges, None if fields is None else tuple(fields))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ModelStats:
    alpha: float
    beta: float
    d: int


def model_stats(model: IsingModel) -> ModelStats:
    if not model.couplings:
        raise ModelError("model has no edges")
    mags = np.abs(list(model.couplings.values()))
    deg = np.count_nonzero(model.J, axis=1)
    return ModelStats(alpha=float(mags.min()), beta=float(mags.max()), d=int(deg.max()))


# ---------------------------------------------------------------------------
# topologies


@dataclass(frozen=True)
class TopologySpec:
    """Benchmark graph family plus coupling pattern.

    ``kind`` is ``"periodic_lattice"`` (``rows`` x ``cols`` torus) or
    ``"random_regular"`` (``n`` nodes of degree ``degree``).  ``pattern`` is
    ``"ferromagnetic"``, ``"spin_glass"`` or ``"ferro_with_impurity"``.
    Every edge gets magnitude ``beta_value`` except ``impurity_edges``, which
    get ``alpha_value``.  When ``impurity_edges`` is None a single weak edge is
    placed on the first edge of the generated graph (``(0, 1)`` on lattices).
    """

    kind: str
    pattern: str = "ferromagnetic"
    beta_value: float = 0.4
    alpha_value: float = 0.4
    rows: int = 4
    cols: int = 4
    n: int = 16
    degree: int = 3
    seed: int = 0
    impurity_edges: tuple = None

    @property
    def node_count(self):
        return self.rows * self.cols if self.kind == "periodic_lattice" else self.n

    def with_beta(self, beta):
        return replace(self, beta_value=float(beta))

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if self.impurity_edges is not None:
            d["impurity_edges"] = [list(e) for e in self.impurity_edges]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ModelError(f"unknown topology fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ModelError("topology.kind is required")
        if d.get("impurity_edges") is not None:
            d["impurity_edges"] = tuple(tuple(int(x) for x in e) for e in d["impurity_edges"])
        return cls(**d)


def lattice_edges(rows, cols):
    if rows < 3 or cols < 3:
        raise ModelError("periodic lattice needs rows, cols >= 3 to avoid double edges")
    edges = set()
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            edges.add(_pair(s, r * cols + (c + 1) % cols))
            edges.add(_pair(s, ((r + 1) % rows) * cols + c))
    return sorted(edges)


def random_regular_edges(n, degree, rng, max_tries=10_000):
    """Configuration-model pairing, rejecting self-loops and multi-edges."""
    if degree < 1 or degree >= n or (n * degree) % 2:
        raise ModelError(f"no simple {degree}-regular graph on {n} nodes")
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(max_tries):
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        edges = {_pair(a, b) for a, b in pairs}
        if len(edges) == len(pairs):
            return sorted(edges)
    raise ModelError("random regular pairing did not produce a simple graph")


PATTERNS = ("ferromagnetic", "spin_glass", "ferro_with_impurity")


def build_topology(spec: TopologySpec) -> IsingModel:
    if spec.pattern not in PATTERNS:
        raise ModelError(f"unknown pattern {spec.pattern!r}")
    if spec.kind == "periodic_lattice":
        edges = lattice_edges(spec.rows, spec.cols)
        n = spec.rows * spec.cols
    elif spec.kind == "random_regular":
        edges = random_regular_edges(spec.n, spec.degree, stream(spec.seed, "graph"))
        n = spec.n
    else:
        raise ModelError(f"unknown topology kind {spec.kind!r}")

    weak = [edges[0]] if spec.impurity_edges is None else [_pair(*e) for e in spec.impurity_edges]
    missing = set(weak) - set(edges)
    if missing:
        raise ModelError(f"impurity edges not in graph: {sorted(missing)}")

    if spec.pattern == "spin_glass":
        signs = np.where(stream(spec.seed, "signs").random(len(edges)) < 0.5, -1.0, 1.0)
    else:
        signs = np.ones(len(edges))
    weak = set(weak)
    couplings = {}
    for e, s in zip(edges, signs):
        if e in weak:
            sign = -1.0 if spec.pattern == "ferro_with_impurity" else s
            couplings[e] = sign * spec.alpha_value
        else:
            couplings[e] = s * spec.beta_value
    return IsingModel(n, couplings)


# ---------------------------------------------------------------------------
# equilibrium oracles


def _as_spins(model, sigma):
    sigma = np.asarray(sigma)
    if sigma.shape[-1] != model.n:
        raise ModelError(f"configuration length {sigma.shape[-1]} != n={model.n}")
    return sigma


def energy_exponent(model: IsingModel, sigma) -> np.ndarray:
    """``sum_{ij} J_ij s_i s_j + sum_i H_i s_i`` for one or many configurations."""
    s = _as_spins(model, sigma).astype(float)
    return 0.5 * np.einsum("...i,ij,...j->...", s, model.J, s) + s @ model.H


def gibbs_weight(model: IsingModel, sigma) -> float:
    return float(np.exp(energy_exponent(model, sigma)))


def all_configurations(n) -> np.ndarray:
    """All 2^n spin vectors as an int8 array, first spin varying slowest."""
    if n > MAX_ENUMERATION_N:
        raise ModelError(f"enumeration limited to n <= {MAX_ENUMERATION_N}")
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return (2 * bits - 1).astype(np.int8)


def exact_partition_function(model: IsingModel, chunk_bits=16) -> float:
    n = model.n
    if n > MAX_ENUMERATION_N:
        raise ModelError(f"exhaustive enumeration limited to n <= {MAX_ENUMERATION_N}")
    low = min(n, chunk_bits)
    tail = all_configurations(low)
    total = 0.0
    for head in itertools.product((-1, 1), repeat=n - low):
        block = np.empty((tail.shape[0], n), dtype=np.int8)
        block[:, : n - low] = head
        block[:, n - low :] = tail
        total += float(np.exp(energy_exponent(model, block)).sum())
    return total


def gibbs_distribution(model: IsingModel):
    """(configurations, probabilities) by brute force; small n only."""
    confs = all_configurations(model.n)
    logw = energy_exponent(model, confs)
    p = np.exp(logw - logw.max())
    return confs, p / p.sum()
