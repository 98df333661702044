"""Spike-train pipeline: binning, single-flip sample extraction, correlations, gap thresholding."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import InitialDistribution, SampleSet
from .model import IsingModel


class NeuralDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpikeRaster:
    """Binned activity: ``spins[i, t] = +1`` iff neuron ``i`` fired in bin ``t``."""

    spins: np.ndarray
    bin_ms: float = 20.0

    def __post_init__(self):
        s = np.asarray(self.spins, dtype=np.int8)
        if s.ndim != 2 or not np.all(np.abs(s) == 1):
            raise NeuralDataError("raster must be a 2-d array of +-1")
        if not self.bin_ms > 0:
            raise NeuralDataError("bin width must be positive")
        s.flags.writeable = False
        object.__setattr__(self, "spins", s)

    @property
    def n_neurons(self) -> int:
        return self.spins.shape[0]

    @property
    def n_bins(self) -> int:
        return self.spins.shape[1]


def bin_spikes(spike_times, duration_ms: float, bin_ms: float = 20.0) -> SpikeRaster:
    """Binarise per-neuron sorted spike times; several spikes in a bin count once."""
    if not bin_ms > 0 or not duration_ms > 0:
        raise NeuralDataError("duration and bin width must be positive")
    n_bins = int(math.ceil(duration_ms / bin_ms))
    spins = -np.ones((len(spike_times), n_bins), dtype=np.int8)
    for i, times in enumerate(spike_times):
        t = np.asarray(times, dtype=float)
        if t.size == 0:
            continue
        if np.any(np.diff(t) < 0):
            raise NeuralDataError(f"spike times of neuron {i} are not sorted")
        if t[0] < 0 or t[-1] >= duration_ms:
            raise NeuralDataError(f"spike time of neuron {i} outside [0, {duration_ms})")
        spins[i, np.minimum((t // bin_ms).astype(np.int64), n_bins - 1)] = 1
    return SpikeRaster(spins, bin_ms)


def read_spike_csv(path, neurons=None):
    """Read ``neuron_id,time_ms`` rows.  Returns (neuron ids, per-neuron sorted times).

    ``neurons`` restricts and orders the output; otherwise all ids found are
    used in ascending order.  A header row is skipped if present.
    """
    events = {}
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                nid, t = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                if k == 0:
                    continue
                raise NeuralDataError(f"malformed spike row {k + 1}: {row}")
            events.setdefault(nid, []).append(t)
    ids = sorted(events) if neurons is None else [int(x) for x in neurons]
    return ids, [np.sort(np.asarray(events.get(i, []), dtype=float)) for i in ids]


def read_raster_csv(path, bin_ms: float = 20.0) -> SpikeRaster:
    """Pre-binned raster: one row per neuron, one comma-separated +-1 column per bin."""
    try:
        spins = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise NeuralDataError(f"{path}: not a +-1 matrix ({exc})") from exc
    if not np.all(np.abs(spins) == 1):
        raise NeuralDataError(f"{path}: entries must be +-1")
    return SpikeRaster(spins.astype(np.int8), bin_ms)


# ---------------------------------------------------------------------------
# sample extraction


def flip_counts(raster: SpikeRaster) -> np.ndarray:
    """Number of neurons changing sign between each pair of adjacent bins."""
    return np.count_nonzero(raster.spins[:, 1:] != raster.spins[:, :-1], axis=0)


def extract_single_flip_samples(raster: SpikeRaster) -> SampleSet:
    """Adjacent-bin pairs where exactly one neuron flips, as M-regime samples."""
    if raster.n_bins < 2:
        raise NeuralDataError("need at least two bins")
    s = raster.spins
    keep = np.flatnonzero(flip_counts(raster) == 1)
    s0 = s[:, keep].T
    s1 = s[:, keep + 1].T
    nodes = np.argmax(s0 != s1, axis=1)
    return SampleSet.from_arrays(s0, s1, nodes, "M")


def extraction_report(raster: SpikeRaster) -> dict:
    fc = flip_counts(raster)
    return {
        "bins": int(raster.n_bins),
        "pairs": int(fc.size),
        "extracted": int(np.count_nonzero(fc == 1)),
        "skipped_no_flip": int(np.count_nonzero(fc == 0)),
        "skipped_multi_flip": int(np.count_nonzero(fc > 1)),
    }


# ---------------------------------------------------------------------------
# correlations


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    values: np.ndarray
    zero_variance: tuple = ()

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    def to_dict(self):
        return {"n": self.n, "values": self.values.tolist(), "zero_variance": list(self.zero_variance)}

    def to_json(self):
        return json.dumps(self.to_dict())


def _pearson(X, Y):
    # columns of X against columns of Y; rows are observations
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    sx = np.sqrt((Xc**2).mean(axis=0))
    sy = np.sqrt((Yc**2).mean(axis=0))
    cov = Xc.T @ Yc / X.shape[0]
    denom = np.outer(sx, sy)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(c, -1.0, 1.0), sx == 0, sy == 0


def iid_correlations(raster: SpikeRaster) -> CorrelationMatrix:
    """Same-bin correlations with every bin treated as an independent draw."""
    if raster.n_bins < 2:
        raise NeuralDataError("need at least two bins")
    c, zx, _ = _pearson(raster.spins.T, raster.spins.T)
    idx = np.flatnonzero(~zx)
    c[idx, idx] = 1.0
    return CorrelationMatrix(c, tuple(int(i) for i in np.flatnonzero(zx)))


def time_correlations(samples: SampleSet) -> CorrelationMatrix:
    """``Corr(sigma_i^0, sigma_j^1)`` across samples."""
    if samples.m < 2:
        raise NeuralDataError("need at least two samples")
    c, zx, zy = _pearson(samples.s0, samples.s1)
    flagged = sorted(set(np.flatnonzero(zx)) | set(np.flatnonzero(zy)))
    return CorrelationMatrix(c, tuple(int(i) for i in flagged))


def frobenius_relative_diff(a, b) -> float:
    A = a.values if isinstance(a, CorrelationMatrix) else np.asarray(a, dtype=float)
    B = b.values if isinstance(b, CorrelationMatrix) else np.asarray(b, dtype=float)
    if A.shape != B.shape:
        raise ValueError("matrices differ in shape")
    nb = np.linalg.norm(B)
    if nb == 0:
        raise ValueError("reference matrix has zero norm")
    return float(np.linalg.norm(A - B) / nb)


# ---------------------------------------------------------------------------
# prediction from a fitted model


@dataclass(frozen=True)
class EmpiricalContext:
    p0: InitialDistribution
    p_node: np.ndarray

    @property
    def n(self) -> int:
        return self.p0.configs.shape[1]


def empirical_context(samples: SampleSet) -> EmpiricalContext:
    """Observed frequencies of starting configurations and of updated nodes."""
    if samples.m < 1:
        raise NeuralDataError("empty sample set")
    configs, counts = np.unique(samples.s0, axis=0, return_counts=True)
    probs = counts / counts.sum()
    probs = probs / probs.sum()
    p_node = samples.per_node_counts / samples.m
    return EmpiricalContext(InitialDistribution.categorical(configs, probs), p_node)


class NoFlipError(NeuralDataError):
    pass


def simulate_flip_samples(model: IsingModel, ctx: EmpiricalContext, m_sim: int, rng: np.random.Generator) -> SampleSet:
    """``m_sim`` one-step updates with ``sigma^0 ~ p0`` and ``I ~ p_node`` drawn independently; flips kept."""
    if m_sim < 1:
        raise ValueError("m_sim must be >= 1")
    s0 = ctx.p0.sample(model.n, rng, size=m_sim)
    nodes = rng.choice(model.n, size=m_sim, p=ctx.p_node)
    unif = rng.random(m_sim)
    s1 = kernels.glauber_one_step(model.J, model.H, s0, nodes, unif)
    rows = np.arange(m_sim)
    keep = s1[rows, nodes] != s0[rows, nodes]
    if not keep.any():
        raise NoFlipError(f"no flips among {m_sim} simulated updates; increase m_sim")
    return SampleSet.from_arrays(s0[keep], s1[keep], nodes[keep], "M")


def predict_time_correlations(model: IsingModel, ctx: EmpiricalContext, m_sim: int, rng: np.random.Generator) -> CorrelationMatrix:
    sim = simulate_flip_samples(model, ctx, m_sim, rng)
    if sim.m < 2:
        raise NoFlipError(f"only {sim.m} flip among {m_sim} simulated updates; increase m_sim")
    return time_correlations(sim)


# ---------------------------------------------------------------------------
# thresholding


@dataclass(frozen=True)
class GapResult:
    threshold: float
    found: bool
    lower_count: int = 0

    def classify(self, values):
        """True where a coupling survives (``|J| >= threshold``)."""
        return np.abs(np.asarray(values, dtype=float)) >= self.threshold


def gap_threshold(couplings, override: float = None, min_lower: int = 3, min_rel_gap: float = 0.1) -> GapResult:
    """Cut-off at the first clear gap in the sorted magnitudes.

    Scanning ``a_1 <= a_2 <= ...`` (the sorted ``|J|``), the first ``k >=
    min_lower`` is taken where ``a_k > 0``, ``a_{k+1} >= 2 a_k``, the gap
    ``a_{k+1} - a_k`` is at least twice every spacing below it (counting
    ``a_1 - 0``) and at least ``min_rel_gap`` times the largest magnitude.
    The threshold is the midpoint of that gap.  When nothing qualifies the
    threshold is 0 and a warning is issued.
    """
    if override is not None:
        return GapResult(float(override), True)
    a = np.sort(np.abs(np.asarray(couplings, dtype=float)))
    if a.size < 2:
        raise ValueError("need at least two values")
    spacings = np.diff(np.concatenate([[0.0], a]))
    running = np.maximum.accumulate(spacings)
    floor = min_rel_gap * a[-1]
    for k in range(max(min_lower, 1), a.size):
        lo, hi = a[k - 1], a[k]
        gap = hi - lo
        if lo > 0 and hi >= 2 * lo and gap >= 2 * running[k - 1] and gap >= floor:
            return GapResult(0.5 * (lo + hi), True, k)
    warnings.warn("no gap found among coupling magnitudes; nothing thresholded", RuntimeWarning, stacklevel=2)
    return GapResult(0.0, False)


# ---------------------------------------------------------------------------
# synthetic fixture


def synthetic_raster(model: IsingModel, episodes: int, rng: np.random.Generator, bin_ms: float = 20.0) -> SpikeRaster:
    """Raster of back-to-back restart episodes: a uniform column then one Glauber update.

    A fresh start is redrawn while it differs from the previous column in
    exactly one neuron, so that episode boundaries never masquerade as
    single-flip updates.
    """
    n = model.n
    s0 = (2 * rng.integers(0, 2, size=(episodes, n), dtype=np.int8) - 1).astype(np.int8)
    nodes = rng.integers(0, n, size=episodes)
    unif = rng.random(episodes)
    s1 = kernels.glauber_one_step(model.J, model.H, s0, nodes, unif)
    while True:
        bad = 1 + np.flatnonzero(np.count_nonzero(s0[1:] != s1[:-1], axis=1) == 1)
        if bad.size == 0:
            break
        s0[bad] = (2 * rng.integers(0, 2, size=(bad.size, n), dtype=np.int8) - 1).astype(np.int8)
        s1[bad] = kernels.glauber_one_step(model.J, model.H, s0[bad], nodes[bad], unif[bad])
    cols = np.empty((2 * episodes, n), dtype=np.int8)
    cols[0::2] = s0
    cols[1::2] = s1
    return SpikeRaster(cols.T.copy(), bin_ms)


__all__ = [
    "SpikeRaster",
    "CorrelationMatrix",
    "EmpiricalContext",
    "GapResult",
    "NeuralDataError",
    "NoFlipError",
    "bin_spikes",
    "read_spike_csv",
    "read_raster_csv",
    "flip_counts",
    "extract_single_flip_samples",
    "extraction_report",
    "iid_correlations",
    "time_correlations",
    "frobenius_relative_diff",
    "empirical_context",
    "simulate_flip_samples",
    "predict_time_correlations",
    "gap_threshold",
    "synthetic_raster",
]
