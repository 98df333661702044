"""D-RISE and D-RPLE: l1-regularised per-node estimators on Glauber samples.

Parameters for node ``u`` are handled internally as a length-``n`` vector
``theta`` whose entry ``u`` is the field ``H_u`` and whose other entries are
the couplings ``J_uj``.  Public functions take and return couplings as
length ``n - 1`` vectors ordered by ``j`` with ``u`` skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import SampleSet
from .model import IsingModel, ModelError
from .seeding import stream

ESTIMATORS = ("drise", "drple")
METHODS = ("coordinate_descent", "proximal_gradient")


class NoDataError(ValueError):
    """A node was never updated, so its objective is undefined."""

    def __init__(self, node):
        super().__init__(f"node {node} has no updates in the sample set")
        self.node = node


@dataclass(frozen=True)
class RegularizationConfig:
    c_lambda: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        if not self.c_lambda > 0:
            raise ValueError("c_lambda must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "coordinate_descent"
    tolerance: float = 1e-6
    max_iterations: int = 100_000
    cd_clamp: float = 30.0
    shuffle: bool = True
    seed: int = 0
    record_history: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class NeighborhoodEstimate:
    node: int
    couplings: np.ndarray
    field: float
    objective_value: float
    iterations: int
    converged: bool
    residual: float = float("nan")
    lam: float = 0.0
    estimator: str = "drise"
    clamped_exponents: int = 0
    history: list = field(default=None, repr=False)

    def full_couplings(self) -> np.ndarray:
        """Length-``n`` row with a zero at the node itself."""
        return np.insert(np.asarray(self.couplings, dtype=float), self.node, 0.0)

    def theta(self) -> np.ndarray:
        return np.insert(np.asarray(self.couplings, dtype=float), self.node, self.field)

    def to_dict(self):
        return {
            "u": int(self.node),
            "J": [float(x) for x in self.couplings],
            "H": float(self.field),
            "objective": float(self.objective_value),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            node=int(d["u"]),
            couplings=np.asarray(d["J"], dtype=float),
            field=float(d["H"]),
            objective_value=float(d["objective"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
        )


def lambda_value(config: RegularizationConfig, n: int, m_u: int) -> float:
    """``c_lambda * sqrt(log(n^2 / delta') / m_u)`` with ``delta' = delta / n``."""
    if m_u < 1:
        raise NoDataError(None)
    delta_node = config.delta / n
    return config.c_lambda * math.sqrt(math.log(n * n / delta_node) / m_u)


# ---------------------------------------------------------------------------
# objectives


def _design(samples: SampleSet, u: int):
    if not 0 <= u < samples.n:
        raise IndexError(f"node {u} out of range")
    ZT = samples.node_design(u)
    if ZT.shape[1] == 0:
        raise NoDataError(u)
    return ZT


def _to_theta(u, J_u, H_u, n):
    J_u = np.asarray(J_u, dtype=float)
    if J_u.shape != (n - 1,):
        raise ModelError(f"expected {n - 1} couplings for node {u}, got {J_u.shape}")
    return np.insert(J_u, u, float(H_u))


def _theta_grad_to_public(g, u):
    # couplings first (j != u, ascending), field last
    return np.append(np.delete(g, u), g[u])


def _iso_value_grad(ZT, theta):
    Zf = ZT.astype(np.float64)
    expo = -(theta @ Zf)
    clamped = int(np.count_nonzero(np.abs(expo) > kernels.EXP_CLAMP))
    w = np.exp(np.clip(expo, -kernels.EXP_CLAMP, kernels.EXP_CLAMP))
    return float(w.mean()), -(Zf @ w) / Zf.shape[1], clamped


def d_iso_value(samples: SampleSet, u: int, J_u, H_u) -> float:
    """Dynamic interaction screening objective for node ``u``."""
    ZT = _design(samples, u)
    return _iso_value_grad(ZT, _to_theta(u, J_u, H_u, samples.n))[0]


def d_iso_gradient(samples: SampleSet, u: int, J_u, H_u) -> np.ndarray:
    ZT = _design(samples, u)
    g = _iso_value_grad(ZT, _to_theta(u, J_u, H_u, samples.n))[1]
    return _theta_grad_to_public(g, u)


def d_pl_value(samples: SampleSet, u: int, J_u, H_u) -> float:
    """Negative mean conditional log-likelihood of the observed updates at ``u``.

    Ranges over ``[-log 2, inf)``; zero at ``J_u = 0, H_u = 0``.
    """
    ZT = _design(samples, u)
    return kernels.dpl_value(ZT, _to_theta(u, J_u, H_u, samples.n))


def d_pl_gradient(samples: SampleSet, u: int, J_u, H_u) -> np.ndarray:
    ZT = _design(samples, u)
    g = kernels.dpl_value_grad(ZT, _to_theta(u, J_u, H_u, samples.n))[1]
    return _theta_grad_to_public(g, u)


# ---------------------------------------------------------------------------
# solvers


def cd_coordinate_minimum(a: float, b: float, mu: float, clamp: float = 30.0) -> float:
    """Minimiser of ``a cosh x - b sinh x + a mu |x|``, i.e. of ``cosh x - (b/a) sinh x + mu |x|``."""
    if not a > 0:
        raise ValueError("a must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    return kernels.coordinate_minimum(b / a, mu, clamp)


def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def kkt_residual(grad_theta, theta, field_index, lam) -> float:
    """Largest violation of the l1 optimality conditions (field unpenalised)."""
    return kernels._kkt_residual(np.asarray(grad_theta), np.asarray(theta), field_index, lam)


def proximal_gradient(value_grad, value, theta0, field_index, lam, tol, max_iter, record_history=False):
    """ISTA with backtracking on the composite objective ``f + lam * ||theta_{-field}||_1``.

    Each iteration starts from twice the previously accepted step (capped at 1)
    and halves until the quadratic upper bound holds, which makes the composite
    objective non-increasing.
    """
    theta = np.array(theta0, dtype=float)
    pen = np.ones(theta.shape, dtype=bool)
    pen[field_index] = False
    f, g = value_grad(theta)
    step = 1.0
    history = [f + lam * np.abs(theta[pen]).sum()] if record_history else None
    resid = kkt_residual(g, theta, field_index, lam)
    it = 0
    while it < max_iter and resid > tol:
        step = min(1.0, 2.0 * step)
        while True:
            z = theta - step * g
            z[pen] = _soft_threshold(z[pen], step * lam)
            d = z - theta
            fz = value(z)
            if fz <= f + g @ d + (d @ d) / (2.0 * step) + 4 * np.finfo(float).eps * abs(f):
                break
            step *= 0.5
            if step < 1e-30:
                break
        if step < 1e-30:
            break
        theta = z
        f, g = value_grad(theta)
        it += 1
        resid = kkt_residual(g, theta, field_index, lam)
        if record_history:
            history.append(f + lam * np.abs(theta[pen]).sum())
    return theta, it, resid, resid <= tol, history


def _permutation_table(n, solver: SolverConfig, u: int, rows: int = 64):
    if not solver.shuffle:
        return np.tile(np.arange(n), (1, 1))
    rng = stream(solver.seed, "cd-order", u)
    return np.stack([rng.permutation(n) for _ in range(rows)])


def _finish(u, theta, lam, obj, it, conv, resid, estimator, clamped=0, history=None):
    return NeighborhoodEstimate(
        node=u,
        couplings=np.delete(theta, u),
        field=float(theta[u]),
        objective_value=float(obj),
        iterations=int(it),
        converged=bool(conv),
        residual=float(resid),
        lam=float(lam),
        estimator=estimator,
        clamped_exponents=clamped,
        history=history,
    )


def fit_drise(samples: SampleSet, u: int, lam: float, solver: SolverConfig = SolverConfig(), init=None) -> NeighborhoodEstimate:
    """Minimise D-ISO + ``lam * ||J_u||_1`` (field unpenalised)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    ZT = _design(samples, u)
    n = samples.n
    theta0 = np.zeros(n) if init is None else np.asarray(init, dtype=float).copy()
    history = None
    if solver.method == "coordinate_descent":
        theta, it, resid, conv = kernels.drise_coordinate_descent(
            ZT, theta0, u, lam, solver.tolerance, solver.max_iterations, solver.cd_clamp, _permutation_table(n, solver, u)
        )
    else:
        Zf = ZT.astype(np.float64)

        def vg(th):
            w = np.exp(np.clip(-(th @ Zf), -kernels.EXP_CLAMP, kernels.EXP_CLAMP))
            return float(w.mean()), -(Zf @ w) / Zf.shape[1]

        theta, it, resid, conv, history = proximal_gradient(
            vg, lambda th: vg(th)[0], theta0, u, lam, solver.tolerance, solver.max_iterations, solver.record_history
        )
    val, _, clamped = _iso_value_grad(ZT, theta)
    obj = val + lam * (np.abs(theta).sum() - abs(theta[u]))
    return _finish(u, theta, lam, obj, it, conv, resid, "drise", clamped, history)


def fit_drple(samples: SampleSet, u: int, lam: float, solver: SolverConfig = SolverConfig(), init=None) -> NeighborhoodEstimate:
    """Minimise D-PL + ``lam * ||J_u||_1`` by proximal gradient (field unpenalised)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    ZT = _design(samples, u)
    n = samples.n
    Zf = None if kernels.USE_NUMBA else ZT.astype(np.float64)
    theta0 = np.zeros(n) if init is None else np.asarray(init, dtype=float).copy()
    theta, it, resid, conv, history = proximal_gradient(
        lambda th: kernels.dpl_value_grad(ZT, th, Zf),
        lambda th: kernels.dpl_value(ZT, th, Zf),
        theta0,
        u,
        lam,
        solver.tolerance,
        solver.max_iterations,
        solver.record_history,
    )
    obj = kernels.dpl_value(ZT, theta, Zf) + lam * (np.abs(theta).sum() - abs(theta[u]))
    return _finish(u, theta, lam, obj, it, conv, resid, "drple", 0, history)


def fit_node(samples, u, lam, estimator="drise", solver=SolverConfig(), init=None):
    if estimator == "drise":
        return fit_drise(samples, u, lam, solver, init)
    if estimator == "drple":
        return fit_drple(samples, u, lam, solver, init)
    raise ValueError(f"unknown estimator {estimator!r}")


def objective_gradient(samples, u, theta, estimator):
    """Gradient of the smooth part in ``theta`` layout (field at index ``u``)."""
    ZT = _design(samples, u)
    if estimator == "drise":
        return _iso_value_grad(ZT, np.asarray(theta, dtype=float))[1]
    return kernels.dpl_value_grad(ZT, np.asarray(theta, dtype=float))[1]


# ---------------------------------------------------------------------------
# statistics of the gradient terms at the true parameters


def gradient_term_statistics(model: IsingModel, u: int, k: int, m: int, rng: np.random.Generator, term: str = "X"):
    """Empirical (mean, second moment, max |.|) of one gradient term at the truth.

    Draws ``m`` one-step updates of node ``u`` from uniform ``sigma^0``.
    ``term="X"`` gives the D-ISO term ``-s_u^1 s_k^0 exp(-s_u^1 h_u)``;
    ``term="Z"`` the D-PL term ``s_k^0 (tanh h_u - s_u^1)``.
    """
    if np.any(model.H != 0):
        raise ModelError("gradient term statistics assume a zero-field model")
    if k == u:
        raise ValueError("k must differ from u")
    s0 = (2 * rng.integers(0, 2, size=(m, model.n), dtype=np.int8) - 1).astype(np.int8)
    h = s0 @ model.J[u]
    p_up = 1.0 / (1.0 + np.exp(-2.0 * h))
    su1 = np.where(rng.random(m) < p_up, 1.0, -1.0)
    sk = s0[:, k].astype(float)
    if term == "X":
        vals = -su1 * sk * np.exp(-su1 * h)
    elif term == "Z":
        vals = sk * (np.tanh(h) - su1)
    else:
        raise ValueError("term must be 'X' or 'Z'")
    return float(vals.mean()), float((vals**2).mean()), float(np.abs(vals).max())


def update_correlation_matrix(samples: SampleSet, u: int) -> np.ndarray:
    """``(1/m_u) sum sigma^0 sigma^0^T`` over the samples that updated ``u``."""
    rows = samples.node_rows(u)
    if rows.size == 0:
        raise NoDataError(u)
    s = samples.s0[rows].astype(float)
    return s.T @ s / rows.size


__all__ = [
    "NeighborhoodEstimate",
    "RegularizationConfig",
    "SolverConfig",
    "NoDataError",
    "lambda_value",
    "d_iso_value",
    "d_iso_gradient",
    "d_pl_value",
    "d_pl_gradient",
    "cd_coordinate_minimum",
    "fit_drise",
    "fit_drple",
    "fit_node",
    "gradient_term_statistics",
    "update_correlation_matrix",
    "proximal_gradient",
    "kkt_residual",
]
