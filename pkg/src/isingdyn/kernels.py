"""Hot inner loops, each in a numba flavour and a vectorised numpy flavour.

The public dispatchers at the bottom pick one according to
:data:`isingdyn._backend.USE_NUMBA`.  Both flavours consume the same
pre-drawn random arrays, so they produce bit-identical spins; the solver
kernels agree to floating-point rounding.

Data layout used by the per-node solvers: ``ZT`` is an ``(n, m_u)`` int8
array whose row ``k`` holds ``sigma_u^1 * sigma_k^0`` for the samples that
updated node ``u``, except row ``u`` which holds ``sigma_u^1`` itself (the
field coordinate).  With parameters ``theta`` (couplings, and the field at
position ``u``) the per-sample exponent is ``r_t = theta . ZT[:, t]``.
"""
import math

import numpy as np

from ._backend import USE_NUMBA, njit

EXP_CLAMP = 700.0
LN2 = math.log(2.0)


class InconsistentCoordinateError(ArithmeticError):
    """Raised when the coordinate-descent constant falls outside [-1, 1]."""


# ---------------------------------------------------------------------------
# closed-form one-dimensional minimiser


def _coord_min_py(kappa, mu, clamp):
    # argmin_x cosh x - kappa sinh x + mu |x|; status 1 => |kappa| > 1
    ak = abs(kappa)
    if ak > 1.0 + 1e-12:
        return 0.0, 1
    if ak > 1.0:
        ak = 1.0
    if mu >= ak:
        return 0.0, 0
    sgn = 1.0 if kappa > 0 else -1.0
    if 1.0 - ak < 1e-15:
        return sgn * clamp, 0
    # rationalised form of log((sqrt(1-k^2+mu^2) - mu sign k) / (1-k)),
    # free of cancellation when mu ~ sqrt(1-k^2)
    root = math.sqrt((1.0 - ak) * (1.0 + ak) + mu * mu)
    x = sgn * math.log((1.0 + ak) / (root + mu))
    if x > clamp:
        x = clamp
    elif x < -clamp:
        x = -clamp
    return x, 0


_coord_min = njit(_coord_min_py)


def coordinate_minimum(kappa, mu, clamp=30.0):
    x, status = _coord_min_py(float(kappa), float(mu), float(clamp))
    if status:
        raise InconsistentCoordinateError(f"|kappa|={abs(kappa)!r} exceeds 1")
    return x


# ---------------------------------------------------------------------------
# Glauber dynamics


@njit
def _chain_numba(J, H, s0, nodes, unif):
    m = nodes.shape[0]
    n = s0.shape[0]
    traj = np.empty((m + 1, n), dtype=np.int8)
    cur = s0.copy()
    traj[0, :] = cur
    for t in range(m):
        i = nodes[t]
        h = H[i]
        for j in range(n):
            h += J[i, j] * cur[j]
        p_up = 1.0 / (1.0 + math.exp(-2.0 * h))
        cur[i] = 1 if unif[t] < p_up else -1
        traj[t + 1, :] = cur
    return traj


def _chain_numpy(J, H, s0, nodes, unif):
    m = nodes.shape[0]
    traj = np.empty((m + 1, s0.shape[0]), dtype=np.int8)
    cur = s0.astype(np.float64)
    traj[0] = s0
    for t in range(m):
        i = nodes[t]
        h = H[i] + J[i] @ cur
        cur[i] = 1.0 if unif[t] < 1.0 / (1.0 + math.exp(-2.0 * h)) else -1.0
        traj[t + 1] = cur
    return traj


@njit
def _one_step_numba(J, H, s0, nodes, unif):
    m, n = s0.shape
    s1 = s0.copy()
    for t in range(m):
        i = nodes[t]
        h = H[i]
        for j in range(n):
            h += J[i, j] * s0[t, j]
        p_up = 1.0 / (1.0 + math.exp(-2.0 * h))
        s1[t, i] = 1 if unif[t] < p_up else -1
    return s1


def _one_step_numpy(J, H, s0, nodes, unif, chunk=65536):
    m = s0.shape[0]
    s1 = s0.copy()
    rows = np.arange(m)
    for lo in range(0, m, chunk):
        sl = slice(lo, lo + chunk)
        idx = nodes[sl]
        h = np.einsum("ij,ij->i", J[idx], s0[sl].astype(np.float64)) + H[idx]
        p_up = 1.0 / (1.0 + np.exp(-2.0 * h))
        s1[rows[sl], idx] = np.where(unif[sl] < p_up, 1, -1).astype(np.int8)
    return s1


# ---------------------------------------------------------------------------
# D-RISE coordinate descent


@njit
def _weights(r, w):
    for t in range(r.shape[0]):
        x = -r[t]
        if x > EXP_CLAMP:
            x = EXP_CLAMP
        elif x < -EXP_CLAMP:
            x = -EXP_CLAMP
        w[t] = math.exp(x)


@njit
def _drise_cd_numba(ZT, theta, field_index, lam, tol, max_sweeps, clamp, perms):
    n, m = ZT.shape
    inv_m = 1.0 / m
    r = _margins(ZT, theta)
    w = np.empty(m)
    _weights(r, w)
    g = np.zeros(n)
    n_perm = perms.shape[0]
    resid = np.inf
    sweeps = 0
    converged = False
    bad_kappa = False
    for sweep in range(max_sweeps):
        order = perms[sweep % n_perm]
        for kk in range(n):
            k = order[kk]
            # weight on z = +1 and on z = -1; (1 +- z) is 0 or 2, so no branch
            # and no cancellation
            sp = 0.0
            sm = 0.0
            for t in range(m):
                z = ZT[k, t]
                sp += w[t] * (1 + z)
                sm += w[t] * (1 - z)
            tk = theta[k]
            a_plus = 0.5 * sp * inv_m * math.exp(tk)
            a_minus = 0.5 * sm * inv_m * math.exp(-tk)
            a = a_plus + a_minus
            if not (a > 0.0 and a < np.inf):
                bad_kappa = True
                break
            kappa = (a_plus - a_minus) / a
            mu = 0.0 if k == field_index else lam / a
            x, status = _coord_min(kappa, mu, clamp)
            if status:
                bad_kappa = True
                break
            delta = x - tk
            if delta != 0.0:
                theta[k] = x
                fp = math.exp(-delta)
                fm = math.exp(delta)
                for t in range(m):
                    z = ZT[k, t]
                    r[t] += delta * z
                    w[t] *= fp if z > 0 else fm
        sweeps = sweep + 1
        if bad_kappa:
            break
        # KKT residual of the l1 problem at the current iterate
        # fresh weights remove the drift of the multiplicative updates
        _weights(r, w)
        for k in range(n):
            acc = 0.0
            for t in range(m):
                acc -= ZT[k, t] * w[t]
            g[k] = acc
        resid = 0.0
        for k in range(n):
            gk = g[k] * inv_m
            if k == field_index:
                v = abs(gk)
            elif theta[k] == 0.0:
                v = abs(gk) - lam
                if v < 0.0:
                    v = 0.0
            else:
                v = abs(gk + lam * (1.0 if theta[k] > 0 else -1.0))
            if v > resid:
                resid = v
        if resid <= tol:
            converged = True
            break
    status = 1 if bad_kappa else 0
    return theta, sweeps, resid, converged, status


def _drise_cd_numpy(ZT, theta, field_index, lam, tol, max_sweeps, clamp, perms):
    n, m = ZT.shape
    Zf = ZT.astype(np.float64)
    r = theta @ Zf
    n_perm = perms.shape[0]
    resid = np.inf
    sweeps = 0
    converged = False
    status = 0
    for sweep in range(max_sweeps):
        w = np.exp(np.clip(-r, -EXP_CLAMP, EXP_CLAMP))
        for k in perms[sweep % n_perm]:
            zk = Zf[k]
            tk = theta[k]
            a_plus = 0.5 * (w @ (1.0 + zk)) / m * math.exp(tk)
            a_minus = 0.5 * (w @ (1.0 - zk)) / m * math.exp(-tk)
            a = a_plus + a_minus
            if not (0.0 < a < np.inf):
                status = 1
                break
            mu = 0.0 if k == field_index else lam / a
            x, bad = _coord_min_py((a_plus - a_minus) / a, mu, clamp)
            if bad:
                status = 1
                break
            delta = x - tk
            if delta != 0.0:
                theta[k] = x
                r += delta * zk
                w *= np.exp(-delta * zk)
        sweeps = sweep + 1
        if status:
            break
        w = np.exp(np.clip(-r, -EXP_CLAMP, EXP_CLAMP))
        g = -(Zf @ w) / m
        resid = _kkt_residual(g, theta, field_index, lam)
        if resid <= tol:
            converged = True
            break
    return theta, sweeps, resid, converged, status


def _kkt_residual(g, theta, field_index, lam):
    v = np.where(theta == 0.0, np.maximum(np.abs(g) - lam, 0.0), np.abs(g + lam * np.sign(theta)))
    v[field_index] = abs(g[field_index])
    return float(v.max())


# ---------------------------------------------------------------------------
# D-PL value and gradient


@njit
def _margins(ZT, theta):
    n, m = ZT.shape
    r = np.zeros(m)
    for k in range(n):
        tk = theta[k]
        if tk != 0.0:
            for t in range(m):
                r[t] += tk * ZT[k, t]
    return r


@njit
def _softplus_neg2(r):
    # log(1 + exp(-2r)) without overflow
    x = -2.0 * r
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit
def _dpl_value_grad_numba(ZT, theta):
    n, m = ZT.shape
    r = _margins(ZT, theta)
    val = 0.0
    for t in range(m):
        val += _softplus_neg2(r[t])
        r[t] = 1.0 - math.tanh(r[t])
    g = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for t in range(m):
            acc -= ZT[k, t] * r[t]
        g[k] = acc / m
    return val / m - LN2, g


def _dpl_value_grad_numpy(ZT, theta, Zf=None):
    if Zf is None:
        Zf = ZT.astype(np.float64)
    r = theta @ Zf
    val = float(np.logaddexp(0.0, -2.0 * r).mean()) - LN2
    g = -(Zf @ (1.0 - np.tanh(r))) / Zf.shape[1]
    return val, g


@njit
def _dpl_value_numba(ZT, theta):
    r = _margins(ZT, theta)
    val = 0.0
    for t in range(r.shape[0]):
        val += _softplus_neg2(r[t])
    return val / r.shape[0] - LN2


# ---------------------------------------------------------------------------
# dispatch


def glauber_chain(J, H, s0, nodes, unif):
    """Trajectory of ``len(nodes)`` chained Glauber updates, shape (m+1, n)."""
    J = np.ascontiguousarray(J, dtype=np.float64)
    H = np.ascontiguousarray(H, dtype=np.float64)
    s0 = np.ascontiguousarray(s0, dtype=np.int8)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    unif = np.ascontiguousarray(unif, dtype=np.float64)
    if USE_NUMBA:
        return _chain_numba(J, H, s0, nodes, unif)
    return _chain_numpy(J, H, s0, nodes, unif)


def glauber_one_step(J, H, s0, nodes, unif):
    """Apply one Glauber update to every row of ``s0`` independently."""
    J = np.ascontiguousarray(J, dtype=np.float64)
    H = np.ascontiguousarray(H, dtype=np.float64)
    s0 = np.ascontiguousarray(s0, dtype=np.int8)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    unif = np.ascontiguousarray(unif, dtype=np.float64)
    if USE_NUMBA:
        return _one_step_numba(J, H, s0, nodes, unif)
    return _one_step_numpy(J, H, s0, nodes, unif)


def drise_coordinate_descent(ZT, theta, field_index, lam, tol, max_sweeps, clamp, perms):
    """Run CD sweeps in place on ``theta``; returns (theta, sweeps, residual, converged)."""
    ZT = np.ascontiguousarray(ZT, dtype=np.int8)
    theta = np.ascontiguousarray(theta, dtype=np.float64).copy()
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    impl = _drise_cd_numba if USE_NUMBA else _drise_cd_numpy
    theta, sweeps, resid, converged, status = impl(
        ZT, theta, int(field_index), float(lam), float(tol), int(max_sweeps), float(clamp), perms
    )
    if status:
        raise InconsistentCoordinateError("coordinate constant left [-1, 1] during descent")
    return theta, int(sweeps), float(resid), bool(converged)


def dpl_value_grad(ZT, theta, Zf=None):
    if USE_NUMBA:
        val, g = _dpl_value_grad_numba(ZT, np.asarray(theta, dtype=np.float64))
        return float(val), g
    return _dpl_value_grad_numpy(ZT, np.asarray(theta, dtype=np.float64), Zf)


def dpl_value(ZT, theta, Zf=None):
    if USE_NUMBA:
        return float(_dpl_value_numba(ZT, np.asarray(theta, dtype=np.float64)))
    if Zf is None:
        Zf = ZT.astype(np.float64)
    r = np.asarray(theta, dtype=np.float64) @ Zf
    return float(np.logaddexp(0.0, -2.0 * r).mean()) - LN2
