"""Independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def golden_section(f, lo, hi, iters=160):
    """Vectorised golden-section search over arrays of intervals."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = np.array(lo, dtype=float), np.array(hi, dtype=float)
    for _ in range(iters):
        c = b - g * (b - a)
        d = a + g * (b - a)
        left = f(c) < f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return 0.5 * (a + b)


def coord_objective(kappa, mu):
    # cosh x - kappa sinh x, written without cancellation
    return lambda x: 0.5 * ((1 - kappa) * np.exp(x) + (1 + kappa) * np.exp(-x)) + mu * np.abs(x)


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def iso_loop(s0, s1, nodes, u, J_u, H_u):
    """D-ISO by explicit loops over samples."""
    tot, cnt = 0.0, 0
    for a, b, i in zip(s0, s1, nodes):
        if i != u:
            continue
        h = sum(J_u[j] * a[j] for j in range(len(a)) if j != u) + H_u
        tot += math.exp(-b[u] * h)
        cnt += 1
    return tot / cnt


def pl_loop(s0, s1, nodes, u, J_u, H_u):
    tot, cnt = 0.0, 0
    for a, b, i in zip(s0, s1, nodes):
        if i != u:
            continue
        h = sum(J_u[j] * a[j] for j in range(len(a)) if j != u) + H_u
        tot += math.log(1.0 + b[u] * math.tanh(h))
        cnt += 1
    return -tot / cnt


def brute_partition(J, H):
    n = len(H)
    Z = 0.0
    for s in itertools.product((-1, 1), repeat=n):
        s = np.array(s, dtype=float)
        Z += math.exp(0.5 * s @ J @ s + H @ s)
    return Z


def proximal_gradient_reference(value_grad, theta0, pen_mask, lam, iters=200000, tol=1e-10):
    """Plain ISTA with a fixed step from a Lipschitz bound; deliberately simple."""
    theta = np.array(theta0, dtype=float)
    step = 0.05
    for _ in range(iters):
        f, g = value_grad(theta)
        z = theta - step * g
        z[pen_mask] = np.sign(z[pen_mask]) * np.maximum(np.abs(z[pen_mask]) - step * lam, 0.0)
        if np.max(np.abs(z - theta)) < tol * step:
            return z
        theta = z
    return theta
