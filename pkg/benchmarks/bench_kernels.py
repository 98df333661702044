"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both flavours are called directly, so ISINGDYN_BACKEND does not matter here.
Numba compilation is excluded by a warm-up call.
"""
import argparse
import time

import numpy as np

from isingdyn import kernels
from isingdyn.dynamics import InitialDistribution, run_m_regime
from isingdyn.model import TopologySpec, build_topology
from isingdyn.seeding import stream


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--m", type=int, default=200_000)
    args = ap.parse_args()

    model = build_topology(TopologySpec("periodic_lattice", pattern="spin_glass", beta_value=1.0))
    J, H, n, m = model.J, model.H, model.n, args.m
    rng = np.random.default_rng(0)
    s0 = (2 * rng.integers(0, 2, size=n, dtype=np.int8) - 1).astype(np.int8)
    S0 = (2 * rng.integers(0, 2, size=(m, n), dtype=np.int8) - 1).astype(np.int8)
    nodes = rng.integers(0, n, size=m)
    unif = rng.random(m)

    samples = run_m_regime(model, InitialDistribution.uniform(), m, stream(0, "bench"))
    ZT = samples.node_design(0)
    perms = np.stack([np.random.default_rng(i).permutation(n) for i in range(64)])
    lam = 0.02
    theta = np.linspace(-0.3, 0.3, n)

    cases = [
        (f"T-regime chain, m={m}", lambda: kernels._chain_numba(J, H, s0, nodes, unif), lambda: kernels._chain_numpy(J, H, s0, nodes, unif)),
        (f"M-regime one step, m={m}", lambda: kernels._one_step_numba(J, H, S0, nodes, unif), lambda: kernels._one_step_numpy(J, H, S0, nodes, unif)),
        (
            f"D-RISE coordinate descent, m_u={ZT.shape[1]}",
            lambda: kernels._drise_cd_numba(ZT, np.zeros(n), 0, lam, 1e-6, 10_000, 30.0, perms),
            lambda: kernels._drise_cd_numpy(ZT, np.zeros(n), 0, lam, 1e-6, 10_000, 30.0, perms),
        ),
        (f"D-PL value+gradient, m_u={ZT.shape[1]}", lambda: kernels._dpl_value_grad_numba(ZT, theta), lambda: kernels._dpl_value_grad_numpy(ZT, theta)),
    ]
    print(f"{'kernel':<42}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for name, fast, slow in cases:
        a = best_of(fast, args.repeat)
        b = best_of(slow, args.repeat)
        print(f"{name:<42}{a:>12.4f}{b:>12.4f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
