import csv
import math

import numpy as np
import pytest

from isingdyn.estimators import RegularizationConfig
from isingdyn.experiments import (
    CSV_FIELDS,
    MStarSpec,
    beta_sweep,
    clambda_sweep,
    default_c_lambda,
    find_m_star,
    fit_exponent,
    run_trial,
    sweep_rows,
    upper_window,
    write_csv,
)
from isingdyn.model import TopologySpec, build_topology

# 2-node graph, single edge of strength alpha_value
PAIR = TopologySpec("random_regular", n=2, degree=1, beta_value=0.4, alpha_value=0.4)
SMALL = TopologySpec("periodic_lattice", rows=3, cols=3, pattern="spin_glass", beta_value=0.5)


def test_fit_exponent_examples():
    d = 4
    betas = np.array([0.5, 1.0, 1.5, 2.0])
    m = 7 * np.exp(2.0 * d * betas)
    slope, icpt, res = fit_exponent(betas, m, d)
    assert slope == pytest.approx(2.0, abs=1e-9)
    assert icpt == pytest.approx(math.log(7), abs=1e-9)
    assert res < 1e-9
    assert fit_exponent(betas, np.full(4, 500.0), d)[0] == pytest.approx(0.0, abs=1e-12)
    noisy = m * np.array([1.1, 0.9, 1.2, 1.0])
    assert fit_exponent(betas, 13 * noisy, d)[0] == pytest.approx(fit_exponent(betas, noisy, d)[0], abs=1e-12)


def test_fit_exponent_errors():
    with pytest.raises(ValueError):
        fit_exponent([1, 1, 1], [2, 3, 4], 3)
    with pytest.raises(ValueError):
        fit_exponent([1, 2], [2, 3], 3)
    with pytest.raises(ValueError):
        fit_exponent([1, 2, 3], [2, 0, 4], 3)


def test_upper_window():
    assert upper_window([0.4, 0.8, 1.2, 1.6, 2.0, 2.4]) == [1.6, 2.0, 2.4]
    assert upper_window([3, 1, 2, 5]) == [2, 3, 5]


def test_spec_defaults_and_grid():
    spec = MStarSpec(SMALL)
    assert spec.reg.c_lambda == 0.1 and spec.start == 900
    g = list(MStarSpec(SMALL, m_max=2000).grid())
    assert g == [900, 1170, 1521, 1978]
    assert default_c_lambda("random_regular", "M", "drple") == 0.3
    with pytest.raises(ValueError):
        MStarSpec(SMALL, consecutive_successes=0)
    with pytest.raises(ValueError):
        MStarSpec(SMALL, grid_factor=1.0)
    with pytest.raises(ValueError):
        MStarSpec(SMALL, method="active", regime="T")


def test_two_node_m_star_small():
    res = find_m_star(MStarSpec(PAIR))
    assert res.found and res.m_star <= 10_000
    assert res.m_i_mean == res.m_star / 2


def test_m_star_reproducible():
    a = find_m_star(MStarSpec(SMALL, master_seed=4))
    b = find_m_star(MStarSpec(SMALL, master_seed=4))
    assert a.found and a.m_star == b.m_star and a.history == b.history


def test_workers_do_not_change_result():
    a = find_m_star(MStarSpec(SMALL, master_seed=2))
    b = find_m_star(MStarSpec(SMALL, master_seed=2, workers=3))
    assert a.m_star == b.m_star


def test_success_rate_at_m_star():
    spec = MStarSpec(SMALL, master_seed=7)
    res = find_m_star(spec)
    model = build_topology(SMALL)
    wins = sum(run_trial(spec, model, res.m_star, t) for t in range(1000, 1020))
    assert wins >= 16


def test_bounded_failure_is_reported():
    res = find_m_star(MStarSpec(SMALL, m_min=50, m_max=120))
    assert not res.found and res.m_star is None
    assert [h["m"] for h in res.history] == [50, 65, 85, 110]
    assert math.isnan(res.m_i_mean)


def test_clambda_sweep_table_and_ties():
    spec = MStarSpec(PAIR)
    best, table = clambda_sweep(spec, [0.2, 0.05, 0.1])
    assert sorted(table) == [0.05, 0.1, 0.2]
    finite = {c: r.m_star for c, r in table.items() if r.m_star is not None}
    assert best == min(finite, key=lambda c: (finite[c], c))
    with pytest.raises(ValueError):
        clambda_sweep(spec, [0.1])


def test_clambda_all_unresolved():
    best, table = clambda_sweep(MStarSpec(SMALL, m_min=50, m_max=60), [0.1, 0.2])
    assert best is None and all(not r.found for r in table.values())


def test_beta_sweep_and_csv(tmp_path):
    base = MStarSpec(PAIR)
    out = beta_sweep(base, [0.4, 0.6, 0.8])
    assert len(out.m_star_values) == 3 and out.d == 1
    assert out.fit_betas == [0.4, 0.6, 0.8]
    assert math.isfinite(out.fitted_exponent)
    rows = sweep_rows(base, out.results)
    path = tmp_path / "s.csv"
    write_csv(path, rows)
    with open(path) as fh:
        back = list(csv.DictReader(fh))
    assert len(back) == 3 and list(back[0]) == CSV_FIELDS
    assert [float(r["beta"]) for r in back] == [0.4, 0.6, 0.8]
    with pytest.raises(ValueError):
        beta_sweep(base, [0.4, 0.6])


def test_beta_sweep_failure_gives_nan():
    out = beta_sweep(MStarSpec(SMALL, m_max=400, m_min=100), [0.4, 0.5, 0.6])
    assert out.failures == [0.4, 0.5, 0.6]
    assert math.isnan(out.fitted_exponent)


def test_success_monotone_in_m():
    spec = MStarSpec(SMALL, master_seed=11)
    model = build_topology(SMALL)
    rate = {m: np.mean([run_trial(spec, model, m, t) for t in range(100)]) for m in (1000, 2000, 4000)}
    assert rate[2000] >= rate[1000] - 0.05
    assert rate[4000] >= rate[2000] - 0.05
