import math

import numpy as np
import pytest

from isingdyn.dynamics import InitialDistribution, SampleSet, run_m_regime
from isingdyn.estimators import NeighborhoodEstimate, NoDataError, RegularizationConfig
from isingdyn.model import IsingModel, ModelError, TopologySpec, build_topology, model_stats
from isingdyn.reconstruction import (
    CouplingMatrixEstimate,
    EdgeSetEstimate,
    average_couplings,
    edge_errors,
    fit_all_nodes,
    info_theoretic_lower_bound,
    learn_structure,
    structure_success,
    threshold_edges,
)
from isingdyn.seeding import stream


def _est(u, row):
    return NeighborhoodEstimate(u, np.asarray(row, dtype=float), 0.0, 0.0, 1, True)


def test_average_examples():
    c = average_couplings([_est(0, [0.5]), _est(1, [0.3])])
    assert c.get(0, 1) == pytest.approx(0.4) and c.get(1, 0) == pytest.approx(0.4)
    c = average_couplings([_est(0, [0.5, 0.0]), _est(1, [-0.5, 0.2]), _est(2, [0.0, 0.2])])
    assert c.get(0, 1) == 0.0
    assert c.get(1, 2) == pytest.approx(0.2)
    assert np.allclose(c.dense(), c.dense().T)


def test_average_requires_every_node():
    with pytest.raises(ModelError, match="node"):
        average_couplings([_est(0, [0.5, 0.1]), _est(2, [0.1, 0.1])])
    with pytest.raises(ModelError):
        average_couplings([])


def test_threshold_boundary():
    c = CouplingMatrixEstimate(3, {(0, 1): 0.2, (0, 2): 0.1999999, (1, 2): -0.25})
    e = threshold_edges(c, 0.4)
    assert e.sorted() == [(0, 1), (1, 2)]
    assert (1, 0) in e and (0, 2) not in e
    with pytest.raises(ValueError):
        threshold_edges(c, 0.0)


def test_edge_set_json_and_errors():
    e = EdgeSetEstimate(frozenset({(2, 1), (0, 3)}))
    assert e.to_json() == "[[0, 3], [1, 2]]"
    assert EdgeSetEstimate.from_json(e.to_json()) == e
    truth = IsingModel(4, {(0, 3): 0.5, (0, 1): 0.5})
    assert not structure_success(e, truth)
    assert edge_errors(e, truth) == ([(0, 1)], [(1, 2)])


def test_coupling_matrix_roundtrip():
    c = CouplingMatrixEstimate(3, {(0, 1): 0.2, (0, 2): -0.1, (1, 2): 0.0})
    assert CouplingMatrixEstimate.from_dict(c.to_dict()) == c


def test_edgeless_model_yields_empty_set():
    model = IsingModel(8, {})
    S = run_m_regime(model, InitialDistribution.uniform(), 20_000, stream(0, "empty"))
    edges, c = learn_structure(S, RegularizationConfig(0.2), alpha=0.4)
    assert len(edges) == 0
    assert max(abs(v) for v in c.values.values()) < 0.1


def test_lattice_recovered_and_workers_agree():
    model = build_topology(TopologySpec("periodic_lattice", pattern="spin_glass", beta_value=0.7))
    S = run_m_regime(model, InitialDistribution.uniform(), 20_000, stream(1, "lat"))
    alpha = model_stats(model).alpha
    e1, c1 = learn_structure(S, RegularizationConfig(0.1), alpha=alpha)
    e2, c2 = learn_structure(S, RegularizationConfig(0.1), alpha=alpha, workers=3)
    assert structure_success(e1, model)
    assert e1 == e2 and c1.values == c2.values


def test_relabel_invariance():
    model = build_topology(TopologySpec("periodic_lattice", pattern="spin_glass", beta_value=0.7))
    S = run_m_regime(model, InitialDistribution.uniform(), 20_000, stream(2, "perm"))
    perm = np.random.default_rng(0).permutation(model.n)
    inv = np.argsort(perm)
    # relabelled node perm[i] carries old node i
    s0 = np.empty_like(S.s0)
    s1 = np.empty_like(S.s1)
    s0[:, perm] = S.s0
    s1[:, perm] = S.s1
    P = SampleSet(s0, s1, perm[S.nodes], "M", model.n)
    e, c = learn_structure(S, RegularizationConfig(0.1), alpha=0.4)
    ep, cp = learn_structure(P, RegularizationConfig(0.1), alpha=0.4)
    mapped = {tuple(sorted((int(inv[i]), int(inv[j])))) for i, j in ep.edges}
    assert mapped == set(e.edges)
    assert np.allclose(cp.dense()[np.ix_(perm, perm)], c.dense(), atol=1e-5)


def test_missing_node_is_named():
    s0 = np.ones((4, 5), dtype=np.int8)
    S = SampleSet.from_arrays(s0, s0.copy(), [0, 1, 2, 4])
    with pytest.raises(NoDataError) as info:
        fit_all_nodes(S)
    assert info.value.node == 3 and "3" in str(info.value)


def test_mean_lambda_mode():
    model = IsingModel(3, {(0, 1): 0.5})
    S = run_m_regime(model, InitialDistribution.uniform(), 3000, stream(3, "mean"))
    ests = fit_all_nodes(S, lambda_mode="mean")
    assert len({round(e.lam, 15) for e in ests}) == 1
    with pytest.raises(ValueError):
        fit_all_nodes(S, lambda_mode="bogus")


def test_information_bound():
    # exp(2*0.4*4/3) / (32*4*0.4*exp(4+1.2+6)) * 16 ln 16
    assert info_theoretic_lower_bound(0.4, 4, 0.4, 16) == pytest.approx(3.442585412e-05, rel=1e-9)
    base = info_theoretic_lower_bound(0.5, 3, 0.3, 20)
    assert info_theoretic_lower_bound(0.5, 3, 0.6, 20) == pytest.approx(base / 2, rel=1e-14)
    for n in range(3, 60):
        assert info_theoretic_lower_bound(0.5, 3, 0.3, n + 1) > info_theoretic_lower_bound(0.5, 3, 0.3, n)
    with pytest.raises(ValueError):
        info_theoretic_lower_bound(0.5, 3, 0.0, 20)
