import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingdyn.model import (
    IsingModel,
    ModelError,
    TopologySpec,
    all_configurations,
    build_topology,
    energy_exponent,
    exact_partition_function,
    gibbs_distribution,
    gibbs_weight,
    lattice_edges,
    model_stats,
)
from oracles import brute_partition


def random_model(n, rng, density=0.5, scale=1.0, field=0.0):
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                edges[(i, j)] = rng.normal(scale=scale) or 0.1
    H = rng.normal(scale=field, size=n) if field else None
    return IsingModel(n, edges, None if H is None else tuple(H))


def test_lattice_4x4_ferromagnetic():
    model = build_topology(TopologySpec("periodic_lattice", beta_value=0.4, alpha_value=0.4))
    assert model.n == 16
    assert len(model.couplings) == 32
    assert all(v == 0.4 for v in model.couplings.values())
    assert model_stats(model).d == 4
    assert np.all(model.H == 0)


def test_random_regular_degrees():
    for seed in range(5):
        model = build_topology(TopologySpec("random_regular", n=16, degree=3, seed=seed, pattern="spin_glass"))
        assert all(model.degree(i) == 3 for i in range(16))
        assert model_stats(model).d == 3


def test_impurity_lattice():
    model = build_topology(TopologySpec("periodic_lattice", pattern="ferro_with_impurity", beta_value=1.0, alpha_value=0.4))
    vals = sorted(model.couplings.values())
    assert vals[0] == -0.4
    assert vals[1:] == [1.0] * 31


def test_explicit_impurity_edges():
    spec = TopologySpec("periodic_lattice", pattern="ferro_with_impurity", beta_value=1.0, alpha_value=0.4, impurity_edges=((5, 6), (1, 5)))
    model = build_topology(spec)
    assert model.couplings[(5, 6)] == -0.4 and model.couplings[(1, 5)] == -0.4
    with pytest.raises(ModelError):
        build_topology(TopologySpec("periodic_lattice", impurity_edges=((0, 5),)))


def test_spin_glass_magnitudes_and_determinism():
    spec = TopologySpec("periodic_lattice", pattern="spin_glass", beta_value=1.5, alpha_value=0.4, seed=3)
    a, b = build_topology(spec), build_topology(spec)
    assert a.couplings == b.couplings
    assert {abs(v) for v in a.couplings.values()} == {0.4, 1.5}
    signs = {np.sign(v) for v in a.couplings.values()}
    assert signs == {-1.0, 1.0}


def test_invalid_topologies():
    with pytest.raises(ModelError):
        lattice_edges(2, 4)
    with pytest.raises(ModelError):
        build_topology(TopologySpec("random_regular", n=7, degree=3))
    with pytest.raises(ModelError):
        build_topology(TopologySpec("hexagonal"))


def test_model_stats_examples():
    model = IsingModel(4, {(0, 1): 0.4, (1, 2): -1.5, (2, 3): 0.7})
    s = model_stats(model)
    assert (s.alpha, s.beta, s.d) == (0.4, 1.5, 2)
    with pytest.raises(ModelError):
        model_stats(IsingModel(3, {}))


def test_model_invariants():
    with pytest.raises(ModelError):
        IsingModel(3, {(0, 0): 1.0})
    with pytest.raises(ModelError):
        IsingModel(3, {(0, 1): float("nan")})
    with pytest.raises(ModelError):
        IsingModel(3, {(0, 1): 1.0, (1, 0): 2.0})
    with pytest.raises(ModelError):
        IsingModel(3, {(0, 3): 1.0})
    m = IsingModel(3, {(2, 0): 0.5, (0, 1): 0.0})
    assert m.couplings == {(0, 2): 0.5}
    assert np.array_equal(m.J, m.J.T) and np.all(np.diag(m.J) == 0)


def test_gibbs_weight_examples():
    assert gibbs_weight(IsingModel(5, {}), [1, -1, 1, 1, -1]) == 1.0
    assert gibbs_weight(IsingModel(2, {(0, 1): 1.0}), [1, 1]) == pytest.approx(2.718282, abs=1e-6)
    with pytest.raises(ModelError):
        gibbs_weight(IsingModel(2, {(0, 1): 1.0}), [1, 1, 1])


def test_partition_function_examples():
    assert exact_partition_function(IsingModel(1, {})) == 2.0
    J = 0.7
    assert exact_partition_function(IsingModel(2, {(0, 1): J})) == pytest.approx(2 * math.exp(J) + 2 * math.exp(-J), rel=1e-14)
    rng = np.random.default_rng(1)
    m = random_model(3, rng, field=0.5)
    total = sum(gibbs_weight(m, s) for s in all_configurations(3))
    assert exact_partition_function(m) == pytest.approx(total, rel=1e-13)
    with pytest.raises(ModelError):
        exact_partition_function(IsingModel(25, {}))


def test_partition_function_chunked_matches_brute_force():
    rng = np.random.default_rng(2)
    m = random_model(9, rng, field=0.3)
    assert exact_partition_function(m, chunk_bits=4) == pytest.approx(brute_partition(m.J, m.H), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=10**6))
def test_gibbs_distribution_normalised(n, seed):
    m = random_model(n, np.random.default_rng(seed), field=0.5)
    _, p = gibbs_distribution(m)
    assert abs(p.sum() - 1.0) < 1e-12
    Z = exact_partition_function(m)
    w = np.exp(energy_exponent(m, all_configurations(n)))
    assert abs((w / Z).sum() - 1.0) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10**6))
def test_zero_field_flip_symmetry(n, seed):
    m = random_model(n, np.random.default_rng(seed))
    confs, p = gibbs_distribution(m)
    # configurations are ordered so that reversing the list negates every spin
    assert np.array_equal(confs[::-1], -confs)
    assert np.allclose(p, p[::-1], rtol=0, atol=1e-15)


def test_json_round_trip_and_validation():
    m = build_topology(TopologySpec("random_regular", n=10, degree=3, pattern="spin_glass", beta_value=1.2, seed=4))
    text = m.to_json()
    back = IsingModel.from_json(text)
    assert back == m and back.to_json() == text
    d = json.loads(text)
    assert all(i < j for i, j, _ in d["edges"])
    d["edges"][0] = [d["edges"][0][1], d["edges"][0][0], d["edges"][0][2]]
    with pytest.raises(ModelError):
        IsingModel.from_dict(d)


def test_topology_spec_round_trip():
    spec = TopologySpec("periodic_lattice", pattern="ferro_with_impurity", impurity_edges=((0, 1),))
    assert TopologySpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    with pytest.raises(ModelError):
        TopologySpec.from_dict({"kind": "periodic_lattice", "colour": 3})


def test_relabel_permutes_couplings():
    m = build_topology(TopologySpec("periodic_lattice", pattern="spin_glass"))
    perm = np.random.default_rng(0).permutation(16)
    r = m.relabel(perm)
    assert np.allclose(r.J[np.ix_(perm, perm)], m.J)
