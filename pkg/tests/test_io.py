import json

import numpy as np
import pytest

from isingdyn.dynamics import InitialDistribution, SampleSet, run_m_regime, run_t_regime
from isingdyn.io import FormatError, read_json, read_samples, write_json, write_samples
from isingdyn.model import TopologySpec, build_topology
from isingdyn.seeding import stream


@pytest.fixture
def model():
    return build_topology(TopologySpec("periodic_lattice", rows=3, cols=3, pattern="spin_glass", beta_value=0.6))


@pytest.mark.parametrize("ext", ["jsonl", "npz"])
@pytest.mark.parametrize("regime", ["M", "T"])
def test_samples_round_trip(tmp_path, model, ext, regime):
    run = run_m_regime if regime == "M" else run_t_regime
    S = run(model, InitialDistribution.uniform(), 500, stream(0, "io"))
    a = tmp_path / f"a.{ext}"
    b = tmp_path / f"b.{ext}"
    write_samples(S, a)
    back = read_samples(a)
    assert back.regime == regime and back.n == 9
    assert np.array_equal(back.s0, S.s0) and np.array_equal(back.s1, S.s1) and np.array_equal(back.nodes, S.nodes)
    write_samples(back, b)
    if ext == "jsonl":
        assert a.read_bytes() == b.read_bytes()


def test_jsonl_layout(tmp_path):
    s0 = np.array([[1, -1]], dtype=np.int8)
    s1 = np.array([[1, 1]], dtype=np.int8)
    p = tmp_path / "s.jsonl"
    write_samples(SampleSet(s0, s1, np.array([1]), "M", 2), p)
    lines = p.read_text().splitlines()
    assert json.loads(lines[0]) == {"n": 2, "regime": "M", "m": 1}
    assert json.loads(lines[1]) == {"s0": [1, -1], "s1": [1, 1], "I": 1}


def test_empty_sample_set(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text('{"n": 3, "regime": "M", "m": 0}\n')
    assert read_samples(p).m == 0


@pytest.mark.parametrize(
    "body",
    [
        "",
        '{"n": 2, "regime": "M", "m": 2}\n{"s0": [1, 1], "s1": [1, -1], "I": 1}\n',
        '{"n": 2, "regime": "M", "m": 1}\n{"s0": [1, 1], "s1": [-1, -1], "I": 1}\n',
        '{"n": 2, "regime": "M", "m": 1}\n{"s0": [1, 1, 1], "s1": [1, 1, 1], "I": 1}\n',
        '{"n": 2, "regime": "M"}\n',
        "not json\n",
    ],
)
def test_malformed_files(tmp_path, body):
    p = tmp_path / "bad.jsonl"
    p.write_text(body)
    with pytest.raises(FormatError):
        read_samples(p)


def test_json_round_trip(tmp_path, model):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_json(model.to_dict(), a)
    write_json(read_json(a), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().endswith("\n")
