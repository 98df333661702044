"""File formats: sample sets as JSON lines (or bit-packed npz), plus small JSON helpers."""
from __future__ import annotations

import json
import os

import numpy as np

from .dynamics import DynamicsError, SampleSet


class FormatError(ValueError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


def write_samples_jsonl(samples: SampleSet, path):
    """Header ``{"n", "regime", "m"}`` then one ``{"s0", "s1", "I"}`` record per sample."""
    with open(path, "w", newline="\n") as fh:
        fh.write(_dump({"n": samples.n, "regime": samples.regime, "m": samples.m}) + "\n")
        s0 = samples.s0.tolist()
        s1 = samples.s1.tolist()
        for a, b, i in zip(s0, s1, samples.nodes.tolist()):
            fh.write(_dump({"s0": a, "s1": b, "I": i}) + "\n")


def read_samples_jsonl(path) -> SampleSet:
    with open(path) as fh:
        first = fh.readline()
        if not first.strip():
            raise FormatError(f"{path}: empty sample file")
        try:
            head = json.loads(first)
            n, regime, m = int(head["n"]), str(head["regime"]), int(head["m"])
            recs = [json.loads(line) for line in fh if line.strip()]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed sample file ({exc})") from exc
    if len(recs) != m:
        raise FormatError(f"{path}: header announces {m} samples, found {len(recs)}")
    if m == 0:
        empty = np.zeros((0, n), dtype=np.int8)
        return SampleSet(empty, empty.copy(), np.zeros(0, dtype=np.int64), regime, n)
    try:
        s0 = np.array([r["s0"] for r in recs], dtype=np.int8)
        s1 = np.array([r["s1"] for r in recs], dtype=np.int8)
        nodes = np.array([r["I"] for r in recs], dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed record ({exc})") from exc
    if s0.shape != (m, n) or s1.shape != (m, n):
        raise FormatError(f"{path}: configurations do not have length {n}")
    try:
        out = SampleSet(s0, s1, nodes, regime, n).validate()
    except DynamicsError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return out


def write_samples_npz(samples: SampleSet, path):
    """Bit-packed mirror of the JSON-lines format."""
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            n=np.int64(samples.n),
            regime=np.array(samples.regime),
            s0=np.packbits(samples.s0 > 0, axis=1),
            s1=np.packbits(samples.s1 > 0, axis=1),
            nodes=samples.nodes.astype(np.int64),
        )


def read_samples_npz(path) -> SampleSet:
    with np.load(path) as z:
        n = int(z["n"])
        bits0 = np.unpackbits(z["s0"], axis=1, count=n)
        bits1 = np.unpackbits(z["s1"], axis=1, count=n)
        s0 = (2 * bits0.astype(np.int8) - 1).astype(np.int8)
        s1 = (2 * bits1.astype(np.int8) - 1).astype(np.int8)
        return SampleSet(s0, s1, z["nodes"].astype(np.int64), str(z["regime"]), n)


def write_samples(samples: SampleSet, path):
    if os.fspath(path).endswith(".npz"):
        write_samples_npz(samples, path)
    else:
        write_samples_jsonl(samples, path)


def read_samples(path) -> SampleSet:
    if os.fspath(path).endswith(".npz"):
        return read_samples_npz(path)
    return read_samples_jsonl(path)


def write_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


__all__ = [
    "FormatError",
    "write_samples_jsonl",
    "read_samples_jsonl",
    "write_samples_npz",
    "read_samples_npz",
    "write_samples",
    "read_samples",
    "write_json",
    "read_json",
]
