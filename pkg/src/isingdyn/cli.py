"""Command-line entry point.

Every subcommand reads one JSON config document (``--config``); explicit
flags override values from the file.  Outputs go to ``--output-dir``, else
``$ISINGDYN_OUTPUT_DIR``, else the config's ``output_dir``, else
``./isingdyn-out``.  Each run writes ``manifest.json`` with the resolved
config, its hash, seeds, versions and wall-clock time.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 bounded
search failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from ._backend import backend_name
from .active import ActiveConfig, active_learn, estimate_model
from .dynamics import DynamicsError, InitialDistribution, one_step_oracle, run_m_regime, run_t_regime
from .estimators import ESTIMATORS, NoDataError, RegularizationConfig, SolverConfig
from .experiments import (
    MStarSpec,
    beta_sweep,
    clambda_sweep,
    default_c_lambda,
    find_m_star,
    sweep_rows,
    write_csv,
)
from .io import FormatError, read_samples, write_json, write_samples
from .model import IsingModel, ModelError, TopologySpec, build_topology
from .neural import (
    NeuralDataError,
    bin_spikes,
    empirical_context,
    extract_single_flip_samples,
    extraction_report,
    frobenius_relative_diff,
    gap_threshold,
    iid_correlations,
    predict_time_correlations,
    read_raster_csv,
    read_spike_csv,
    synthetic_raster,
    time_correlations,
)
from .reconstruction import edge_errors, learn_structure, structure_success
from .seeding import stream

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SEARCH = 0, 2, 3, 4
OUTPUT_ENV = "ISINGDYN_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


class SearchFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config helpers


def _require(cfg, key, where="config"):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"missing required field '{key}' in {where}")
    return cfg[key]


def _topology(cfg, where="config"):
    block = _require(cfg, "topology", where)
    try:
        return TopologySpec.from_dict(block)
    except (ModelError, TypeError) as exc:
        raise ConfigError(f"invalid topology block: {exc}") from exc


def _solver(cfg):
    try:
        return SolverConfig(**cfg.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver block: {exc}") from exc


def _reg(cfg, kind, regime, estimator):
    c = cfg.get("c_lambda")
    if c is None:
        c = default_c_lambda(kind, regime, estimator)
    try:
        return RegularizationConfig(float(c), float(cfg.get("delta", 0.05)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _estimator(cfg):
    est = cfg.get("estimator", "drise")
    if est not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {est!r}")
    return est


def _regime(cfg, default="M"):
    reg = cfg.get("regime", default)
    if reg not in ("T", "M"):
        raise ConfigError(f"regime must be 'T' or 'M', got {reg!r}")
    return reg


def _canonical(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def _mstar_spec(cfg, threads):
    topo = _topology(cfg)
    regime = _regime(cfg)
    est = _estimator(cfg)
    try:
        return MStarSpec(
            topology=topo,
            regime=regime,
            estimator=est,
            reg=_reg(cfg, topo.kind, regime, est),
            consecutive_successes=int(cfg.get("consecutive_successes", 10)),
            grid_factor=float(cfg.get("grid_factor", 1.3)),
            m_min=cfg.get("m_min"),
            m_max=int(cfg.get("m_max", 10_000_000)),
            bisect=bool(cfg.get("bisect", True)),
            master_seed=int(cfg.get("master_seed", 0)),
            solver=_solver(cfg),
            burn_in=int(cfg.get("burn_in", 0)),
            method=cfg.get("method", "plain"),
            active_rounds=int(cfg.get("active_rounds", 15)),
            workers=threads,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# commands; each returns (outputs dict, extra manifest fields)


def cmd_generate(cfg, out, threads):
    spec = _topology(cfg)
    m = int(_require(cfg, "m"))
    regime = _regime(cfg)
    seed = int(cfg.get("master_seed", 0))
    try:
        model = build_topology(spec)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    rng = stream(seed, "generate")
    p0 = InitialDistribution.uniform()
    if regime == "M":
        samples = run_m_regime(model, p0, m, rng)
    else:
        samples = run_t_regime(model, p0, m, rng, burn_in=int(cfg.get("burn_in", 0)))
    fmt = cfg.get("format", "jsonl")
    if fmt not in ("jsonl", "npz"):
        raise ConfigError("format must be 'jsonl' or 'npz'")
    model_path = os.path.join(out, "model.json")
    sample_path = os.path.join(out, f"samples.{fmt}")
    write_json(model.to_dict(), model_path)
    write_samples(samples, sample_path)
    return {"model": model_path, "samples": sample_path}, {"seeds": {"master_seed": seed, "stream": ["generate"]}}


def cmd_learn(cfg, out, threads):
    path = _require(cfg, "samples")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    samples = read_samples(path)
    est = _estimator(cfg)
    regime = "T" if samples.regime == "T" else "M"
    kind = cfg.get("family", "periodic_lattice")
    reg = _reg(cfg, kind, regime, est)
    alpha = float(_require(cfg, "alpha"))
    edges, couplings = learn_structure(
        samples, reg, _solver(cfg), alpha, est, workers=threads, lambda_mode=cfg.get("lambda_mode", "per_node")
    )
    paths = {
        "couplings": os.path.join(out, "couplings.json"),
        "edges": os.path.join(out, "edges.json"),
        "estimates": os.path.join(out, "estimates.jsonl"),
    }
    write_json(couplings.to_dict(), paths["couplings"])
    with open(paths["edges"], "w", newline="\n") as fh:
        fh.write(edges.to_json() + "\n")
    with open(paths["estimates"], "w", newline="\n") as fh:
        for e in couplings.estimates:
            d = e.to_dict()
            d.update(lam=e.lam, residual=e.residual, estimator=e.estimator, clamped_exponents=e.clamped_exponents)
            fh.write(json.dumps(d) + "\n")
    extra = {"c_lambda": reg.c_lambda, "edges_found": len(edges)}
    truth = cfg.get("model")
    if truth:
        with open(truth) as fh:
            model = IsingModel.from_json(fh.read())
        missing, spurious = edge_errors(edges, model)
        extra.update(success=structure_success(edges, model), missing=missing, spurious=spurious)
    return paths, extra


def _mstar_record(r):
    return {"beta": r.beta, "m_star": r.m_star, "found": r.found, "m_i_mean": r.m_i_mean if r.found else None, "trials": r.trials_run, "history": r.history}


def cmd_mstar(cfg, out, threads):
    spec = _mstar_spec(cfg, threads)
    res = find_m_star(spec)
    paths = {"result": os.path.join(out, "mstar.json"), "csv": os.path.join(out, "mstar.csv")}
    write_json(_mstar_record(res), paths["result"])
    write_csv(paths["csv"], sweep_rows(spec, [res]))
    extra = {"spec": spec.to_dict(), "seeds": {"master_seed": spec.master_seed, "trial_keys": "(trial, beta, m, index)"}}
    if not res.found:
        raise SearchFailure(f"no m <= {spec.m_max} passed {spec.consecutive_successes} consecutive trials", paths, extra)
    return paths, extra


def cmd_sweep(cfg, out, threads):
    spec = _mstar_spec(cfg, threads)
    paths = {"csv": os.path.join(out, "sweep.csv"), "result": os.path.join(out, "sweep.json")}
    extra = {"spec": spec.to_dict(), "seeds": {"master_seed": spec.master_seed}}
    if cfg.get("c_values") is not None:
        best, table = clambda_sweep(spec, cfg["c_values"])
        rows = []
        for c, r in table.items():
            rows += sweep_rows(replace(spec, reg=replace(spec.reg, c_lambda=c)), [r])
        write_csv(paths["csv"], rows)
        write_json({"best_c_lambda": best, "table": {str(c): _mstar_record(r) for c, r in table.items()}}, paths["result"])
        failed = [c for c, r in table.items() if not r.found]
    else:
        betas = _require(cfg, "betas")
        try:
            res = beta_sweep(spec, betas, window=cfg.get("fit_window"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        write_csv(paths["csv"], sweep_rows(spec, res.results))
        write_json(
            {
                "d": res.d,
                "fitted_exponent": None if np.isnan(res.fitted_exponent) else res.fitted_exponent,
                "intercept": None if np.isnan(res.intercept) else res.intercept,
                "fit_residual": None if np.isnan(res.fit_residual) else res.fit_residual,
                "fit_betas": res.fit_betas,
                "results": [_mstar_record(r) for r in res.results],
            },
            paths["result"],
        )
        failed = res.failures
    if failed:
        raise SearchFailure(f"bounded search failed for {failed}", paths, extra)
    return paths, extra


def cmd_active(cfg, out, threads):
    spec = _topology(cfg)
    try:
        model = build_topology(spec)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    seed = int(cfg.get("master_seed", 0))
    reg = _reg(cfg, spec.kind, "M", "drise")
    solver = _solver(cfg)
    i_max = int(cfg.get("i_max", 15))
    try:
        if cfg.get("budget") is not None:
            acfg = ActiveConfig.from_budget(int(cfg["budget"]), i_max=i_max, reg=reg, solver=solver)
        else:
            acfg = ActiveConfig(
                i_max=i_max,
                m_b=int(_require(cfg, "m_b")),
                initial_fraction=float(cfg.get("initial_fraction", 1.0 / 3.0)),
                initial_size=cfg.get("initial_size"),
                reg=reg,
                solver=solver,
            )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    paths = {
        "log": os.path.join(out, "active_log.jsonl"),
        "samples": os.path.join(out, "samples.jsonl"),
        "model_estimate": os.path.join(out, "model_estimate.json"),
    }
    with open(paths["log"], "w", newline="\n") as log:
        estimates, X = active_learn(one_step_oracle(model), acfg, stream(seed, "active"), model.n, log=log)
    write_samples(X, paths["samples"])
    write_json(estimate_model(estimates).to_dict(), paths["model_estimate"])
    return paths, {"seeds": {"master_seed": seed, "stream": ["active"]}, "total_samples": X.m, "rounds": acfg.i_max}


def cmd_neural(cfg, out, threads):
    seed = int(cfg.get("master_seed", 0))
    bin_ms = float(cfg.get("bin_ms", 20.0))
    truth = None
    if cfg.get("spikes_csv"):
        ids, times = read_spike_csv(cfg["spikes_csv"], cfg.get("neurons"))
        duration = cfg.get("duration_ms")
        if duration is None:
            duration = max((t[-1] for t in times if t.size), default=0.0) + bin_ms
        raster = bin_spikes(times, float(duration), bin_ms)
    elif cfg.get("raster_csv"):
        raster = read_raster_csv(cfg["raster_csv"], bin_ms)
    elif cfg.get("synthetic"):
        syn = cfg["synthetic"]
        try:
            truth = build_topology(TopologySpec.from_dict(_require(syn, "topology", "synthetic")))
        except ModelError as exc:
            raise ConfigError(str(exc)) from exc
        raster = synthetic_raster(truth, int(_require(syn, "episodes", "synthetic")), stream(seed, "raster"), bin_ms)
    else:
        raise ConfigError("missing required field 'spikes_csv' (or 'raster_csv' or 'synthetic') in config")
    samples = extract_single_flip_samples(raster)
    report = extraction_report(raster)
    if samples.m < 2:
        raise NeuralDataError("fewer than two single-flip samples in the raster")
    reg = _reg(cfg, "periodic_lattice", "M", "drise")
    _, couplings = learn_structure(samples, reg, _solver(cfg), 1.0, "drise", workers=threads)
    gap = gap_threshold(list(couplings.values.values()), cfg.get("gap_override"))
    H = np.zeros(samples.n)
    for e in couplings.estimates:
        H[e.node] = e.field
    fitted = IsingModel(samples.n, couplings.values, tuple(H))
    emp = time_correlations(samples)
    pred = predict_time_correlations(fitted, empirical_context(samples), int(cfg.get("m_sim", 1_000_000)), stream(seed, "predict"))
    iid = iid_correlations(raster)
    kept = sorted(e for e, v in couplings.values.items() if abs(v) >= gap.threshold)
    paths = {
        "time_empirical": os.path.join(out, "time_corr_empirical.csv"),
        "time_predicted": os.path.join(out, "time_corr_predicted.csv"),
        "iid": os.path.join(out, "iid_corr.csv"),
        "frobenius": os.path.join(out, "frobenius.csv"),
        "report": os.path.join(out, "report.json"),
    }
    emp.to_csv(paths["time_empirical"])
    pred.to_csv(paths["time_predicted"])
    iid.to_csv(paths["iid"])
    frob = frobenius_relative_diff(pred, emp)
    frob_iid = frobenius_relative_diff(iid, emp)
    with open(paths["frobenius"], "w", newline="\n") as fh:
        fh.write("comparison,relative_frobenius\n")
        fh.write(f"predicted_vs_empirical_time,{frob!r}\n")
        fh.write(f"iid_vs_empirical_time,{frob_iid!r}\n")
    rep = dict(report)
    rep.update(
        samples=samples.m,
        gap_threshold=gap.threshold,
        gap_found=gap.found,
        kept_edges=[list(e) for e in kept],
        frobenius_predicted_vs_empirical=frob,
        zero_variance=list(emp.zero_variance),
    )
    if truth is not None:
        rep["support_recovered"] = set(kept) == set(truth.edges)
    write_json(rep, paths["report"])
    return paths, {"seeds": {"master_seed": seed, "streams": ["raster", "predict"]}}


COMMANDS = {
    "generate": cmd_generate,
    "learn": cmd_learn,
    "mstar": cmd_mstar,
    "sweep": cmd_sweep,
    "active": cmd_active,
    "neural": cmd_neural,
}


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="isingdyn", description="Learn Ising models from Glauber dynamics samples.")
    p.add_argument("--version", action="version", version=f"isingdyn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", "-c", help="JSON config file")
        s.add_argument("--output-dir", "-o")
        s.add_argument("--seed", type=int, dest="master_seed")
        s.add_argument("--threads", type=int, dest="thread_count")
        s.add_argument("--set", action="append", default=[], metavar="KEY=JSON", help="override a top-level config value")
        if name in ("learn", "mstar", "sweep"):
            s.add_argument("--estimator", choices=ESTIMATORS)
        if name in ("learn", "mstar", "sweep", "active", "neural"):
            s.add_argument("--c-lambda", type=float, dest="c_lambda")
        if name == "learn":
            s.add_argument("--samples")
            s.add_argument("--alpha", type=float)
        if name == "generate":
            s.add_argument("--m", type=int)
            s.add_argument("--regime", choices=("T", "M"))
    return p


def _load_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=JSON, got {item!r}")
        try:
            cfg[key] = json.loads(val)
        except json.JSONDecodeError:
            cfg[key] = val
    for key in ("master_seed", "thread_count", "estimator", "c_lambda", "samples", "alpha", "m", "regime"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _output_dir(args, cfg):
    return args.output_dir or os.environ.get(OUTPUT_ENV) or cfg.get("output_dir") or "isingdyn-out"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.time()
    try:
        cfg = _load_config(args)
        out = _output_dir(args, cfg)
        os.makedirs(out, exist_ok=True)
        threads = int(cfg.get("thread_count", 0)) or (os.cpu_count() or 1)
        status, paths, extra, err = EXIT_OK, {}, {}, None
        try:
            paths, extra = COMMANDS[args.command](cfg, out, threads)
        except SearchFailure as exc:
            msg, paths, extra = exc.args
            status, err = EXIT_SEARCH, msg
        manifest = {
            "command": args.command,
            "config": cfg,
            "config_sha256": hashlib.sha256(_canonical(cfg).encode()).hexdigest(),
            "master_seed": int(cfg.get("master_seed", 0)),
            "thread_count": threads,
            "outputs": paths,
            "versions": {"isingdyn": __version__, "numpy": np.__version__, "python": sys.version.split()[0], "backend": backend_name()},
            "wall_clock_s": round(time.time() - t0, 3),
            "exit_code": status,
        }
        manifest.update(extra)
        if err:
            manifest["error"] = err
        write_json(manifest, os.path.join(out, "manifest.json"))
        if err:
            print(f"error: {err}", file=sys.stderr)
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoDataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FormatError, NeuralDataError, DynamicsError, ModelError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
