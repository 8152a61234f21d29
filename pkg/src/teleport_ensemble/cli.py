"""Command-line runner for the experiments and the exact verification sweep.

Usage::

    teleport-ensemble run CONFIG.json [--seed S] [--out DIR]
    teleport-ensemble verify [--seed S] [--out DIR]
    teleport-ensemble iat RUNRECORD.csv --n-walkers N [--burn-in F] [--window-constant C]

Exit status is 0 on success, 1 for an invalid config and 2 for a
numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .analysis import verification_suite
from .diagnostics import RunRecord, run_statistics
from .errors import ConfigInvalid, NumericalError
from .experiments import (
    make_dataset,
    sample_double_well,
    sample_gp_multivariate,
    sample_gp_nongaussian,
    sample_gp_univariate,
)
from .gp import write_dataset_csv
from .meanfield import (
    Grid,
    build_grid_kernel,
    double_well_initial,
    euler_integrate,
    fit_decay_rate,
    metropolize_kernel,
    normalize,
)
from .targets import double_well_log

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _fmt(x):
    return format(float(x), ".17g")


def _header(cfg_hash, seed):
    return f"# config_hash={cfg_hash} seed={seed}\n"


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_runrecord_csv(record, path, cfg_hash, seed):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header(cfg_hash, seed))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "ensemble_mean", "cloned_value", "accepted", "teleported"])
        for k in range(record.steps):
            w.writerow([k + 1, _fmt(record.ensemble_mean_series[k]),
                        _fmt(record.cloned_walker_series[k]),
                        int(record.accepted_series[k]), int(record.teleported_series[k])])


def read_runrecord_csv(path, n_walkers):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    record = RunRecord(n_walkers)
    for row in rows:
        record.append(float(row["ensemble_mean"]), float(row["cloned_value"]),
                      bool(int(row["accepted"])), bool(int(row["teleported"])))
    return record


# --- experiment kinds --------------------------------------------------------

def _run_meanfield(cfg, out, cfg_hash, seed):
    g = Grid(cfg["grid"]["lower"], cfg["grid"]["upper"], cfg["grid"]["size"])
    x = g.nodes
    pi = normalize(np.exp(double_well_log(x, cfg["beta"])), g.dx)
    kernel = build_grid_kernel(g, cfg["sigma"])
    if cfg["dynamics"] == "linear":
        kernel = metropolize_kernel(kernel, pi)
    rho0 = double_well_initial(x, cfg["beta"], g.dx)
    traj = euler_integrate(cfg["dynamics"], rho0, pi, kernel, cfg["dt"], cfg["t_end"],
                           nodes=x, stride=cfg["stride"], snapshot_times=cfg["snapshot_times"])
    t, e, chi2, mins = traj.as_arrays()
    with open(os.path.join(out, "trajectory.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(_header(cfg_hash, seed))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "E", "chi2", "min_rho"])
        for row in zip(t, e, chi2, mins):
            w.writerow([_fmt(v) for v in row])
    if traj.snapshots:
        with open(os.path.join(out, "snapshots.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(_header(cfg_hash, seed))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "rho"])
            for key in sorted(traj.snapshots):
                ts, rho = traj.snapshots[key]
                for xv, rv in zip(x, rho):
                    w.writerow([_fmt(ts), _fmt(xv), _fmt(rv)])
    try:
        rate, _, fit = fit_decay_rate(t, e)
    except NumericalError as exc:
        rate, fit = None, {"error": str(exc)}
    return {
        "final_E": float(e[-1]),
        "min_rho": float(mins.min()),
        "max_chi2_increase": float(np.max(np.diff(chi2))) if len(chi2) > 1 else 0.0,
        "max_mass_error": float(np.max(np.abs(traj.mass_errors))),
        "rate": rate,
        "fit": fit,
    }


def _sampler_summary(record, cfg):
    stats = run_statistics(record, cfg["window_constant"], cfg["burn_in"])
    stats["T"] = stats["T_proposed"]  # headline teleport rate
    extra = {k: v for k, v in record.config.items() if k.startswith("inner_")}
    stats.update(extra)
    return stats


def _run_sampler(cfg, out, cfg_hash, seed):
    rng = np.random.default_rng(seed)
    kind = cfg["kind"]
    summary = {}
    if kind == "double_well_sample":
        record, _ = sample_double_well(cfg["beta"], cfg["sigma"], cfg["n_walkers"],
                                       cfg["steps"], rng, seed=seed)
    else:
        ds = cfg["dataset"]
        dataset = make_dataset(ds["n"], ds["m"], ds["seed"])
        path = os.path.join(out, "dataset.csv")
        write_dataset_csv(dataset, path, f"config_hash={cfg_hash} seed={seed}"
                          f" dataset_seed={ds['seed']}")
        summary["dataset_seed"] = ds["seed"]
        with open(path, "rb") as fh:
            summary["dataset_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        init = tuple(cfg["init"])
        if kind == "gp_univariate":
            record, _ = sample_gp_univariate(dataset, cfg["n_walkers"], cfg["steps"],
                                             cfg["proposal_variance"], rng, init, seed=seed)
        elif kind == "gp_multivariate":
            record, _ = sample_gp_multivariate(dataset, cfg["n_walkers"], cfg["steps"],
                                               tuple(cfg["proposal_diag"]), rng, init,
                                               seed=seed)
        else:
            record, _ = sample_gp_nongaussian(dataset, cfg["n_walkers"], cfg["steps"],
                                              cfg["u_proposal_diag"],
                                              cfg["v_proposal_variance"], cfg["n_inner"],
                                              rng, init, seed=seed)
    write_runrecord_csv(record, os.path.join(out, "runrecord.csv"), cfg_hash, seed)
    summary.update(_sampler_summary(record, cfg))
    return summary


def _run_finite_verify(cfg, out, cfg_hash, seed):
    result = verification_suite(np.random.default_rng(seed), cfg["n_instances"],
                                cfg["max_states"], cfg["max_walkers"], cfg["tolerance"])
    _write_json(os.path.join(out, "verification.json"),
                {"config_hash": cfg_hash, "seed": seed, **result})
    return {"pass": result["pass"]}


_RUNNERS = {
    "meanfield": _run_meanfield,
    "double_well_sample": _run_sampler,
    "gp_univariate": _run_sampler,
    "gp_multivariate": _run_sampler,
    "gp_nongaussian": _run_sampler,
    "finite_verify": _run_finite_verify,
}


def run_experiment(cfg, out):
    """Run a validated config, writing artifacts and ``summary.json`` to ``out``."""
    os.makedirs(out, exist_ok=True)
    cfg_hash = cfgmod.config_hash(cfg)
    seed = cfg["seed"]
    summary = _RUNNERS[cfg["kind"]](cfg, out, cfg_hash, seed)
    _write_json(os.path.join(out, "summary.json"),
                {"config_hash": cfg_hash, "seed": seed, "kind": cfg["kind"], "config": cfg,
                 **summary})
    return summary


# --- argument handling ---------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(prog="teleport-ensemble",
                                description="Teleporting-walker ensemble experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config", help="path to the JSON config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory (default: config or ./out)")

    v = sub.add_parser("verify", help="exact finite-state verification sweep")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--out", default="out-verify")
    v.add_argument("--n-instances", type=int, default=None)

    i = sub.add_parser("iat", help="rates and normalized IAT of a run-record CSV")
    i.add_argument("runrecord", help="CSV written by `run`")
    i.add_argument("--n-walkers", type=int, required=True)
    i.add_argument("--burn-in", type=float, default=0.1)
    i.add_argument("--window-constant", type=float, default=5.0)
    return p


def _report_config_error(exc):
    for msg in exc.messages:
        print(f"config error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            raw = cfgmod.load(args.config)
            out = args.out or (raw.get("output_dir") if isinstance(raw, dict) else None) or "out"
            if args.seed is not None:
                raw = {**raw, "seed": args.seed}
            cfg = cfgmod.validate(raw)
            summary = run_experiment(cfg, out)
        elif args.command == "verify":
            raw = {"kind": "finite_verify", "seed": args.seed}
            if args.n_instances is not None:
                raw["n_instances"] = args.n_instances
            cfg = cfgmod.validate(raw)
            summary = run_experiment(cfg, args.out)
            if not summary["pass"]:
                print("verification failed", file=sys.stderr)
                return EXIT_NUMERICAL
        else:
            if args.n_walkers < 1:
                raise ConfigInvalid(["--n-walkers: must be >= 1"])
            if not 0 <= args.burn_in < 1:
                raise ConfigInvalid(["--burn-in: must lie in [0, 1)"])
            record = read_runrecord_csv(args.runrecord, args.n_walkers)
            summary = run_statistics(record, args.window_constant, args.burn_in)
            summary["T"] = summary["T_proposed"]
    except ConfigInvalid as exc:
        return _report_config_error(exc)
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
