"""Command-line entry point: ``efla {verify,converge,sweep,recall,bench}``.

Configuration is a flat JSON object (see ``CONFIG_DEFAULTS`` for every key).
Values are resolved as defaults < ``--config`` file < command-line flags.

Exit codes: 0 success, 1 a checked property failed, 2 usage/config/I-O error.
"""
import argparse
import gc
import json
import sys
import time

import numpy as np

from . import harness
from .chunkwise import ChunkPlan, chunk_forward
from .integrators import Reference, parse_method
from .scan import recurrent_forward
from .verify import SUITES, random_batch, run_suites

CONFIG_DEFAULTS = {
    "subcommand": None,
    "methods": None,
    "L": 256,
    "d_k": 32,
    "d_v": 32,
    "chunk_size": 64,
    "seed": 0,
    "n_seeds": 5,
    "out": None,
    "json": False,
    "tolerance": None,
    # verify
    "suites": None,
    # converge
    "orders": list(range(1, 11)),
    "betas": [1.0],
    "lambdas": [1.0],
    # sweep
    "x_values": [0.5, 1.0, 1.5, 2.0, 3.0, 5.0],
    "steps": 50,
    # recall
    "n_pairs": 8,
    "key_scheme": "orthonormal",
    "repeats": 1,
    "beta": 1.0,
    "perturbation": "scale",
    "params": [1.0, 2.0, 4.0],
    "scale_values": False,
    # bench
    "L_grid": [1024, 2048, 4096, 8192],
    "repetitions": 5,
    "exponent_band": [0.8, 1.2],
}

DEFAULT_METHODS = {
    "verify": [],
    "converge": [],
    "sweep": ["euler", "rk2", "rk4", "efla"],
    "recall": ["euler", "efla"],
    "bench": ["efla"],
}


class ConfigError(Exception):
    """Bad configuration; reported with exit code 2."""


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(args):
    cfg = dict(CONFIG_DEFAULTS)
    if args.config:
        file_cfg = load_config(args.config)
        sub = file_cfg.get("subcommand")
        if sub is not None and sub != args.command:
            raise ConfigError(f"config is for {sub!r}, not {args.command!r}")
        cfg.update(file_cfg)
    flags = {
        "out": args.out,
        "seed": args.seed,
        "chunk_size": args.chunk_size,
        "tolerance": args.tolerance,
        "methods": args.methods.split(",") if args.methods else None,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    if args.json:
        cfg["json"] = True
    if cfg["methods"] is None:
        cfg["methods"] = DEFAULT_METHODS[args.command]
    _validate(cfg)
    return cfg


def _validate(cfg):
    for key in ("L", "d_k", "d_v", "chunk_size", "n_seeds", "steps", "n_pairs",
                "repeats", "repetitions"):
        if not isinstance(cfg[key], int) or cfg[key] < 1:
            raise ConfigError(f"{key} must be an integer >= 1, got {cfg[key]!r}")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg['seed']!r}")
    tol = cfg["tolerance"]
    if tol is not None and not (isinstance(tol, (int, float)) and tol > 0):
        raise ConfigError(f"tolerance must be > 0, got {tol!r}")
    try:
        cfg["methods"] = [parse_method(m) for m in cfg["methods"]]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["suites"] is not None:
        unknown = [s for s in cfg["suites"] if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suites: {', '.join(unknown)}")
    if cfg["key_scheme"] not in harness.KEY_SCHEMES:
        raise ConfigError(f"key_scheme must be one of {harness.KEY_SCHEMES}")


def _require_out(cfg):
    if not cfg["out"]:
        raise ConfigError("an output path is required (--out or \"out\" in the config)")
    return cfg["out"]


def _write_csv(rows, path, columns):
    try:
        harness.emit_csv(rows, path, columns)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


# -- subcommands -------------------------------------------------------------

def cmd_verify(cfg):
    results = run_suites(cfg["suites"], tolerance=cfg["tolerance"], seed=cfg["seed"])
    ok = all(r.passed for r in results)
    report = {"passed": ok, "suites": [r.as_dict() for r in results]}
    if cfg["json"]:
        print(json.dumps(report, indent=2))
    else:
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            print(f"{status}  {r.name:<24} max_error={r.max_error:.3e}  "
                  f"tol={r.tolerance:.1e}  ({r.seconds:.2f}s)")
        print(f"{sum(r.passed for r in results)}/{len(results)} suites passed")
    if cfg["out"]:
        try:
            with open(cfg["out"], "w") as fh:
                json.dump(report, fh, indent=2)
        except OSError as exc:
            raise ConfigError(f"cannot write {cfg['out']}: {exc}") from exc
    return 0 if ok else 1


def _converge_violations(rows):
    # Errors must shrink with N once the series terms decrease (N + 1 >= x),
    # down to a 1e-15 floor.
    bad = 0
    for prev, cur in zip(rows, rows[1:]):
        if cur["order"] + 1 < cur["x"] or prev["error"] <= 1e-15:
            continue
        if not cur["error"] < prev["error"]:
            bad += 1
    return bad


def cmd_converge(cfg):
    out = _require_out(cfg)
    rows = []
    bad = 0
    for beta in cfg["betas"]:
        for lam in cfg["lambdas"]:
            if beta < 0 or lam < 0:
                raise ConfigError("betas and lambdas must be >= 0")
            block = harness.rk_convergence(cfg["orders"], beta, lam)
            bad += _converge_violations(block)
            rows.extend(block)
    _write_csv(rows, out, harness.CONVERGENCE_COLUMNS)
    print(f"wrote {len(rows)} rows to {out}; monotonicity violations: {bad}")
    return 0 if bad == 0 else 1


def cmd_sweep(cfg):
    out = _require_out(cfg)
    names = [str(m) for m in cfg["methods"]]
    rows = harness.stability_sweep(cfg["x_values"], cfg["steps"], names)
    tol = 1e-12 if cfg["tolerance"] is None else cfg["tolerance"]
    bad = sum(not r["abs_error"] <= tol for r in rows)
    _write_csv(rows, out, harness.STABILITY_COLUMNS)
    print(f"wrote {len(rows)} rows to {out}; factors off by more than {tol:g}: {bad}")
    return 0 if bad == 0 else 1


def cmd_recall(cfg):
    out = _require_out(cfg)
    try:
        perts = [harness.make_perturbation(cfg["perturbation"], p, cfg["scale_values"])
                 for p in cfg["params"]]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    reports = []
    for i in range(cfg["n_seeds"]):
        seed = harness.trial_seed(cfg["seed"], i)
        try:
            task = harness.gen_recall(seed, cfg["n_pairs"], cfg["d_k"], cfg["d_v"],
                                      cfg["key_scheme"], cfg["repeats"], cfg["beta"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for method in cfg["methods"]:
            for p in perts:
                reports.append((i, harness.eval_recall(method, task, p, seed)))
    reports.sort(key=lambda t: t[0])
    _write_csv([r for _, r in reports], out, harness.RECALL_COLUMNS)
    print(f"wrote {len(reports)} rows to {out}")
    return 0


def _interleaved_medians(jobs, reps):
    # One repetition of every job per round, so slow drift in machine load
    # hits all lengths alike; GC is paused while timing.
    samples = [[] for _ in jobs]
    for fn in jobs:
        fn()  # warm-up
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(reps):
            for i, fn in enumerate(jobs):
                t0 = time.perf_counter()
                fn()
                samples[i].append(time.perf_counter() - t0)
    finally:
        if gc_was_enabled:
            gc.enable()
    return [float(np.median(s)) for s in samples]


def fit_exponent(lengths, seconds):
    """Slope of log(seconds) against log(length), by least squares."""
    return float(np.polyfit(np.log(lengths), np.log(seconds), 1)[0])


def cmd_bench(cfg):
    grid = sorted(int(L) for L in cfg["L_grid"])
    if len(grid) < 2:
        raise ConfigError("L_grid needs at least two lengths")
    if any(L < 1 for L in grid):
        raise ConfigError("L_grid entries must be >= 1")
    method = cfg["methods"][0]
    if isinstance(method, Reference):
        raise ConfigError("the reference solver cannot be benchmarked")
    reps = max(5, cfg["repetitions"])
    plan = ChunkPlan(cfg["chunk_size"])
    rng = harness.trial_rng(cfg["seed"], 7)
    batch_max = random_batch(rng, grid[-1], cfg["d_k"], cfg["d_v"])

    sanity = batch_max.slice(0, grid[0])
    diff = float(np.abs(chunk_forward(method, sanity, ChunkPlan(1)).O
                        - recurrent_forward(method, sanity).O).max())

    paths = ("recurrent", "chunkwise")
    jobs = []
    for L in grid:
        b = batch_max.slice(0, L)
        jobs.append(lambda b=b: recurrent_forward(method, b))
        jobs.append(lambda b=b: chunk_forward(method, b, plan))
    medians = _interleaved_medians(jobs, reps)
    rows = []
    timings = {p: [] for p in paths}
    for j, t in enumerate(medians):
        L, path = grid[j // 2], paths[j % 2]
        timings[path].append(t)
        rows.append({"path": path, "method": str(method), "L": L, "seconds": t,
                     "tokens_per_second": L / t})
    lo, hi = cfg["exponent_band"]
    exps = {p: fit_exponent(grid, ts) for p, ts in timings.items()}
    ok = all(lo <= e <= hi for e in exps.values()) and diff <= 1e-9
    summary = {"method": str(method), "d_k": cfg["d_k"], "d_v": cfg["d_v"],
               "chunk_size": plan.chunk_size, "exponents": exps,
               "band": [lo, hi], "chunk1_max_diff": diff, "passed": ok}
    for r in rows:
        print(f"{r['path']:<10} L={r['L']:<6} {r['seconds'] * 1e3:9.2f} ms  "
              f"{r['tokens_per_second']:12.0f} tok/s")
    print(json.dumps(summary, indent=2))
    if cfg["out"]:
        _write_csv(rows, cfg["out"], ("path", "method", "L", "seconds", "tokens_per_second"))
    return 0 if ok else 1


COMMANDS = {
    "verify": cmd_verify,
    "converge": cmd_converge,
    "sweep": cmd_sweep,
    "recall": cmd_recall,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="efla", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "verify": "run every property suite; exit 0 iff all pass",
        "converge": "RK-N one-step error against the exact gate, as CSV",
        "sweep": "per-step growth factor along the key, as CSV",
        "recall": "associative recall under perturbations, as CSV",
        "bench": "throughput and runtime scaling of both forward paths",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--out", metavar="PATH", help="output file (CSV, or JSON for verify)")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--methods", metavar="LIST", help="comma-separated, e.g. euler,rk4,efla")
        p.add_argument("--chunk-size", type=int, metavar="N")
        p.add_argument("--tolerance", type=float, metavar="FLOAT")
        p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"efla {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
