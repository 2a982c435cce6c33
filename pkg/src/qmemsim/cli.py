"""Command line entry point.

Exit codes: 0 ok, 1 configuration or input error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .controller import Trace, read_sequence, validate_sequence
from .metrics import compute_metrics
from .scenarios import KINDS, ConfigError, Scenario, load_config, run_scenario, summarize

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2


def _parse_seeds(text: str) -> range:
    try:
        a, b = text.split("..")
        a, b = int(a), int(b)
    except ValueError:
        raise ConfigError(f"seed range must look like A..B, got {text!r}") from None
    if b < a:
        raise ConfigError("empty seed range")
    return range(a, b + 1)


def _overrides(args) -> dict:
    return load_config(args.config) if args.config else {}


def cmd_run(args) -> int:
    sc = Scenario(args.scenario, args.seed, _overrides(args))
    out = Path(args.out) if args.out else Path(f"{args.scenario}_seed{args.seed}")
    result = run_scenario(sc, out)
    print(f"{args.scenario} seed={args.seed} config_hash={result.config_hash} -> {out}")
    for v in result.violations:
        print(f"VIOLATION: {v}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_VIOLATION


def cmd_validate(args) -> int:
    try:
        seq = read_sequence(args.sequence)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    violations = validate_sequence(seq, window_us=args.window)
    for v in violations:
        print(f"line {v.index + 1} slot {v.slot}: {v.kind}: {v.message}")
    if violations:
        return EXIT_VIOLATION
    print(f"ok: {len(seq)} instructions")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        trace = Trace.loads(Path(args.trace).read_text())
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    threshold = args.threshold if args.threshold is not None else trace.meta.get("threshold", 2 / 3)
    rep = compute_metrics(trace, threshold)
    text = rep.dumps()
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def _sweep_one(job):
    kind, seed, overrides, keep_dir = job
    res = run_scenario(Scenario(kind, seed, overrides), keep_dir)
    return summarize(res)


def cmd_sweep(args) -> int:
    seeds = _parse_seeds(args.seeds)
    overrides = _overrides(args)
    Scenario(args.scenario, 0, overrides).config()  # fail fast on config errors
    out = Path(args.out) if args.out else Path(f"{args.scenario}_sweep")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(args.scenario, s, overrides, out / f"seed{s}" if args.keep_runs else None) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_one, jobs, chunksize=8))
    else:
        rows = [_sweep_one(j) for j in jobs]
    keys = list(rows[0])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    agg = {}
    for k in keys:
        vals = [r[k] for r in rows if isinstance(r.get(k), (int, float)) and not isinstance(r.get(k), bool)]
        if vals and k != "seed":
            agg[k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}
    n_bad = sum(not r["ok"] for r in rows)
    summary = {"kind": args.scenario, "seeds": [seeds.start, seeds.stop - 1], "n_failed": n_bad, "aggregate": agg}
    (out / "sweep.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
    print(f"{args.scenario}: {len(rows)} runs, {n_bad} with violations -> {out}")
    return EXIT_VIOLATION if n_bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmemsim", description="Multiplexed photonic quantum memory simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help=", ".join(KINDS))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--config")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a sequence file")
    v.add_argument("sequence")
    v.add_argument("--window", type=float, default=None, help="scrolling window in us")
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("metrics", help="recompute metrics from a trace file")
    m.add_argument("trace")
    m.add_argument("--threshold", type=float)
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("sweep", help="run a scenario over a range of seeds")
    s.add_argument("scenario", help=", ".join(KINDS))
    s.add_argument("--seeds", required=True, help="inclusive range A..B")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--keep-runs", action="store_true", help="also write each run's artifacts")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
