"""``bifair`` command line: validate a config, run an experiment, inspect the oracle.

Exit codes: 0 success, 1 constraint or domain failure, 2 parse or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from .config import ConfigParseError, ExperimentConfig, check, dump_resolved, load_config, with_run
from .env import ConfigError
from .merit import MeritAssumptionError
from .oracle import BoundParameters, NoSuboptimalGroupError, bound_terms, optimal_allocation, summarize
from .policies import ALGORITHMS
from .runner import AggregateResult, run_experiment, with_overrides

EXIT_OK = 0
EXIT_CONSTRAINT = 1
EXIT_PARSE = 2

CSV_COLUMNS = ("algorithm", "run", "t", "metric", "group", "value")


def _load(path: str, err) -> ExperimentConfig | None:
    try:
        return load_config(path)
    except ConfigParseError as exc:
        print(f"error: {exc}", file=err)
        return None


def _failures(cfg: ExperimentConfig) -> list[str]:
    return [msg for _, errs in check(cfg) for msg in errs]


def cmd_validate(path: str, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    cfg = _load(path, err)
    if cfg is None:
        return EXIT_PARSE
    failed = False
    for topic, errs in check(cfg):
        if errs:
            failed = True
            for msg in errs:
                print(f"FAIL  {topic}: {msg}", file=out)
        else:
            print(f"ok    {topic}", file=out)
    return EXIT_CONSTRAINT if failed else EXIT_OK


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def timeseries_csv(agg: AggregateResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    ts = [int(t) for t in agg.checkpoints]
    for algo in agg.algorithms:
        for run in range(agg.config.runs):
            for metric, group, values in agg.series(algo, run):
                for t, v in zip(ts, values):
                    if isinstance(v, (float, np.floating)) and math.isnan(v):
                        continue  # fairness regret is undefined before a group's first pull
                    w.writerow((algo, run, t, metric, group, _fmt(v)))
    return buf.getvalue()


def summary_json(agg: AggregateResult) -> str:
    cfg = agg.config
    doc = {
        "horizon": cfg.horizon,
        "runs": cfg.runs,
        "seed": cfg.seed,
        "beta": cfg.beta.as_strings(),
        "algorithms": agg.final_summary(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_run(path: str, out_dir: str, runs=None, horizon=None, seed=None, algos=None, workers=None,
            out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    cfg = _load(path, err)
    if cfg is None:
        return EXIT_PARSE
    algos_t = tuple(algos) if algos else None
    cfg = with_run(cfg, with_overrides(cfg.run, runs=runs, horizon=horizon, seed=seed, algorithms=algos_t))
    failures = _failures(cfg)
    if failures:
        for msg in failures:
            print(f"error: {msg}", file=err)
        return EXIT_CONSTRAINT
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, "resolved_config.yaml")
        _write(probe, dump_resolved(cfg))
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc.strerror or exc}", file=err)
        return EXIT_PARSE
    try:
        agg = run_experiment(cfg.run, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONSTRAINT
    try:
        _write(os.path.join(out_dir, "timeseries.csv"), timeseries_csv(agg))
        _write(os.path.join(out_dir, "summary.json"), summary_json(agg))
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc.strerror or exc}", file=err)
        return EXIT_PARSE
    print(f"wrote timeseries.csv, summary.json, resolved_config.yaml to {out_dir}", file=out)
    return EXIT_OK


def cmd_oracle(path: str, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    cfg = _load(path, err)
    if cfg is None:
        return EXIT_PARSE
    run = cfg.run
    if cfg.instance_doc.get("regenerate_per_run"):
        print("error: oracle needs a fixed instance (set instance.regenerate_per_run: false)", file=err)
        return EXIT_CONSTRAINT
    failures = _failures(cfg)
    if failures:
        for msg in failures:
            print(f"error: {msg}", file=err)
        return EXIT_CONSTRAINT
    instance = run.source.for_run(run.seed, 0)
    summary = summarize(instance, run.merit, run.beta, run.horizon)
    doc = {"oracle": summary.to_dict(), "means": list(instance.means),
           "groups": [list(g) for g in instance.partition.groups]}
    status = EXIT_OK
    message = None
    try:
        params = BoundParameters.from_oracle(summary, run.merit, instance, run.delta)
        alloc = optimal_allocation(summary.g_star, run.beta, run.horizon)
        doc["bound_inputs"] = {
            "L1": params.L1,
            "gamma1": params.gamma1,
            "gamma2": params.gamma2,
            "delta": params.delta,
            "group_sizes": list(params.group_sizes),
            "Delta_min": params.delta_min,
            "group_pulls": alloc,
        }
        doc["bound_terms"] = bound_terms(params, alloc, run.horizon)
    except (NoSuboptimalGroupError, MeritAssumptionError) as exc:
        message = str(exc)
        status = EXIT_CONSTRAINT
    print(yaml.safe_dump(doc, sort_keys=False, allow_unicode=True), end="", file=out)
    if not summary.g_star_unique:
        print("note: g* is not unique; several groups share the best value", file=out)
    if message:
        print(f"error: {message}", file=err)
    return status


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bifair", description="Group- and merit-fair bandit experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config file and report every constraint")
    v.add_argument("config")

    r = sub.add_parser("run", help="run an experiment and write CSV/JSON artifacts")
    r.add_argument("config")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--runs", type=_positive_int)
    r.add_argument("--horizon", type=_positive_int)
    r.add_argument("--seed", type=int)
    r.add_argument("--algos", help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    r.add_argument("--workers", type=_positive_int, help="process count (default: $BIFAIR_WORKERS or CPU count)")

    o = sub.add_parser("oracle", help="print the optimal fair policy and regret-bound inputs")
    o.add_argument("config")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if args.command == "validate":
        return cmd_validate(args.config)
    if args.command == "oracle":
        return cmd_oracle(args.config)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()] if args.algos else None
    return cmd_run(args.config, args.out, args.runs, args.horizon, args.seed, algos, args.workers)


if __name__ == "__main__":
    sys.exit(main())
