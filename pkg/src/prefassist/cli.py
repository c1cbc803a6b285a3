"""Command-line interface.

    prefassist gen             --config cfg.json [--out DIR]
    prefassist train           [--task T] [--metric M] [--seed N]
    prefassist transfer        [--task T] [--method X] [--seed N]
    prefassist refine          [--task T] [--method X] [--seed N]
    prefassist report
    prefassist sweep-threshold [--task T] [--grid 0.1,0.5,inf] [--seed N]

Omitted --task/--metric/--method flags mean "all"; cells run independently
and PREFASSIST_THREADS caps how many run concurrently.  Exit codes: 0 ok,
2 config error, 3 incomplete or malformed inputs, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .config import ConfigError, ExperimentConfig, default_config_json, load_config
from .hands import TaskLabel
from .pipeline import (cmd_gen, cmd_refine, cmd_sweep_threshold, cmd_train,
                       cmd_transfer, table_to_csv, write_atomic)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCOMPLETE = 3
EXIT_NUMERIC = 4

_TASKS = tuple(t.value for t in TaskLabel)
_METRICS = ("smupa", "smupe", "smuwt")
_METHODS = ("direct", "trpw", "trnw", "trew")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefassist",
                                     description="Preference-aware assistance benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, task=False, metric=False, method=False, seed=False):
        p.add_argument("--config", default=None, help="experiment config JSON")
        p.add_argument("--out", default=None, help="override output directory")
        if task:
            p.add_argument("--task", choices=_TASKS + ("all",), default="all")
        if metric:
            p.add_argument("--metric", choices=_METRICS + ("all",), default="all")
        if method:
            p.add_argument("--method", choices=_METHODS + ("all",), default=None)
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="run seed (default: master seed)")

    p = sub.add_parser("gen", help="generate commands, strategies, features, labels")
    common(p)
    p.add_argument("--print-default-config", action="store_true",
                   help="dump the built-in default config and exit")

    common(sub.add_parser("train", help="stagewise + baseline training"),
           task=True, metric=True, seed=True)
    common(sub.add_parser("transfer", help="transfer the learned model to the 2-finger hand"),
           task=True, method=True, seed=True)
    common(sub.add_parser("refine", help="refine a transferred model on half data"),
           task=True, method=True, seed=True)
    common(sub.add_parser("report", help="aggregate runs into report tables"))

    p = sub.add_parser("sweep-threshold", help="smuwt stability-threshold sweep")
    common(p, task=True, seed=True)
    p.add_argument("--grid", default="0.1,0.2,0.5,1.0,inf",
                   help="comma-separated thresholds (inf allowed)")
    return parser


def _tasks(arg: str) -> list[TaskLabel]:
    if arg == "all":
        return list(TaskLabel)
    return [TaskLabel(arg)]


def _threads() -> int:
    raw = os.environ.get("PREFASSIST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PREFASSIST_THREADS must be an integer, got {raw!r}")


def _run_cells(jobs) -> list:
    threads = _threads()
    if threads == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.out:
        merged = dict(cfg.raw)
        merged["out_dir"] = args.out
        from .config import parse_config

        cfg = parse_config(merged)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "gen" and args.print_default_config:
            print(default_config_json())
            return EXIT_OK
        cfg = _load(args)

        if args.command == "gen":
            summary = cmd_gen(cfg)
            print(json.dumps(summary, indent=2, sort_keys=True))
            return EXIT_OK

        if args.command == "train":
            seed = cfg.master_seed if args.seed is None else args.seed
            metrics = _METRICS if args.metric == "all" else (args.metric,)
            jobs = [lambda t=t, m=m: cmd_train(cfg, t, m, seed)
                    for t in _tasks(args.task) for m in metrics]
            for res in _run_cells(jobs):
                print(json.dumps(res, sort_keys=True))
            return EXIT_OK

        if args.command == "transfer":
            seed = cfg.master_seed if args.seed is None else args.seed
            methods = _METHODS if args.method in (None, "all") else (args.method,)
            jobs = [lambda t=t, m=m: cmd_transfer(cfg, t, m, seed)
                    for t in _tasks(args.task) for m in methods]
            for res in _run_cells(jobs):
                print(json.dumps(res, sort_keys=True))
            return EXIT_OK

        if args.command == "refine":
            seed = cfg.master_seed if args.seed is None else args.seed
            method = args.method or cfg.transfer.method
            if method == "all":
                methods = _METHODS
            else:
                methods = (method,)
            jobs = [lambda t=t, m=m: cmd_refine(cfg, t, m, seed)
                    for t in _tasks(args.task) for m in methods]
            for res in _run_cells(jobs):
                print(json.dumps(res, sort_keys=True))
            return EXIT_OK

        if args.command == "report":
            from .reports import build_report, write_report

            bundle = build_report(cfg)
            write_report(bundle, cfg)
            print(f"report written to {cfg.out_dir}")
            if not bundle.complete:
                for item in bundle.missing:
                    print(f"incomplete: {item}", file=sys.stderr)
                return EXIT_INCOMPLETE
            return EXIT_OK

        if args.command == "sweep-threshold":
            seed = cfg.master_seed if args.seed is None else args.seed
            try:
                grid = [float(v) for v in args.grid.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"bad --grid {args.grid!r}")
            if not grid:
                raise ConfigError("empty threshold grid")
            rows = []
            for task in _tasks(args.task):
                rows.extend(cmd_sweep_threshold(cfg, grid, task, seed))
            out = os.path.join(cfg.out_dir, f"threshold_sweep_seed{seed}.csv")
            write_atomic(out, table_to_csv(
                ["task", "seed", "kl_threshold", "final_accuracy",
                 "kl_rollbacks", "rollbacks"],
                [[r["task"], r["seed"], r["kl_threshold"], r["final_accuracy"],
                  r["kl_rollbacks"], r["rollbacks"]] for r in rows]))
            print(f"sweep written to {out}")
            return EXIT_OK

        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
