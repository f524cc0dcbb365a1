"""Command-line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .errors import ConfigError, DegenerateWarning, UsageError


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageExit(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="experiment config JSON (bundled names allowed)")
    p.add_argument("--seed", type=int, default=d(None), help="master seed override")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads (RWGC_THREADS overrides)")
    p.add_argument("--out", default=d(None), help="output directory or file")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    parser = _Parser(prog="rwgc", description="Random weight guessing task-difficulty toolkit.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rwg", parents=[common], help="evaluate random policies on one task")
    p.add_argument("--links", type=_floats, default=None, help="link lengths, e.g. 0.95,0.70")
    p.add_argument("--reward", choices=("dense", "sparse", "obstacle"), default="dense")
    p.add_argument("--task", default=None, help="task name from --config instead of --links")
    p.add_argument("--policies", type=int, default=100)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--cell", default=None, help="recompute one cell 'n,e' and print its return")

    p = sub.add_parser("metrics", parents=[common], help="PIC and POIC of a return matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--bins", type=int, default=100_000)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--optimal-return", type=float, default=0.0)
    p.add_argument("--lambda-sweep", type=_floats, default=None,
                   help="comma-separated temperatures; prints POIC for each")

    p = sub.add_parser("stats", parents=[common], help="bootstrap CI of PIC or POIC")
    p.add_argument("--matrix", required=True)
    p.add_argument("--metric", choices=("pic", "poic"), default="pic")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--bins", type=int, default=100_000)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--optimal-return", type=float, default=0.0)

    p = sub.add_parser("compare", parents=[common], help="pairwise Welch tests between bootstrap results")
    p.add_argument("bootstrap", nargs="+", help="BootstrapResult JSON files")
    p.add_argument("--labels", default=None, help="comma-separated labels (default: file stems)")

    p = sub.add_parser("bound", parents=[common], help="end-effector error bound")
    p.add_argument("--links", type=_floats, required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--samples", type=int, default=0, help="Monte-Carlo samples to verify (0: skip)")

    sub.add_parser("oracle", parents=[common], help="estimators against brute-force references")

    p = sub.add_parser("suite", parents=[common], help="run a task suite")
    p.add_argument("--profile", default=None, help="scale profile, e.g. reduced or paper")
    p.add_argument("--parallel-tasks", action="store_true")
    p.add_argument("--policies", type=int, default=None, help="override N for every task")
    p.add_argument("--episodes", type=int, default=None, help="override M for every task")
    p.add_argument("--k", type=int, default=None, help="override bootstrap resamples")
    p.add_argument("--quiet", action="store_true")
    return parser


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    print(text, end="" if text.endswith("\n") else "\n")


def _load_matrix(path):
    from .rwg import ReturnMatrix
    if not Path(path).is_file():
        raise FileNotFoundError(f"matrix file not found: {path}")
    return ReturnMatrix.from_csv(path)


def _cmd_rwg(args) -> int:
    from .config import load_config
    from .dynamics import ArmTask, RewardSpec, ObstacleSpec, action_dim, observation_dim
    from .policy import PolicySpec
    from .rwg import RwgConfig, aggregate, distribution_artifacts, evaluate, evaluate_cell

    seed = args.seed if args.seed is not None else 0
    if args.task is not None:
        if not args.config:
            raise UsageError("--task needs --config")
        cfg = load_config(args.config)
        entries = {t.name: t for t in cfg.tasks}
        if args.task not in entries:
            raise ConfigError(f"no task named {args.task!r} in {args.config}")
        entry = entries[args.task]
        task, spec = entry.task, entry.policy_spec(cfg.policy)
    else:
        if not args.links:
            raise ConfigError("give --links or --task")
        obstacle = ObstacleSpec() if args.reward == "obstacle" else None
        task = ArmTask(tuple(args.links), RewardSpec(args.reward), obstacle=obstacle)
        spec = PolicySpec(observation_dim(task), action_dim(task))
    rcfg = RwgConfig(args.policies, args.episodes, seed, spec, task)
    if args.cell:
        n, e = (int(v) for v in args.cell.split(","))
        print(repr(evaluate_cell(rcfg, n, e)))
        return 0
    rm = evaluate(rcfg, threads=args.threads)
    if not args.out:
        print(json.dumps({"shape": list(rm.S.shape), "matrix_hash": rm.content_hash,
                          "mean": float(rm.S.mean())}, sort_keys=True))
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rm.to_csv(out / "returns.csv")
    rm.write_sidecar(out / "returns.json")
    stats = aggregate(rm.S)
    stats.to_csv(out / "aggregate.csv")
    distribution_artifacts(stats, rm.S).write_csvs(str(out) + "/")
    print(f"wrote {out}")
    return 0


def _cmd_metrics(args) -> int:
    from .metrics import PicConfig, PoicConfig, metric_report
    rm = _load_matrix(args.matrix)
    if args.lambda_sweep:
        from .metrics import poic
        rows = [{"temperature": lam, **poic(rm, PoicConfig(lam, args.optimal_return))._asdict()}
                for lam in args.lambda_sweep]
        _emit(json.dumps(rows, indent=2, sort_keys=True) + "\n", args.out)
        return 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        rep = metric_report(rm, PicConfig(args.bins), PoicConfig(args.temperature, args.optimal_return),
                            provenance={"matrix": str(args.matrix)})
    _emit(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_stats(args) -> int:
    from .metrics import PicConfig, PoicConfig
    from .report import _clean
    from .stats import bootstrap_metric
    rm = _load_matrix(args.matrix)
    cfg = PicConfig(args.bins) if args.metric == "pic" else PoicConfig(args.temperature, args.optimal_return)
    br = bootstrap_metric(rm, args.metric, cfg, k=args.k, seed=args.seed if args.seed is not None else 0)
    if args.out:
        Path(args.out).write_text(json.dumps(_clean(br.to_dict()), indent=2, sort_keys=True) + "\n")
    print(json.dumps(_clean(br.to_dict(include_resamples=False)), indent=2, sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    from .stats import BootstrapResult, compare_tasks, write_pairwise_csv
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.bootstrap]
    if len(labels) != len(args.bootstrap):
        raise ConfigError("one label per bootstrap file")
    reports = []
    for lab, path in zip(labels, args.bootstrap):
        if not Path(path).is_file():
            raise FileNotFoundError(f"bootstrap file not found: {path}")
        reports.append((lab, BootstrapResult.from_dict(json.loads(Path(path).read_text()))))
    table = compare_tasks(reports)
    if args.out:
        write_pairwise_csv([table], args.out)
    print("task_a,task_b,metric,t,df,p")
    for r in table.rows():
        print(f"{r['task_a']},{r['task_b']},{r['metric']},{r['t']:.6g},{r['df']:.6g},{r['p']:.6g}")
    return 0


def _cmd_bound(args) -> int:
    from .errorbound import error_bound, verify_bound
    b = error_bound(args.links, args.epsilon)
    print(f"bound {b:.6g}")
    if args.samples:
        rep = verify_bound(args.links, args.epsilon, args.samples, args.seed or 0)
        _emit(rep.to_json() + "\n", args.out)
        return 0 if rep.violations == 0 else 2
    return 0


def _cmd_oracle(args) -> int:
    from .report import oracle_checks
    checks = oracle_checks(args.seed or 0)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL'}  {c.detail}")
    return 0 if all(c.passed for c in checks) else 2


def _cmd_suite(args) -> int:
    from .config import load_config
    from .report import run_suite
    cfg = load_config(args.config or "paper_suite.json")
    cfg = cfg.with_overrides(master_seed=args.seed, profile=args.profile, n_policies=args.policies,
                             n_episodes=args.episodes, bootstrap_k=args.k)
    out = args.out or cfg.output_dir
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    manifest = run_suite(cfg, out, threads=args.threads, parallel_tasks=args.parallel_tasks, progress=progress)
    failed = [t for t in manifest["tasks"] if t["status"] != "ok"]
    print(f"{len(manifest['tasks']) - len(failed)}/{len(manifest['tasks'])} tasks ok; manifest at "
          f"{Path(out) / 'manifest.json'}")
    return 2 if failed else 0


_COMMANDS = {"rwg": _cmd_rwg, "metrics": _cmd_metrics, "stats": _cmd_stats, "compare": _cmd_compare,
             "bound": _cmd_bound, "oracle": _cmd_oracle, "suite": _cmd_suite}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        from .rwg import resolve_threads
        args.threads = resolve_threads(args.threads)
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, UsageError) as exc:
        print(f"rwgc: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"rwgc: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
