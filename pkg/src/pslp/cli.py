"""Command-line interface: ``pslp {eval,run,synth,convert,bench,selftest}``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .config import RunConfig
from .episodes import RNG_DESCRIPTION, synthetic_gaussian_bank
from .errors import ConvergenceWarning, PslpError
from .evaluate import METHODS, accuracy, bench_latency, evaluate
from .features import load_feature_bank, save_feature_bank
from .model import pslp_infer
from .selftest import run_selftest

# flag dest -> config key
_FLAG_KEYS = {
    "n_way": "ep.n_way",
    "k_shot": "ep.k_shot",
    "m_query": "ep.m_query",
    "mode": "ep.mode",
    "alpha_dir": "ep.alpha_dir",
    "seed": "ep.seed",
    "alpha": "pslp.alpha",
    "beta": "pslp.beta",
    "gamma": "pslp.gamma",
    "k": "pslp.k",
    "b": "pslp.b",
    "t_pslp": "pslp.t_pslp",
    "sinkhorn": "pslp.balanced",
    "raw_eq10": "pslp.raw_eq10",
    "t_jmp": "jmp.t_jmp",
    "dense_first_graph": "jmp.dense_first_graph",
    "pipeline": "features.pipeline",
    "workers": "run.workers",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bank", required=True, help="feature bank (.fbnk or .csv)")
    p.add_argument("--format", choices=["fbnk", "csv"], help="bank format (default: from extension)")
    p.add_argument("--config", help="key = value config file (default: $PSLP_CONFIG)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    g = p.add_argument_group("episode")
    g.add_argument("--n-way", type=int)
    g.add_argument("--k-shot", type=int)
    g.add_argument("--m-query", type=int)
    g.add_argument("--mode", choices=["balanced", "dirichlet"])
    g.add_argument("--alpha-dir", type=float)
    g.add_argument("--seed", type=int)
    h = p.add_argument_group("method")
    h.add_argument("--alpha", type=float)
    h.add_argument("--beta", type=float)
    h.add_argument("--gamma", type=float)
    h.add_argument("--k", type=int)
    h.add_argument("--b", type=int)
    h.add_argument("--t-pslp", type=int)
    h.add_argument("--t-jmp", type=int)
    h.add_argument("--sinkhorn", action=argparse.BooleanOptionalAction, default=None)
    h.add_argument("--raw-eq10", action=argparse.BooleanOptionalAction, default=None)
    h.add_argument("--dense-first-graph", action=argparse.BooleanOptionalAction, default=None)
    h.add_argument("--pipeline", help="e.g. center,l2_normalize,pca(40),l2_normalize")


def _resolve(args) -> RunConfig:
    flags = {}
    for item in args.set:
        if "=" not in item:
            raise PslpError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        flags[key] = value
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            flags[key] = value
    return RunConfig.load(args.config, flags)


def _dump(obj, path):
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def cmd_eval(args) -> int:
    rc = _resolve(args)
    bank = load_feature_bank(args.bank, args.format)
    params = rc.episode_params()
    echo = {
        "resolved": rc.echo(),
        "bank": args.bank,
        "setting": "balanced" if params.mode == "balanced" else "imbalanced",
    }
    report = evaluate(
        bank,
        rc.pslp_config(),
        params,
        args.tasks,
        methods=args.methods.split(","),
        workers=rc.workers,
        skip_errors=args.skip_errors,
        extra_echo=echo,
    )
    if args.json:
        _dump(report.to_dict(), "-")
    else:
        print(report.table())
    if args.out:
        _dump(report.to_dict(), args.out)
    if args.task_csv:
        report.write_task_csv(args.task_csv)
    return 0


def cmd_run(args) -> int:
    rc = _resolve(args)
    bank = load_feature_bank(args.bank, args.format)
    params = rc.episode_params()
    ep = params.sample(bank, args.task_index)
    res = pslp_infer(ep.support_X, ep.support_y, ep.query_X, rc.pslp_config(), ep.n_way, seed=ep.seed)
    dump = {
        "config_echo": rc.echo(),
        "bank": args.bank,
        "seed": list(ep.seed),
        "rng": RNG_DESCRIPTION,
        "episode_classes": ep.classes.tolist(),
        "support_labels": ep.support_y.tolist(),
        "truth": ep.truth_y.tolist(),
        "predictions": res.predictions.tolist(),
        "accuracy": accuracy(res.predictions, ep.truth_y) if ep.truth_y.size else None,
        "soft_labels": res.soft_labels.tolist(),
        "query_row_sums": res.soft_labels.sum(axis=1).tolist(),
        "query_column_sums": res.soft_labels.sum(axis=0).tolist(),
        "center_shift": res.center_shift,
    }
    if args.trace:
        dump["prototype_trace"] = [{"iteration": c.iteration, "centers": c.centers.tolist()} for c in res.prototype_trace]
    _dump(dump, args.out)
    return 0


def cmd_synth(args) -> int:
    bank = synthetic_gaussian_bank(args.classes, args.per_class, args.dim, args.sep, args.noise, args.seed)
    save_feature_bank(bank, args.output, args.format)
    print(f"wrote {bank.n}x{bank.d} bank with {len(bank.classes)} classes to {args.output}")
    return 0


def cmd_convert(args) -> int:
    bank = load_feature_bank(args.input, getattr(args, "from"))
    save_feature_bank(bank, args.output, args.to)
    print(f"converted {bank.n}x{bank.d} bank to {args.output}")
    return 0


def cmd_bench(args) -> int:
    rc = _resolve(args)
    bank = load_feature_bank(args.bank, args.format)
    summary = bench_latency(bank, rc.pslp_config(), rc.episode_params(), args.tasks)
    summary["config_echo"] = rc.echo()
    if args.json:
        _dump(summary, "-")
    elif summary["n"]:
        print(
            f"{summary['n']} tasks: total {summary['total_s']:.3f} s, "
            f"per task mean {summary['mean']:.0f} us, p50 {summary['p50']:.0f} us, p95 {summary['p95']:.0f} us"
        )
    else:
        print("0 tasks timed")
    return 0


def cmd_selftest(args) -> int:
    ok = run_selftest(quick=args.quick, fault=args.inject_fault)
    print("selftest passed" if ok else "selftest FAILED")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pslp", description="Prototype-based soft-label propagation for transductive few-shot classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate over many seeded episodes")
    _add_config_flags(p)
    p.add_argument("--tasks", type=int, default=1000)
    p.add_argument("--workers", type=int)
    p.add_argument("--methods", default="pslp", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--task-csv", help="write per-task accuracy and latency here")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of the table")
    p.add_argument("--skip-errors", action="store_true", help="drop failing tasks instead of aborting")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run one episode and dump its internals")
    _add_config_flags(p)
    p.add_argument("--task-index", type=int, default=0)
    p.add_argument("--trace", action="store_true", help="include every prototype iterate")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-mixture bank")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sep", type=float, required=True)
    p.add_argument("--noise", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["fbnk", "csv"])
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="translate a bank between fbnk and csv")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--from", choices=["fbnk", "csv"])
    p.add_argument("--to", choices=["fbnk", "csv"])
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("bench", help="time inference only, single process")
    _add_config_flags(p)
    p.add_argument("--tasks", type=int, default=1000)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selftest", help="run the built-in oracle and invariant checks")
    p.add_argument("--quick", action="store_true", help="small instances only")
    p.add_argument("--inject-fault", choices=["alpha-guard"], help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("once", ConvergenceWarning)
            return args.func(args)
    except (PslpError, OSError, ValueError) as exc:
        print(f"pslp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
