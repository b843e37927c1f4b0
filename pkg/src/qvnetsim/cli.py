"""Command line front end.

Subcommands: validate, solve, run, split.  Machine-readable results go
to stdout, diagnostics to stderr.  Exit codes: 0 success, 1 invalid
input or failed operation, 2 usage error.
"""

from __future__ import annotations

import argparse
import pathlib
import sys

from .behavior import build_lp, solve_behavior
from .engine import allocation_json, emit_metrics, run
from .errors import ParseError, QvnetError, ValidationError
from .qvnet import Behavior, BehaviorKind
from .scenario import load_scenario
from .topology import link_pair
from .virtlink import split_trunk


def _behavior_flag(text: str) -> Behavior:
    kind, _, arg = text.partition(":")
    try:
        if kind == BehaviorKind.BALANCED.value:
            if arg:
                raise ValueError("balanced takes no argument")
            return Behavior(kind=BehaviorKind.BALANCED)
        if kind == BehaviorKind.BROADCAST.value:
            if not arg:
                raise ValueError("broadcast needs a hub, e.g. broadcast:B")
            return Behavior(kind=BehaviorKind.BROADCAST, hub=arg)
        if kind == BehaviorKind.HIGH_THROUGHPUT.value:
            src, sep, dst = arg.partition(",")
            if not sep or not src or not dst:
                raise ValueError(
                    "high_throughput needs a pair, e.g. high_throughput:A,D"
                )
            return Behavior(kind=BehaviorKind.HIGH_THROUGHPUT, pair=(src, dst))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    raise argparse.ArgumentTypeError(f"unknown behavior {kind!r}")


def _pair_flag(text: str) -> tuple[str, str]:
    a, sep, b = text.partition(",")
    if not sep or not a or not b or a == b:
        raise argparse.ArgumentTypeError(
            "expected two distinct node names, e.g. A,B"
        )
    return link_pair(a, b)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvnetsim",
        description="Simulate virtual QKD networks over a trusted-node graph.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser(
        "validate", help="check a scenario file and report every problem"
    )
    p_validate.add_argument("scenario", help="path to a scenario JSON file")
    p_validate.set_defaults(handler=_cmd_validate)

    p_solve = sub.add_parser(
        "solve", help="print one QVNet's rate allocation as JSON"
    )
    p_solve.add_argument("scenario", help="path to a scenario JSON file")
    p_solve.add_argument("--qvnet", required=True, help="QVNet id to solve")
    p_solve.add_argument(
        "--behavior",
        type=_behavior_flag,
        default=None,
        metavar="KIND[:ARG]",
        help="override the configured behavior: balanced, broadcast:HUB, "
        "or high_throughput:SRC,DST",
    )
    p_solve.set_defaults(handler=_cmd_solve)

    p_run = sub.add_parser("run", help="simulate a scenario and write metrics")
    p_run.add_argument("scenario", help="path to a scenario JSON file")
    p_run.add_argument("--out", required=True, help="metrics output path")
    p_run.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="output format"
    )
    p_run.add_argument(
        "--seed", type=int, default=None, help="override the scenario seed"
    )
    p_run.add_argument(
        "--figures",
        metavar="DIR",
        default=None,
        help="also render PNG figures into this directory",
    )
    p_run.set_defaults(handler=_cmd_run)

    p_split = sub.add_parser(
        "split", help="show one trunk's virtual link split"
    )
    p_split.add_argument("scenario", help="path to a scenario JSON file")
    p_split.add_argument(
        "--trunk",
        required=True,
        type=_pair_flag,
        metavar="A,B",
        help="trunk endpoints, comma separated",
    )
    p_split.set_defaults(handler=_cmd_split)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    except (ParseError, QvnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(
        f"ok: {scenario.name} "
        f"({len(scenario.graph.nodes)} nodes, {len(scenario.graph.links)} links, "
        f"{len(scenario.trunks)} trunks, {len(scenario.qvnets)} qvnets, "
        f"{len(scenario.workload)} requests over {scenario.duration} ticks)"
    )
    return 0


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    wanted = {q.id: q for q in scenario.qvnets}.get(args.qvnet)
    if wanted is None:
        print(f"error: no QVNet {args.qvnet!r} in scenario", file=sys.stderr)
        return 1
    lp = build_lp(wanted, behavior=args.behavior)
    allocation = solve_behavior(lp)
    sys.stdout.write(allocation_json(allocation))
    return 0


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    report = run(scenario)
    rendered = emit_metrics(report, format=args.format)
    out_path = pathlib.Path(args.out)
    if out_path.parent != pathlib.Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(rendered, encoding="utf-8")
    print(f"wrote {out_path}", file=sys.stderr)
    if args.figures is not None:
        from .figures import render_report_figures

        for figure_path in render_report_figures(report, args.figures):
            print(f"wrote {figure_path}", file=sys.stderr)
    return 0


def _cmd_split(args) -> int:
    scenario = load_scenario(args.scenario)
    trunk = next((t for t in scenario.trunks if t.pair == args.trunk), None)
    if trunk is None:
        a, b = args.trunk
        print(f"error: no trunk for pair {a}-{b}", file=sys.stderr)
        return 1
    result = split_trunk(trunk)
    print(
        f"trunk {trunk.pair[0]}-{trunk.pair[1]} "
        f"kind={trunk.kind.value} rate={trunk.rate}"
    )
    name_width = max([len("subconn")] + [len(qv.subconn) for qv in result.qvlinks])
    quota_width = max(
        [len("quota")] + [len(str(trunk.quotas[qv.subconn])) for qv in result.qvlinks]
    )
    print(f"{'subconn':<{name_width}}  {'quota':>{quota_width}}  rate")
    for qv in result.qvlinks:
        quota = trunk.quotas[qv.subconn]
        print(f"{qv.subconn:<{name_width}}  {str(quota):>{quota_width}}  {qv.rate}")
    print(f"oversubscribed: {'yes' if result.oversubscribed else 'no'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
