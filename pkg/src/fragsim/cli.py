"""Command-line interface.

Subcommands: run, validate, emit-facts, query, export-policy. Exit codes:
0 success, 1 validation/input error, 2 runtime error. All outputs are plain
line-oriented text; --trace streams runtime debug lines to stderr.
"""

from __future__ import annotations

import argparse
import sys

from .driver import (
    ScenarioError,
    SimulationError,
    load_scenario,
    run,
    scenario_fact_atoms,
    write_csv,
    write_metrics,
)
from .network import TopologyError
from .policies import PolicyError, builtin_policy, load_policy_file
from .rules import (
    EvaluationError,
    FactBase,
    ParseError,
    StratificationError,
    format_atom,
    parse_goal,
    query as engine_query,
    substitute,
)
from .runtime import NodeRuntimeError

_INPUT_ERRORS = (ScenarioError, TopologyError, ParseError, PolicyError)
_RUNTIME_ERRORS = (
    SimulationError,
    EvaluationError,
    StratificationError,
    NodeRuntimeError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage + exit 1 instead of argparse's exit 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fragsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_run = sub.add_parser("run", help="execute a scenario and write metrics")
    p_run.add_argument("scenario")
    p_run.add_argument("--policy", help="builtin policy name overriding the scenario")
    p_run.add_argument("--policy-file", help="rule file overriding the scenario policy")
    p_run.add_argument("--rounds", type=int, help="round count overriding the scenario")
    p_run.add_argument("--metrics", help="JSON-lines output path (default stdout)")
    p_run.add_argument("--csv", help="also write metrics as CSV to this path")
    p_run.add_argument("--trace", action="store_true", help="debug trace to stderr")

    p_validate = sub.add_parser("validate", help="check a scenario document")
    p_validate.add_argument("scenario")

    p_emit = sub.add_parser("emit-facts", help="print the scenario's fact base")
    p_emit.add_argument("scenario")

    p_query = sub.add_parser("query", help="evaluate the policy and match a goal")
    p_query.add_argument("scenario")
    p_query.add_argument("goal")

    p_export = sub.add_parser("export-policy", help="print a builtin policy rule set")
    p_export.add_argument("name")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "emit-facts":
        return _cmd_emit_facts(args)
    if args.command == "query":
        return _cmd_query(args)
    return _cmd_export_policy(args)


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.policy and args.policy_file:
        print("error: --policy and --policy-file are mutually exclusive", file=sys.stderr)
        return 1
    if args.policy:
        scenario.policy = builtin_policy(args.policy)
    elif args.policy_file:
        scenario.policy = load_policy_file(args.policy_file)
    if args.rounds is not None:
        if args.rounds < 1:
            print("error: --rounds must be >= 1", file=sys.stderr)
            return 1
        scenario.rounds = args.rounds

    trace = (lambda line: print(line, file=sys.stderr)) if args.trace else None
    try:
        timeline = run(scenario, trace=trace)
    except SimulationError as exc:
        _write_outputs(exc.timeline, args)
        raise
    _write_outputs(timeline, args)
    return 0


def _write_outputs(timeline, args) -> None:
    if args.metrics:
        write_metrics(timeline, args.metrics)
    else:
        write_metrics(timeline, sys.stdout)
    if args.csv:
        write_csv(timeline, args.csv)


def _cmd_validate(args) -> int:
    load_scenario(args.scenario)
    print("ok")
    return 0


def _cmd_emit_facts(args) -> int:
    scenario = load_scenario(args.scenario)
    for atom in scenario_fact_atoms(scenario):
        print(f"{format_atom(atom)}.")
    return 0


def _cmd_query(args) -> int:
    scenario = load_scenario(args.scenario)
    goal = parse_goal(args.goal)
    base = FactBase(scenario_fact_atoms(scenario))
    result = engine_query(scenario.policy.program, base, goal)
    if result.unknown_predicate:
        print(f"warning: unknown predicate {goal.pred}/{goal.arity}", file=sys.stderr)
    for answer in result.answers:
        print(format_atom(substitute(goal, answer)))
    return 0


def _cmd_export_policy(args) -> int:
    print(builtin_policy(args.name).text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
