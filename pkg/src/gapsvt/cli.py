"""Command-line front end.

Three subcommands: ``run`` executes a mechanism over a workload file and
emits one JSON record per run, ``verify`` drives the verification suites,
``budget`` prints a split table.  Exit codes are strict: 0 success/pass,
1 verification counterexample, 2 usage or data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

from .core import NoiseKind, NoiseTape, Side, TapeLayout, Workload, check_workload
from .errors import GapSvtError
from .mechanisms import (
    ADAPTIVE_GAP,
    MECHANISMS,
    budget_split_adaptive,
    budget_split_svt,
    default_budget,
    run_mechanism,
    sample_run,
    tape_layout_for,
)
from .alignments import Mutation
from .verifier import (
    TrialPlan,
    check_dp_exact,
    default_enumeration_instances,
    mc_privacy_estimate,
    run_trial_suites,
)

WORKLOAD_FIELDS = {"pairs", "threshold", "k", "epsilon", "sigma", "noise"}


def load_workload_dict(data: dict) -> tuple[Workload, NoiseKind]:
    if not isinstance(data, dict):
        raise GapSvtError("workload file must contain a JSON object")
    unknown = sorted(set(data) - WORKLOAD_FIELDS)
    if unknown:
        raise GapSvtError(f"unknown workload field {unknown[0]!r}")
    for name in ("pairs", "threshold", "k", "epsilon", "noise"):
        if name not in data:
            raise GapSvtError(f"workload field {name!r} is missing")
    try:
        kind = NoiseKind(data["noise"])
    except ValueError:
        raise GapSvtError(f"field 'noise' must be 'laplace' or 'dlap', got {data['noise']!r}")
    pairs = data["pairs"]
    if not isinstance(pairs, list):
        raise GapSvtError("field 'pairs' must be an array of [qD, qDprime] pairs")
    for i, entry in enumerate(pairs):
        if (
            not isinstance(entry, (list, tuple))
            or len(entry) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in entry)
        ):
            raise GapSvtError(f"field 'pairs' entry {i} must be a pair of numbers")
    for name in ("threshold", "epsilon"):
        if not isinstance(data[name], (int, float)) or isinstance(data[name], bool):
            raise GapSvtError(f"field {name!r} must be a number")
    if not isinstance(data["k"], int) or isinstance(data["k"], bool):
        raise GapSvtError("field 'k' must be an integer")
    sigma = data.get("sigma")
    if sigma is not None and (not isinstance(sigma, (int, float)) or isinstance(sigma, bool)):
        raise GapSvtError("field 'sigma' must be a number")
    w = Workload.from_values(pairs, data["threshold"], data["k"], data["epsilon"], sigma)
    return check_workload(w), kind


def load_workload_file(path: str) -> tuple[Workload, NoiseKind]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise GapSvtError(f"workload file {path} is not valid JSON: {e}")
    return load_workload_dict(data)


def emit_workload(w: Workload, kind: NoiseKind) -> dict:
    out = {
        "pairs": [[p.value_d, p.value_dprime] for p in w.pairs],
        "threshold": w.threshold,
        "k": w.k,
        "epsilon": w.epsilon,
        "noise": kind.value,
    }
    if w.sigma is not None:
        out["sigma"] = w.sigma
    return out


def load_tape_file(path: str, layout: TapeLayout, n_queries: int) -> NoiseTape:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise GapSvtError(f"tape file {path} is not valid JSON: {e}")
    if not isinstance(data, dict) or "threshold" not in data or "per_query" not in data:
        raise GapSvtError("tape file needs fields 'threshold' and 'per_query'")
    per_raw = data["per_query"]
    if not isinstance(per_raw, list) or len(per_raw) < n_queries:
        raise GapSvtError(f"tape field 'per_query' must list at least {n_queries} entries")
    if layout is TapeLayout.SINGLE:
        for i, v in enumerate(per_raw):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise GapSvtError(f"tape entry {i} must be a number for this mechanism")
        per = tuple(per_raw)
    else:
        for i, v in enumerate(per_raw):
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise GapSvtError(f"tape entry {i} must be a [first, second] pair for this mechanism")
        per = tuple(tuple(v) for v in per_raw)
    return NoiseTape(data["threshold"], per, layout)


def _answer_json(mechanism: str, answer) -> dict:
    if not answer.top:
        return {"bot": True, "gap": 0} if mechanism == ADAPTIVE_GAP else {"bot": True}
    if answer.gap is None:
        return {"top": True}
    return {"gap": answer.gap, "branch": answer.branch.value}


def _answer_text(answer) -> str:
    if not answer.top:
        return "⊥"
    if answer.gap is None:
        return "⊤"
    if answer.branch.value == "plain":
        return f"⊤(gap={answer.gap})"
    return f"⊤(gap={answer.gap},{answer.branch.value})"


def cmd_run(args) -> int:
    w, kind = load_workload_file(args.workload)
    side = Side.D if args.side == "d" else Side.DPRIME
    mechanism = args.mechanism
    layout = tape_layout_for(mechanism)
    injected = load_tape_file(args.tape, layout, len(w)) if args.tape else None
    budget = default_budget(mechanism, w)
    for r in range(args.runs):
        seed_r = args.seed + r
        if injected is not None:
            result = run_mechanism(mechanism, w, injected, side, budget if mechanism == ADAPTIVE_GAP else None)
            record_seed = None
        else:
            result, _ = sample_run(mechanism, w, side, seed_r, kind)
            record_seed = seed_r
        record = {
            "mechanism": mechanism,
            "seed": record_seed,
            "side": side.value,
            "answers": [_answer_json(mechanism, a) for a in result.output],
            "consumed": result.consumed,
        }
        if injected is not None:
            record["tape_file"] = args.tape
        if result.ledger is not None:
            record["cost_ledger"] = {
                "initial": float(result.ledger.initial),
                "running_cost": float(result.ledger.running_cost),
                "events": [
                    [e.index, e.branch.value, float(e.increment)] for e in result.ledger.events
                ],
            }
        if args.format == "json":
            print(json.dumps(record, separators=(",", ":")))
        else:
            trace = " ".join(_answer_text(a) for a in result.output)
            print(f"run seed={record_seed} side={side.value}: {trace}")
    return 0


def cmd_budget(args) -> int:
    if args.mechanism == ADAPTIVE_GAP:
        b = budget_split_adaptive(args.epsilon, args.k)
        identity = b.epsilon0 + 2 * args.k * b.epsilon2 == b.epsilon
        print(
            f"eps0={float(b.epsilon0)} eps1={float(b.epsilon1)} eps2={float(b.epsilon2)}; "
            f"eps0+2k*eps2={float(b.epsilon0 + 2 * args.k * b.epsilon2)} "
            f"(exact={identity}); eps1<=eps2={b.epsilon1 <= b.epsilon2}"
        )
    else:
        b = budget_split_svt(args.epsilon, args.k)
        print(
            f"eps0={float(b.epsilon0)} eps1={float(b.epsilon1)}; "
            f"eps0+2k*eps1={float(b.epsilon0 + 2 * args.k * b.epsilon1)} (exact={b.identity_holds()})"
        )
    return 0


def _parse_mutation(text: str | None) -> tuple[Mutation | None, float]:
    if not text:
        return None, 2.0
    name, _, value = text.partition("=")
    try:
        mutation = Mutation(name)
    except ValueError:
        raise GapSvtError(
            f"unknown mutation {name!r}; expected one of "
            f"{', '.join(m.value for m in Mutation)}"
        )
    return mutation, float(value) if value else 2.0


def cmd_verify(args) -> int:
    mutation, mutation_value = _parse_mutation(args.inject_mutation)
    suites = ["align", "cost", "structural", "dp-exact", "dp-mc"] if args.suite == "all" else [args.suite]
    trial_suites = tuple(s for s in suites if s in ("align", "cost", "structural"))
    reports = []
    if trial_suites:
        plan = TrialPlan(
            mechanism=args.mechanism,
            trials=args.trials,
            master_seed=args.seed,
            mutation=mutation,
            mutation_value=mutation_value,
        )
        combined = run_trial_suites(plan, trial_suites)
        reports.extend(combined[s] for s in trial_suites)
    for suite in suites:
        if suite in trial_suites:
            continue
        if suite == "dp-exact":
            if args.workload:
                w, kind = load_workload_file(args.workload)
                if kind is not NoiseKind.DLAP:
                    raise GapSvtError("dp-exact needs a workload file with noise='dlap'")
                instances = [w]
            else:
                instances = default_enumeration_instances(args.mechanism)[:4]
            for w in instances:
                report, _ = check_dp_exact(args.mechanism, w, grid_budget=args.grid_budget)
                reports.append(report)
        elif suite == "dp-mc":
            if args.workload:
                w, kind = load_workload_file(args.workload)
            else:
                w, kind = default_enumeration_instances(args.mechanism)[0], NoiseKind.DLAP
            samples = max(10**4, args.trials)
            reports.append(mc_privacy_estimate(args.mechanism, w, samples, args.seed, kind))
    verdict = "pass" if all(r.passed for r in reports) else "fail"
    if len(reports) == 1:
        payload = reports[0].to_json_dict()
    else:
        payload = {"verdict": verdict, "suites": [r.to_json_dict() for r in reports]}
    print(json.dumps(payload, indent=2, default=str))
    return 0 if verdict == "pass" else 1


def _default_seed() -> int:
    return int(os.environ.get("GAPSVT_SEED", "0"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapsvt",
        description="Run threshold-report mechanisms over explicit noise tapes and verify their privacy properties.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a mechanism over a workload file")
    p_run.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p_run.add_argument("--workload", required=True, help="path to a workload JSON file")
    p_run.add_argument("--side", choices=("d", "dprime"), default="d")
    p_run.add_argument("--seed", type=int, default=_default_seed())
    p_run.add_argument("--runs", type=int, default=1)
    p_run.add_argument("--format", choices=("json", "text"), default="json")
    p_run.add_argument("--tape", help=argparse.SUPPRESS)  # inject explicit noise values
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run verification suites")
    p_verify.add_argument(
        "--suite",
        required=True,
        choices=("align", "cost", "structural", "dp-exact", "dp-mc", "all"),
    )
    p_verify.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p_verify.add_argument("--trials", type=int, default=10000)
    p_verify.add_argument("--seed", type=int, default=_default_seed())
    p_verify.add_argument("--grid-budget", type=int, default=10**8)
    p_verify.add_argument("--workload", help="workload file for dp-exact / dp-mc")
    p_verify.add_argument("--inject-mutation", help=argparse.SUPPRESS)  # self-test corruptions
    p_verify.set_defaults(func=cmd_verify)

    p_budget = sub.add_parser("budget", help="print a budget split table")
    p_budget.add_argument("--epsilon", type=float, required=True)
    p_budget.add_argument("--k", type=int, required=True)
    p_budget.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p_budget.set_defaults(func=cmd_budget)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GapSvtError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
