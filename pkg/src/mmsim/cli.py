"""Command-line front end.

    mmsim run scenario.toml [--seed N | --seeds K] [--format table|json]
    mmsim check scenario.toml
    mmsim sweep scenario.toml --field n --values 3,5,7

`run` executes a scenario and prints a report; the exit status is 0
only if every property verdict on every run passed. `check` validates
a scenario file without running it. `sweep` re-runs the scenario with
one numeric system field swept across a list of values and prints one
aggregate line per point.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ScenarioError, SimError
from .report import build_report, emit_report
from .scenario import load_scenario, run_scenario


def _apply_overrides(s, args):
    if getattr(args, "seed", None) is not None:
        s = dataclasses.replace(s, seeds=[args.seed])
    elif getattr(args, "seeds", None) is not None:
        base = s.seeds[0] if s.seeds else 0
        s = dataclasses.replace(s, seeds=list(range(base, base + args.seeds)))
    if getattr(args, "budget", None) is not None:
        s = dataclasses.replace(
            s, config=dataclasses.replace(s.config, budget=args.budget))
    return s


def _cmd_run(args) -> int:
    s = _apply_overrides(load_scenario(args.scenario), args)
    results = run_scenario(s)
    report = build_report(s, results)
    text = emit_report(report, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if report["all_pass"] else 1


def _cmd_check(args) -> int:
    s = load_scenario(args.scenario)
    print(f"ok: {s.name} protocol={s.protocol} n={s.config.n} m={s.config.m} "
          f"seeds={len(s.seeds)} reps={s.repetitions} faults={len(s.faults)}")
    return 0


def _cmd_sweep(args) -> int:
    s = load_scenario(args.scenario)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError("--values", "expected comma-separated integers")
    if not values:
        raise ScenarioError("--values", "empty sweep")
    if not hasattr(s.config, args.field):
        raise ScenarioError("--field", f"no system field named {args.field!r}")
    rows = [("%s" % args.field, "runs", "passed", "min_delay", "median_delay")]
    ok = True
    for v in values:
        cfg = dataclasses.replace(s.config, **{args.field: v})
        point = dataclasses.replace(s, config=cfg)
        point.entry.precheck(cfg)
        report = build_report(point, run_scenario(point))
        agg = report["aggregate"]
        ok = ok and report["all_pass"]
        rows.append((str(v), str(agg["run_count"]), str(agg["pass_count"]),
                     str(agg["min_decision_delay"]),
                     str(agg["median_decision_delay"])))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mmsim")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and report verdicts")
    run_p.add_argument("scenario")
    run_p.add_argument("--seed", type=int, help="run this single seed only")
    run_p.add_argument("--seeds", type=int,
                       help="run this many consecutive seeds from the base")
    run_p.add_argument("--format", choices=("table", "json"), default="table")
    run_p.add_argument("--budget", type=int, help="override the event budget")
    run_p.add_argument("--out", help="write the report here instead of stdout")
    run_p.set_defaults(fn=_cmd_run)

    check_p = sub.add_parser("check", help="validate a scenario file")
    check_p.add_argument("scenario")
    check_p.set_defaults(fn=_cmd_check)

    sweep_p = sub.add_parser("sweep", help="sweep one numeric system field")
    sweep_p.add_argument("scenario")
    sweep_p.add_argument("--field", required=True)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated integers")
    sweep_p.set_defaults(fn=_cmd_sweep)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    except SimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
