"""Report assembly and rendering.

The structured form is plain JSON with a versioned schema; the table
form is for eyeballs. Both carry the same facts: per-run decisions,
delays, property verdicts with witnesses, and min/median delay
aggregates across the whole scenario.
"""

from __future__ import annotations

import json
import statistics
from typing import List

from .errors import ScenarioError
from .scenario import RunResult, Scenario

SCHEMA_VERSION = 1


def build_report(s: Scenario, results: List[RunResult]) -> dict:
    runs = []
    delays = []
    for r in results:
        tr = r.trace
        delays.extend(tr.decision_delay.values())
        runs.append({
            "seed": r.seed,
            "repetition": r.repetition,
            "decisions": {p: v.hex() for p, v in sorted(tr.decisions.items())},
            "decision_delay": dict(sorted(tr.decision_delay.items())),
            "verdicts": [v.to_dict() for v in r.verdicts],
            "faults": dict(sorted(tr.faulty_processes.items())),
            "crashed_memories": sorted(tr.crashed_memories),
            "events_fired": tr.events_fired,
            "final_time": tr.final_time,
            "budget_exhausted": tr.budget_exhausted,
            "horizon_reached": tr.horizon_reached,
            "ok": r.ok,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "protocol": s.protocol,
        "config": s.config.to_dict(),
        "runs": runs,
        "aggregate": {
            "run_count": len(runs),
            "pass_count": sum(1 for r in runs if r["ok"]),
            "min_decision_delay": min(delays) if delays else None,
            "median_decision_delay": (statistics.median(delays)
                                      if delays else None),
        },
        "all_pass": all(r["ok"] for r in runs),
    }


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def _verdict_cell(run: dict) -> str:
    bad = [v["name"] for v in run["verdicts"] if not v["ok"]]
    return "ok" if not bad else "FAIL:" + ",".join(bad)


def render_table(report: dict) -> str:
    rows = [("seed", "rep", "decided", "delays", "checks")]
    for run in report["runs"]:
        decided = ",".join(f"{p}={v}" for p, v in run["decisions"].items()) or "-"
        delays = ",".join(str(d) for d in run["decision_delay"].values()) or "-"
        rows.append((str(run["seed"]), str(run["repetition"]),
                     decided, delays, _verdict_cell(run)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    agg = report["aggregate"]
    lines.append("")
    lines.append(f"scenario: {report['scenario']}  protocol: {report['protocol']}")
    lines.append(f"runs: {agg['run_count']}  passed: {agg['pass_count']}  "
                 f"min delay: {agg['min_decision_delay']}  "
                 f"median delay: {agg['median_decision_delay']}")
    lines.append("ALL PASS" if report["all_pass"] else "VIOLATIONS PRESENT")
    for run in report["runs"]:
        for v in run["verdicts"]:
            if not v["ok"]:
                lines.append(f"  seed {run['seed']} {v['name']}: {v['info']} "
                             f"witnesses={v['witnesses']}")
    return "\n".join(lines)


def emit_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "table":
        return render_table(report)
    raise ScenarioError("format", f"unknown format {fmt!r}")
