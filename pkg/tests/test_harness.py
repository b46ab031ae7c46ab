from __future__ import annotations

import json

import pytest

from mmsim.cli import main
from mmsim.errors import ScenarioError
from mmsim.report import SCHEMA_VERSION, build_report, emit_report
from mmsim.scenario import load_scenario_text, run_scenario

from conftest import failures, load

MINIMAL = """
protocol = "pmp"
[system]
n = 2
m = 3
f_p = 1
f_m = 1
"""


def err(text):
    with pytest.raises(ScenarioError) as exc:
        load_scenario_text(text)
    return str(exc.value)


# -- loader validation: errors name the offending field -----------------------

def test_unknown_protocol_lists_choices():
    msg = err('protocol = "raft"\n[system]\nn = 3')
    assert "protocol" in msg and "raft" in msg and "pmp" in msg


def test_unknown_system_field_is_named():
    msg = err('protocol = "pmp"\n[system]\nn = 2\nm = 3\nquorum = 9')
    assert "system" in msg and "quorum" in msg


def test_bad_hex_input_is_named():
    msg = err(MINIMAL + '[inputs]\np1 = "xyz"\np2 = "00"')
    assert "inputs.p1" in msg


def test_input_for_foreign_process_rejected():
    msg = err(MINIMAL + '[inputs]\np1 = "00"\np2 = "01"\np7 = "02"')
    assert "inputs.p7" in msg


def test_consensus_inputs_must_be_complete():
    msg = err(MINIMAL + '[inputs]\np1 = "00"')
    assert "missing" in msg and "p2" in msg


def test_broadcast_inputs_may_be_partial():
    s = load_scenario_text("""
protocol = "reliable-broadcast"
[system]
n = 3
m = 3
f_p = 1
f_m = 1
byzantine = true
horizon = 200
[inputs]
p2 = "aa"
""")
    assert list(s.inputs) == ["p2"]


def test_unknown_fault_field_is_named():
    msg = err(MINIMAL + '[[faults]]\ntarget = "p1"\nkind = "crash"\nwhence = 3')
    assert "faults[0]" in msg and "whence" in msg


def test_fault_needs_exactly_one_trigger():
    msg = err(MINIMAL + '[[faults]]\ntarget = "p1"\nkind = "crash"')
    assert "at/after" in msg
    msg = err(MINIMAL + '[[faults]]\ntarget = "p1"\nkind = "crash"\n'
              'at = 1\nafter = ["p2", "decide", 1]')
    assert "at/after" in msg


BYZ = """
protocol = "fast-robust"
[system]
n = 3
m = 3
f_p = 1
f_m = 1
byzantine = true
"""


def test_unknown_adversary_script_is_named():
    msg = err(BYZ + '[[faults]]\ntarget = "p1"\nkind = "gaslighter"\nat = 0')
    assert "gaslighter" in msg


def test_omega_timeline_rejects_unknown_process():
    msg = err(MINIMAL + '[omega]\ntimeline = [[0, "p9"]]')
    assert "omega.timeline" in msg and "p9" in msg


def test_empty_seed_list_rejected():
    msg = err(MINIMAL + '[run]\nseeds = []')
    assert "run.seeds" in msg


def test_zero_repetitions_rejected():
    msg = err(MINIMAL + '[run]\nrepetitions = 0')
    assert "run.repetitions" in msg


def test_toml_syntax_errors_surface_as_scenario_errors():
    msg = err('protocol = "pmp\n')
    assert "parse error" in msg


def test_default_leader_skips_faulted_processes():
    s = load_scenario_text(MINIMAL)
    assert s.omega.timeline == [(0, "p1")]
    s = load_scenario_text(
        BYZ + '[[faults]]\ntarget = "p1"\nkind = "silent"\nat = 0')
    assert s.omega.timeline == [(0, "p2")]


# -- every bundled scenario passes its own property suite ----------------------

def scenario_files():
    import pathlib
    here = pathlib.Path(__file__).resolve().parent.parent / "scenarios"
    return sorted(here.glob("*.toml"))


@pytest.mark.parametrize("path", scenario_files(), ids=lambda p: p.stem)
def test_bundled_scenario_passes(path):
    from mmsim.scenario import load_scenario
    results = run_scenario(load_scenario(str(path)))
    assert results and not failures(results)


def test_the_bundle_is_not_empty():
    assert len(scenario_files()) >= 10


# -- reports -------------------------------------------------------------------

def test_report_structure_and_json_round_trip():
    s = load(MINIMAL + "[run]\nseeds = [0, 1]")
    report = build_report(s, run_scenario(s))
    assert report["schema_version"] == SCHEMA_VERSION
    assert report["protocol"] == "pmp"
    assert report["aggregate"]["run_count"] == 2
    assert report["aggregate"]["pass_count"] == 2
    assert report["all_pass"] is True
    assert len(report["runs"]) == 2
    again = json.loads(emit_report(report, "json"))
    assert again == report


def test_table_report_shows_the_verdict_summary():
    s = load(MINIMAL)
    text = emit_report(build_report(s, run_scenario(s)), "table")
    assert "ALL PASS" in text
    assert "seed" in text


def test_unknown_report_format_rejected():
    s = load(MINIMAL)
    report = build_report(s, run_scenario(s))
    with pytest.raises(ScenarioError):
        emit_report(report, "csv")


# -- command line ---------------------------------------------------------------

def test_cli_run_exits_zero_on_clean_scenario(scenario_dir, capsys):
    rc = main(["run", str(scenario_dir / "pmp-minimal.toml")])
    assert rc == 0
    assert "ALL PASS" in capsys.readouterr().out


def test_cli_run_exits_one_when_a_check_fails(scenario_dir, capsys):
    # strangling the budget turns termination red without touching the file
    rc = main(["run", str(scenario_dir / "pmp-minimal.toml"), "--budget", "10"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "VIOLATIONS PRESENT" in out


def test_cli_run_seed_override_runs_exactly_that_seed(scenario_dir, tmp_path):
    out = tmp_path / "r.json"
    rc = main(["run", str(scenario_dir / "pmp-minimal.toml"),
               "--seed", "17", "--format", "json", "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert [r["seed"] for r in report["runs"]] == [17, 17]  # two repetitions


def test_cli_run_seeds_override_widens_the_sweep(scenario_dir, tmp_path):
    out = tmp_path / "r.json"
    rc = main(["run", str(scenario_dir / "disk-minimal.toml"),
               "--seeds", "4", "--format", "json", "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert len({r["seed"] for r in report["runs"]}) == 4


def test_cli_check_validates_without_running(scenario_dir, capsys):
    rc = main(["check", str(scenario_dir / "aligned-crash-pair.toml")])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("ok:") and "aligned-paxos" in out


def test_cli_check_missing_file_exits_two(capsys):
    rc = main(["check", "no/such/file.toml"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_cli_sweep_prints_one_row_per_value(scenario_dir, capsys):
    rc = main(["sweep", str(scenario_dir / "pmp-minimal.toml"),
               "--field", "m", "--values", "3,5"])
    assert rc == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
    assert len(lines) == 3  # header + 2 points
    assert lines[1].startswith("3") and lines[2].startswith("5")


def test_cli_sweep_unknown_field_exits_two(scenario_dir, capsys):
    rc = main(["sweep", str(scenario_dir / "pmp-minimal.toml"),
               "--field", "bogus", "--values", "1"])
    assert rc == 2
    assert "bogus" in capsys.readouterr().err
