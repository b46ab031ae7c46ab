from __future__ import annotations

import pytest

from mmsim.scenario import load_scenario_text, run_once, run_scenario


def load(text):
    return load_scenario_text(text)


def run_all(text):
    return run_scenario(load_scenario_text(text))


def one_trace(text, seed=0):
    return run_once(load_scenario_text(text), seed)


def failures(results):
    """(seed, verdict) pairs for every failed check across the runs."""
    return [(r.seed, v) for r in results for v in r.verdicts if not v.ok]


@pytest.fixture
def scenario_dir():
    import pathlib
    return pathlib.Path(__file__).resolve().parent.parent / "scenarios"
