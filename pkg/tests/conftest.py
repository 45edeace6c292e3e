"""Shared fixtures and the acceptance summary hook.

The acceptance tests in ``test_acceptance.py`` each cover one release
criterion; this conftest collects their outcomes and prints one
PASS/FAIL line per criterion at the end of the run.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from msrsim import Simulation, parse_scenario
from msrsim.scenario import Scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def load_scenario(name: str) -> Scenario:
    result = parse_scenario((SCENARIO_DIR / name).read_text())
    assert result.ok, [str(d) for d in result.diagnostics]
    assert result.scenario is not None
    return result.scenario


@pytest.fixture(scope="session")
def fig2_text() -> str:
    return (SCENARIO_DIR / "fig2.scn").read_text()


@pytest.fixture(scope="session")
def fig2_scenario(fig2_text: str) -> Scenario:
    result = parse_scenario(fig2_text)
    assert result.ok, [str(d) for d in result.diagnostics]
    return result.scenario


@pytest.fixture(scope="session")
def failover_scenario() -> Scenario:
    return load_scenario("fig2_failover.scn")


@pytest.fixture(scope="session")
def fig2_cp(fig2_scenario: Scenario):
    """Completed cp-mode run of the reference topology. Read-only."""
    sim = Simulation(fig2_scenario, "cp", seed=1)
    stats = sim.run_until(10_000)
    return sim, stats


@pytest.fixture(scope="session")
def fig2_up(fig2_scenario: Scenario):
    """Completed up-mode run of the reference topology. Read-only."""
    sim = Simulation(fig2_scenario, "up", seed=1)
    stats = sim.run_until(10_000)
    return sim, stats


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_TITLES = {
    "test_c1_reference_table": (
        "1. reference topology: msr1 table with alternatives is exactly the four golden rows"
    ),
    "test_c2_shortest_path_selection": (
        "2. forwarding picks best metrics: downlink leaves via pdu-1, return traffic via n6-2"
    ),
    "test_c3_mode_equivalence": (
        "3. cp and up modes yield identical tables and traces across generated scenarios"
    ),
    "test_c4_spf_matches_bruteforce": (
        "4. best metric per destination equals brute-force min simple-path cost (random graphs)"
    ),
    "test_c5_failover_and_recovery": (
        "5. link failure re-routes onto the alternative session in time; recovery restores it"
    ),
    "test_c6_session_lifecycle": (
        "6. session release withdraws its routes everywhere; re-establish restores connectivity"
    ),
    "test_c7_determinism": (
        "7. same seed, same scenario: byte-identical event logs and route dumps"
    ),
}

_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    base = report.nodeid.rsplit("::", 1)[-1].split("[")[0]
    if base not in ACCEPTANCE_TITLES:
        return
    if report.failed:
        _outcomes[base] = "FAIL"
    elif report.skipped:
        _outcomes.setdefault(base, "SKIP")
    elif report.when == "call" and report.passed:
        _outcomes.setdefault(base, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for base, title in ACCEPTANCE_TITLES.items():
        status = _outcomes.get(base, "NOT RUN")
        terminalreporter.write_line(f"{status:>7}  {title}")
