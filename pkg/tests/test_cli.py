from __future__ import annotations

import json
from pathlib import Path

import pytest

from msrsim.cli import main

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
FIG2 = str(SCENARIO_DIR / "fig2.scn")
FAILOVER = str(SCENARIO_DIR / "fig2_failover.scn")

GOLDEN_ROWS = [
    "172.16.1.0/24\t172.16.4.1\tn6-2\t292",
    "172.16.1.0/24\t172.16.2.1\tn6-1\t338",
    "172.16.9.0/24\t172.16.6.1\tpdu-1\t68",
    "172.16.9.0/24\t172.16.7.1\tpdu-2\t258",
]


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def state_file(tmp_path) -> str:
    return str(tmp_path / "state.json")


@pytest.fixture()
def saved_run(state_file, capsys) -> str:
    code, _, _ = run_cli(
        capsys, "run", "--scenario", FIG2, "--approach", "cp",
        "--until", "10000", "--state", state_file,
    )
    assert code == 0
    return state_file


def test_run_reports_convergence_and_saves_state(state_file, capsys):
    code, out, _ = run_cli(
        capsys, "run", "--scenario", FIG2, "--approach", "cp",
        "--until", "10000", "--seed", "1", "--state", state_file,
    )
    assert code == 0
    assert "finished t=10000 quiescent=True converged=True" in out
    assert "A1.S7 forwarding-active" in out
    data = json.loads(Path(state_file).read_text())
    assert data["approach"] == "cp"
    assert data["converged"] is True


def test_run_machine_result_line(capsys):
    code, out, _ = run_cli(
        capsys, "run", "--scenario", FIG2, "--approach", "up",
        "--output", "machine",
    )
    assert code == 0
    assert out.splitlines()[-1] == "result\tquiescent=True\tconverged=True"


def test_run_rejects_malformed_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("[node] r1 external-router\n[link] r1.1 r9.1 5\n")
    code, _, err = run_cli(capsys, "run", "--scenario", str(bad))
    assert code == 2
    assert "bad.scn:2:" in err
    assert "r9" in err


def test_run_not_converged_exit(capsys):
    code, out, _ = run_cli(
        capsys, "run", "--scenario", FIG2, "--approach", "cp", "--until", "900",
    )
    assert code == 1
    assert "converged=False" in out


def test_routes_all_prints_exactly_the_golden_rows(saved_run, capsys):
    code, out, _ = run_cli(
        capsys, "routes", "--state", saved_run, "--router", "msr1",
        "--all", "--output", "machine",
    )
    assert code == 0
    assert out.splitlines() == GOLDEN_ROWS


def test_routes_best_only(saved_run, capsys):
    code, out, _ = run_cli(
        capsys, "routes", "--state", saved_run, "--router", "msr1",
        "--output", "machine",
    )
    assert code == 0
    assert out.splitlines() == [GOLDEN_ROWS[0], GOLDEN_ROWS[2]]


def test_routes_human_table_headers(saved_run, capsys):
    code, out, _ = run_cli(
        capsys, "routes", "--state", saved_run, "--router", "msr1", "--all",
    )
    assert code == 0
    header = out.splitlines()[0]
    assert header.split() == [
        "Destination", "Next", "Hop", "Destination", "interface", "Metric",
    ]
    assert len(out.splitlines()) == 5


def test_routes_external_router_from_state(saved_run, capsys):
    code, out, _ = run_cli(
        capsys, "routes", "--state", saved_run, "--router", "n6rn",
        "--output", "machine",
    )
    assert code == 0
    rows = dict(
        (line.split("\t")[0], line.split("\t")[3]) for line in out.splitlines()
    )
    assert rows["172.16.6.0/24"] == "360"
    assert rows["172.16.9.0/24"] == "360"


def test_routes_unknown_router(saved_run, capsys):
    code, _, err = run_cli(capsys, "routes", "--state", saved_run, "--router", "msr9")
    assert code == 4
    assert "unknown router" in err
    assert "msr1" in err  # lists what exists


def test_routes_without_state_prints_empty_table(tmp_path, capsys):
    code, out, err = run_cli(
        capsys, "routes", "--state", str(tmp_path / "missing.json"),
        "--router", "msr1", "--output", "machine",
    )
    assert code == 0
    assert out.strip() == ""
    assert "no saved run" in err


def test_routes_inline_run(capsys):
    code, out, _ = run_cli(
        capsys, "routes", "--scenario", FIG2, "--inline", "--approach", "cp",
        "--router", "msr1", "--all", "--output", "machine",
    )
    assert code == 0
    assert out.splitlines()[-4:] == GOLDEN_ROWS


def test_trace_from_state_matches_expectations(saved_run, capsys):
    code, out, _ = run_cli(
        capsys, "trace", "--state", saved_run, "--src", "host2",
        "--dst", "host1", "--output", "machine",
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[-1] == "outcome\tDelivered\t362\t-"
    assert [l.split("\t")[1] for l in lines[:-1]] == [
        "host2", "n6rn", "upf1", "uer1", "host1",
    ]


def test_trace_accepts_addresses(saved_run, capsys):
    code, out, _ = run_cli(
        capsys, "trace", "--state", saved_run, "--src", "172.16.9.1",
        "--dst", "172.16.1.1", "--output", "machine",
    )
    assert code == 0
    assert out.splitlines()[-1] == "outcome\tDelivered\t362\t-"


def test_trace_unknown_destination(saved_run, capsys):
    code, _, err = run_cli(
        capsys, "trace", "--state", saved_run, "--src", "host2", "--dst", "10.99.0.1",
    )
    assert code == 4
    assert "destination" in err


def test_trace_without_state_is_an_error(tmp_path, capsys):
    code, _, err = run_cli(
        capsys, "trace", "--state", str(tmp_path / "missing.json"),
        "--src", "host2", "--dst", "host1",
    )
    assert code == 2
    assert "no saved run" in err


def test_state_round_trip_equals_inline(saved_run, capsys):
    code_a, out_a, _ = run_cli(
        capsys, "routes", "--state", saved_run, "--router", "uer1",
        "--output", "machine",
    )
    code_b, out_b, _ = run_cli(
        capsys, "routes", "--scenario", FIG2, "--inline", "--approach", "cp",
        "--router", "uer1", "--output", "machine",
    )
    assert code_a == code_b == 0
    assert out_a == out_b


def test_report_writes_tables_and_figures(saved_run, tmp_path, capsys):
    out_dir = tmp_path / "report"
    code, out, _ = run_cli(
        capsys, "report", "--state", saved_run, "--out-dir", str(out_dir),
    )
    assert code == 0
    names = {Path(p).name for p in out.splitlines()}
    assert {"summary.tsv", "routers.tsv", "events.tsv",
            "topology.png", "steps.png"} <= names
    assert any(n.startswith("routes_") for n in names)
    for name in names:
        assert (out_dir / name).exists()
    assert (out_dir / "topology.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    routes_msr1 = (out_dir / "routes_msr1.tsv").read_text().splitlines()
    assert routes_msr1[0].split("\t") == [
        "destination", "next_hop", "interface", "metric", "best",
    ]


def test_run_with_report_dir(state_file, tmp_path, capsys):
    out_dir = tmp_path / "rep"
    code, _, err = run_cli(
        capsys, "run", "--scenario", FIG2, "--state", state_file,
        "--report-dir", str(out_dir),
    )
    assert code == 0
    assert (out_dir / "summary.tsv").exists()
    assert "wrote" in err


def test_failover_scenario_scripted_events(state_file, capsys):
    code, out, _ = run_cli(
        capsys, "run", "--scenario", FAILOVER, "--until", "15000",
        "--state", state_file,
    )
    assert code == 0
    assert "t=5000 kind=LinkDown session=1" in out
    assert "t=12000 kind=LinkUp session=1" in out
    code, out, _ = run_cli(
        capsys, "routes", "--state", state_file, "--router", "msr1",
        "--output", "machine",
    )
    assert code == 0
    assert GOLDEN_ROWS[2] in out.splitlines()  # 68-metric route restored
