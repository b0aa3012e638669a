import json
from fractions import Fraction as F

import pytest

from rtt_forge import cli
from rtt_forge.execution import execution_to_csv
from rtt_forge.rto import RtoParams, rto_run


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_missing_input_file_exits_2(tmp_path, capsys):
    code, _, err = run(["rto-run", "--input", str(tmp_path / "nope.csv")], capsys)
    assert code == 2 and "not found" in err
    code, _, _ = run(["karn-run", "--input", str(tmp_path / "nope.csv")], capsys)
    assert code == 2
    code, _, _ = run(["scenario", "--config", str(tmp_path / "nope.json")], capsys)
    assert code == 2


def test_karn_run_on_chart_file(tmp_path, capsys, chart_execution):
    path = tmp_path / "e.csv"
    path.write_text(execution_to_csv(chart_execution))
    report = tmp_path / "report.json"
    code, out, _ = run(["karn-run", "--input", str(path), "--report", str(report)], capsys)
    assert code == 0
    assert out.splitlines() == ["event_index,sample", "10,4"]
    data = json.loads(report.read_text())
    assert data["monitor_invariants"] and data["sample_covers_rtts"] and data["fifo_ack"] is False


def test_karn_run_is_deterministic_and_seed_env_wins(capsys, monkeypatch):
    argv = ["karn-run", "--n-packets", "15", "--loss", "1/5", "--retransmissions", "3",
            "--reorder", "2", "--seed", "9"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b
    monkeypatch.setenv(cli.SEED_ENV, "9")
    _, c, _ = run(argv[:-1] + ["123"], capsys)
    assert c == a


def test_rto_run_round_trip(tmp_path, capsys):
    path = tmp_path / "s.csv"
    path.write_text("index,sample\n2,13\n0,1\n1,44\n")
    code, out, _ = run(["rto-run", "--input", str(path), "--decimal"], capsys)
    assert code == 0
    rows = cli.read_rto_csv(out)
    states = rto_run([1, 44, 13], RtoParams())
    assert [r["srtt"] for r in rows] == [s.srtt for s in states]
    assert rows[-1]["srtt"] == F(461, 64) and rows[-1]["rttvar"] == 10
    assert "rto_decimal" in out.splitlines()[0]


def test_rto_run_rejects_bad_samples(tmp_path, capsys):
    path = tmp_path / "s.csv"
    path.write_text("index,sample\n0,1\n1,-3\n")
    assert run(["rto-run", "--input", str(path)], capsys)[0] == 2
    path.write_text("index,value\n0,1\n")
    assert run(["rto-run", "--input", str(path)], capsys)[0] == 2


def test_spike_scenario_flags_spikes(capsys):
    code, out, _ = run(["scenario", "--kind", "spike", "--c", "135/2", "--r", "15/2",
                        "--period", "100", "--n", "1000"], capsys)
    assert code == 0
    rows = cli.read_rto_csv(out)
    assert len(rows) == 1000
    assert [r["index"] for r in rows if r["timeout_flag"]] == list(range(99, 1000, 100))


def test_scenario_config_json(capsys):
    cfg = json.dumps({"kind": "uniform", "c": "10", "r": "2", "n": 20, "seed": 4})
    code, a, _ = run(["scenario", "--config", cfg], capsys)
    _, b, _ = run(["scenario", "--config", cfg], capsys)
    assert code == 0 and a == b and len(cli.read_rto_csv(a)) == 20


def test_rto_bounds_worked_example(capsys):
    code, out, _ = run(["rto-bounds", "--c", "1", "--r", "0", "--alpha", "1/8",
                        "--srtt-prev", "3/4", "--n", "5", "--eps", "1/10"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["L"] == data["H"] == "930927/1048576"
    assert data["limit_delta"] == 10


def test_gbn_best_case_and_overtx(tmp_path, capsys):
    code, out, _ = run(["gbn", "best-case", "--window", "5"], capsys)
    assert code == 0 and json.loads(out)["efficiency"] == "1/1"
    trace = tmp_path / "t.csv"
    code, out, _ = run(["gbn", "overtx", "--window", "200", "--rate", "10", "--refill", "1",
                        "--dcap", "100", "--trace", str(trace)], capsys)
    data = json.loads(out)
    assert code == 0 and data["efficiency"] == data["predicted"] == "111/200"
    assert trace.read_text().startswith("index,step,event")


def test_gbn_overtx_bad_parameters_exit_2(capsys):
    code, _, err = run(["gbn", "overtx", "--window", "100", "--rate", "10", "--refill", "1",
                        "--dcap", "100"], capsys)
    assert code == 2 and "error" in err


def test_bad_json_config_exits_2(capsys):
    assert run(["scenario", "--config", "{bad"], capsys)[0] == 2


def test_tbf_compose_check_reports_json(capsys):
    code, out, _ = run(["tbf-compose-check", "--trials", "20", "--seed", "1"], capsys)
    data = json.loads(out)
    assert data["trials"] == 20 and data["seed"] == 1
    assert code == (0 if data["passed"] else 1)


@pytest.mark.slow
def test_selftest_quick_prints_one_line_per_check(capsys, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = run(["selftest", "--quick", "--report", str(report)], capsys)
    results = json.loads(report.read_text())["results"]
    assert len(out.strip().splitlines()) == len(results) == 13
    assert code == (0 if all(r["passed"] for r in results) else 1)
