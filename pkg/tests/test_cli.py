import json
import subprocess
import sys

import pytest

from jante.cli import main, parse_discrete, UsageError


def test_simulate_discrete_until_absorbed(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(["simulate", "--cycle", "8", "--discrete", "M=4", "--steps", "until-absorbed",
                 "--seed", "7", "--out", str(out)])
    assert code == 0
    assert "seed=7" in capsys.readouterr().err
    lines = out.read_text().splitlines()
    assert lines[2] == "# seed=7"
    assert lines[3] == "run_index,t,node,old_value,new_value,d_before"
    assert lines[-1].endswith(",,,0.0")


def test_seed_reproduces_output(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--cycle", "6", "--uniform", "--steps", "200", "--out", str(a)]) == 0
    seed = capsys.readouterr().err.split("seed=")[1].split()[0]
    assert main(["simulate", "--cycle", "6", "--uniform", "--steps", "200", "--seed", seed, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_verify_json(capsys):
    assert main(["verify", "--samples", "2000", "--seed", "1"]) == 0
    captured = capsys.readouterr()
    doc = json.loads(captured.out)
    assert doc["passed"] and doc["seed"] == 1
    assert {r["name"] for r in doc["rows"]} >= {"drift_nonpositive", "metric_bounds", "f_decrease"}
    assert "[PASS] drift_nonpositive" in captured.err


def test_verify_failure_exit_code(monkeypatch, capsys):
    import jante.experiments as ex
    from jante import continuous

    real = ex.run_verify_suite
    monkeypatch.setattr(ex, "run_verify_suite",
                        lambda spec: real(spec, drift=lambda W: -continuous.drift_batch(W)))
    monkeypatch.setitem(ex.RUNNERS, "verify_suite", ex.run_verify_suite)
    assert main(["verify", "--samples", "1000", "--seed", "1"]) == 1
    assert "[FAIL] drift_nonpositive" in capsys.readouterr().err


def test_rate_on_small_cycle_is_usage_error(capsys):
    assert main(["rate", "--cycle", "4", "--uniform", "--seed", "1"]) == 2
    assert "N >= 5" in capsys.readouterr().err


def test_rate_jsonl(tmp_path):
    out = tmp_path / "r.jsonl"
    assert main(["rate", "--cycle", "5", "--runs", "3", "--seed", "2", "--embedded-steps", "300",
                 "--format", "jsonl", "--out", str(out)]) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert rows[0]["kind"] == "rate_estimate" and len(rows) == 4


def test_absorb_hist(tmp_path, capsys):
    out = tmp_path / "h.csv"
    assert main(["absorb-hist", "--cycle", "6", "--discrete", "M=4", "--runs", "50", "--seed", "3",
                 "--out", str(out)]) == 0
    assert "absorbed 50/50" in capsys.readouterr().err
    assert out.read_text().splitlines()[3] == "run_index,absorb_value,absorb_time"


def test_absorb_hist_needs_discrete():
    assert main(["absorb-hist", "--cycle", "6", "--uniform", "--seed", "1"]) == 2


@pytest.mark.parametrize("argv", [
    ["simulate", "--cycle", "2"],
    ["simulate", "--cycle", "6", "--discrete", "M=x"],
    ["simulate", "--cycle", "6", "--discrete", "M=3,probs=0.5:0.5"],
    ["simulate", "--cycle", "6", "--steps", "sometimes"],
    ["simulate", "--cycle", "6", "--uniform", "--steps", "until-absorbed"],
    ["simulate", "--cycle", "6", "--mode", "lazy"],
    ["simulate", "--bogus"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "usage error" in capsys.readouterr().err


def test_parse_discrete():
    assert parse_discrete("M=3")["values"] == [1, 2, 3]
    assert parse_discrete("M=2,probs=0.25:0.75")["probs"] == [0.25, 0.75]
    with pytest.raises(UsageError):
        parse_discrete("N=3")


def test_path_command(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("1\n2\n1\n")
    assert main(["path", str(cfg), "--M", "2"]) == 0
    out = capsys.readouterr().out
    assert "T=1 bound=12" in out
    cfg.write_text("3\n3\n3\n3\n")
    assert main(["path", str(cfg), "--M", "3"]) == 0
    assert "T=0" in capsys.readouterr().out


def test_path_command_random_config(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("5\n1\n3\n4\n2\n5\n1\n2\n")
    csv_out = tmp_path / "p.csv"
    assert main(["path", str(cfg), "--M", "5", "--out", str(csv_out)]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1]
    T = int(last.split()[0].split("=")[1])
    assert T <= 1200 and last.endswith("bound=1200")
    assert csv_out.read_text().splitlines()[0] == "t,node,new_value,f_before,f_after"


def test_path_command_bad_input(tmp_path):
    assert main(["path", str(tmp_path / "none.txt"), "--M", "2"]) == 2
    cfg = tmp_path / "c.txt"
    cfg.write_text("1\n9\n1\n")
    assert main(["path", str(cfg), "--M", "2"]) == 2


def test_counterexample_command(tmp_path, capsys):
    out = tmp_path / "log.csv"
    assert main(["counterexample", "--steps", "500", "--seed", "4", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "[PASS] stable_family" in text and "[PASS] counterexample_graph" in text
    assert (tmp_path / "log-stable-family.csv").exists() and (tmp_path / "log-graph.csv").exists()


def test_graph_file_and_init(tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("6 7\n1 2\n2 3\n3 4\n5 1\n5 2\n6 3\n6 4\n")
    init = tmp_path / "x.txt"
    init.write_text("1\n2\n2\n2\n1\n2\n")
    out = tmp_path / "t.csv"
    assert main(["simulate", "--graph-file", str(g), "--discrete", "M=2", "--init", str(init),
                 "--steps", "50", "--seed", "1", "--out", str(out)]) == 0
    assert main(["simulate", "--graph-file", str(tmp_path / "nope"), "--seed", "1"]) == 2


def test_spec_file(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"kind": "absorb_hist", "topology": {"cycle": 5},
                                "distribution": {"variant": "discrete", "values": [1, 2, 3],
                                                 "probs": [0.2, 0.3, 0.5]},
                                "runs": 10, "steps": "until-absorbed", "mode": "frozen", "seed": 9}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["absorb-hist", "--spec", str(spec), "--out", str(a)]) == 0
    assert main(["absorb-hist", "--spec", str(spec), "--seed", "9", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["rate", "--spec", str(spec)]) == 2


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "jante.cli", "rate", "--cycle", "4", "--seed", "1"],
                       capture_output=True, text=True)
    assert r.returncode == 2
