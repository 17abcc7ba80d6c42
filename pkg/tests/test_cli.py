import subprocess
import sys

import pytest

from fogsim.cli import main
from fogsim.config import SimulationConfig, preset

SHORT = ["--horizon", "40"]


def read_rows(path):
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    data = [l for l in lines if not l.startswith("#")]
    return comments, data


def test_motivating(capsys):
    assert main(["motivating"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5
    assert out[1].split() == ["local", "local", "16", "2.75"]
    assert out[4].split() == ["offload", "offload", "4", "2.125"]


def test_run_smoke(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--preset", "desk", "--policy", "pora", "--v", "1e11", "--w", "10", "--out", str(out), *SHORT])
    assert code == 0
    comments, data = read_rows(out)
    assert len(comments) == 1 and "control.V=100000000000.0" in comments[0] and "run.seed_traffic=2" in comments[0]
    assert len(data) == 2
    assert "power=" in capsys.readouterr().out


def test_negative_v_rejected(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", "--v", "-5", "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert "v:" in err
    assert not out.exists()


@pytest.mark.parametrize("argv", [["run", "--w", "2.5"], ["run", "--policy", "greedy"], ["run", "--horizon", "x"],
                                  ["sweep-errors", "--values", "0.5"], ["sweep-w", "--values", "-1"]])
def test_bad_flags_exit_one(argv, tmp_path):
    out = tmp_path / "x.csv"
    assert main([*argv, "--out", str(out)]) == 1
    assert not out.exists()


def test_unknown_flag(capsys):
    assert main(["run", "--bogus"]) != 0


def test_malformed_config_names_key(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[control]\nV = fast\n")
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 1
    assert "control.V" in capsys.readouterr().err
    assert not out.exists()


def test_config_round_trip_reproduces_run(tmp_path):
    cfg = tmp_path / "c.ini"
    preset("desk", V=3e10, W=4).save(cfg)
    before = cfg.read_text()
    saved = tmp_path / "resolved.ini"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", str(cfg), "--seed", "7", *SHORT, "--out", str(a), "--save-config", str(saved), "-q"]) == 0
    assert cfg.read_text() == before
    assert main(["run", "--config", str(saved), "--out", str(b), "-q"]) == 0
    assert a.read_text() == b.read_text()
    resolved = SimulationConfig.load(saved)
    assert (resolved.seed_topology, resolved.seed_traffic, resolved.seed_policy) == (7, 8, 9)


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FOGSIM_OUTPUT_DIR", str(tmp_path / "outdir"))
    assert main(["run", *SHORT, "-q"]) == 0
    assert (tmp_path / "outdir" / "run.csv").exists()


def test_trace_outputs(tmp_path):
    trace, queues = tmp_path / "t.csv", tmp_path / "q.csv"
    assert main(["run", *SHORT, "--out", str(tmp_path / "r.csv"), "--trace-out", str(trace),
                 "--queues-out", str(queues), "-q"]) == 0
    assert trace.read_text().splitlines()[0] == "slot,total_backlog_bits,instant_power_W"
    assert len(trace.read_text().splitlines()) == 41
    assert queues.read_text().startswith("slot,node,kind,backlog_bits\n0,efn0,arrival,")


@pytest.mark.parametrize(
    "cmd,values,rows",
    [("sweep-v", "1e9,1e10,1e11,2e11", 4), ("sweep-w", "0,5,10", 3), ("sweep-errors", "0:0,0.5:0.25", 2),
     ("sweep-policy", "pora,pora-1,o2cloud", 3)],
)
def test_sweeps(tmp_path, cmd, values, rows):
    out = tmp_path / "s.csv"
    assert main([cmd, "--values", values, "--replications", "1", "--jobs", "1", *SHORT, "--out", str(out), "-q"]) == 0
    comments, data = read_rows(out)
    assert len(data) == rows + 1
    assert "sweep.axis=" in comments[0]


def test_numerical_failure_exit_two(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    preset("desk", n_cfn=5, n_access=5, dual_max_iter=1, V=1e6).save(cfg)
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), *SHORT, "--out", str(out)]) == 2
    assert "slot=" in capsys.readouterr().err
    assert not out.exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fogsim", "motivating"], capture_output=True, text=True)
    assert proc.returncode == 0 and "2.9375" in proc.stdout
