import json
import os
import subprocess
import sys

import pytest

from lfi import cli
from lfi.results import strip_timings


def write_config(path, **doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_list(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("quadratic", "sir", "ma2", "mg1", "alfi-beta", "smc_abc", "bolfi (not implemented)"):
        assert name in out


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", generator="identity", algorithm="rejection_abc",
                       theta_star=[0.3], algorithm_options={"budget": 400})
    out = tmp_path / "run"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--seed", "4"]) == 0
    assert "performance=" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["theta_star"] == [0.3] and summary["algorithm"] == "rejection_abc"
    assert json.loads((out / "config.json").read_text())["seed"] == 4


def test_run_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_config(tmp_path / "c.json", generator="identity", algorithm="rejection_abc",
                       theta_star=[0.3], algorithm_options={"budget": 100})
    assert cli.main(["run", "--config", cfg, "--seed", "2"]) == 0
    assert os.path.exists(tmp_path / "runs" / "identity-rejection_abc-seed2" / "summary.json")


def test_run_repeatable(tmp_path):
    cfg = write_config(tmp_path / "c.json", generator="quadratic", algorithm="alfi-beta",
                       theta_star=[0.2], budget=400, algorithm_options={"hidden": [8, 8]})
    outs = []
    for name in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
        summary = json.loads((tmp_path / name / "summary.json").read_text())
        outs.append((strip_timings(summary), (tmp_path / name / "particles.csv").read_bytes()))
    assert outs[0] == outs[1]


@pytest.mark.parametrize("doc", [
    {"generator": "nope", "algorithm": "avo"},
    {"generator": "quadratic"},
    {"generator": "quadratic", "algorithm": "alfi-beta", "algorithm_options": {"clip": -1}},
    {"generator": "quadratic", "algorithm": "avo", "theta_star": [3.0]},
])
def test_bad_config_exit_code(tmp_path, doc, capsys):
    cfg = write_config(tmp_path / "c.json", **doc)
    assert cli.main(["run", "--config", cfg]) == 1
    assert "config error" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["bench", "--config", str(bad)]) == 1


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    from lfi import bench
    from lfi.errors import NumericError

    def boom(*a, **k):
        raise NumericError("planted")

    monkeypatch.setattr(bench, "run_experiment", boom)
    cfg = write_config(tmp_path / "c.json", generator="quadratic", algorithm="avo")
    assert cli.main(["run", "--config", cfg]) == 2


def test_bench_and_diag(tmp_path, capsys):
    cfg = write_config(tmp_path / "b.json", generators=["quadratic"],
                       algorithms=["alfi-beta", "rejection_abc"], budget=400, replications=1,
                       algorithm_options={"alfi-beta": {"hidden": [8, 8]}},
                       out=str(tmp_path / "study"))
    assert cli.main(["bench", "--config", cfg]) == 0
    assert "alfi-beta" in capsys.readouterr().out
    assert os.path.exists(tmp_path / "study" / "table.csv")

    run_dir = tmp_path / "study" / "quadratic" / "alfi-beta"
    assert cli.main(["diag", "--run", str(run_dir), "--resolution", "20"]) == 0
    out = capsys.readouterr().out
    assert "grid_loglik.csv" in out and "KS distance" in out

    abc_dir = tmp_path / "study" / "quadratic" / "rejection_abc"
    assert cli.main(["diag", "--run", str(abc_dir), "--out", str(tmp_path / "d")]) == 0
    assert os.path.exists(tmp_path / "d" / "grid_discrepancy.csv")
    assert cli.main(["diag", "--run", str(tmp_path)]) == 1


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lfi.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "generators:" in proc.stdout
