import subprocess
import sys

import pytest

from bdsoc import cli
from bdsoc.io import read_csv, read_json
from bdsoc.suites import ConfigError, resolve

FAST = ["--seed", "3", "--b-seed", "4", "--paths", "400", "--steps", "10"]


def test_seeds_are_mandatory(tmp_path, capsys):
    assert cli.main(["simulate", "--model", "martingale", "--out", str(tmp_path)]) == 2
    assert "seeds are mandatory" in capsys.readouterr().err


def test_unknown_model_lists_registry(tmp_path, capsys):
    assert cli.main(["simulate", "--model", "nope", "--out", str(tmp_path), *FAST]) == 2
    err = capsys.readouterr().err
    assert "transport-control" in err and "martingale" in err


def test_bad_override_and_unknown_section(tmp_path, capsys):
    assert cli.main(["simulate", "--model", "zero", "--out", str(tmp_path), *FAST, "--override", "novalue"]) == 2
    assert cli.main(["simulate", "--model", "zero", "--out", str(tmp_path), *FAST, "--override", "bogus.x=1"]) == 2
    assert cli.main(["simulate", "--model", "zero", "--out", str(tmp_path), *FAST,
                     "--override", "model_params.nope=1"]) == 2
    err = capsys.readouterr().err
    assert "KEY=VALUE" in err and "bogus" in err


def test_resolve_defaults():
    cfg = resolve({"model": "zero", "simulation": {"seed": 1, "b_seed": 2}})
    assert cfg["grid"]["steps"] == 50 and cfg["continuity"]["mode"] == "bound"
    with pytest.raises(ConfigError):
        resolve({"simulation": {"seed": 1, "b_seed": 2}})


def test_simulate_writes_provenance(tmp_path, capsys):
    assert cli.main(["simulate", "--model", "martingale", "--out", str(tmp_path), *FAST]) == 0
    meta, cols, rows = read_csv(tmp_path / "ensemble.csv")
    assert meta["master_seed"] == "3" and meta["b_seed"] == "4" and meta["model"] == "martingale"
    assert cols[:3] == ["path", "t_index", "time"]
    summary = read_json(tmp_path / "summary.json")
    assert summary["passed"] and "ensemble.csv" in summary["artifacts"]
    assert all(c["seed"] == "3/4" for c in summary["checks"])
    assert "[PASS]" in capsys.readouterr().out


def test_config_file_and_auto_control(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('model = "transport-control"\n[simulation]\nseed = 1\nb_seed = 2\npaths = 200\n'
                   '[grid]\nsteps = 10\n')
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    _, _, rows = read_csv(tmp_path / "o" / "ensemble.csv")
    # "auto" picks the control closest to zero, index 1 of {-1, 0, 1}
    assert {r[-1] for r in rows if r[-1]} == {"1"}


def test_tolerance_violation_exit_status(tmp_path, capsys):
    # tol_z = 0 cannot be met by a Monte Carlo Z: the run must report failure
    code = cli.main(["verify-weak", "--model", "martingale", "--out", str(tmp_path), *FAST,
                     "--override", "weak.tol_z=0.0", "--override", "grid.nodes=61"])
    assert code == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_report_on_empty_and_filled_dirs(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == 2
    assert "summary.json" in capsys.readouterr().err
    assert cli.main(["solve-penalized", "--model", "zero", "--out", str(tmp_path), *FAST]) == 0
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split()[:4] == ["criterion", "check", "value", "tolerance"]
    assert "Skorokhod" in out and "3/4" in out


def test_report_detects_missing_artifact(tmp_path, capsys):
    assert cli.main(["simulate", "--model", "zero", "--out", str(tmp_path), *FAST]) == 0
    (tmp_path / "moments.csv").unlink()
    assert cli.main(["report", str(tmp_path)]) == 2
    assert "missing artifact" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "bdsoc", "simulate", "--model", "zero", "--out", str(tmp_path),
                          *FAST], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "all checks passed" in res.stdout
