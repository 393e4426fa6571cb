import json

import pytest

from taylorlab.cli import main
from taylorlab.config import ConfigError, load_config


def run_dir(root, name):
    dirs = [d for d in root.iterdir() if d.name.startswith(name + "-")]
    assert len(dirs) == 1
    return dirs[0]


def write(path, text):
    path.write_text(text)
    return str(path)


def test_spectrum_default(tmp_path, capsys):
    assert main(["spectrum", "--out", str(tmp_path)]) == 0
    d = run_dir(tmp_path, "spectrum")
    files = sorted(p.name for p in d.iterdir() if p.name not in ("manifest.json", "config.yaml"))
    assert files == ["perturbation_nu0.1.json", "separation_nu0.1.json", "spectrum_nu0.1.csv",
                     "spectrum_nu0.1.svg"]
    man = json.loads((d / "manifest.json").read_text())
    c = man["constants"]["nu0.1"]
    for key in ("nu_td", "r", "M_tilde", "kappa0"):
        assert key in c
    assert man["passed"] and all(a["passed"] for a in man["assertions"])
    header = (d / "spectrum_nu0.1.csv").read_text().splitlines()[0]
    assert header.startswith("kappa [1/X],re_lambda_0 [1/T]")
    assert (d / "spectrum_nu0.1.svg").read_text().startswith("<svg")


def test_spectrum_rerun_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["spectrum", "--out", str(a), "--seed", "7"]) == 0
    assert main(["spectrum", "--out", str(b), "--seed", "7"]) == 0
    da, db = run_dir(a, "spectrum"), run_dir(b, "spectrum")
    for f in da.glob("*.csv"):
        assert f.read_bytes() == (db / f.name).read_bytes()


def test_spectrum_plug_degenerate(tmp_path):
    cfg = write(tmp_path / "c.yaml", "profile:\n  name: plug\n  params: {}\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((run_dir(tmp_path, "spectrum") / "perturbation_nu0.1.json").read_text())
    assert rep["status"] == "degenerate: no shear"


def test_dispersion_tiny_grid(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "grid:\n  K: 64\n")
    assert main(["dispersion", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "grid under-resolved" in capsys.readouterr().out


def test_dispersion_two_nu(tmp_path):
    assert main(["dispersion", "--nu", "0.1", "--nu", "0.05", "--out", str(tmp_path)]) == 0
    d = run_dir(tmp_path, "dispersion")
    rows = (d / "nu_comparison.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("nu,nu_td,D_eff")
    ts = (d / "timeseries_nu0.05.csv").read_text().splitlines()
    assert ts[0].startswith("T [scaled],Var [X^2],D_eff [X^2/T],u_rem_L2,gauss_dist_L2")
    assert (d / "deff_nu0.1.svg").exists() and (d / "decay_nu0.05.svg").exists()


def test_manifold_default(tmp_path):
    assert main(["manifold", "--out", str(tmp_path), "--nu", "0.05", "--nu", "0.2"]) == 0
    d = run_dir(tmp_path, "manifold")
    assert (d / "coefficients_nu0.05.json").read_bytes() == (d / "coefficients_nu0.2.json").read_bytes()
    man = json.loads((d / "manifest.json").read_text())
    inv = next(a for a in man["assertions"] if a["name"].startswith("invariance"))
    assert inv["max_residual"] <= 1e-9


def test_hypo_default(tmp_path):
    assert main(["hypo", "--out", str(tmp_path)]) == 0
    man = json.loads((run_dir(tmp_path, "hypo") / "manifest.json").read_text())
    gating = [a for a in man["assertions"] if a["gating"]]
    assert gating and all(a["passed"] for a in gating)


def test_hypo_bad_delta(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "hypo:\n  delta: 0.3\n")
    assert main(["hypo", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "delta" in capsys.readouterr().err


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("TAYLOR_LAB_OUT", str(tmp_path / "env"))
    assert main(["spectrum", "--modes", "8"]) == 0
    assert run_dir(tmp_path / "env", "spectrum").is_dir()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(write(tmp_path / "a.yaml", "bogus: 1\n"))
    with pytest.raises(ConfigError):
        load_config(overrides={"nu": [-1.0]})
    assert main(["spectrum", "--config", write(tmp_path / "b.yaml", "grid: 3\n")]) == 2


def test_flags_override_file(tmp_path):
    cfg = load_config(write(tmp_path / "a.yaml", "nu: 0.3\nseed: 1\n"), {"seed": 9, "nu": [0.2]})
    assert cfg.nus == [0.2] and cfg["seed"] == 9
    assert load_config(write(tmp_path / "b.yaml", "nu: 0.3\n")).nus == [0.3]
