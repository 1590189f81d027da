import json
from pathlib import Path

import numpy as np
import pytest

from akstab import akf4
from akstab.cli import main
from akstab.config import load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.json")):
        cfg = load_config(p)
        assert cfg.solver.n == cfg.grid.n
        assert cfg.path.t_max >= cfg.solver.t_max


def test_config_validation(tmp_path):
    base = {"grid": {"n": 8}, "path": {"kind": "constant_linear", "S": np.eye(4).tolist()},
            "solver": {"t_max": 0.2, "steps": 2}}
    cfg = parse_config(base)
    assert cfg.path.t_max == 0.2 and cfg.output_dir == "out"
    bad = json.loads(json.dumps(base))
    bad["solver"]["tolerance"] = 1
    with pytest.raises(ValueError):
        parse_config(bad)
    bad = json.loads(json.dumps(base))
    bad["path"]["t_max"] = 0.1
    with pytest.raises(ValueError):
        parse_config(bad)
    rel = json.loads(json.dumps(base))
    rel["path"] = {"kind": "user_file", "file": "J.akf4", "t_max": 1.0}
    cfg = parse_config(rel, base_dir=tmp_path)
    assert cfg.path.file == str(tmp_path / "J.akf4")


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert main(["solve", "--config", str(CONFIGS / "determinism_n8.json"), "--out", str(out)]) == 0
    return out


def test_solve_writes_report_and_fields(solved):
    report = json.loads((solved / "report.json").read_text())
    assert list(report) == ["t", "f_t", "residual_norm", "newton_iters", "h_minus", "gap",
                            "killing_defect", "calabi_energy", "status", "violation_t", "message"]
    assert report["status"] == "converged"
    assert max(report["residual_norm"]) <= 1e-8
    for name in report["f_t"]:
        data, rank = akf4.read_field(solved / name)
        assert data.shape == (1, 8, 8, 8, 8) and rank is None


def test_state_command(solved, tmp_path, capsys):
    report = json.loads((solved / "report.json").read_text())
    main(["state", "--config", str(CONFIGS / "determinism_n8.json"), "--t", str(report["t"][-1]),
          "--f", str(solved / report["f_t"][-1]), "--out", str(tmp_path)])
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"F_minmax", "residual_norm", "calabi_energy", "killing_defect"}
    assert out["residual_norm"] <= 1e-8
    assert out["calabi_energy"] == pytest.approx(report["calabi_energy"][-1], rel=1e-8)
    for name in ("f", "psi_f", "alpha", "omega_f", "g_f", "F", "s"):
        assert (tmp_path / f"{name}.akf4").exists()
    assert akf4.read_form(tmp_path / "omega_f.akf4").rank == 2


def test_curvature_and_hminus_commands(tmp_path, capsys):
    cfg = str(CONFIGS / "determinism_n8.json")
    main(["curvature", "--config", cfg, "--t", "0.1", "--out", str(tmp_path)])
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"chern_pairing", "s_integral", "d_rho_norm"}
    assert abs(out["chern_pairing"]) <= 1e-6 and abs(out["s_integral"]) <= 1e-6
    assert akf4.read_form(tmp_path / "rho.akf4").rank == 2
    main(["hminus", "--config", cfg, "--t-samples", "2"])
    rows = json.loads(capsys.readouterr().out)
    assert [set(r) for r in rows] == [{"t", "dim_kernel", "h_minus", "gap"}] * 2
    assert all(r["h_minus"] == 2 and r["dim_kernel"] == 5 for r in rows)
