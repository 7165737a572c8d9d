import csv
import json
import subprocess
import sys

import pytest

from neutral_inclusion.cli import main
from neutral_inclusion.geometry import Ellipsoid, mesh_ellipsoid, write_off
from neutral_inclusion.scenario import list_scenarios

BUNDLED = sorted(p.stem for p in list_scenarios())


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_pass(name, tmp_path, capsys):
    code, out, _ = _run(["run", name, "--out-dir", str(tmp_path)], capsys)
    assert code == 0, out
    assert "PASS" in out
    doc = json.loads((tmp_path / f"{name}.json").read_text())
    assert doc["passed"] is True and doc["name"] == name


def test_confocal_sphere_values(tmp_path, capsys):
    _run(["run", "confocal_sphere", "--out-dir", str(tmp_path)], capsys)
    m = json.loads((tmp_path / "confocal_sphere.json").read_text())["metrics"]
    assert m["k"] == pytest.approx(0.25, abs=1e-10)
    for i in (1, 2, 3):
        assert m[f"A_{i}{i}"] == pytest.approx(-7 / 12, abs=1e-10)


def test_artifacts_are_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        for name in ("confocal_sphere", "newtonian_concentric", "phi_grid"):
            assert _run(["run", name, "--out-dir", str(tmp_path / d)], capsys)[0] == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_phi_subcommand_csv(tmp_path, capsys):
    code, _, _ = _run(
        ["phi", "--axes", "1,2,3", "--logspace", "0.01,100,7", "--out-dir", str(tmp_path), "--name", "grid"],
        capsys,
    )
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "grid.csv").open()))
    assert len(rows) == 7
    assert all(abs(float(r["sum_phi_minus_target"])) < 1e-12 for r in rows)


def test_neutral_sphere_subcommand(tmp_path, capsys):
    code, out, _ = _run(
        ["neutral-sphere", "--spheres", "1,2", "--sigma", "5,1", "--out-dir", str(tmp_path), "--name", "ns"],
        capsys,
    )
    assert code == 0
    m = json.loads((tmp_path / "ns.json").read_text())["metrics"]
    assert m["sigma_m"] == pytest.approx(16 / 13, abs=1e-12)


def test_equal_contrast_is_an_error(tmp_path, capsys):
    code, _, err = _run(
        ["bem-defect", "--spheres", "1,2", "--sigma", "1,1,1", "--subdiv", "1", "--out-dir", str(tmp_path)],
        capsys,
    )
    assert code == 1
    assert "ContrastSingular" in err


def test_sweep_writes_one_row_per_parameter(tmp_path, capsys):
    code, _, _ = _run(
        ["sweep", "--family", "offset", "--t", "0,0.1,0.2", "--subdiv", "2", "--out-dir", str(tmp_path), "--name", "sw"],
        capsys,
    )
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sw.csv").open()))
    assert [float(r["t"]) for r in rows] == [0.0, 0.1, 0.2]
    assert float(rows[0]["rho_fit"]) < float(rows[-1]["rho_fit"])


def test_mesh_inputs(tmp_path, capsys):
    inner = Ellipsoid((1.0, 1.5, 2.0))
    write_off(mesh_ellipsoid(inner, 3), tmp_path / "core.off")
    write_off(mesh_ellipsoid(inner.confocal(1.0), 3), tmp_path / "shell.off")
    code, _, _ = _run(
        [
            "mfs-fit", "--inner-mesh", str(tmp_path / "core.off"), "--outer-mesh", str(tmp_path / "shell.off"),
            "--constraint", "symmetric", "--out-dir", str(tmp_path), "--name", "fit",
        ],
        capsys,
    )
    assert code == 0
    assert json.loads((tmp_path / "fit.json").read_text())["metrics"]["rho_fit"] < 1e-3


def test_config_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    doc = {
        "name": "base", "task": "neutral-sphere",
        "geometry": {"kind": "spheres", "r_i": 1.0, "r_e": 2.0},
        "medium": {"sigma_c": 5.0, "sigma_s": 1.0},
        "thresholds": {"sigma_m": {"expect": 16 / 13, "tol": 1e-12}},
    }
    cfg.write_text(json.dumps(doc))
    code, out, _ = _run(
        ["neutral-sphere", "--config", str(cfg), "--sigma", "3,1", "--out-dir", str(tmp_path)], capsys
    )
    assert code == 2
    assert "FAIL" in out


def test_threshold_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "strict.json"
    doc = {
        "name": "strict", "task": "solve-ellipsoid",
        "geometry": {"kind": "confocal", "axes": [1, 1, 1], "rho0": 3.0},
        "settings": {"subdivisions": 2},
        "thresholds": {"k": {"expect": 0.3, "tol": 1e-6}},
    }
    cfg.write_text(json.dumps(doc))
    code, out, _ = _run(["run", str(cfg), "--out-dir", str(tmp_path)], capsys)
    assert code == 2
    assert json.loads((tmp_path / "strict.json").read_text())["passed"] is False


def test_validate_reports_bad_files(tmp_path, capsys):
    typo = tmp_path / "typo.json"
    typo.write_text('{\n  "name": "t",\n  "task": "solve-ellipsoid",\n'
                    '  "geometry": {"kind": "confocal", "axes": [1, 1, 1], "rho_0": 3}\n}\n')
    noseed = tmp_path / "noseed.json"
    noseed.write_text(json.dumps({
        "name": "n", "task": "newtonian-check",
        "geometry": {"kind": "spheres", "r_i": 1.0, "r_e": 2.0},
    }))
    code, out, _ = _run(["validate", "confocal_sphere", str(typo), str(noseed)], capsys)
    assert code == 1
    lines = [json.loads(line) for line in out.splitlines()]
    assert lines[0]["status"] == "ok"
    assert lines[1]["status"] == "error" and "rho_0" in lines[1]["message"]
    assert lines[2]["status"] == "error" and "seed required" in lines[2]["message"]


def test_list_scenarios(capsys):
    code, out, _ = _run(["list-scenarios"], capsys)
    assert code == 0
    names = {row["name"] for row in json.loads(out)["scenarios"]}
    assert names == set(BUNDLED)


def test_malformed_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["phi", "--axes", "1,2"])
    assert info.value.code == 2


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "neutral_inclusion.cli", "run", "neutral_sphere", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "neutral_sphere.json").exists()
