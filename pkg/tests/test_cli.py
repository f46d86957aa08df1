import json
from importlib import resources

import numpy as np
import pytest
import yaml

from rwns.cli import DISPERSION_COLUMNS, SIDEBAND_COLUMNS, main
from rwns.io import MONITOR_COLUMNS, read_csv, read_snapshot


def shipped(name):
    return resources.files("rwns").joinpath("configs", f"{name}.yaml")


def write_config(tmp_path, data, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def run(*argv):
    return main([str(a) for a in argv])


SIMULATE = {
    "experiment": "simulate",
    "grid.n": 64,
    "grid.length": 20.0,
    "model.kappa": -0.5,
    "model.beta": 1.0,
    "nonlinearity.power": 1.0,
    "initial.kind": "broadband",
    "initial.k_band": 2.0,
    "stepper.dt": 0.01,
    "stepper.t_end": 1.0,
    "stepper.snapshot_stride": 20,
}


class TestExitCodes:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"grid.nn": 64})
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "grid.nn" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_config(self, tmp_path):
        assert run("simulate", "--out", tmp_path) == 2
        assert run("simulate", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == 2

    def test_cfl(self, tmp_path):
        assert run("validate", "--config", shipped("validate_cfl"), "--out", tmp_path) == 2
        assert not (tmp_path / "validate.json").exists()

    def test_blowup(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {**SIMULATE, "initial.amplitude": 1e200, "initial.kind": "plane_wave"})
        with np.errstate(all="ignore"):
            code = run("simulate", "--config", cfg, "--out", tmp_path / "o")
        assert code == 3
        assert "last good time" in capsys.readouterr().err

    def test_validate_passes(self, tmp_path, capsys):
        assert run("validate", "--config", shipped("validate"), "--out", tmp_path) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") >= 8
        assert json.loads((tmp_path / "validate.json").read_text())["passed"] is True

    def test_validate_mutation_fails(self, tmp_path, capsys):
        assert run("validate", "--config", shipped("validate_mutation"), "--out", tmp_path) == 1
        report = json.loads((tmp_path / "validate.json").read_text())
        assert report["failed"] == ["energy_conservation[mutated]"]


class TestSimulate:
    def test_outputs(self, tmp_path):
        cfg = write_config(tmp_path, SIMULATE)
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--seed", 3) == 0
        out = tmp_path / "o"
        snaps = sorted((out / "snapshots").iterdir())
        assert len(snaps) == 6
        assert read_snapshot(snaps[-1]).time == pytest.approx(1.0)
        header, mon = read_csv(out / "monitors.csv")
        assert tuple(header) == MONITOR_COLUMNS
        prov = json.loads((out / "provenance.json").read_text())
        assert prov["seed"] == 3 and prov["config"]["seed"] == 3
        assert prov["drifts"]["mass"] < 1e-10

    def test_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, SIMULATE)
        for name in ("a", "b"):
            assert run("simulate", "--config", cfg, "--out", tmp_path / name, "--seed", 9) == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        cfg = write_config(tmp_path, SIMULATE)
        run("simulate", "--config", cfg, "--out", tmp_path / "a", "--seed", 1)
        run("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 2)
        assert (tmp_path / "a/monitors.csv").read_bytes() != (tmp_path / "b/monitors.csv").read_bytes()

    def test_zero_field(self, tmp_path):
        cfg = write_config(tmp_path, {**SIMULATE, "initial.kind": "zero"})
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
        for p in (tmp_path / "o/snapshots").iterdir():
            assert np.all(read_snapshot(p).values == 0)


class TestExperiments:
    def test_dispersion(self, tmp_path):
        data = yaml.safe_load(shipped("dispersion_gaussian").read_text())
        data["dispersion.t_window"] = 100.0
        assert run("dispersion", "--config", write_config(tmp_path, data), "--out", tmp_path / "o") == 0
        header, rows = read_csv(tmp_path / "o/dispersion.csv")
        assert tuple(header) == DISPERSION_COLUMNS
        res = 2 * np.pi / 100.0
        assert np.all(np.abs(rows[:, 2] - rows[:, 5]) <= res)
        summary = json.loads((tmp_path / "o/dispersion_summary.json").read_text())
        assert summary["omega_resolution"] == pytest.approx(res)

    def test_contrast_single_mode(self, tmp_path):
        assert run("contrast", "--config", shipped("contrast_single_mode"), "--out", tmp_path) == 0
        header, rows = read_csv(tmp_path / "contrast.csv")
        assert header == ["t", "xi"]
        s = json.loads((tmp_path / "contrast_summary.json").read_text())
        assert s["mean"] == pytest.approx(s["single_mode_formula"], rel=1e-6)
        assert np.ptp(rows[:, 1]) < 1e-10

    def test_sidebands(self, tmp_path):
        data = yaml.safe_load(shipped("sidebands_driven").read_text())
        data["sidebands.points"] = [[1.0, 0.5], [2.0, 1.0]]
        assert run("sidebands", "--config", write_config(tmp_path, data), "--out", tmp_path / "o") == 0
        header, rows = read_csv(tmp_path / "o/sidebands.csv")
        assert tuple(header) == SIDEBAND_COLUMNS
        assert np.allclose(rows[:, 4], rows[:, 5], rtol=0.25)

    @pytest.mark.slow
    def test_invert_roundtrip(self, tmp_path):
        data = yaml.safe_load(shipped("invert_roundtrip").read_text())
        data["invert.n_boot"] = 50
        assert run("invert", "--config", write_config(tmp_path, data), "--out", tmp_path / "o") == 0
        fit = json.loads((tmp_path / "o/fit.json").read_text())
        assert fit["consistent"] and fit["converged"]
        assert fit["kappa"] == pytest.approx(-1.0, rel=0.03)
        assert fit["gamma_phi_abs"] == pytest.approx(0.01, rel=0.1)
