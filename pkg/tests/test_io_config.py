import json
from importlib import resources

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from rwns.config import RunConfig
from rwns.errors import ConfigError
from rwns.field import ComplexField, PeriodicGrid
from rwns.io import (
    MAGIC,
    SnapshotFormatError,
    decode_snapshot,
    encode_snapshot,
    read_csv,
    read_snapshot,
    write_csv,
    write_json,
    write_snapshot,
)

CONFIGS = sorted(p.name for p in resources.files("rwns").joinpath("configs").iterdir() if p.name.endswith(".yaml"))

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


class TestSnapshots:
    @settings(max_examples=50, deadline=None)
    @given(
        dim=st.sampled_from([1, 2]),
        n=st.sampled_from([8, 16]),
        length=st.floats(0.1, 1e3),
        time=finite,
        data=st.data(),
    )
    def test_round_trip_bit_exact(self, dim, n, length, time, data):
        grid = PeriodicGrid(dim, n, length)
        parts = data.draw(st.lists(finite, min_size=2 * grid.size, max_size=2 * grid.size))
        values = (np.array(parts[::2]) + 1j * np.array(parts[1::2])).reshape(grid.shape)
        out = decode_snapshot(encode_snapshot(ComplexField(grid, values, time)))
        assert out.grid == grid
        assert out.time == time or (np.isnan(out.time) and np.isnan(time))
        assert out.values.tobytes() == np.ascontiguousarray(values).tobytes()

    def test_file_round_trip(self, tmp_path, rng):
        grid = PeriodicGrid(1, 32, 5.0)
        psi = ComplexField(grid, rng.standard_normal(32) + 1j * rng.standard_normal(32), 1.25)
        write_snapshot(tmp_path / "a.rwns", psi)
        back = read_snapshot(tmp_path / "a.rwns")
        assert np.array_equal(back.values, psi.values) and back.time == 1.25
        assert [p.name for p in tmp_path.iterdir()] == ["a.rwns"]

    def blob(self):
        grid = PeriodicGrid(1, 8, 1.0)
        return encode_snapshot(ComplexField(grid, np.arange(8) + 0j, 0.5))

    def test_bad_magic(self):
        with pytest.raises(SnapshotFormatError):
            decode_snapshot(b"XXXX" + self.blob()[4:])

    def test_corrupt_header(self):
        b = bytearray(self.blob())
        b[len(MAGIC) + 3] ^= 0xFF
        with pytest.raises(SnapshotFormatError, match="checksum"):
            decode_snapshot(bytes(b))

    @pytest.mark.parametrize("cut", [3, 10, 20, 1])
    def test_truncated(self, cut):
        b = self.blob()
        with pytest.raises(SnapshotFormatError):
            decode_snapshot(b[: len(b) - cut] if cut != 1 else b[: len(MAGIC) + 5])

    def test_bad_endianness(self):
        b = bytearray(self.blob())
        b[len(MAGIC) + 1] = ord(">")
        with pytest.raises(SnapshotFormatError, match="endianness"):
            decode_snapshot(bytes(b))


class TestTables:
    def test_csv_round_trip_exact(self, tmp_path):
        rows = [(0.1, 1 / 3, 2), (np.float64(1e-300), -0.0, 7)]
        write_csv(tmp_path / "t.csv", ("a", "b", "c"), rows)
        header, data = read_csv(tmp_path / "t.csv")
        assert header == ["a", "b", "c"]
        assert data[0, 1] == 1 / 3 and data[1, 0] == 1e-300

    def test_json_nonfinite(self, tmp_path):
        write_json(tmp_path / "x.json", {"a": float("inf"), "b": np.float64(2.5), "c": (1, np.int64(2))})
        assert json.loads((tmp_path / "x.json").read_text()) == {"a": None, "b": 2.5, "c": [1, 2]}


class TestConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = RunConfig()
        cfg.save(tmp_path / "c.yaml")
        assert RunConfig.load(tmp_path / "c.yaml") == cfg

    def test_nested_equals_flat(self):
        flat = RunConfig.from_dict({"grid.n": 64, "model.kappa": -1.0, "kernel.family": "tophat"})
        nested = RunConfig.from_dict({"grid": {"n": 64}, "model": {"kappa": -1}, "kernel": {"family": "tophat"}})
        assert flat == nested

    @pytest.mark.parametrize(
        "data",
        [
            {"grid.nn": 64},
            {"bogus": 1},
            {"grid.n": "64"},
            {"grid.n": 64.0},
            {"model.kappa": None},
            {"model.kappa": True},
            {"dispersion.fit_baseline": 1},
            {"experiment": "dance"},
            {"kernel.family": "lorentzian"},
            {"initial.kind": "soliton"},
            [1, 2],
        ],
    )
    def test_strict(self, data):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            RunConfig.from_dict({"grid.n": 64, "grid": {"n": 32}})

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "missing.yaml")
        (tmp_path / "bad.yaml").write_text("a: [1,\n")
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "bad.yaml")

    def test_optional_accepts_null(self):
        assert RunConfig.from_dict({"dispersion.snr_db": None}).dispersion.snr_db is None
        assert RunConfig.from_dict({"dispersion.snr_db": 20}).dispersion.snr_db == 20.0

    def test_replace(self):
        cfg = RunConfig().replace(**{"model.kappa": -2, "seed": 4})
        assert cfg.model.kappa == -2.0 and cfg.seed == 4

    def test_model_params(self):
        cfg = RunConfig.from_dict({"grid.n": 64, "grid.length": 20.0, "model.gamma": 2.0,
                                   "drive.q_index": 3, "drive.amplitude": 0.01, "model.w_modulation": 0.1})
        grid = cfg.make_grid()
        p = cfg.model_params(grid)
        assert np.allclose(p.phi.values, 0.01 * np.cos(3 * grid.dk * grid.x))
        assert p.gamma == 2.0 and not p.homogeneous
        assert RunConfig.from_dict({"model.gamma": 2.0}).model_params().gamma == 0.0

    @pytest.mark.parametrize("name", CONFIGS)
    def test_shipped_configs_load(self, name):
        text = resources.files("rwns").joinpath("configs", name).read_text()
        cfg = RunConfig.from_dict(yaml.safe_load(text))
        grid = cfg.make_grid()
        cfg.model_params(grid)
        cfg.initial_field(grid)
