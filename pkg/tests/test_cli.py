import json

import pytest

from frep.cli import build_config, main, parse_value, read_config
from frep.experiments import ExperimentConfig
from frep.zext import ZextConfig


def load(path):
    return json.loads(path.read_text())


class TestConfigFiles:
    @pytest.mark.parametrize(
        "text, value",
        [("3", 3), ("0.5", 0.5), ("1,2,3", (1, 2, 3)), ("()", ()), ("true", True), ("generic", "generic"), ("4,", (4,))],
    )
    def test_parse_value(self, text, value):
        assert parse_value(text) == value

    def test_read_config(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("# comment\np = 2.0\ndepth_grid = 4, 8  # inline\n\npoint_class = periodic\nanchor = 0\n")
        vals = read_config(str(f))
        assert vals == {"p": 2.0, "depth_grid": (4, 8), "point_class": "periodic", "anchor": 0}
        cfg = build_config(ExperimentConfig, vals, ["trials=500"], master_seed=3)
        assert cfg.anchor == (0,) and cfg.trials == 500 and cfg.master_seed == 3

    def test_missing_equals(self, tmp_path):
        f = tmp_path / "bad.cfg"
        f.write_text("p 2\n")
        with pytest.raises(ValueError):
            read_config(str(f))

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys: colour"):
            build_config(ExperimentConfig, {"colour": "red"}, [])

    def test_single_depth(self):
        assert build_config(ExperimentConfig, {"depth_grid": 6}, []).depth_grid == (6,)
        assert build_config(ZextConfig, {"pattern": 1}, []).pattern == (1,)


class TestCommands:
    def test_boundaries(self, tmp_path):
        assert main(["boundaries", "--p", "2", "--K", "2000", "--rows", "50", "--out", str(tmp_path)]) == 0
        doc = load(tmp_path / "boundaries.json")
        assert doc["schema"] == "frep-report-v1" and doc["flags"] == []
        assert doc["tail_c"] == pytest.approx(doc["tail_c_expected"], rel=0.01)
        lines = (tmp_path / "boundaries.csv").read_text().splitlines()
        assert lines[0] == "k,c_k" and lines[1] == "0,1.0" and len(lines) == 52
        assert (tmp_path / "boundaries.timing.json").exists()

    def test_laws_selftest_flags(self, tmp_path):
        # 1e4 draws cannot meet a 1e-4 KS limit, so the run is flagged
        rc = main(["laws-selftest", "--draws", "10000", "--ks-limit", "1e-4", "--out", str(tmp_path)])
        assert rc == 1
        assert len(load(tmp_path / "laws_selftest.json")["flags"]) == 4

    def test_fixedpoint_and_impostor(self, tmp_path):
        assert main(["fixedpoint", "--out", str(tmp_path / "a")]) == 0
        assert load(tmp_path / "a" / "fixedpoint.json")["residual"] < 2e-3
        main(["fixedpoint", "--impostor", "--out", str(tmp_path / "b")])
        assert load(tmp_path / "b" / "fixedpoint.json")["residual"] > 0.05

    def test_kf(self, tmp_path):
        assert main(["kf", "--trials", "200000", "--seed", "1", "--out", str(tmp_path)]) == 0
        doc = load(tmp_path / "kf.json")
        assert doc["residual"] < doc["limit"]

    def test_repp_requires_seed(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["repp", "--out", str(tmp_path)])
        assert e.value.code == 2

    def test_repp_unknown_key_exit(self, tmp_path, capsys):
        assert main(["repp", "--seed", "1", "--set", "colour=red", "--out", str(tmp_path)]) == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_repp_missing_config(self, tmp_path):
        assert main(["repp", "--seed", "1", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 2

    def test_repp_run(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "depth_grid = 4\nd_max = 2\ntrials = 2000\nscaling = 1.23, 0.5\n"
            "measure_steps = 2000000\ntable_size = 20000\n"
        )
        rc = main(["repp", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path)])
        doc = load(tmp_path / "repp.json")
        assert rc == (1 if doc["flags"] else 0)
        assert doc["config"]["master_seed"] == 3
        header = (tmp_path / "ecdf_depth4_event1.csv").read_text().splitlines()[0]
        assert header == "t,F_hat,SE"
        assert (tmp_path / "ecdf_depth4_event2.csv").exists()

    def test_zext_run(self, tmp_path):
        rc = main(["zext", "--seed", "2", "--set", "trials=3000", "--out", str(tmp_path)])
        doc = load(tmp_path / "zext.json")
        assert rc in (0, 1) and doc["schema"] == "frep-report-v1"
        assert "workers" not in doc["config"]

    def test_identity_rejects_p1(self, tmp_path):
        assert main(["identity", "--set", "p=1.0", "--out", str(tmp_path)]) == 2
