import math
from dataclasses import replace

import numpy as np
import pytest

from foldy_imaging import config as cfgmod
from foldy_imaging.cli import main
from foldy_imaging.config import ConfigError, ExperimentConfig, parse_illumination
from foldy_imaging.experiment import (
    ImageGrid,
    acquire,
    compare_methods,
    read_pgm,
    run_experiment,
    support_metrics,
)
from foldy_imaging.geometry import ImageWindow

SMALL = """\
[experiment]
method = smv
illumination = point:12
noise_pct = 0
seed = 3

[geometry]
kind = linear
n_sensors = 24
pitch = 1.0

[window]
center = 0, 30, 0
width = 11
height = 11
pitch = 1

[scene]
indices = 25, 50, 97
amplitudes = 2.0, 1.5, 1.0
"""


@pytest.fixture
def small_cfg():
    return cfgmod.loads(SMALL)


@pytest.fixture
def small_file(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


class TestConfig:
    def test_defaults_describe_reference_setup(self):
        cfg = ExperimentConfig()
        cfgmod.validate(cfg)
        assert cfg.K == 1681 and cfg.geometry.n_sensors == 100 and len(cfg.scene.indices) == 5
        assert cfg.scene.amplitude_scale == pytest.approx(4 * math.pi)

    def test_roundtrip(self, small_cfg):
        assert cfgmod.loads(cfgmod.dumps(small_cfg)) == small_cfg
        changed = replace(small_cfg, music_nu=4, solver=replace(small_cfg.solver, beta=0.5, support_fraction=0.2))
        assert cfgmod.loads(cfgmod.dumps(changed)) == changed

    def test_file_roundtrip(self, small_cfg, tmp_path):
        cfgmod.dump(small_cfg, tmp_path / "c.ini")
        assert cfgmod.load(tmp_path / "c.ini") == small_cfg

    def test_parse_illumination(self):
        assert parse_illumination("optimal:3") == ("optimal", 3)
        with pytest.raises(ValueError):
            parse_illumination("optimal")

    def test_all_problems_reported(self):
        bad = SMALL.replace("noise_pct = 0", "noise_pct = -1").replace("indices = 25, 50, 97", "indices = 25, 50, 500")
        with pytest.raises(ConfigError) as info:
            cfgmod.loads(bad + "\n[solver]\nmax_iters = 0\n")
        fields = [p.split(":")[0] for p in info.value.problems]
        assert fields == ["experiment.noise_pct", "scene.indices", "solver.max_iters"]

    def test_empty_scene_rejected(self):
        with pytest.raises(ConfigError, match="scene must contain at least one scatterer"):
            cfgmod.loads(SMALL.replace("indices = 25, 50, 97", "indices =").replace("amplitudes = 2.0, 1.5, 1.0", "amplitudes ="))

    def test_unknown_keys_and_sections(self):
        with pytest.raises(ConfigError) as info:
            cfgmod.loads(SMALL + "\n[extra]\na = 1\n[solver]\nspeed = 3\n")
        assert "solver.speed: unknown key" in info.value.problems
        assert "extra: unknown section" in info.value.problems

    def test_window_must_match_pitch(self):
        with pytest.raises(ConfigError, match="window.width"):
            cfgmod.loads(SMALL.replace("width = 11", "width = 10.5"))

    def test_smv_needs_single_shot(self, small_cfg):
        with pytest.raises(ConfigError, match="single illumination"):
            cfgmod.validate(replace(small_cfg, illumination="random:3"))


class TestExperiment:
    def test_noiseless_smv_exact(self, small_cfg):
        rep = run_experiment(replace(small_cfg, solver=replace(small_cfg.solver, tolerance=1e-11)), write=False)
        assert rep.metrics["exact_support"]
        assert rep.metrics["rho_max_rel_error"] < 1e-6
        assert list(rep.true_support) == [24, 49, 96]

    def test_acquire_is_deterministic(self, small_cfg):
        a = acquire(replace(small_cfg, noise_pct=20, illumination="random:4", method="mmv"))
        b = acquire(replace(small_cfg, noise_pct=20, illumination="random:4", method="mmv"))
        assert a.data.B.tobytes() == b.data.B.tobytes()
        assert [il.label for il in a.data.illuminations] == [il.label for il in b.data.illuminations]

    def test_optimal_uses_measured_response(self, small_cfg):
        prob = acquire(replace(small_cfg, noise_pct=10, illumination="optimal:3", method="mmv"))
        assert prob.measured is not prob.response
        V = np.column_stack([il.f for il in prob.data.illuminations])
        assert np.allclose(prob.data.B, prob.measured.P @ V)
        assert prob.data.noise_energy == pytest.approx(np.linalg.norm((prob.measured.P - prob.response.P) @ V))

    def test_phase_seed_overrides_master_seed(self, small_cfg):
        pinned = replace(small_cfg, scene=replace(small_cfg.scene, phase_seed=9))
        a = acquire(replace(pinned, seed=1)).scene.rho0
        b = acquire(replace(pinned, seed=2)).scene.rho0
        assert np.array_equal(a, b)
        assert not np.array_equal(acquire(replace(small_cfg, seed=1)).scene.rho0,
                                  acquire(replace(small_cfg, seed=2)).scene.rho0)

    def test_bad_transducer(self, small_cfg):
        with pytest.raises(ConfigError, match="outside"):
            acquire(replace(small_cfg, illumination="point:25"))

    def test_support_metrics(self):
        assert support_metrics([1, 2, 3], [2, 3, 4, 5]) == (2 / 3, 0.5)
        assert support_metrics([], [1]) == (0.0, 0.0)

    def test_outputs(self, small_cfg, tmp_path):
        run_experiment(replace(small_cfg, output_dir=str(tmp_path), music_nu=3))
        names = {p.name for p in tmp_path.iterdir()}
        for expected in ("config.ini", "summary.txt", "scene.csv", "recovered.csv", "singular_values.csv",
                         "image_truth.pgm", "image_rownorm.csv", "image_music.pgm", "markers.csv"):
            assert expected in names
        img = read_pgm(tmp_path / "image_truth.pgm")
        assert img.shape == (11, 11) and img.max() == 255
        assert "exact_support = True" in (tmp_path / "summary.txt").read_text()

    def test_image_grid_orientation(self):
        iw = ImageWindow((0.0, 10.0, 0.0), (3.0, 2.0), 1.0)
        grid = ImageGrid.from_vector(np.arange(6.0), iw, [5])
        assert grid.values.shape == (2, 3) and grid.values[1, 2] == 5.0
        assert grid.markers == ((2, 1),)

    def test_compare_is_deterministic(self, small_cfg, tmp_path):
        cfg = replace(small_cfg, compare=replace(small_cfg.compare, random_nu=3, optimal_nu=3, music_nu=3))
        compare_methods(replace(cfg, output_dir=str(tmp_path / "a")))
        compare_methods(replace(cfg, output_dir=str(tmp_path / "b")))
        a = (tmp_path / "a" / "compare.csv").read_bytes()
        assert a == (tmp_path / "b" / "compare.csv").read_bytes()
        assert a.count(b"\n") == 5


class TestCli:
    def test_config_prints_resolved(self, small_file, capsys):
        assert main(["config", "--config", str(small_file), "--noise", "5"]) == 0
        out = capsys.readouterr().out
        assert "noise_pct = 5.0" in out and cfgmod.loads(out).geometry.n_sensors == 24

    def test_image_runs_and_is_byte_identical(self, small_file, tmp_path, capsys):
        for name in ("a", "b"):
            assert main(["image", "--config", str(small_file), "--out", str(tmp_path / name)]) == 0
        assert "exact_support = True" in capsys.readouterr().out
        for f in ("summary.txt", "recovered.csv", "image_rownorm.pgm", "image_rho.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_image_music(self, small_file, tmp_path, capsys):
        args = ["image", "--config", str(small_file), "--method", "music", "--illum", "optimal:3",
                "--out", str(tmp_path)]
        assert main(args) == 0
        assert "recall = 1.0" in capsys.readouterr().out

    def test_synthesize(self, small_file, tmp_path):
        assert main(["synthesize", "--config", str(small_file), "--noise", "10", "--out", str(tmp_path)]) == 0
        for f in ("scene.csv", "response.csv", "response_measured.csv", "illuminations.csv", "data.csv"):
            assert (tmp_path / f).exists()

    def test_bounds_from_flags(self, capsys):
        assert main(["bounds", "--eps", "0.1", "--M", "2", "--noise-energy", "1"]) == 0
        out = capsys.readouterr().out
        assert "status = conditions satisfied" in out and "delta_min = " in out

    def test_bounds_from_config(self, small_file, capsys):
        assert main(["bounds", "--config", str(small_file)]) == 0
        out = capsys.readouterr().out
        assert "erc = " in out and "status = conditions violated" in out

    def test_coherence(self, tmp_path, capsys):
        args = ["coherence", "--array", "spherical", "--L", "30", "--h", "1", "--sep-min", "3",
                "--sep-max", "6", "--sep-step", "0.5", "--out", str(tmp_path)]
        assert main(args) == 0
        assert (tmp_path / "coherence_spherical.csv").read_text().count("\n") == 8

    def test_compare_seed_range(self, small_file, tmp_path, capsys):
        args = ["compare", "--config", str(small_file), "--methods", "smv,music", "--seeds", "0:2",
                "--out", str(tmp_path)]
        assert main(args) == 0
        assert (tmp_path / "compare.csv").read_text().count("\n") == 5

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text(SMALL.replace("indices = 25, 50, 97", "indices =").replace("amplitudes = 2.0, 1.5, 1.0", "amplitudes ="))
        assert main(["image", "--config", str(path), "--out", str(tmp_path)]) == 2
        assert "config error: scene.indices: scene must contain at least one scatterer" in capsys.readouterr().err
