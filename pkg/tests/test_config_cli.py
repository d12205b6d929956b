"""Config parsing, experiment determinism, CSV emission, and the CLI surface."""

import hashlib
import os

import numpy as np
import pytest

from grfilter.cli import main
from grfilter.config import ExperimentConfig, SweepSpec, config_text, parse_config, replace
from grfilter.experiment import (
    generate_observations,
    generate_truth,
    run_experiment,
    run_filter_experiment,
    sweep_and_emit,
)

SMALL_KEYS = """
model.n_grid = 128
time.n_cycles = 6
obs.n_obs = 16
filter.n_particles = 12
"""


def small_config():
    return replace(ExperimentConfig(), n_grid=128, n_cycles=6, n_obs=16,
                   n_particles=12)


def write_config(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


def file_hash(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


class TestParseConfig:
    def test_empty_file_gives_reference_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, "# nothing here\n\n"))
        assert cfg.n_particles == 400
        assert cfg.n_obs == 64
        assert cfg.n_cycles == 100
        assert cfg.n_grid == 2048
        assert cfg.obs_variance == 0.36
        assert cfg.dt == pytest.approx(0.04)

    def test_unknown_key_rejected_with_line_number(self, tmp_path):
        path = write_config(tmp_path, "model.b = 1.0\nwhat.ever = 3\n")
        with pytest.raises(ValueError, match=r":2: unknown key 'what.ever'"):
            parse_config(path)

    def test_bad_value_reports_key(self, tmp_path):
        path = write_config(tmp_path, "obs.n_obs = sixty-four\n")
        with pytest.raises(ValueError, match="obs.n_obs"):
            parse_config(path)

    def test_indivisible_observation_count_rejected(self, tmp_path):
        path = write_config(tmp_path, "obs.n_obs = 48\n")
        with pytest.raises(ValueError, match="does not divide"):
            parse_config(path)

    def test_override_honored_in_echo(self, tmp_path):
        path = write_config(tmp_path, "error_model.ell2 = 0.3\n")
        cfg = parse_config(path)
        assert cfg.ell2 == 0.3
        assert "error_model.ell2=0.3" in config_text(cfg)

    def test_comments_and_spacing_tolerated(self, tmp_path):
        path = write_config(tmp_path, "  filter.n_particles=7  # tiny\n")
        assert parse_config(path).n_particles == 7


class TestExperimentDeterminism:
    def test_repeated_runs_identical(self):
        cfg = small_config()
        truth_a = generate_truth(cfg)
        truth_b = generate_truth(cfg)
        np.testing.assert_array_equal(truth_a, truth_b)
        obs_a = generate_observations(cfg, truth_a)
        obs_b = generate_observations(cfg, truth_b)
        for a, b in zip(obs_a, obs_b):
            np.testing.assert_array_equal(a.values, b.values)

    def test_observation_reuse_across_ell2(self):
        cfg = small_config()
        truth = generate_truth(cfg)
        obs = generate_observations(cfg, truth)
        run_a = run_filter_experiment(cfg, truth, obs, ell2=0.0)
        run_b = run_filter_experiment(cfg, truth, obs, ell2=0.5)
        assert not np.array_equal(run_a.ess, run_b.ess)  # model differs
        obs_again = generate_observations(cfg, truth)
        for a, b in zip(obs, obs_again):
            np.testing.assert_array_equal(a.values, b.values)

    def test_diagonal_kind_matches_ell2_zero_exactly(self):
        cfg = small_config()
        truth = generate_truth(cfg)
        obs = generate_observations(cfg, truth)
        grf = run_filter_experiment(cfg, truth, obs, ell2=0.0)
        diag = run_filter_experiment(replace(cfg, error_kind="diagonal", ell2=0.7),
                                     truth, obs)
        np.testing.assert_array_equal(grf.ess, diag.ess)
        np.testing.assert_array_equal(grf.mean, diag.mean)

    def test_truth_and_filter_seeds_are_independent(self):
        cfg = small_config()
        truth = generate_truth(cfg)
        np.testing.assert_array_equal(generate_truth(replace(cfg, filter_seed=999)),
                                      truth)
        assert not np.array_equal(generate_truth(replace(cfg, truth_seed=999)), truth)


class TestSweepEmission:
    def test_byte_identical_csvs_across_invocations(self, tmp_path):
        cfg = small_config()
        sweep = SweepSpec(axis="ell2", values=(0.0, 0.4))
        dirs = [str(tmp_path / name) for name in ("a", "b")]
        for d in dirs:
            sweep_and_emit(cfg, sweep, d)
        for name in ("ess.csv", "rmse.csv", "crps.csv", "tau2.csv",
                     "mode_rmse.csv", "observations.csv", "truth.csv"):
            assert file_hash(os.path.join(dirs[0], name)) == \
                file_hash(os.path.join(dirs[1], name)), name

    def test_headers_exact(self, tmp_path):
        cfg = small_config()
        out = str(tmp_path / "out")
        sweep_and_emit(cfg, SweepSpec(axis="ell2", values=(0.2,)), out,
                       snapshot_cycle=3)
        expected = {
            "ess.csv": "ell2,cycle,ess",
            "rmse.csv": "ell2,cycle,rmse",
            "crps.csv": "ell2,n_obs,n_particles,median_crps,mean_crps",
            "tau2.csv": "ell2,tau2,required_ensemble",
            "mode_rmse.csv": "ell2,mode,normalized_rmse",
            "snapshots.csv": "ell2,cycle,kind,member,weight,position,value",
            "truth.csv": "time_index,grid_index,value",
            "observations.csv": "time_index,obs_index,grid_index,value",
        }
        for name, header in expected.items():
            with open(os.path.join(out, name), encoding="utf-8") as fh:
                assert fh.readline().strip() == header, name

    def test_record_counts(self, tmp_path):
        cfg = small_config()
        out = str(tmp_path / "out")
        sweep_and_emit(cfg, SweepSpec(axis="ell2", values=(0.0, 0.3)), out)
        with open(os.path.join(out, "ess.csv"), encoding="utf-8") as fh:
            rows = fh.read().strip().splitlines()[1:]
        assert len(rows) == 2 * cfg.n_cycles

    def test_n_particles_axis_emits_crps(self, tmp_path):
        cfg = small_config()
        out = str(tmp_path / "out")
        sweep_and_emit(cfg, SweepSpec(axis="n_particles", values=(5, 10)), out)
        with open(os.path.join(out, "crps.csv"), encoding="utf-8") as fh:
            lines = fh.read().strip().splitlines()
        assert len(lines) == 3
        assert lines[1].split(",")[2] == "5"

    def test_replicates_add_column(self, tmp_path):
        cfg = small_config()
        out = str(tmp_path / "out")
        sweep_and_emit(cfg, SweepSpec(axis="ell2", values=(0.1,), runs_per_value=2),
                       out)
        with open(os.path.join(out, "crps.csv"), encoding="utf-8") as fh:
            header = fh.readline().strip()
        assert header.endswith(",replicate")

    def test_raw_crps_on_request(self, tmp_path):
        cfg = small_config()
        out = str(tmp_path / "out")
        sweep_and_emit(cfg, SweepSpec(axis="ell2", values=(0.1,)), out,
                       emit_raw_crps=True)
        path = os.path.join(out, "crps_raw.csv")
        with open(path, encoding="utf-8") as fh:
            rows = fh.read().strip().splitlines()
        assert len(rows) == 1 + cfg.n_cycles * cfg.n_grid


class TestRunExperiment:
    def test_artifacts_and_files(self, tmp_path):
        cfg = small_config()
        out = str(tmp_path / "exp")
        artifacts = run_experiment(cfg, out_dir=out)
        assert artifacts.filter_run.n_cycles == cfg.n_cycles
        assert artifacts.kf_run is None
        assert os.path.exists(os.path.join(out, "truth.csv"))
        assert os.path.exists(os.path.join(out, "observations.csv"))
        assert os.path.exists(os.path.join(out, "resolved_config.txt"))


class TestCli:
    def test_filter_subcommand(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, SMALL_KEYS)
        out = str(tmp_path / "out")
        assert main(["filter", "--config", cfg_path, "--ell2", "0.2",
                     "--out", out]) == 0
        echoed = capsys.readouterr().out
        assert "error_model.ell2=0.2" in echoed
        assert os.path.exists(os.path.join(out, "ess.csv"))
        assert os.path.exists(os.path.join(out, "crps.csv"))

    def test_truth_and_observe_subcommands(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_KEYS)
        out = str(tmp_path / "out")
        assert main(["truth", "--config", cfg_path, "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "truth.csv"))
        assert main(["observe", "--config", cfg_path, "--n-obs", "8",
                     "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "observations.csv"))

    def test_kalman_subcommand(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_KEYS)
        out = str(tmp_path / "out")
        assert main(["kalman", "--config", cfg_path, "--r-model", "true",
                     "--out", out]) == 0
        path = os.path.join(out, "kalman_rmse.csv")
        with open(path, encoding="utf-8") as fh:
            assert fh.readline().strip() == "r_model,ell2,cycle,rmse"

    def test_tau_subcommand(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_KEYS)
        out = str(tmp_path / "out")
        assert main(["tau", "--config", cfg_path, "--values", "0.0,0.5",
                     "--out", out]) == 0
        with open(os.path.join(out, "tau2.csv"), encoding="utf-8") as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "ell2,tau2,required_ensemble"
        assert len(lines) == 3

    def test_sweep_subcommand_seed_flag(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_KEYS)
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        args = ["sweep", "--config", cfg_path, "--axis", "n_particles",
                "--values", "4,8", "--seed", "5"]
        assert main(args + ["--out", out_a]) == 0
        assert main(args + ["--out", out_b]) == 0
        assert file_hash(os.path.join(out_a, "crps.csv")) == \
            file_hash(os.path.join(out_b, "crps.csv"))

    def test_filter_snapshot_and_raw(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_KEYS)
        out = str(tmp_path / "out")
        assert main(["filter", "--config", cfg_path, "--out", out,
                     "--snapshot-cycle", "3", "--emit-raw-crps"]) == 0
        assert os.path.exists(os.path.join(out, "snapshots.csv"))
        assert os.path.exists(os.path.join(out, "crps_raw.csv"))
