"""Harness tests: config routing, sweep output files, evaluation, CLI."""

import numpy as np
import pytest

from uavbs.cli import main as cli_main
from uavbs.harness import (ConfigError, RunConfig, evaluate, load_run_config,
                           run_config_from_dict, run_experiment)
from uavbs.metrics import (METRICS_COLUMNS, MetricsRow, read_aggregate_csv,
                           read_metrics_csv, write_aggregate_csv,
                           write_metrics_csv)
from uavbs.world import WorldConfig

TINY = dict(num_users=2, horizon=8, user_step_sigma=0.5)
TINY_AGENT = dict(iterations=2, batch_size=16, hidden=(8, 6), baseline_draws=20)


def tiny_run_config(out_dir, num_seeds=1, **agent_overrides):
    agent = dict(TINY_AGENT)
    agent.update(agent_overrides)
    return RunConfig(world=WorldConfig(**TINY), agent_params=agent,
                     master_seed=1, num_seeds=num_seeds, out_dir=str(out_dir))


class TestRunConfig:
    def test_key_routing(self):
        cfg = run_config_from_dict({
            "num_users": 5, "env_preset": "suburban", "delta_kl": 0.05,
            "iterations": 7, "seed": 3, "num_seeds": 2, "out_dir": "x",
            "cluster_center": [100.0, -200.0],
        })
        assert cfg.world.num_users == 5
        assert cfg.world.env_preset == "suburban"
        assert cfg.world.cluster_center == (100.0, -200.0)
        assert cfg.agent_params == {"delta_kl": 0.05, "iterations": 7}
        assert cfg.master_seed == 3 and cfg.num_seeds == 2 and cfg.out_dir == "x"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            run_config_from_dict({"warp_speed": 9})

    def test_invalid_value_rejected(self):
        with pytest.raises(ConfigError):
            run_config_from_dict({"h_min": 300.0})
        with pytest.raises(ConfigError):
            run_config_from_dict({"gamma": 2.0})

    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("env_preset: urban\nnum_users: 3\nbatch_size: 64\nseed: 9\n")
        cfg = load_run_config(path)
        assert cfg.world.env_preset == "urban"
        assert cfg.world.num_users == 3
        assert cfg.agent_params["batch_size"] == 64
        assert cfg.master_seed == 9

    def test_missing_file_is_config_error(self):
        with pytest.raises(ConfigError):
            load_run_config("/nonexistent/run.yaml")

    def test_seed_derivation_offsets(self):
        cfg = RunConfig(master_seed=10, num_seeds=4)
        assert cfg.seeds() == [10, 11, 12, 13]


class TestMetricsCsv:
    def rows(self, n, scale=1.0):
        return [MetricsRow(iteration=i, avg_reward=scale * i, avg_speed_violation=0.1,
                           avg_boundary_violation=0.2, avg_log_sum_rss_snr=30.0,
                           avg_speed=5.0, avg_height=100.0, avg_dist_to_cluster=50.0,
                           delta_r=0.3) for i in range(n)]

    def test_round_trip(self, tmp_path):
        rows = self.rows(4)
        path = tmp_path / "m.csv"
        write_metrics_csv(path, rows)
        assert read_metrics_csv(path) == rows
        header = path.read_text().splitlines()[0]
        assert header == ",".join(METRICS_COLUMNS)

    def test_aggregate_single_seed_zero_std(self, tmp_path):
        rows = self.rows(3)
        path = tmp_path / "agg.csv"
        write_aggregate_csv(path, [rows])
        agg = read_aggregate_csv(path)
        np.testing.assert_array_equal(agg["avg_reward_mean"], [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(agg["avg_reward_std"], [0.0, 0.0, 0.0])

    def test_aggregate_mean_std(self, tmp_path):
        path = tmp_path / "agg.csv"
        write_aggregate_csv(path, [self.rows(2, scale=1.0), self.rows(2, scale=3.0)])
        agg = read_aggregate_csv(path)
        np.testing.assert_allclose(agg["avg_reward_mean"], [0.0, 2.0])
        np.testing.assert_allclose(agg["avg_reward_std"], [0.0, 1.0])

    def test_mismatched_lengths_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_aggregate_csv(tmp_path / "agg.csv", [self.rows(2), self.rows(3)])


class TestRunExperiment:
    def test_files_and_aggregate_consistency(self, tmp_path):
        cfg = tiny_run_config(tmp_path / "run", num_seeds=2)
        result = run_experiment(cfg)
        assert len(result["seed_dirs"]) == 2
        for seed_dir, history in zip(result["seed_dirs"], result["histories"]):
            assert (seed_dir / "metrics.csv").exists()
            assert (seed_dir / "checkpoint_final.bin").exists()
            assert read_metrics_csv(seed_dir / "metrics.csv") == history

        # Aggregate must be recomputable from the per-seed files.
        agg = read_aggregate_csv(result["aggregate"])
        per_seed = [read_metrics_csv(d / "metrics.csv") for d in result["seed_dirs"]]
        for name in METRICS_COLUMNS[1:]:
            values = np.array([[getattr(r, name) for r in rows] for rows in per_seed])
            np.testing.assert_allclose(agg[f"{name}_mean"], values.mean(axis=0),
                                       atol=1e-12)
            np.testing.assert_allclose(agg[f"{name}_std"], values.std(axis=0),
                                       atol=1e-12)

    def test_identical_reruns_byte_identical(self, tmp_path):
        cfg_a = tiny_run_config(tmp_path / "a", num_seeds=2)
        cfg_b = tiny_run_config(tmp_path / "b", num_seeds=2)
        res_a = run_experiment(cfg_a)
        res_b = run_experiment(cfg_b)
        for da, db in zip(res_a["seed_dirs"], res_b["seed_dirs"]):
            assert (da / "metrics.csv").read_bytes() == (db / "metrics.csv").read_bytes()
        assert res_a["aggregate"].read_bytes() == res_b["aggregate"].read_bytes()


class TestEvaluate:
    def test_report_fields_and_determinism(self, tmp_path):
        cfg = tiny_run_config(tmp_path / "run")
        result = run_experiment(cfg)
        ckpt = result["seed_dirs"][0] / "checkpoint_final.bin"
        rep1 = evaluate(ckpt, cfg, episodes=3, seed=5)
        rep2 = evaluate(ckpt, cfg, episodes=3, seed=5)
        assert rep1 == rep2
        assert rep1["delta_r"] > 0.0
        assert rep1["steps"] == 3 * cfg.world.horizon
        assert rep1["delta_r"] == pytest.approx(
            rep1["agent_mean_rate"] / rep1["heuristic_mean_rate"], rel=1e-12)

    def test_dim_mismatch_rejected(self, tmp_path):
        cfg = tiny_run_config(tmp_path / "run")
        result = run_experiment(cfg)
        ckpt = result["seed_dirs"][0] / "checkpoint_final.bin"
        other = tiny_run_config(tmp_path / "other")
        other.world = WorldConfig(num_users=4, horizon=8)
        with pytest.raises(ConfigError, match="do not match"):
            evaluate(ckpt, other, episodes=1)

    def test_missing_checkpoint_is_config_error(self, tmp_path):
        cfg = tiny_run_config(tmp_path / "run")
        with pytest.raises(ConfigError):
            evaluate(tmp_path / "nope.bin", cfg, episodes=1)


class TestCli:
    def _write_config(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "num_users: 2\nhorizon: 8\nuser_step_sigma: 0.5\n"
            "iterations: 1\nbatch_size: 16\nhidden: [8, 6]\nbaseline_draws: 20\n"
            "num_seeds: 1\n")
        return path

    def test_train_evaluate_baseline_flow(self, tmp_path, capsys):
        config = self._write_config(tmp_path)
        out = tmp_path / "out"
        code = cli_main(["train", "--config", str(config), "--out", str(out),
                         "--seed", "2"])
        assert code == 0
        assert (out / "aggregate.csv").exists()

        ckpt = out / "seed_2" / "checkpoint_final.bin"
        code = cli_main(["evaluate", str(ckpt), "--config", str(config),
                         "--episodes", "2", "--seed", "2"])
        assert code == 0
        assert "delta_r" in capsys.readouterr().out

        code = cli_main(["baseline", "--config", str(config), "--draws", "50"])
        assert code == 0
        assert "placement" in capsys.readouterr().out

    def test_bad_config_exit_1(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("bogus_key: 1\n")
        assert cli_main(["train", "--config", str(bad)]) == 1

    def test_bad_checkpoint_exit_1(self, tmp_path):
        config = self._write_config(tmp_path)
        assert cli_main(["evaluate", str(tmp_path / "none.bin"),
                         "--config", str(config)]) == 1

    def test_runtime_failure_exit_2(self, tmp_path):
        config = self._write_config(tmp_path)
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        # Output path nested under a regular file cannot be created.
        code = cli_main(["train", "--config", str(config),
                         "--out", str(blocker / "x")])
        assert code == 2

    def test_env_flag_overrides_config(self, tmp_path, capsys):
        config = self._write_config(tmp_path)
        code = cli_main(["baseline", "--config", str(config), "--env", "suburban",
                         "--draws", "20"])
        assert code == 0
