"""
测试输出整理、μ* 存储与命令行入口
"""

import asyncio
import json
import os
import re
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pandas as pd
import pytest

from irsa_learning.bandit import MuStarEstimate
from irsa_learning.harness import ExperimentResult, ExperimentSpec, PolicyCurves, build_arm_set, run_experiment
from irsa_learning.irsa import DegreeDistribution, ScenarioConfig, TransmissionStrategy
from irsa_learning.main import main
from irsa_learning.oracle_store import MuStarStore
from irsa_learning.output_organizer import OutputOrganizer, emit_results, format_analysis
from irsa_learning.plotting import plot_results

SMALL_CONFIG = {
    "name": "cli_small",
    "scenario": {"L": 2, "M": 6, "horizon": 12},
    "policies": [{"kind": "bayes_ucb"}, {"kind": "ucb"}],
    "runs": 2,
    "base_seed": 4,
    "oracle_frames": 100,
}


def small_spec() -> ExperimentSpec:
    return ExperimentSpec.model_validate(SMALL_CONFIG)


def three_step_result() -> ExperimentResult:
    spec = small_spec()
    rewards = np.array([[0.5, 0.75, 1.0]])
    curves = PolicyCurves(
        label="ucb",
        cum_regret=np.cumsum(1.0 - rewards, axis=1),
        rewards=rewards,
        arms=np.array([[0, 1, 1]]),
        cum_reward=np.cumsum(rewards, axis=1),
    )
    return ExperimentResult(spec=spec, curves={"ucb": curves})


def read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


class TestEmitResults:
    def test_empty_result_writes_headers(self, tmp_path):
        paths = emit_results(ExperimentResult(spec=small_spec()), str(tmp_path))
        assert read_text(paths["regret"]) == "policy,t,mean_cum_regret,stderr\n"
        assert read_text(paths["reward"]) == "policy,t,mean_reward,stderr\n"
        assert read_text(paths["runs"]) == "policy,run,t,arm_id,reward,cum_reward,cum_regret\n"
        assert read_text(paths["arms"]).startswith("arm_id,K,lambda,G,p_loss,g_star,prior_mu,prior_sigma2,mc_mean")

    def test_row_count(self, tmp_path):
        paths = emit_results(three_step_result(), str(tmp_path))
        regret = pd.read_csv(paths["regret"])
        assert len(regret) == 3
        assert regret["t"].tolist() == [1, 2, 3]
        np.testing.assert_allclose(regret["mean_cum_regret"], [0.5, 0.75, 0.75])
        assert len(pd.read_csv(paths["runs"])) == 3

    def test_seventeen_significant_digits(self, tmp_path):
        result = three_step_result()
        result.curves["ucb"].rewards[0, 0] = 0.1
        paths = emit_results(result, str(tmp_path))
        assert "0.10000000000000001" in read_text(paths["reward"])
        assert pd.read_csv(paths["reward"], float_precision="round_trip")["mean_reward"][0] == 0.1

    def test_manifest(self, tmp_path):
        result = three_step_result()
        result.oracle = MuStarEstimate(mu_star=1.0, best_arm=1, means=(0.5, 1.0), stderr=(0.0, 0.0), n_frames=10)
        paths = emit_results(result, str(tmp_path))
        manifest = json.loads(read_text(paths["manifest"]))
        assert manifest["mu_star"] == 1.0
        assert manifest["seeds"]["run_seeds"] == [4, 5]
        assert manifest["experiment"]["scenario"]["L"] == 2
        assert manifest["policies"] == ["ucb"]
        assert "version" in manifest

    def test_io_error_names_path(self, tmp_path):
        blocker = tmp_path / "not_a_dir"
        blocker.write_text("x")
        with pytest.raises(OSError, match=re.escape(str(blocker))):
            emit_results(three_step_result(), str(blocker))

    def test_rerun_is_byte_identical(self, tmp_path):
        spec = small_spec()
        for name in ("a", "b"):
            emit_results(asyncio.run(run_experiment(spec)), str(tmp_path / name))
        for file_name in ("regret.csv", "reward.csv", "arms.csv", "runs.csv", "manifest.json"):
            assert read_text(str(tmp_path / "a" / file_name)) == read_text(str(tmp_path / "b" / file_name))

    def test_arms_table(self, tmp_path):
        result = asyncio.run(run_experiment(small_spec()))
        arms = OutputOrganizer(str(tmp_path)).arm_table(result)
        assert arms["K"].tolist() == [1, 2, 3]
        assert (arms["G"] <= 1.0).all()
        assert arms["mc_mean"].notna().all()

    def test_plot_results(self, tmp_path):
        paths = plot_results(three_step_result(), str(tmp_path))
        assert os.path.getsize(paths["regret"]) > 0
        assert os.path.getsize(paths["reward"]) > 0
        assert plot_results(ExperimentResult(spec=small_spec()), str(tmp_path)) == {}

    def test_format_analysis(self):
        text = format_analysis([{"arm_id": 0, "K": 1, "G": 0.25}])
        assert text == "arm_id,K,G\n0,1,0.25\n"


class TestMuStarStore:
    def test_persistence(self, tmp_path):
        path = str(tmp_path / "cache" / "mu_star.json")
        store = MuStarStore(path)
        estimate = MuStarEstimate(mu_star=0.9, best_arm=0, means=(0.9,), stderr=(0.01,), n_frames=5)
        store.put("abc", estimate)
        assert MuStarStore(path).get("abc") == estimate
        assert store.get("missing") is None
        store.clear()
        assert len(MuStarStore(path)) == 0

    def test_corrupt_file_starts_empty(self, tmp_path):
        path = tmp_path / "mu_star.json"
        path.write_text("{not json")
        assert len(MuStarStore(str(path))) == 0

    def test_key(self):
        lam = DegreeDistribution.from_mapping({2: 0.75, 3: 0.25})
        arms = [TransmissionStrategy(lam, K) for K in (1, 2)]
        base = MuStarStore.make_key(ScenarioConfig(L=2, M=6), arms, 100, 1)
        assert base == MuStarStore.make_key(ScenarioConfig(L=2, M=6, horizon=50, rng_seed=3), arms, 100, 1)
        assert base != MuStarStore.make_key(ScenarioConfig(L=2, M=6), arms, 100, 2)
        assert base != MuStarStore.make_key(ScenarioConfig(L=2, M=6), arms[:1], 100, 1)
        assert base != MuStarStore.make_key(ScenarioConfig(L=2, M=7), arms, 100, 1)


class TestCommandLine:
    def test_simulate(self, capsys):
        assert main(["simulate", "--L", "3", "--M", "8", "--K", "1", "--lambda", "2:1", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "MAC 帧: L=3, K=1, M=8" in out
        assert "SIC 译码" in out

    def test_simulate_statistics(self, capsys):
        assert main(["simulate", "--L", "5", "--M", "30", "--K", "2", "--frames", "20", "--random-order"]) == 0
        assert "吞吐量" in capsys.readouterr().out

    def test_constraint_violation_exit_code(self):
        assert main(["simulate", "--L", "4", "--M", "6", "--K", "2"]) == 2
        assert main(["simulate", "--lambda", "2:0.5"]) == 2

    def test_analyze(self, capsys):
        assert main(["analyze", "--L", "20", "--M", "300"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "arm_id,K,lambda,G,p_loss,g_star,mu,sigma2,expected_utility"
        assert len([line for line in lines if line and not line.startswith("#")]) == 16

    def test_analyze_from_config(self, tmp_path, capsys):
        config = tmp_path / "joint.json"
        config.write_text(json.dumps({"scenario": {"L": 20, "M": 300}, "arm_family": "joint", "pe_mode": "binary"}))
        assert main(["analyze", "--config", str(config)]) == 0
        lines = [line for line in capsys.readouterr().out.splitlines() if line and not line.startswith("#")]
        assert len(lines) == 226

    def test_learn_with_env_override(self, tmp_path, monkeypatch):
        config = tmp_path / "small.json"
        config.write_text(json.dumps(SMALL_CONFIG))
        monkeypatch.setenv("IRSA_OUTPUT_DIR", str(tmp_path / "env_out"))
        assert main(["learn", str(config), "--output-dir", str(tmp_path / "ignored"), "--no-plot"]) == 0
        out_dir = tmp_path / "env_out" / "cli_small"
        for name in ("regret.csv", "reward.csv", "arms.csv", "runs.csv", "manifest.json"):
            assert (out_dir / name).exists()
        assert (tmp_path / "env_out" / "mu_star_cache.json").exists()
        assert not (tmp_path / "ignored").exists()

    def test_learn_is_deterministic(self, tmp_path, monkeypatch):
        monkeypatch.delenv("IRSA_OUTPUT_DIR", raising=False)
        config = tmp_path / "small.json"
        config.write_text(json.dumps(SMALL_CONFIG))
        for name in ("first", "second"):
            assert main(["learn", str(config), "--output-dir", str(tmp_path / name), "--no-plot"]) == 0
        for file_name in ("regret.csv", "reward.csv", "arms.csv", "runs.csv"):
            assert read_text(str(tmp_path / "first" / "cli_small" / file_name)) == \
                read_text(str(tmp_path / "second" / "cli_small" / file_name))

    def test_sweep(self, tmp_path, monkeypatch):
        monkeypatch.delenv("IRSA_OUTPUT_DIR", raising=False)
        second = dict(SMALL_CONFIG, name="cli_joint", arm_family="joint", grid_step=0.5)
        config = tmp_path / "sweep.json"
        config.write_text(json.dumps({"experiments": [SMALL_CONFIG, second]}))
        assert main(["sweep", str(config), "--output-dir", str(tmp_path / "out"), "--no-plot"]) == 0
        assert (tmp_path / "out" / "cli_small" / "regret.csv").exists()
        arms = pd.read_csv(tmp_path / "out" / "cli_joint" / "arms.csv")
        assert len(arms) == len(build_arm_set(ExperimentSpec.model_validate(second)))

    def test_invalid_config_exit_code(self, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps(dict(SMALL_CONFIG, runs=0)))
        assert main(["learn", str(config), "--output-dir", str(tmp_path), "--no-plot"]) == 2

    def test_experiment_constraint_violation_exit_code(self, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps(dict(SMALL_CONFIG, scenario={"L": 7, "M": 6})))
        assert main(["learn", str(config), "--output-dir", str(tmp_path / "out"), "--no-plot"]) == 2
        assert (tmp_path / "out" / "cli_small" / "error_log.txt").exists()

    def test_missing_config_exit_code(self, tmp_path):
        assert main(["learn", str(tmp_path / "missing.json"), "--no-plot"]) == 1
