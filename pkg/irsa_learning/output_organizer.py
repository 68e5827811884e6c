"""
IRSA 学习实验 输出整理系统
负责把实验结果整理成 CSV 表格与运行清单
"""

import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from irsa_learning.config import FLOAT_FORMAT
from irsa_learning.harness import ExperimentResult

logger = logging.getLogger(__name__)

REGRET_COLUMNS = ["policy", "t", "mean_cum_regret", "stderr"]
REWARD_COLUMNS = ["policy", "t", "mean_reward", "stderr"]
ARM_COLUMNS = [
    "arm_id", "K", "lambda", "G", "p_loss", "g_star",
    "prior_mu", "prior_sigma2", "mc_mean", "mc_stderr",
]
RUN_COLUMNS = ["policy", "run", "t", "arm_id", "reward", "cum_reward", "cum_regret"]


class OutputOrganizer:
    """输出整理器，将实验结果写入输出目录"""

    def __init__(self, output_dir: str, float_format: str = FLOAT_FORMAT):
        """初始化输出整理器

        Args:
            output_dir: 输出目录
            float_format: CSV 浮点格式
        """
        self.output_dir = output_dir
        self.float_format = float_format

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _write_csv(self, frame: pd.DataFrame, name: str) -> str:
        path = self._path(name)
        try:
            frame.to_csv(path, index=False, float_format=self.float_format, lineterminator="\n")
        except OSError as e:
            raise OSError(f"写入 {path} 失败: {e}") from e
        logger.info(f"已保存 {path} ({len(frame)} 行)")
        return path

    def regret_table(self, result: ExperimentResult) -> pd.DataFrame:
        """每个策略每个时刻的平均累计遗憾及标准误"""
        frames = []
        for label, curves in result.curves.items():
            n = curves.cum_regret.shape[1]
            frames.append(pd.DataFrame({
                "policy": label,
                "t": np.arange(1, n + 1),
                "mean_cum_regret": curves.mean_regret(),
                "stderr": curves.regret_stderr(),
            }))
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=REGRET_COLUMNS)

    def reward_table(self, result: ExperimentResult) -> pd.DataFrame:
        """每个策略每个时刻的平均即时回报及标准误"""
        frames = []
        for label, curves in result.curves.items():
            n = curves.rewards.shape[1]
            frames.append(pd.DataFrame({
                "policy": label,
                "t": np.arange(1, n + 1),
                "mean_reward": curves.mean_reward(),
                "stderr": curves.reward_stderr(),
            }))
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=REWARD_COLUMNS)

    def arm_table(self, result: ExperimentResult) -> pd.DataFrame:
        rows = []
        for row in result.analysis:
            rows.append({
                "arm_id": row["arm_id"],
                "K": row["K"],
                "lambda": row["lambda"],
                "G": row["G"],
                "p_loss": row["p_loss"],
                "g_star": row["g_star"],
                "prior_mu": row["mu"],
                "prior_sigma2": row["sigma2"],
                "mc_mean": row.get("mc_mean", np.nan),
                "mc_stderr": row.get("mc_stderr", np.nan),
            })
        return pd.DataFrame(rows, columns=ARM_COLUMNS)

    def run_table(self, result: ExperimentResult) -> pd.DataFrame:
        """逐次运行的原始记录"""
        frames = []
        for label, curves in result.curves.items():
            runs, n = curves.rewards.shape
            frames.append(pd.DataFrame({
                "policy": label,
                "run": np.repeat(np.arange(runs), n),
                "t": np.tile(np.arange(1, n + 1), runs),
                "arm_id": curves.arms.ravel(),
                "reward": curves.rewards.ravel(),
                "cum_reward": curves.cum_reward.ravel(),
                "cum_regret": curves.cum_regret.ravel(),
            }))
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=RUN_COLUMNS)

    def manifest(self, result: ExperimentResult) -> Dict:
        """机器可读的运行清单：场景、种子、μ* 与版本"""
        from irsa_learning import __version__

        spec = result.spec
        oracle = result.oracle
        return {
            "tool": "irsa_learning",
            "version": __version__,
            "name": spec.name,
            "experiment": spec.model_dump(mode="json"),
            "seeds": {
                "base_seed": spec.base_seed,
                "run_seeds": [spec.base_seed + run for run in range(spec.runs)],
                "oracle_seed": spec.oracle_seed,
                "common_random_numbers": "环境随机流由 base_seed+run 决定，各策略在同一运行编号下共享信道实现",
            },
            "mu_star": oracle.mu_star if oracle else None,
            "oracle_best_arm": oracle.best_arm if oracle else None,
            "oracle_frames": oracle.n_frames if oracle else None,
            "baseline_arm": result.baseline_arm,
            "n_arms": len(result.arms),
            "policies": list(result.curves),
        }

    def organize(self, result: ExperimentResult, include_runs: bool = True) -> Dict[str, str]:
        """写出全部结果文件

        Args:
            result: 实验结果，可以是部分结果
            include_runs: 是否写出逐次运行记录 runs.csv

        Returns:
            文件名到路径的映射
        """
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            raise OSError(f"无法创建输出目录 {self.output_dir}: {e}") from e

        # 输出中的每个臂都必须满足 L·K ≤ M
        for strategy in result.arms:
            strategy.check(result.spec.scenario)

        paths = {
            "regret": self._write_csv(self.regret_table(result), "regret.csv"),
            "reward": self._write_csv(self.reward_table(result), "reward.csv"),
            "arms": self._write_csv(self.arm_table(result), "arms.csv"),
        }
        if include_runs:
            paths["runs"] = self._write_csv(self.run_table(result), "runs.csv")

        manifest_path = self._path("manifest.json")
        try:
            with open(manifest_path, "w", encoding="utf-8") as f:
                json.dump(self.manifest(result), f, ensure_ascii=False, indent=2, sort_keys=True)
        except OSError as e:
            raise OSError(f"写入 {manifest_path} 失败: {e}") from e
        paths["manifest"] = manifest_path
        return paths


def emit_results(result: ExperimentResult, out_dir: str, include_runs: bool = True) -> Dict[str, str]:
    """把实验结果写入 out_dir"""
    return OutputOrganizer(out_dir).organize(result, include_runs=include_runs)


def format_analysis(rows: List[Dict], float_format: Optional[str] = None) -> str:
    """把渐近分析表格式化为 CSV 文本（analyze 子命令）"""
    frame = pd.DataFrame(rows)
    return frame.to_csv(index=False, float_format=float_format or FLOAT_FORMAT, lineterminator="\n")
