"""
结果绘图
累计遗憾与平均即时回报随时间变化的曲线
"""

import logging
import os
from typing import Dict

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from irsa_learning.harness import ExperimentResult

logger = logging.getLogger(__name__)

FIGSIZE = (6.4, 4.0)
DPI = 120


def _plot_band(ax, t: np.ndarray, mean: np.ndarray, stderr: np.ndarray, label: str):
    line, = ax.plot(t, mean, label=label, linewidth=1.2)
    if np.any(stderr > 0):
        ax.fill_between(t, mean - stderr, mean + stderr, color=line.get_color(), alpha=0.2, linewidth=0)


def plot_results(result: ExperimentResult, out_dir: str) -> Dict[str, str]:
    """绘制 regret.png 与 reward.png

    Args:
        result: 实验结果
        out_dir: 输出目录

    Returns:
        图名到路径的映射，没有策略曲线时为空
    """
    if not result.curves:
        logger.warning("没有可绘制的策略曲线")
        return {}
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, curves in result.curves.items():
        t = np.arange(1, curves.cum_regret.shape[1] + 1)
        _plot_band(ax, t, curves.mean_regret(), curves.regret_stderr(), label)
    ax.set_xlabel("t")
    ax.set_ylabel("mean cumulative regret")
    ax.set_title(f"{result.spec.name}: L={result.spec.scenario.L}, M={result.spec.scenario.M}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    paths["regret"] = os.path.join(out_dir, "regret.png")
    fig.savefig(paths["regret"], dpi=DPI, bbox_inches="tight")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, curves in result.curves.items():
        t = np.arange(1, curves.rewards.shape[1] + 1)
        _plot_band(ax, t, curves.mean_reward(), curves.reward_stderr(), label)
    if result.oracle is not None:
        ax.axhline(result.oracle.mu_star, color="black", linestyle="--", linewidth=0.8, label="μ*")
    ax.set_xlabel("t")
    ax.set_ylabel("mean reward")
    ax.grid(True, alpha=0.3)
    ax.legend()
    paths["reward"] = os.path.join(out_dir, "reward.png")
    fig.savefig(paths["reward"], dpi=DPI, bbox_inches="tight")
    plt.close(fig)

    logger.info(f"图已保存: {', '.join(paths.values())}")
    return paths
