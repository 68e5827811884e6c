"""
IRSA 在线学习 实验框架
实验配置、臂集合生成、多次运行平均的学习实验
"""

import asyncio
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from irsa_learning.asymptotic import (
    DensityEvolutionParams,
    PeMode,
    PriorMoments,
    analyze_arms,
    asymptotic_optimize,
)
from irsa_learning.bandit import EpisodeLog, MuStarEstimate, PolicyKind, estimate_mu_star, run_episode
from irsa_learning.config import DEFAULT_LAMBDA, DEFAULT_ORACLE_FRAMES, DEFAULT_ORACLE_SEED
from irsa_learning.irsa import ConstraintViolation, DegreeDistribution, ScenarioConfig, TransmissionStrategy
from irsa_learning.oracle_store import MuStarStore

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[Dict], None]


def _default_policies() -> Tuple[PolicyKind, ...]:
    return (
        PolicyKind(kind="bayes_ucb", beta=1.0),
        PolicyKind(kind="ucb", beta=1.0),
        PolicyKind(kind="greedy"),
        PolicyKind(kind="asymptotic"),
    )


class ExperimentSpec(BaseModel):
    """一次学习实验的完整配置（JSON 配置文件与之字段一一对应）"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "experiment"
    scenario: ScenarioConfig
    arm_family: Literal["k_only", "joint"] = "k_only"
    fixed_lambda: Dict[int, float] = Field(default_factory=lambda: dict(DEFAULT_LAMBDA))
    grid_degrees: Tuple[int, ...] = (2, 3, 8)
    grid_step: float = Field(default=0.25, gt=0, le=1)
    coefficient_mode: Literal["simplex", "normalize"] = "simplex"
    policies: Tuple[PolicyKind, ...] = Field(default_factory=_default_policies)
    runs: int = Field(default=100, ge=1)
    base_seed: int = Field(default=0, ge=0)
    frames_per_decision: int = Field(default=1, ge=1)
    oracle_frames: int = Field(default=DEFAULT_ORACLE_FRAMES, ge=1)
    oracle_seed: int = Field(default=DEFAULT_ORACLE_SEED, ge=0)
    pe_mode: PeMode = "density_evolution"
    de_params: DensityEvolutionParams = Field(default_factory=DensityEvolutionParams)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_policies(self):
        labels = [p.label for p in self.policies]
        if not labels:
            raise ValueError("至少需要一个学习策略")
        if len(set(labels)) != len(labels):
            raise ValueError(f"策略标签重复: {labels}")
        return self

    @property
    def horizon(self) -> int:
        return self.scenario.horizon


def coefficient_grid(spec: ExperimentSpec) -> List[DegreeDistribution]:
    """Λ(x) = Σ a_j x^{d_j} 的候选集合，a_j 在步长 grid_step 的网格上

    simplex 模式只保留 Σ a_j = 1 的组合；normalize 模式把每个非零组合归一化并去重。
    """
    steps = round(1.0 / spec.grid_step)
    if abs(steps * spec.grid_step - 1.0) > 1e-9:
        raise ConstraintViolation(f"grid_step={spec.grid_step} 不能整除 1")
    degrees = spec.grid_degrees
    l_max = spec.scenario.l_max

    candidates: List[DegreeDistribution] = []
    for combo in itertools.product(range(steps + 1), repeat=len(degrees)):
        total = sum(combo)
        if spec.coefficient_mode == "simplex":
            if total != steps:
                continue
        elif total == 0:
            continue
        dist = DegreeDistribution(tuple((d, c / total) for d, c in zip(degrees, combo)), l_max=l_max)
        if dist not in candidates:
            candidates.append(dist)
    return candidates


def build_arm_set(spec: ExperimentSpec) -> List[TransmissionStrategy]:
    """生成臂集合：K = 1..⌊M/L⌋ 与候选 Λ(x) 的笛卡尔积"""
    cfg = spec.scenario
    k_max = cfg.max_packets
    if k_max < 1:
        raise ConstraintViolation(f"L={cfg.L} > M={cfg.M}，臂集合为空")

    if spec.arm_family == "k_only":
        lambdas = [DegreeDistribution.from_mapping(spec.fixed_lambda, l_max=cfg.l_max)]
    else:
        lambdas = coefficient_grid(spec)

    arms = [TransmissionStrategy(lam, K) for lam in lambdas for K in range(1, k_max + 1)]
    for strategy in arms:
        strategy.check(cfg)
    return arms


@dataclass(eq=False)
class PolicyCurves:
    """某一策略在所有运行上的逐步记录，矩阵形状为 runs × n"""

    label: str
    cum_regret: np.ndarray
    rewards: np.ndarray
    arms: np.ndarray
    cum_reward: np.ndarray

    @classmethod
    def from_logs(cls, label: str, logs: List[EpisodeLog]) -> "PolicyCurves":
        return cls(
            label=label,
            cum_regret=np.vstack([log.cum_regret for log in logs]),
            rewards=np.vstack([log.rewards for log in logs]),
            arms=np.vstack([log.arms for log in logs]),
            cum_reward=np.vstack([log.cum_reward for log in logs]),
        )

    @property
    def runs(self) -> int:
        return self.cum_regret.shape[0]

    @staticmethod
    def _stderr(matrix: np.ndarray) -> np.ndarray:
        if matrix.shape[0] < 2:
            return np.zeros(matrix.shape[1])
        return matrix.std(axis=0, ddof=1) / math.sqrt(matrix.shape[0])

    def mean_regret(self) -> np.ndarray:
        return self.cum_regret.mean(axis=0)

    def regret_stderr(self) -> np.ndarray:
        return self._stderr(self.cum_regret)

    def mean_reward(self) -> np.ndarray:
        return self.rewards.mean(axis=0)

    def reward_stderr(self) -> np.ndarray:
        return self._stderr(self.rewards)


@dataclass(eq=False)
class ExperimentResult:
    """实验结果集合"""

    spec: ExperimentSpec
    arms: List[TransmissionStrategy] = field(default_factory=list)
    analysis: List[Dict] = field(default_factory=list)
    oracle: Optional[MuStarEstimate] = None
    baseline_arm: Optional[int] = None
    curves: Dict[str, PolicyCurves] = field(default_factory=dict)


class ExperimentError(RuntimeError):
    """实验过程中出错，partial 中保存已完成的部分结果"""

    def __init__(self, message: str, partial: ExperimentResult):
        super().__init__(message)
        self.partial = partial


def _run_single(
    policy: PolicyKind,
    arms: List[TransmissionStrategy],
    cfg: ScenarioConfig,
    env_seed: int,
    policy_seed: Tuple[int, int],
    mu_star: float,
    priors: List[PriorMoments],
    baseline_arm: int,
    frames_per_decision: int,
) -> EpisodeLog:
    return run_episode(
        policy,
        arms,
        cfg,
        env_rng=np.random.default_rng(np.random.SeedSequence(env_seed)),
        policy_rng=np.random.default_rng(np.random.SeedSequence(list(policy_seed))),
        mu_star=mu_star,
        priors=priors,
        baseline_arm=baseline_arm,
        frames_per_decision=frames_per_decision,
    )


class ExperimentRunner:
    """管理一次学习实验的完整流程"""

    def __init__(self, spec: ExperimentSpec, store: Optional[MuStarStore] = None):
        """初始化实验

        Args:
            spec: 实验配置
            store: 可选的 μ* 存储
        """
        self.spec = spec
        self.store = store
        self.progress_callback: Optional[ProgressCallback] = None
        self.current_progress = {
            "status": "initialized",
            "progress": 0,
            "message": "已初始化实验",
            "detail": {},
        }

    def set_progress_callback(self, callback: ProgressCallback):
        """设置进度回调函数"""
        self.progress_callback = callback

    def update_progress(self, progress: int, message: str, detail: Optional[Dict] = None):
        """更新进度信息并调用回调函数"""
        self.current_progress = {
            "status": "running",
            "progress": progress,
            "message": message,
            "detail": detail or {},
        }
        logger.debug(f"[{progress:3d}%] {message}")
        if self.progress_callback:
            self.progress_callback(self.current_progress)

    def _mu_star(self, arms: List[TransmissionStrategy]) -> MuStarEstimate:
        spec = self.spec
        key = MuStarStore.make_key(spec.scenario, arms, spec.oracle_frames, spec.oracle_seed)
        if self.store is not None:
            cached = self.store.get(key)
            if cached is not None:
                logger.info(f"使用已保存的 μ* 记录: {key}")
                return cached
        estimate = estimate_mu_star(
            arms,
            spec.scenario,
            spec.oracle_frames,
            np.random.default_rng(spec.oracle_seed),
            workers=spec.workers,
        )
        if self.store is not None:
            self.store.put(key, estimate)
        return estimate

    async def run(self) -> ExperimentResult:
        """执行实验：先验分析、μ* 估计、各策略多次运行"""
        spec = self.spec
        cfg = spec.scenario
        result = ExperimentResult(spec=spec)

        try:
            self.update_progress(5, f"构建臂集合 ({spec.arm_family})")
            result.arms = build_arm_set(spec)

            self.update_progress(10, f"渐近分析 {len(result.arms)} 个臂", {"arms": len(result.arms)})
            result.analysis = analyze_arms(result.arms, cfg, spec.de_params, spec.pe_mode)
            priors = [PriorMoments(row["mu"], row["sigma2"]) for row in result.analysis]
            result.baseline_arm = asymptotic_optimize(result.arms, cfg, spec.de_params, spec.pe_mode)

            self.update_progress(15, "估计各臂平均回报与 μ*", {"frames": spec.oracle_frames})
            result.oracle = self._mu_star(result.arms)
            for row, mean, se in zip(result.analysis, result.oracle.means, result.oracle.stderr):
                row["mc_mean"] = mean
                row["mc_stderr"] = se

            loop = asyncio.get_running_loop()
            executor = ProcessPoolExecutor(max_workers=spec.workers) if spec.workers > 1 else None
            try:
                for p_idx, policy in enumerate(spec.policies):
                    progress = 30 + int(65 * p_idx / max(1, len(spec.policies)))
                    self.update_progress(progress, f"运行策略 {policy.label}: {spec.runs} 次",
                                         {"policy": policy.label, "index": p_idx + 1, "total": len(spec.policies)})
                    jobs = [
                        (policy, result.arms, cfg, spec.base_seed + run, (spec.base_seed + run, p_idx + 1),
                         result.oracle.mu_star, priors, result.baseline_arm, spec.frames_per_decision)
                        for run in range(spec.runs)
                    ]
                    if executor is None:
                        logs = [_run_single(*job) for job in jobs]
                    else:
                        logs = await asyncio.gather(*(loop.run_in_executor(executor, _run_single, *job) for job in jobs))
                    result.curves[policy.label] = PolicyCurves.from_logs(policy.label, list(logs))
                    final = result.curves[policy.label].mean_regret()[-1]
                    logger.info(f"策略 {policy.label} 完成，t={spec.horizon} 时平均累计遗憾 {final:.6f}")
            finally:
                if executor is not None:
                    executor.shutdown()
        except Exception as e:
            raise ExperimentError(f"实验 {spec.name} 失败: {e}", result) from e

        self.update_progress(95, "实验完成", {"policies": list(result.curves)})
        return result


async def run_experiment(
    spec: ExperimentSpec,
    progress_callback: Optional[ProgressCallback] = None,
    store: Optional[MuStarStore] = None,
) -> ExperimentResult:
    """执行一次完整的学习实验

    Args:
        spec: 实验配置
        progress_callback: 进度回调，参数为 {progress, message, detail}
        store: 可选的 μ* 存储

    Returns:
        实验结果
    """
    runner = ExperimentRunner(spec, store=store)
    if progress_callback:
        runner.set_progress_callback(progress_callback)
    return await runner.run()
