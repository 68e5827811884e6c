"""
传输策略的在线学习
经典 UCB、带 IRSA 先验的 Bayes-UCB、β=0 贪心变体、渐近固定基线，以及回报/遗憾统计
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from irsa_learning.asymptotic import PriorMoments, asymptotic_optimize, prior_moments
from irsa_learning.config import VARIANCE_FLOOR
from irsa_learning.irsa import ConstraintViolation, ScenarioConfig, TransmissionStrategy, frame_reward

logger = logging.getLogger(__name__)

PolicyName = Literal["ucb", "bayes_ucb", "greedy", "asymptotic"]


class PolicyKind(BaseModel):
    """学习策略：UCB(β)、BayesUCB(β)、Greedy（β=0 的 Bayes-UCB）、AsymptoticFixed"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: PolicyName
    beta: float = Field(default=1.0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _greedy_has_no_bonus(cls, data):
        if isinstance(data, dict) and data.get("kind") == "greedy":
            data = {**data, "beta": 0.0}
        return data

    @property
    def label(self) -> str:
        if self.kind in ("ucb", "bayes_ucb") and self.beta != 1.0:
            return f"{self.kind}_beta{self.beta:g}"
        return self.kind


@dataclass(frozen=True)
class ArmState:
    """单个臂的学习状态

    Args:
        mu_hat: 均值估计 μ̂
        sigma2: 后验方差（Bayes-UCB）
        pulls: 计数 N（UCB 含一次先验伪观测）
        tau2: 观测方差 τ²，取先验方差
    """

    arm_id: int
    strategy: TransmissionStrategy
    mu_hat: float
    sigma2: float = 0.0
    pulls: int = 0
    tau2: float = 0.0


def init_arm_states(
    policy: PolicyKind,
    arm_set: Sequence[TransmissionStrategy],
    priors: Sequence[PriorMoments],
    variance_floor: float = VARIANCE_FLOOR,
) -> List[ArmState]:
    """用渐近分析得到的先验初始化各臂状态"""
    if len(priors) != len(arm_set):
        raise ValueError(f"先验数量 {len(priors)} 与臂数量 {len(arm_set)} 不一致")
    states = []
    for arm_id, (strategy, prior) in enumerate(zip(arm_set, priors)):
        if policy.kind == "ucb":
            # 先验视为一次观测
            states.append(ArmState(arm_id, strategy, mu_hat=prior.mu, sigma2=prior.sigma2, pulls=1))
        elif policy.kind in ("bayes_ucb", "greedy"):
            s2 = max(prior.sigma2, variance_floor)
            states.append(ArmState(arm_id, strategy, mu_hat=prior.mu, sigma2=s2, pulls=0, tau2=s2))
        else:
            states.append(ArmState(arm_id, strategy, mu_hat=prior.mu, sigma2=prior.sigma2, pulls=0))
    return states


def ucb_index(state: ArmState, t: int, beta: float) -> float:
    """μ̂ + β·sqrt(2·ln t / N)"""
    if t < 1:
        raise ValueError(f"t 必须 ≥ 1: {t}")
    if beta == 0:
        return state.mu_hat
    if state.pulls <= 0:
        return math.inf
    return state.mu_hat + beta * math.sqrt(2.0 * math.log(t) / state.pulls)


def bayes_ucb_index(state: ArmState, beta: float) -> float:
    """μ̂ + β·σ"""
    if state.sigma2 < 0:
        raise ValueError(f"方差为负: {state.sigma2}")
    return state.mu_hat + beta * math.sqrt(state.sigma2)


def bayes_update(state: ArmState, reward: float) -> ArmState:
    """正态-正态共轭更新，观测方差固定为先验方差 τ²"""
    tau2 = state.tau2 if state.tau2 > 0 else state.sigma2
    precision = 1.0 / state.sigma2 + 1.0 / tau2
    sigma2 = 1.0 / precision
    mu_hat = sigma2 * (state.mu_hat / state.sigma2 + reward / tau2)
    return replace(state, mu_hat=mu_hat, sigma2=sigma2, pulls=state.pulls + 1, tau2=tau2)


def ucb_update(state: ArmState, reward: float) -> ArmState:
    """μ̂ = (N·μ̂ + X)/(N+1)"""
    n = state.pulls
    return replace(state, mu_hat=(n * state.mu_hat + reward) / (n + 1), pulls=n + 1)


def policy_index(policy: PolicyKind, state: ArmState, t: int) -> float:
    if policy.kind == "ucb":
        return ucb_index(state, t, policy.beta)
    return bayes_ucb_index(state, policy.beta)


def select_arm(
    policy: PolicyKind,
    states: Sequence[ArmState],
    t: int,
    rng: np.random.Generator,
    baseline_arm: Optional[int] = None,
) -> int:
    """选择指标最大的臂，平局时从策略随机流中均匀选取"""
    if not states:
        raise ConstraintViolation("臂集合为空")
    if policy.kind == "asymptotic":
        if baseline_arm is None:
            raise ValueError("渐近固定策略需要预先计算的基线臂")
        return baseline_arm
    indices = np.array([policy_index(policy, s, t) for s in states])
    candidates = np.flatnonzero(indices == indices.max())
    if len(candidates) == 1:
        return int(candidates[0])
    return int(rng.choice(candidates))


def update_state(policy: PolicyKind, state: ArmState, reward: float) -> ArmState:
    if policy.kind in ("bayes_ucb", "greedy"):
        return bayes_update(state, reward)
    return ucb_update(state, reward)


@dataclass(frozen=True, eq=False)
class EpisodeLog:
    """一次学习过程的逐步记录，t = 1..n"""

    policy: str
    mu_star: float
    t: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    cum_reward: np.ndarray
    cum_regret: np.ndarray

    def pull_counts(self, n_arms: int) -> np.ndarray:
        return np.bincount(self.arms, minlength=n_arms)


def run_episode(
    policy: PolicyKind,
    arm_set: Sequence[TransmissionStrategy],
    cfg: ScenarioConfig,
    env_rng: np.random.Generator,
    policy_rng: np.random.Generator,
    mu_star: float,
    priors: Optional[Sequence[PriorMoments]] = None,
    baseline_arm: Optional[int] = None,
    frames_per_decision: int = 1,
) -> EpisodeLog:
    """运行一次学习过程：每个决策时刻选臂、生成并译码 MAC 帧、以平均效用作为回报

    每个决策时刻从环境流中恰好抽取一个种子，信道实现序列与所选臂无关（公共随机数）。

    Args:
        policy: 学习策略
        arm_set: 臂集合
        cfg: 场景配置，cfg.horizon 为决策次数
        env_rng: 环境随机流
        policy_rng: 策略随机流（平局打破）
        mu_star: 最优臂平均回报
        priors: 各臂先验，缺省时由密度演化计算
        baseline_arm: 渐近固定策略使用的臂
        frames_per_decision: 每次决策观测的帧数

    Returns:
        EpisodeLog
    """
    if not arm_set:
        raise ConstraintViolation("臂集合为空")
    if frames_per_decision < 1:
        raise ValueError(f"frames_per_decision 必须 ≥ 1: {frames_per_decision}")
    for strategy in arm_set:
        strategy.check(cfg)
    if priors is None:
        priors = [prior_moments(s.lam, s.K, cfg) for s in arm_set]
    if policy.kind == "asymptotic" and baseline_arm is None:
        baseline_arm = asymptotic_optimize(arm_set, cfg)

    states = init_arm_states(policy, arm_set, priors)
    n = cfg.horizon
    arms = np.zeros(n, dtype=np.int64)
    rewards = np.zeros(n)
    cum_reward = np.zeros(n)
    cum_regret = np.zeros(n)

    total_reward = 0.0
    regret = 0.0
    for t in range(1, n + 1):
        arm = select_arm(policy, states, t, policy_rng, baseline_arm)
        frame_rng = np.random.default_rng(int(env_rng.integers(2**63)))
        strategy = arm_set[arm]
        reward = sum(frame_reward(strategy, cfg, frame_rng) for _ in range(frames_per_decision)) / frames_per_decision
        states[arm] = update_state(policy, states[arm], reward)

        total_reward += reward
        regret += mu_star - reward
        arms[t - 1] = arm
        rewards[t - 1] = reward
        cum_reward[t - 1] = total_reward
        cum_regret[t - 1] = regret

    return EpisodeLog(
        policy=policy.label,
        mu_star=mu_star,
        t=np.arange(1, n + 1),
        arms=arms,
        rewards=rewards,
        cum_reward=cum_reward,
        cum_regret=cum_regret,
    )


@dataclass(frozen=True)
class MuStarEstimate:
    """蒙特卡洛估计的各臂平均回报与 μ*"""

    mu_star: float
    best_arm: int
    means: tuple
    stderr: tuple
    n_frames: int

    def to_dict(self) -> Dict:
        return {
            "mu_star": self.mu_star,
            "best_arm": self.best_arm,
            "means": list(self.means),
            "stderr": list(self.stderr),
            "n_frames": self.n_frames,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MuStarEstimate":
        return cls(
            mu_star=float(data["mu_star"]),
            best_arm=int(data["best_arm"]),
            means=tuple(float(x) for x in data["means"]),
            stderr=tuple(float(x) for x in data["stderr"]),
            n_frames=int(data["n_frames"]),
        )


def _arm_reward_moments(strategy: TransmissionStrategy, cfg: ScenarioConfig, seed: int, n_frames: int):
    rng = np.random.default_rng(seed)
    rewards = np.array([frame_reward(strategy, cfg, rng) for _ in range(n_frames)])
    se = float(rewards.std(ddof=1) / math.sqrt(n_frames)) if n_frames > 1 else 0.0
    return float(rewards.mean()), se


def estimate_mu_star(
    arm_set: Sequence[TransmissionStrategy],
    cfg: ScenarioConfig,
    n_frames: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> MuStarEstimate:
    """对每个臂独立仿真 n_frames 帧，估计平均回报及其标准误，μ* 取最大值"""
    if n_frames < 1:
        raise ValueError(f"n_frames 必须 ≥ 1: {n_frames}")
    if not arm_set:
        raise ConstraintViolation("臂集合为空")
    for strategy in arm_set:
        strategy.check(cfg)

    seeds = [int(rng.integers(2**63)) for _ in arm_set]
    logger.info(f"开始估计 μ*: {len(arm_set)} 个臂，每臂 {n_frames} 帧")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            moments = list(executor.map(
                _arm_reward_moments, arm_set, [cfg] * len(arm_set), seeds, [n_frames] * len(arm_set)
            ))
    else:
        moments = []
        for arm_id, (strategy, seed) in enumerate(zip(arm_set, seeds)):
            moments.append(_arm_reward_moments(strategy, cfg, seed, n_frames))
            logger.debug(f"臂 #{arm_id} ({strategy}): 平均回报 {moments[-1][0]:.6f}")

    means = tuple(m for m, _ in moments)
    stderr = tuple(s for _, s in moments)
    best_arm = int(np.argmax(means))
    logger.info(f"μ* = {means[best_arm]:.6f}，最优臂 #{best_arm} ({arm_set[best_arm]})")
    return MuStarEstimate(mu_star=means[best_arm], best_arm=best_arm, means=means, stderr=stderr, n_frames=n_frames)
