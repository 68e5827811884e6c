"""
IRSA 渐近性能分析
密度演化、瀑布门限、有限 K 的译码分布、Bayes-UCB 先验矩，以及渐近基线优化
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import binom

from irsa_learning.config import (
    DEFAULT_DE_CONVERGENCE_EPS,
    DEFAULT_DE_MAX_ITERATIONS,
    DEFAULT_LOSS_THRESHOLD,
    DEFAULT_W,
    THRESHOLD_TOLERANCE,
)
from irsa_learning.irsa import ConstraintViolation, DegreeDistribution, ScenarioConfig, TransmissionStrategy

logger = logging.getLogger(__name__)

PeMode = Literal["density_evolution", "binary"]


class DensityEvolutionParams(BaseModel):
    """密度演化参数"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iterations: int = Field(default=DEFAULT_DE_MAX_ITERATIONS, ge=1)
    convergence_eps: float = Field(default=DEFAULT_DE_CONVERGENCE_EPS, gt=0, lt=1)
    loss_threshold: float = Field(default=DEFAULT_LOSS_THRESHOLD, gt=0, le=1)


DEFAULT_PARAMS = DensityEvolutionParams()


@dataclass(frozen=True, eq=False)
class AsymptoticResult:
    """密度演化结果

    Args:
        p_loss: 包丢失概率 P_e = Λ(p_∞)
        iterations_used: 迭代次数
        converged: 是否在 max_iterations 内收敛
        history: 边视角迭代值 p_0=1, p_1, ...
    """

    p_loss: float
    iterations_used: int
    converged: bool
    history: np.ndarray


@dataclass(frozen=True)
class PriorMoments:
    mu: float
    sigma2: float


@lru_cache(maxsize=2048)
def _density_evolution(lam: DegreeDistribution, G: float, params: DensityEvolutionParams) -> AsymptoticResult:
    avg = lam.average_degree
    edge_terms = [(l - 1, l * p / avg) for l, p in lam.probs]
    load = G * avg

    p = 1.0
    history = [p]
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        q = sum(c * p ** e for e, c in edge_terms)
        p_next = -math.expm1(-load * q)
        if p_next > p:
            # 迭代值应单调不增，仅允许舍入误差
            if p_next - p > 1e-12:
                logger.warning(f"密度演化迭代值上升: {p} -> {p_next} (G={G})")
            p_next = p
        history.append(p_next)
        delta = p - p_next
        p = p_next
        if delta < params.convergence_eps:
            converged = True
            break

    p_loss = min(max(lam.node_polynomial(p), 0.0), 1.0)
    trace = np.array(history)
    trace.flags.writeable = False
    return AsymptoticResult(p_loss=p_loss, iterations_used=iterations, converged=converged, history=trace)


def density_evolution_pe(
    lam: DegreeDistribution,
    G: float,
    params: Optional[DensityEvolutionParams] = None,
) -> AsymptoticResult:
    """渐近包丢失概率

    q_i = λ(p_{i-1})，p_i = 1 - exp(-G·Λ'(1)·q_i)，p_0 = 1，迭代至不动点后 P_e = Λ(p_∞)。

    Args:
        lam: 度分布 Λ(x)
        G: 归一化业务量 LK/M
        params: 密度演化参数

    Returns:
        AsymptoticResult，未收敛时 converged=False 并返回最后一次迭代值
    """
    if not G > 0:
        raise ValueError(f"业务量 G 必须为正: {G}")
    result = _density_evolution(lam, float(G), params or DEFAULT_PARAMS)
    if not result.converged:
        logger.debug(f"密度演化在 {result.iterations_used} 次迭代内未收敛 (Λ={lam}, G={G})")
    return result


@lru_cache(maxsize=1024)
def _waterfall_threshold(lam: DegreeDistribution, params: DensityEvolutionParams, tolerance: float) -> float:
    delta = params.loss_threshold

    def passes(G: float) -> bool:
        return density_evolution_pe(lam, G, params).p_loss <= delta

    if passes(1.0):
        return 1.0
    if not passes(tolerance):
        logger.warning(f"Λ={lam} 在 G={tolerance} 时 P_e 已超过 δ={delta}，门限取 0")
        return 0.0

    lo, hi = tolerance, 1.0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def waterfall_threshold(
    lam: DegreeDistribution,
    params: Optional[DensityEvolutionParams] = None,
    tolerance: float = THRESHOLD_TOLERANCE,
) -> float:
    """瀑布门限 G*：在 (0,1] 上二分，求 P_e ≤ δ 的最大业务量"""
    return _waterfall_threshold(lam, params or DEFAULT_PARAMS, float(tolerance))


def binary_packet_loss(
    lam: DegreeDistribution,
    G: float,
    params: Optional[DensityEvolutionParams] = None,
) -> float:
    """二值近似：G ≤ G* 时 P_e = 0，否则 P_e = 1"""
    return 0.0 if G <= waterfall_threshold(lam, params) else 1.0


def packet_loss(
    lam: DegreeDistribution,
    G: float,
    params: Optional[DensityEvolutionParams] = None,
    pe_mode: PeMode = "density_evolution",
) -> float:
    if pe_mode == "binary":
        return binary_packet_loss(lam, G, params)
    if pe_mode == "density_evolution":
        return density_evolution_pe(lam, G, params).p_loss
    raise ValueError(f"未知的 P_e 计算方式: {pe_mode}")


def decode_pmf(p_succ: float, K: int) -> np.ndarray:
    """单个源译出 r 个包的概率 P(r) = C(K,r) p^r (1-p)^(K-r)，r = 0..K

    p_succ = 1 - P_e 为单包译码成功概率。
    """
    if not 0.0 <= p_succ <= 1.0:
        raise ValueError(f"p_succ={p_succ} 不在 [0,1] 内")
    if K < 1:
        raise ValueError(f"K 必须为正整数: {K}")
    return binom.pmf(np.arange(K + 1), K, p_succ)


def expected_utility_from_success(p_succ: float, K: int, w: float = DEFAULT_W) -> float:
    """Σ_r w·ln(r+1)·P(r)"""
    pmf = decode_pmf(p_succ, K)
    return float(np.dot(w * np.log1p(np.arange(K + 1)), pmf))


def expected_utility(
    lam: DegreeDistribution,
    K: int,
    cfg: ScenarioConfig,
    params: Optional[DensityEvolutionParams] = None,
    pe_mode: PeMode = "density_evolution",
) -> float:
    """渐近模型下策略 (Λ, K) 的每源期望效用"""
    TransmissionStrategy(lam, K).check(cfg)
    p_e = packet_loss(lam, cfg.traffic(K), params, pe_mode)
    return expected_utility_from_success(1.0 - p_e, K, cfg.w)


def prior_moments_from_success(p_succ: float, K: int, w: float = DEFAULT_W) -> PriorMoments:
    """对数在 K·p 处一阶展开得到的回报均值与方差"""
    kp = K * p_succ
    mu = w * math.log1p(kp)
    sigma2 = w * w * kp * (1.0 - p_succ) / (kp + 1.0) ** 2
    return PriorMoments(mu=mu, sigma2=max(sigma2, 0.0))


def prior_moments(
    lam: DegreeDistribution,
    K: int,
    cfg: ScenarioConfig,
    params: Optional[DensityEvolutionParams] = None,
    pe_mode: PeMode = "density_evolution",
) -> PriorMoments:
    """由渐近分析得到臂的先验 (μ_a, σ²_a)"""
    TransmissionStrategy(lam, K).check(cfg)
    p_e = packet_loss(lam, cfg.traffic(K), params, pe_mode)
    return prior_moments_from_success(1.0 - p_e, K, cfg.w)


def asymptotic_optimize(
    arm_set: Sequence[TransmissionStrategy],
    cfg: ScenarioConfig,
    params: Optional[DensityEvolutionParams] = None,
    pe_mode: PeMode = "density_evolution",
) -> int:
    """按渐近期望效用选出最优臂，平局取编号最小者

    Returns:
        最优臂编号
    """
    if not arm_set:
        raise ConstraintViolation("臂集合为空")
    best_id, best_value = -1, -math.inf
    for arm_id, strategy in enumerate(arm_set):
        value = expected_utility(strategy.lam, strategy.K, cfg, params, pe_mode)
        if value > best_value:
            best_id, best_value = arm_id, value
    logger.info(f"渐近基线最优臂: #{best_id} ({arm_set[best_id]}), 期望效用 {best_value:.6f}")
    return best_id


def analyze_arms(
    arm_set: Sequence[TransmissionStrategy],
    cfg: ScenarioConfig,
    params: Optional[DensityEvolutionParams] = None,
    pe_mode: PeMode = "density_evolution",
) -> List[Dict]:
    """逐臂的渐近分析表：G, P_e, G*, μ, σ², 期望效用"""
    rows = []
    for arm_id, strategy in enumerate(arm_set):
        strategy.check(cfg)
        G = strategy.traffic(cfg)
        p_e = packet_loss(strategy.lam, G, params, pe_mode)
        moments = prior_moments_from_success(1.0 - p_e, strategy.K, cfg.w)
        rows.append({
            "arm_id": arm_id,
            "K": strategy.K,
            "lambda": str(strategy.lam),
            "G": G,
            "p_loss": p_e,
            "g_star": waterfall_threshold(strategy.lam, params),
            "mu": moments.mu,
            "sigma2": moments.sigma2,
            "expected_utility": expected_utility_from_success(1.0 - p_e, strategy.K, cfg.w),
        })
    return rows
