"""
IRSA 核心模块
传输策略、MAC 帧的随机复制放置，以及基于连续干扰消除（SIC）的剥离译码
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterator, List, Literal, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from irsa_learning.config import DEFAULT_L_MAX, DEFAULT_W

logger = logging.getLogger(__name__)

PlacementMode = Literal["per_source", "per_packet"]
PacketId = Tuple[int, int]


class ConstraintViolation(ValueError):
    """违反系统约束（L·K ≤ M、非法分布、空臂集合等）"""


@dataclass(frozen=True)
class DegreeDistribution:
    """传输概率 Λ(x) = Σ Λ_l x^l，Λ_l 为一个源包发送 l 个副本的概率

    Args:
        probs: (度数 l, 概率 Λ_l) 对，零概率项会被丢弃
        l_max: 最大复制次数
    """

    probs: Tuple[Tuple[int, float], ...]
    l_max: int = DEFAULT_L_MAX

    def __post_init__(self):
        cleaned = tuple(sorted((int(l), float(p)) for l, p in self.probs if float(p) != 0.0))
        object.__setattr__(self, "probs", cleaned)

        if self.l_max < 1:
            raise ConstraintViolation(f"l_max 必须为正整数: {self.l_max}")
        if not cleaned:
            raise ConstraintViolation("度分布为空")
        degrees = [l for l, _ in cleaned]
        if len(set(degrees)) != len(degrees):
            raise ConstraintViolation(f"度分布中存在重复度数: {degrees}")
        for l, p in cleaned:
            if not 1 <= l <= self.l_max:
                raise ConstraintViolation(f"度数 {l} 超出范围 [1, {self.l_max}]")
            if not 0.0 <= p <= 1.0:
                raise ConstraintViolation(f"概率 Λ_{l}={p} 不在 [0,1] 内")
        total = sum(p for _, p in cleaned)
        if abs(total - 1.0) > 1e-12:
            raise ConstraintViolation(f"度分布概率之和为 {total!r}，应为 1")

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float], l_max: int = DEFAULT_L_MAX) -> "DegreeDistribution":
        return cls(tuple((int(l), float(p)) for l, p in mapping.items()), l_max=l_max)

    @classmethod
    def parse(cls, text: str, l_max: int = DEFAULT_L_MAX) -> "DegreeDistribution":
        """解析命令行格式 "2:0.75,3:0.25" """
        pairs = []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            try:
                degree, prob = item.split(":")
                pairs.append((int(degree), float(prob)))
            except ValueError:
                raise ConstraintViolation(f"无法解析度分布项: '{item}'")
        return cls(tuple(pairs), l_max=l_max)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([l for l, _ in self.probs], dtype=np.int64)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([p for _, p in self.probs], dtype=np.float64)

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)

    @property
    def average_degree(self) -> float:
        """Λ'(1) = Σ l·Λ_l"""
        return float(np.dot(self.degrees, self.weights))

    def coefficients(self) -> Dict[int, float]:
        return dict(self.probs)

    def node_polynomial(self, x: float) -> float:
        """节点视角 Λ(x) = Σ Λ_l x^l"""
        return float(np.dot(self.weights, np.power(x, self.degrees)))

    def edge_polynomial(self, x: float) -> float:
        """边视角 λ(x) = Σ (l·Λ_l / Λ'(1)) x^(l-1)"""
        edge_weights = self.degrees * self.weights / self.average_degree
        return float(np.dot(edge_weights, np.power(x, self.degrees - 1)))

    def __str__(self) -> str:
        return "+".join(f"{p:g}x^{l}" for l, p in self.probs)


def _sample_degrees(dist: DegreeDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    # 每个样本恰好消耗一个均匀随机数
    u = rng.random(size)
    idx = np.searchsorted(dist.cdf, u, side="right")
    return dist.degrees[np.minimum(idx, len(dist.degrees) - 1)]


def sample_degree(dist: DegreeDistribution, rng: np.random.Generator) -> int:
    """按 Λ_l 抽取一个源包的副本数

    Args:
        dist: 度分布
        rng: 随机数流

    Returns:
        副本数 l
    """
    return int(_sample_degrees(dist, rng, 1)[0])


class ScenarioConfig(BaseModel):
    """固定的网络场景：L 个源，每帧 M 个时隙"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    L: int = Field(ge=1, description="源数量")
    M: int = Field(ge=1, description="每个 MAC 帧的时隙数")
    w: float = Field(default=DEFAULT_W, gt=0, description="效用缩放因子")
    l_max: int = Field(default=DEFAULT_L_MAX, ge=1, description="最大复制次数")
    horizon: int = Field(default=1000, ge=1, description="决策次数 n")
    rng_seed: int = Field(
        default=0, ge=0, lt=2**64,
        description="仅供 simulate 生成帧使用的种子；learn/sweep 的随机流由 ExperimentSpec.base_seed 与 oracle_seed 决定",
    )
    placement: PlacementMode = "per_source"

    @property
    def max_packets(self) -> int:
        """满足 L·K ≤ M 的最大 K"""
        return self.M // self.L

    def traffic(self, K: int) -> float:
        """归一化业务量 G = LK/M"""
        return self.L * K / self.M


@dataclass(frozen=True)
class TransmissionStrategy:
    """传输策略（Λ(x), K），即老虎机的一个臂"""

    lam: DegreeDistribution
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ConstraintViolation(f"K 必须为正整数: {self.K}")

    def check(self, cfg: ScenarioConfig) -> None:
        if cfg.L * self.K > cfg.M:
            raise ConstraintViolation(f"策略违反 L·K ≤ M: L={cfg.L}, K={self.K}, M={cfg.M}")

    def traffic(self, cfg: ScenarioConfig) -> float:
        return cfg.traffic(self.K)

    def __str__(self) -> str:
        return f"K={self.K}, Λ(x)={self.lam}"


@dataclass(frozen=True)
class FrameRealization:
    """一个 MAC 帧的二部图：burst_slots[i][k] 为源 i 第 k 个包的副本所在时隙（0 起始）"""

    burst_slots: Tuple[Tuple[Tuple[int, ...], ...], ...]
    M: int
    truncated: bool = False

    def __post_init__(self):
        for packets in self.burst_slots:
            for slots in packets:
                for s in slots:
                    if not 0 <= s < self.M:
                        raise ConstraintViolation(f"时隙索引 {s} 超出 [0, {self.M})")
                if len(set(slots)) != len(slots):
                    raise ConstraintViolation(f"同一个包的副本时隙重复: {slots}")

    @classmethod
    def from_lists(cls, burst_slots: Sequence[Sequence[Sequence[int]]], M: int, truncated: bool = False) -> "FrameRealization":
        return cls(
            tuple(tuple(tuple(sorted(int(s) for s in slots)) for slots in packets) for packets in burst_slots),
            M=M,
            truncated=truncated,
        )

    @property
    def L(self) -> int:
        return len(self.burst_slots)

    @property
    def K(self) -> int:
        return len(self.burst_slots[0]) if self.burst_slots else 0

    def packets(self) -> Iterator[Tuple[PacketId, Tuple[int, ...]]]:
        for i, packets in enumerate(self.burst_slots):
            for k, slots in enumerate(packets):
                yield (i, k), slots

    def occupancy(self) -> List[Set[PacketId]]:
        """每个时隙中的包集合"""
        slots: List[Set[PacketId]] = [set() for _ in range(self.M)]
        for packet, packet_slots in self.packets():
            for s in packet_slots:
                slots[s].add(packet)
        return slots

    @property
    def replica_count(self) -> int:
        return sum(len(slots) for _, slots in self.packets())

    def describe(self) -> str:
        """按时隙视图输出帧内容（时隙编号从 1 开始）"""
        lines = [f"MAC 帧: L={self.L}, K={self.K}, M={self.M}" + ("（已截断）" if self.truncated else "")]
        for (i, k), slots in self.packets():
            lines.append(f"  源 {i + 1} 包 {k + 1}: 时隙 {', '.join(str(s + 1) for s in slots) or '-'}")
        for s, members in enumerate(self.occupancy()):
            if not members:
                state = "空闲"
            elif len(members) == 1:
                state = "单发"
            else:
                state = "碰撞"
            names = ", ".join(f"u{i + 1}.{k + 1}" for i, k in sorted(members))
            lines.append(f"  时隙 {s + 1:>3}: [{state}] {names}")
        return "\n".join(lines)


def generate_frame(
    strategy: TransmissionStrategy,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    source_lambdas: Optional[Sequence[DegreeDistribution]] = None,
) -> FrameRealization:
    """按传输策略随机生成一个 MAC 帧

    每个源的每个包独立抽取副本数，副本时隙均匀无放回地选取。
    per_source 模式下同一源所有包的副本互不重叠，副本总需求超过 M 时后面的包被截断；
    per_packet 模式下只要求同一个包的副本互不重叠（渐近分析的假设）。

    Args:
        strategy: 传输策略
        cfg: 场景配置
        rng: 随机数流
        source_lambdas: 可选，每个源各自的度分布

    Returns:
        帧实现
    """
    strategy.check(cfg)
    if source_lambdas is not None and len(source_lambdas) != cfg.L:
        raise ConstraintViolation(f"source_lambdas 长度 {len(source_lambdas)} 与 L={cfg.L} 不一致")

    truncated = False
    burst_slots = []
    for i in range(cfg.L):
        lam = source_lambdas[i] if source_lambdas is not None else strategy.lam
        degrees = _sample_degrees(lam, rng, strategy.K)

        packets = []
        if cfg.placement == "per_source":
            demand = int(degrees.sum())
            if demand > cfg.M:
                truncated = True
            chosen = rng.choice(cfg.M, size=min(demand, cfg.M), replace=False)
            start = 0
            for l in degrees:
                take = min(int(l), len(chosen) - start)
                packets.append(tuple(sorted(int(s) for s in chosen[start:start + take])))
                start += take
        else:
            for l in degrees:
                l = int(l)
                if l > cfg.M:
                    truncated = True
                    l = cfg.M
                packets.append(tuple(sorted(int(s) for s in rng.choice(cfg.M, size=l, replace=False))))
        burst_slots.append(tuple(packets))

    if truncated:
        logger.debug(f"帧生成时副本需求超过 M={cfg.M}，已截断")
    return FrameRealization(tuple(burst_slots), M=cfg.M, truncated=truncated)


@dataclass(frozen=True, eq=False)
class DecodeResult:
    """SIC 译码结果

    Args:
        decoded: L×K 布尔矩阵
        per_source_counts: 每个源成功译码的包数 r^(i)
        iterations: 剥离轮数（随机顺序模式下为剥离步数）
        trace: (轮次, 时隙, 源, 包) 序列
    """

    decoded: np.ndarray
    per_source_counts: np.ndarray
    iterations: int
    trace: Tuple[Tuple[int, int, int, int], ...] = field(default=())

    @property
    def decoded_set(self) -> frozenset:
        return frozenset((int(i), int(k)) for i, k in zip(*np.nonzero(self.decoded)))

    @property
    def n_decoded(self) -> int:
        return int(self.decoded.sum())


def sic_decode(frame: FrameRealization, rng: Optional[np.random.Generator] = None) -> DecodeResult:
    """迭代剥离译码：反复找出只含一个未译码副本的时隙，译出该包并消除其全部副本

    默认按轮次处理（每轮译出当前所有单发时隙中的包）；
    给定 rng 时单发时隙按随机顺序逐个处理，译码集合与默认顺序相同。

    Args:
        frame: 帧实现
        rng: 可选，随机处理顺序

    Returns:
        译码结果
    """
    L, K = frame.L, frame.K
    occupancy = frame.occupancy()
    slots_of = {packet: slots for packet, slots in frame.packets()}
    decoded = np.zeros((L, K), dtype=bool)
    trace: List[Tuple[int, int, int, int]] = []

    def cancel(packet: PacketId) -> List[int]:
        # 消除该包的全部副本，返回因此变成单发的时隙
        decoded[packet] = True
        freed = []
        for s in slots_of[packet]:
            occupancy[s].discard(packet)
            if len(occupancy[s]) == 1:
                freed.append(s)
        return freed

    iterations = 0
    if rng is None:
        frontier = [s for s in range(frame.M) if len(occupancy[s]) == 1]
        while frontier:
            found: Dict[PacketId, int] = {}
            for s in sorted(frontier):
                if len(occupancy[s]) == 1:
                    (packet,) = occupancy[s]
                    found.setdefault(packet, s)
            if not found:
                break
            iterations += 1
            next_frontier: Set[int] = set()
            for packet in sorted(found):
                trace.append((iterations, found[packet], packet[0], packet[1]))
                next_frontier.update(cancel(packet))
            frontier = sorted(next_frontier)
    else:
        pending = [s for s in range(frame.M) if len(occupancy[s]) == 1]
        while pending:
            j = int(rng.integers(len(pending)))
            pending[j], pending[-1] = pending[-1], pending[j]
            s = pending.pop()
            if len(occupancy[s]) != 1:
                continue
            (packet,) = occupancy[s]
            iterations += 1
            trace.append((iterations, s, packet[0], packet[1]))
            pending.extend(cancel(packet))

    counts = decoded.sum(axis=1) if K else np.zeros(L, dtype=np.int64)
    return DecodeResult(decoded=decoded, per_source_counts=counts, iterations=iterations, trace=tuple(trace))


def utility_of_counts(counts: Sequence[int], w: float = DEFAULT_W) -> float:
    """每源平均效用 (1/L) Σ w·ln(r^(i)+1)"""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        return 0.0
    return float(np.mean(w * np.log1p(counts)))


def frame_reward(
    strategy: TransmissionStrategy,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> float:
    """生成一帧、译码并返回即时回报"""
    result = sic_decode(generate_frame(strategy, cfg, rng))
    return utility_of_counts(result.per_source_counts, cfg.w)


def frame_statistics(results: Sequence[DecodeResult], M: int) -> Dict[str, float]:
    """多帧统计：归一化吞吐量 T = 译出包数/M 与经验丢包率"""
    if not results:
        return {"frames": 0, "throughput": 0.0, "packet_loss_rate": 0.0}
    sent = sum(r.decoded.size for r in results)
    ok = sum(r.n_decoded for r in results)
    return {
        "frames": len(results),
        "throughput": ok / (M * len(results)),
        "packet_loss_rate": 1.0 - ok / sent if sent else 0.0,
    }
