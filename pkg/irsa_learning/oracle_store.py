"""
μ* 存储模块
把蒙特卡洛估计的各臂平均回报以 JSON 形式保存，同一场景只计算一次
"""

import hashlib
import json
import logging
import os
from typing import Dict, Optional, Sequence

from irsa_learning.bandit import MuStarEstimate
from irsa_learning.irsa import ScenarioConfig, TransmissionStrategy

logger = logging.getLogger(__name__)


class MuStarStore:
    """μ* 表的 JSON 存储，条目以场景、臂集合、帧数和种子的哈希为键"""

    def __init__(self, storage_path: Optional[str] = None):
        """初始化存储

        Args:
            storage_path: JSON 文件路径
        """
        self.storage_path = storage_path or "mu_star_cache.json"
        self.entries: Dict[str, Dict] = {}
        self._load_entries()

    def _load_entries(self):
        """加载已有条目"""
        if not os.path.exists(self.storage_path):
            self.entries = {}
            return
        try:
            with open(self.storage_path, "r", encoding="utf-8") as f:
                self.entries = json.load(f)
            logger.info(f"已加载 {len(self.entries)} 条 μ* 记录: {self.storage_path}")
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"加载 μ* 记录时出错，重新开始: {e}")
            self.entries = {}

    def _save_entries(self):
        """保存条目到文件"""
        directory = os.path.dirname(self.storage_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(self.storage_path, "w", encoding="utf-8") as f:
            json.dump(self.entries, f, ensure_ascii=False, indent=2, sort_keys=True)

    @staticmethod
    def make_key(
        cfg: ScenarioConfig,
        arm_set: Sequence[TransmissionStrategy],
        n_frames: int,
        seed: int,
    ) -> str:
        """场景、臂集合、帧数与种子的 md5 摘要"""
        payload = {
            "scenario": cfg.model_dump(exclude={"horizon", "rng_seed"}),
            "arms": [[s.K, [list(p) for p in s.lam.probs], s.lam.l_max] for s in arm_set],
            "n_frames": n_frames,
            "seed": seed,
        }
        text = json.dumps(payload, sort_keys=True)
        return hashlib.md5(text.encode()).hexdigest()[:16]

    def get(self, key: str) -> Optional[MuStarEstimate]:
        entry = self.entries.get(key)
        return MuStarEstimate.from_dict(entry) if entry else None

    def put(self, key: str, estimate: MuStarEstimate) -> None:
        self.entries[key] = estimate.to_dict()
        self._save_entries()

    def clear(self) -> None:
        self.entries = {}
        self._save_entries()

    def __len__(self) -> int:
        return len(self.entries)
