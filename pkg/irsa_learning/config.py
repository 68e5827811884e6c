"""
IRSA 在线学习 默认配置
"""

import os
from typing import Dict, Optional

from dotenv import load_dotenv

# 默认传输概率 Λ(x) = 0.75x^2 + 0.25x^3
DEFAULT_LAMBDA: Dict[int, float] = {2: 0.75, 3: 0.25}
# 效用函数缩放因子 w
DEFAULT_W = 1.0
# 最大复制次数 l_max
DEFAULT_L_MAX = 8

# 密度演化默认参数
DEFAULT_DE_MAX_ITERATIONS = 1000
DEFAULT_DE_CONVERGENCE_EPS = 1e-12
DEFAULT_LOSS_THRESHOLD = 1e-3
# 瀑布门限二分搜索精度
THRESHOLD_TOLERANCE = 1e-4

# 方差下限，先验方差为0的臂使用该值
VARIANCE_FLOOR = 1e-6

# μ* 蒙特卡洛估计的默认帧数和种子
DEFAULT_ORACLE_FRAMES = 100_000
DEFAULT_ORACLE_SEED = 20170901

# CSV 浮点数输出格式（17位有效数字）
FLOAT_FORMAT = "%.17g"

# 输出目录环境变量
OUTPUT_DIR_ENV = "IRSA_OUTPUT_DIR"


def resolve_output_dir(default: Optional[str] = None) -> str:
    """解析输出目录，环境变量优先

    Args:
        default: 命令行给出的目录

    Returns:
        实际使用的输出目录
    """
    load_dotenv()
    return os.environ.get(OUTPUT_DIR_ENV) or default or "output"
