"""
IRSA 在线学习 主程序入口
提供命令行接口：simulate / analyze / learn / sweep
"""

import argparse
import asyncio
import json
import logging
import os
import sys
import traceback
from typing import Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from irsa_learning.asymptotic import analyze_arms, asymptotic_optimize
from irsa_learning.config import DEFAULT_LAMBDA, resolve_output_dir
from irsa_learning.harness import ExperimentError, ExperimentResult, ExperimentSpec, build_arm_set, run_experiment
from irsa_learning.irsa import (
    ConstraintViolation,
    DegreeDistribution,
    ScenarioConfig,
    TransmissionStrategy,
    frame_statistics,
    generate_frame,
    sic_decode,
)
from irsa_learning.oracle_store import MuStarStore
from irsa_learning.output_organizer import emit_results, format_analysis
from irsa_learning.plotting import plot_results

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONSTRAINT = 2

DEFAULT_LAMBDA_TEXT = ",".join(f"{l}:{p:g}" for l, p in DEFAULT_LAMBDA.items())


def load_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_spec(path: str) -> ExperimentSpec:
    """读取实验配置文件（字段与 ExperimentSpec 一一对应）"""
    return ExperimentSpec.model_validate(load_json(path))


def load_sweep(path: str) -> List[ExperimentSpec]:
    """读取批量实验配置 {"experiments": [...]}"""
    data = load_json(path)
    if not isinstance(data, dict) or "experiments" not in data:
        raise ConstraintViolation(f"{path} 缺少 experiments 列表")
    specs = [ExperimentSpec.model_validate(item) for item in data["experiments"]]
    names = [spec.name for spec in specs]
    if len(set(names)) != len(names):
        raise ConstraintViolation(f"批量实验名称重复: {names}")
    return specs


def print_progress(update: Dict):
    print(f"[{update['progress']:3d}%] {update['message']}")


async def run_learning(
    spec: ExperimentSpec,
    output_dir: str = "output",
    plot: bool = True,
    store: Optional[MuStarStore] = None,
) -> ExperimentResult:
    """
    执行一次学习实验并保存结果

    Args:
        spec: 实验配置
        output_dir: 输出目录
        plot: 是否绘图
        store: μ* 存储
    """
    print(f"开始实验: {spec.name}")
    print(f"场景: L={spec.scenario.L}, M={spec.scenario.M}, n={spec.horizon}, 运行 {spec.runs} 次")
    print(f"策略: {', '.join(p.label for p in spec.policies)}")

    os.makedirs(output_dir, exist_ok=True)

    try:
        result = await run_experiment(spec, progress_callback=print_progress, store=store)
    except ExperimentError as e:
        print(f"实验过程中发生错误: {e}")
        traceback.print_exc()

        # 保存部分结果
        try:
            emit_results(e.partial, output_dir)
            print(f"部分结果已保存至: {output_dir}")
        except Exception as flush_error:
            logger.error(f"保存部分结果失败: {flush_error}")

        error_file = os.path.join(output_dir, "error_log.txt")
        with open(error_file, "w", encoding="utf-8") as f:
            f.write(f"实验: {spec.name}\n")
            f.write(f"错误信息: {str(e)}\n")
            f.write(f"详细堆栈:\n{traceback.format_exc()}")
        print(f"错误信息已保存至: {error_file}")
        raise

    paths = emit_results(result, output_dir)
    if plot:
        paths.update(plot_results(result, output_dir))
    for name, path in paths.items():
        print(f"{name} 已保存至: {path}")

    for label, curves in result.curves.items():
        print(f"  {label}: t={spec.horizon} 平均累计遗憾 {curves.mean_regret()[-1]:.6f}")
    print("实验完成!")
    return result


def _scenario_from_args(args) -> ScenarioConfig:
    return ScenarioConfig(
        L=args.L, M=args.M, w=args.w, l_max=args.l_max, placement=args.placement, rng_seed=getattr(args, "seed", 0)
    )


def cmd_simulate(args) -> int:
    """生成并译码 MAC 帧，打印时隙视图与剥离过程"""
    cfg = _scenario_from_args(args)
    lam = DegreeDistribution.parse(args.lam, l_max=cfg.l_max)
    strategy = TransmissionStrategy(lam, args.K)
    strategy.check(cfg)
    rng = np.random.default_rng(cfg.rng_seed)

    results = []
    for index in range(args.frames):
        frame = generate_frame(strategy, cfg, rng)
        result = sic_decode(frame, rng=rng if args.random_order else None)
        results.append(result)
        if index == 0:
            print(frame.describe())
            print(f"SIC 译码: {result.iterations} 轮, 译出 {result.n_decoded}/{frame.L * frame.K} 个包")
            for round_no, slot, source, packet in result.trace:
                print(f"  第 {round_no} 轮: 时隙 {slot + 1} 译出 u{source + 1}.{packet + 1}")
            print(f"每源译出包数: {result.per_source_counts.tolist()}")

    if args.frames > 1:
        stats = frame_statistics(results, cfg.M)
        print(f"{stats['frames']} 帧: 吞吐量 T={stats['throughput']:.6f}, 丢包率 {stats['packet_loss_rate']:.6f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    """打印每个臂的渐近分析表（CSV）"""
    if args.config:
        spec = load_spec(args.config)
        arms = build_arm_set(spec)
        cfg, params, pe_mode = spec.scenario, spec.de_params, spec.pe_mode
    else:
        cfg = _scenario_from_args(args)
        lam = DegreeDistribution.parse(args.lam, l_max=cfg.l_max)
        arms = [TransmissionStrategy(lam, K) for K in range(1, cfg.max_packets + 1)]
        if not arms:
            raise ConstraintViolation(f"L={cfg.L} > M={cfg.M}，臂集合为空")
        params, pe_mode = None, args.pe_mode

    rows = analyze_arms(arms, cfg, params, pe_mode)
    sys.stdout.write(format_analysis(rows))
    best = asymptotic_optimize(arms, cfg, params, pe_mode)
    print(f"# 渐近最优臂: #{best} ({arms[best]})")
    return EXIT_OK


def cmd_learn(args) -> int:
    spec = load_spec(args.config)
    if args.workers:
        spec = spec.model_copy(update={"workers": args.workers})
    output_root = resolve_output_dir(args.output_dir)
    store = MuStarStore(os.path.join(output_root, "mu_star_cache.json"))
    asyncio.run(run_learning(spec, os.path.join(output_root, spec.name), plot=not args.no_plot, store=store))
    return EXIT_OK


def cmd_sweep(args) -> int:
    specs = load_sweep(args.config)
    output_root = resolve_output_dir(args.output_dir)
    store = MuStarStore(os.path.join(output_root, "mu_star_cache.json"))
    print(f"批量实验: {len(specs)} 个")
    for spec in specs:
        if args.workers:
            spec = spec.model_copy(update={"workers": args.workers})
        asyncio.run(run_learning(spec, os.path.join(output_root, spec.name), plot=not args.no_plot, store=store))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="IRSA 传输策略在线学习")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_args(p):
        p.add_argument("--L", type=int, default=20, help="源数量")
        p.add_argument("--M", type=int, default=300, help="每帧时隙数")
        p.add_argument("--w", type=float, default=1.0, help="效用缩放因子")
        p.add_argument("--l-max", type=int, default=8, help="最大复制次数")
        p.add_argument("--lambda", dest="lam", type=str, default=DEFAULT_LAMBDA_TEXT,
                       help="度分布，如 2:0.75,3:0.25")
        p.add_argument("--placement", choices=["per_source", "per_packet"], default="per_source",
                       help="副本放置方式")

    p = sub.add_parser("simulate", help="生成一个 MAC 帧并打印 SIC 译码过程")
    add_scenario_args(p)
    p.add_argument("--K", type=int, default=1, help="每源包数")
    p.add_argument("--seed", type=int, default=0, help="随机种子")
    p.add_argument("--frames", type=int, default=1, help="仿真帧数，大于1时输出吞吐量统计")
    p.add_argument("--random-order", action="store_true", help="按随机顺序处理单发时隙")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="逐臂的密度演化分析表")
    add_scenario_args(p)
    p.add_argument("--config", type=str, default=None, help="实验配置文件，给出时忽略场景参数")
    p.add_argument("--pe-mode", choices=["density_evolution", "binary"], default="density_evolution")
    p.set_defaults(func=cmd_analyze)

    for name, help_text, func in (
        ("learn", "按配置文件运行一次学习实验", cmd_learn),
        ("sweep", "按配置文件批量运行实验", cmd_sweep),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=str, help="JSON 配置文件")
        p.add_argument("--output-dir", type=str, default=None, help="输出目录（环境变量 IRSA_OUTPUT_DIR 优先）")
        p.add_argument("--workers", type=int, default=None, help="并行进程数")
        p.add_argument("--no-plot", action="store_true", help="不绘图")
        p.set_defaults(func=func)

    return parser


def _is_constraint_error(error: BaseException) -> bool:
    while error is not None:
        if isinstance(error, (ConstraintViolation, ValidationError)):
            return True
        error = error.__cause__
    return False


def main(argv: Optional[List[str]] = None) -> int:
    """命令行主函数，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("\n实验被用户中断")
        return EXIT_FAILURE
    except Exception as e:
        if _is_constraint_error(e):
            print(f"约束错误: {e}")
            return EXIT_CONSTRAINT
        print(f"发生错误: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
