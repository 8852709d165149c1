"""
DPCNet 命令行工具
用法：dpcnet <command> [options]

退出码：0 成功，1 用法/配置错误，2 运行时错误
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from dpcnet import __version__
from dpcnet.config import settings
from dpcnet.exceptions import ConfigError, DPCError
from dpcnet.utils.logger import logger, setup_logger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

M = TypeVar("M", bound=BaseModel)


class CliParser(argparse.ArgumentParser):
    """用法错误统一以退出码 1 结束"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: 错误: {message}\n")


def load_model(cls: Type[M], path: Optional[str]) -> M:
    """从 JSON 文件加载配置；没有文件时使用默认值"""
    if not path:
        return cls()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
    try:
        return cls.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"配置文件校验失败 {path}:\n{e}") from e


def emit(model: BaseModel) -> None:
    """stdout 只输出 JSON 结果"""
    print(model.model_dump_json(indent=2))


def run_config_from_args(args):
    """加载 RunConfig 并应用命令行覆盖"""
    from dpcnet.schemas.run_config import RunConfig

    config = load_model(RunConfig, args.config)
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.threads is not None:
        update["threads"] = args.threads
    if args.deterministic is not None:
        update["deterministic"] = args.deterministic
    if getattr(args, "resume", None):
        update["resume"] = args.resume
    if args.out:
        update["paths"] = config.paths.model_copy(update={
            "checkpoints": str(Path(args.out) / "checkpoints"),
            "reports": str(Path(args.out) / "reports"),
        })
    return RunConfig.model_validate(config.model_copy(update=update).model_dump())


def threads_of(args) -> int:
    return args.threads or settings.THREADS


# ========== gen-data 命令 ==========

def gen_data_command(args):
    """生成合成数据"""
    from dpcnet.services.datagen import cmd_gen_data

    seed = settings.DEFAULT_SEED if args.seed is None else args.seed
    manifest = cmd_gen_data(
        kind=args.kind,
        seed=seed,
        count=args.count,
        out_dir=args.out or settings.DATA_DIR,
        n_points=args.n_points,
        format=args.format,
    )
    emit(manifest)


# ========== train 命令 ==========

def train_command(args):
    """训练网络"""
    from dpcnet.services.trainer import cmd_train

    config = run_config_from_args(args)
    if args.print_config:
        emit(config)
        return
    result = cmd_train(config)
    logger.info(f"✅ 训练完成，检查点: {result.checkpoint}")
    emit(result.history)


# ========== eval 命令 ==========

def eval_command(args):
    """评估检查点"""
    from dpcnet.services.datagen import load_dataset
    from dpcnet.services.evaluator import cmd_eval

    clouds = load_dataset(args.data, args.format)
    report = cmd_eval(args.checkpoint, clouds, mode=args.mode, out=args.out, threads=threads_of(args))
    emit(report)


# ========== trace-rf 命令 ==========

def trace_rf_command(args):
    """追踪感受野"""
    from dpcnet.pointcloud.io import load_cloud
    from dpcnet.schemas.run_config import TraceConfig
    from dpcnet.services.tracer import cmd_trace_rf

    config = load_model(TraceConfig, args.config)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    if args.print_config:
        emit(config)
        return
    cloud = load_cloud(args.cloud) if args.cloud else None
    out = Path(args.out or settings.REPORT_DIR) / "rf.ply"
    report = cmd_trace_rf(
        out,
        config=config,
        checkpoint=args.checkpoint,
        cloud=cloud,
        target=args.target,
        grid=args.grid,
        threads=threads_of(args),
    )
    emit(report)


# ========== ablate 命令 ==========

def ablate_command(args):
    """消融实验"""
    from dpcnet.schemas.run_config import AblationConfig
    from dpcnet.services.ablation import cmd_ablate

    config = load_model(AblationConfig, args.config)
    if args.seed is not None:
        config = config.model_copy(update={"run": config.run.model_copy(update={"seed": args.seed})})
    if args.no_train:
        config = config.model_copy(update={"train": False})
    if args.print_config:
        emit(config)
        return
    report = cmd_ablate(config, args.out or settings.REPORT_DIR, threads=threads_of(args))
    emit(report)


# ========== bench 命令 ==========

def bench_command(args):
    """前向计时"""
    from dpcnet.schemas.run_config import BenchConfig
    from dpcnet.services.benchmark import cmd_bench
    from dpcnet.utils.hashing import short_hash

    config = load_model(BenchConfig, args.config)
    update = {
        key: value
        for key, value in {
            "n_points": args.n_points,
            "k": args.k,
            "dilations": args.d,
            "depth": args.depth,
            "trials": args.trials,
            "seed": args.seed,
        }.items()
        if value is not None
    }
    config = BenchConfig.model_validate({**config.model_dump(), **update})
    if args.print_config:
        emit(config)
        return
    report = cmd_bench(config, args.out or settings.REPORT_DIR, config_hash=short_hash(config.model_dump(mode="json")))
    emit(report)


# ========== gradcheck 命令 ==========

def gradcheck_command(args):
    """有限差分梯度检查"""
    import json

    from dpcnet.services.diagnostics import gradcheck_suite

    seed = settings.DEFAULT_SEED if args.seed is None else args.seed
    report = gradcheck_suite(args.instances, seed)
    print(json.dumps(report, indent=2))
    worst = max(report.values())
    if worst >= args.tolerance:
        raise DPCError(f"梯度检查未通过：最大相对误差 {worst:.3e} ≥ {args.tolerance:.0e}")
    logger.info(f"✅ 梯度检查通过（最大相对误差 {worst:.3e}）")


# ========== show-config 命令 ==========

def show_config_command(args):
    """打印补全默认值后的配置"""
    from dpcnet.schemas.run_config import AblationConfig, BenchConfig, RunConfig, TraceConfig

    kinds = {"run": RunConfig, "ablation": AblationConfig, "bench": BenchConfig, "trace": TraceConfig}
    emit(load_model(kinds[args.kind], args.config))


def common_options() -> argparse.ArgumentParser:
    """所有子命令共享的选项"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON 配置文件")
    common.add_argument("--seed", type=int, default=None, help="随机种子（覆盖配置）")
    common.add_argument("--out", "-o", type=str, default=None, help="输出目录")
    common.add_argument("--threads", "-j", type=int, default=None, help="工作线程数")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                        help="固定归约顺序（默认开启）")
    common.add_argument("--print-config", action="store_true", help="只打印补全后的配置")
    common.add_argument("--verbose", "-v", action="store_true", help="输出 DEBUG 日志")
    return common


def build_parser() -> CliParser:
    common = common_options()
    parser = CliParser(
        prog="dpcnet",
        description=f"DPCNet {__version__} - 空洞点卷积引擎",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  dpcnet gen-data --kind rooms --count 8 --out data/rooms
  dpcnet train --config configs/rooms.json
  dpcnet eval --checkpoint checkpoints/final.ckpt --data data/rooms
  dpcnet trace-rf --grid --out reports
  dpcnet bench --k 20 --d 1 8 --trials 3
        """,
    )
    parser.add_argument("--version", action="version", version=f"dpcnet {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="可用命令", parser_class=CliParser)

    gen_parser = subparsers.add_parser("gen-data", parents=[common], help="生成合成点云")
    gen_parser.add_argument("--kind", type=str, choices=["rooms", "beacon", "shapes"], default="rooms",
                            help="场景类型（默认：rooms）")
    gen_parser.add_argument("--count", "-n", type=int, default=1, help="生成数量（默认：1）")
    gen_parser.add_argument("--n-points", type=int, default=None, help="每片点数")
    gen_parser.add_argument("--format", type=str, choices=["xyz-text", "ply-ascii"], default="xyz-text")
    gen_parser.set_defaults(func=gen_data_command)

    train_parser = subparsers.add_parser("train", parents=[common], help="训练网络")
    train_parser.add_argument("--resume", type=str, default=None, help="从检查点继续训练")
    train_parser.set_defaults(func=train_command)

    eval_parser = subparsers.add_parser("eval", parents=[common], help="评估检查点")
    eval_parser.add_argument("--checkpoint", "-c", type=str, required=True, help="检查点文件")
    eval_parser.add_argument("--data", "-d", type=str, required=True, help="数据目录或点云文件")
    eval_parser.add_argument("--mode", type=str, choices=["segmentation", "classification"], default=None,
                             help="默认取检查点记录的模式")
    eval_parser.add_argument("--format", type=str, choices=["xyz-text", "ply-ascii"], default=None)
    eval_parser.set_defaults(func=eval_command)

    rf_parser = subparsers.add_parser("trace-rf", parents=[common], help="追踪感受野")
    rf_parser.add_argument("--checkpoint", "-c", type=str, default=None, help="用检查点网络追踪")
    rf_parser.add_argument("--cloud", type=str, default=None, help="点云文件（默认按配置生成）")
    rf_parser.add_argument("--target", "-t", type=int, default=None, help="目标点索引")
    rf_parser.add_argument("--grid", action="store_true", help="深度 × (k, d) 网格")
    rf_parser.set_defaults(func=trace_rf_command)

    ablate_parser = subparsers.add_parser("ablate", parents=[common], help="消融实验")
    ablate_parser.add_argument("--no-train", action="store_true", help="只报告耗时与参数量")
    ablate_parser.set_defaults(func=ablate_command)

    bench_parser = subparsers.add_parser("bench", parents=[common], help="前向计时")
    bench_parser.add_argument("--n-points", type=int, default=None)
    bench_parser.add_argument("--k", type=int, default=None)
    bench_parser.add_argument("--d", type=int, nargs="+", default=None, help="一个或多个空洞系数")
    bench_parser.add_argument("--depth", type=int, default=None)
    bench_parser.add_argument("--trials", type=int, default=None)
    bench_parser.set_defaults(func=bench_command)

    grad_parser = subparsers.add_parser("gradcheck", parents=[common], help="有限差分梯度检查")
    grad_parser.add_argument("--instances", type=int, default=20, help="每项随机实例数（默认：20）")
    grad_parser.add_argument("--tolerance", type=float, default=1e-5, help="相对误差上限")
    grad_parser.set_defaults(func=gradcheck_command)

    show_parser = subparsers.add_parser("show-config", parents=[common], help="打印补全默认值后的配置")
    show_parser.add_argument("--kind", type=str, choices=["run", "ablation", "bench", "trace"], default="run")
    show_parser.set_defaults(func=show_config_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI主入口，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    setup_logger("DEBUG" if args.verbose else None)
    try:
        args.func(args)
    except ConfigError as e:
        logger.error(f"配置错误: {str(e)}")
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"参数校验失败: {str(e)}")
        return EXIT_USAGE
    except (DPCError, OSError) as e:
        logger.error(f"运行失败: {str(e)}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
