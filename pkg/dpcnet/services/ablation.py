"""
消融实验

两组格子：
- depth_k：层数 × k（d=1）
- dilation：固定层数与 k，扫描 d
每格报告前向耗时、参数量、（可选）多种子训练后的 mIoU / mAcc。
格子在线程池中并行，单格失败记在该行的 error 里，扫描继续。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from dpcnet.exceptions import DPCError
from dpcnet.models.network import Network
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.pointcloud.synthetic import NUM_CLASSES, gen_synthetic_scene
from dpcnet.schemas.reports import AblationReport, AblationRow
from dpcnet.schemas.run_config import (
    AblationConfig,
    LrSchedule,
    Mode,
    NetworkConfig,
    RunConfig,
    TrainingConfig,
    make_layers,
)
from dpcnet.services.benchmark import bench_cloud, time_forward
from dpcnet.services.datagen import load_dataset
from dpcnet.services.evaluator import evaluate
from dpcnet.services.trainer import train
from dpcnet.utils.artifacts import write_artifact
from dpcnet.utils.logger import carry_context

Cell = Tuple[str, int, int, int]  # (group, layers, k, d)


def ablation_cells(config: AblationConfig) -> List[Cell]:
    cells = [("depth_k", depth, k, 1) for depth in config.depths for k in config.ks]
    cells += [("dilation", config.dilation_depth, config.dilation_k, d) for d in config.dilations]
    return cells


def cell_network(base: NetworkConfig, depth: int, k: int, d: int) -> NetworkConfig:
    """沿用基础配置的层宽与分支，只替换层数与 (k, d)"""
    width = base.layers[0].out_features
    return base.model_copy(update={"layers": make_layers(depth, width, k, d)})


def run_cell(
    config: AblationConfig,
    cell: Cell,
    train_data: Sequence[PointCloud],
    val_data: Sequence[PointCloud],
    timing_cloud: PointCloud,
) -> AblationRow:
    group, depth, k, d = cell
    row = AblationRow(group=group, layers=depth, k=k, d=d)
    try:
        net_config = cell_network(config.run.network, depth, k, d)
        in_features = train_data[0].in_features if train_data else timing_cloud.in_features
        net = Network.build(net_config, in_features)
        row.parameters = net.parameter_count()

        timing_net = Network.build(net_config, timing_cloud.in_features)
        totals, _ = time_forward(timing_net, timing_cloud, config.timing_trials)
        row.forward_ms = float(np.median(totals))

        if config.train and train_data:
            per_seed = []
            for seed in config.seeds:
                run = config.run.model_copy(update={"seed": seed, "network": net_config, "threads": 1})
                trained = train(Network.build(net_config, in_features, seed=seed), train_data, run).net
                confusion = evaluate(trained, val_data or train_data, run.mode)
                per_seed.append({"seed": seed, "miou": confusion.miou(), "macc": confusion.macc()})
            means = pd.DataFrame(per_seed)[["miou", "macc"]].mean()
            row.miou = float(means["miou"])
            row.macc = float(means["macc"])
            row.seeds = len(per_seed)
        logger.info(
            f"[{group}] L={depth} k={k} d={d}: {row.forward_ms:.2f} ms, {row.parameters} 参数"
            + (f", mIoU={row.miou:.4f}" if row.miou is not None else "")
        )
    except DPCError as e:
        logger.error(f"消融格子 [{group}] L={depth} k={k} d={d} 失败: {str(e)}")
        row.error = str(e)
    return row


def run_ablation(
    config: AblationConfig,
    train_data: Sequence[PointCloud],
    val_data: Optional[Sequence[PointCloud]] = None,
    threads: int = 1,
) -> AblationReport:
    cells = ablation_cells(config)
    timing_cloud = bench_cloud(config.timing_points, train_data[0].in_features if train_data else 3, config.run.seed)

    def run(cell: Cell) -> AblationRow:
        return run_cell(config, cell, train_data, val_data or [], timing_cloud)

    logger.info(f"消融实验: {len(cells)} 个格子，{threads} 个线程")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(carry_context(run), cells))
    else:
        rows = [run(cell) for cell in cells]
    return AblationReport(config_hash=config.run.config_hash(), rows=rows)


def ablation_table(report: AblationReport) -> str:
    """对齐的文本表（按组分段）"""
    frame = pd.DataFrame([row.model_dump() for row in report.rows])
    columns = ["group", "layers", "k", "d", "forward_ms", "parameters", "miou", "macc", "error"]
    return frame[columns].to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.4f}")


def cmd_ablate(config: AblationConfig, out: Union[str, Path], threads: int = 1) -> AblationReport:
    """加载数据、跑完整网格，写出 ablation.json 与 ablation.txt"""
    train_data: List[PointCloud] = []
    val_data: Optional[List[PointCloud]] = None
    if config.train:
        config.run.check_paths()
        train_data = load_dataset(config.run.paths.data, config.run.data_format)
        if config.run.paths.val_data:
            val_data = load_dataset(config.run.paths.val_data, config.run.data_format)
    logger.info("=" * 60)
    logger.info("开始消融实验")
    logger.info("=" * 60)
    report = run_ablation(config, train_data, val_data, threads)
    out = Path(out)
    write_artifact(out / "ablation.json", report)
    table = ablation_table(report)
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    logger.info("\n" + table)
    return report


@dataclass
class DilationBenefit:
    """beacon 任务上各 d 的验证 mIoU"""
    frame: pd.DataFrame  # 列: d, seed, miou
    means: Dict[int, float]

    def margin(self, high: int, low: int = 1) -> float:
        return self.means[high] - self.means[low]


def beacon_run_config(seed: int, depth: int, k: int, d: int, epochs: int, width: int = 32) -> RunConfig:
    """beacon 长程上下文任务的小规模训练配置（整片点云训练，不裁剪）"""
    network = NetworkConfig(
        layers=make_layers(depth, width, k, d),
        kernel_hidden=[width],
        seg_head=[2 * width],
        cls_head=[width],
        num_seg_classes=NUM_CLASSES["beacon"],
        seed=seed,
    )
    training = TrainingConfig(
        epochs=epochs,
        crops_per_epoch=8,
        batch_size=1,
        crop=None,
        lr=LrSchedule(lr0=5e-3, decay_factor=0.9),
    )
    return RunConfig(mode=Mode.SEGMENTATION, network=network, training=training, seed=seed)


def dilation_benefit(
    dilations: Sequence[int] = (1, 4),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    n_points: int = 512,
    depth: int = 3,
    k: int = 5,
    epochs: int = 30,
    n_train: int = 8,
    n_val: int = 4,
) -> DilationBenefit:
    """
    在 beacon 场景上比较不同 d 的验证 mIoU（每个种子一组独立的训练/验证场景）
    """
    records = []
    for seed in seeds:
        base = 1000 * (seed + 1)
        train_data = [gen_synthetic_scene(base + i, "beacon", n_points=n_points) for i in range(n_train)]
        val_data = [gen_synthetic_scene(base + 500 + i, "beacon", n_points=n_points) for i in range(n_val)]
        for d in dilations:
            run = beacon_run_config(seed, depth, k, d, epochs)
            net = Network.build(run.network, train_data[0].in_features, seed=seed)
            trained = train(net, train_data, run).net
            miou = evaluate(trained, val_data, Mode.SEGMENTATION).miou()
            records.append({"d": d, "seed": seed, "miou": miou})
            logger.info(f"beacon seed={seed} d={d}: 验证 mIoU={miou:.4f}")
    frame = pd.DataFrame(records)
    means = {int(d): float(v) for d, v in frame.groupby("d")["miou"].mean().items()}
    return DilationBenefit(frame=frame, means=means)
