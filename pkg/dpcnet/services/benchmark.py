"""
前向计时：近邻在前向中实时计算，单独记录近邻搜索耗时
"""
import time
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from dpcnet.models.network import Network, layer_tables, network_forward
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.reports import BenchReport
from dpcnet.schemas.run_config import BenchConfig, Mode, NetworkConfig, make_layers
from dpcnet.spatial.neighbors import NeighborCache
from dpcnet.utils.artifacts import write_artifact


def bench_cloud(n_points: int, in_features: int, seed: int = 0, side: float = 3.0) -> PointCloud:
    """边长 side 的立方体内均匀随机点（与训练裁剪块同尺度）"""
    rng = np.random.default_rng(seed)
    return PointCloud(
        positions=rng.uniform(0.0, side, size=(n_points, 3)),
        features=rng.uniform(0.0, 1.0, size=(n_points, in_features)),
    )


def time_forward(
    net: Network,
    cloud: PointCloud,
    trials: int,
    mode: Mode = Mode.SEGMENTATION,
) -> Tuple[List[float], List[float]]:
    """
    每次试验重新建索引与近邻表，再跑整网前向

    Returns:
        (总耗时毫秒列表, 其中近邻搜索毫秒列表)
    """
    totals, neighbors = [], []
    for _ in range(trials):
        start = time.perf_counter()
        tables = layer_tables(net, cloud, NeighborCache(cloud))
        searched = time.perf_counter()
        network_forward(net, cloud, mode, tables=tables)
        done = time.perf_counter()
        totals.append((done - start) * 1000.0)
        neighbors.append((searched - start) * 1000.0)
    return totals, neighbors


def bench_network(config: BenchConfig, d: int) -> Network:
    net_config = NetworkConfig(
        layers=make_layers(config.depth, config.out_features, config.k, d),
        seed=config.seed,
    )
    return Network.build(net_config, config.in_features)


def bench(config: BenchConfig) -> BenchReport:
    """对每个 d 计时，报告中位数与相对 d=1 的比值"""
    cloud = bench_cloud(config.n_points, config.in_features, config.seed)
    median_ms, neighbor_ms, samples = {}, {}, {}
    for d in config.dilations:
        net = bench_network(config, d)
        totals, searches = time_forward(net, cloud, config.trials)
        key = str(d)
        samples[key] = totals
        median_ms[key] = float(np.median(totals))
        neighbor_ms[key] = float(np.median(searches))
        logger.info(f"d={d}: 前向中位数 {median_ms[key]:.2f} ms（近邻 {neighbor_ms[key]:.2f} ms）")
    ratio = {}
    if "1" in median_ms:
        ratio = {key: value / median_ms["1"] for key, value in median_ms.items()}
    return BenchReport(
        n_points=config.n_points,
        k=config.k,
        depth=config.depth,
        trials=config.trials,
        median_ms=median_ms,
        neighbor_ms=neighbor_ms,
        samples_ms=samples,
        ratio_to_d1=ratio,
    )


def bench_table(report: BenchReport) -> str:
    frame = pd.DataFrame({
        "d": [int(key) for key in report.median_ms],
        "forward_ms": list(report.median_ms.values()),
        "neighbor_ms": [report.neighbor_ms[key] for key in report.median_ms],
        "ratio_to_d1": [report.ratio_to_d1.get(key) for key in report.median_ms],
    })
    return frame.to_string(index=False, float_format=lambda v: f"{v:.3f}")


def cmd_bench(config: BenchConfig, out: Optional[Union[str, Path]] = None, config_hash: str = "") -> BenchReport:
    logger.info("=" * 60)
    logger.info(f"前向计时: N={config.n_points}, k={config.k}, 层数={config.depth}, 试验 {config.trials} 次")
    logger.info("=" * 60)
    report = bench(config)
    report.config_hash = config_hash
    if out is not None:
        out = Path(out)
        write_artifact(out / "bench.json", report)
        (out / "bench.txt").write_text(bench_table(report) + "\n", encoding="utf-8")
    return report
