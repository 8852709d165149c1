"""
感受野追踪服务：单格追踪与 深度 × (k, d) 网格
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from dpcnet.exceptions import DPCError
from dpcnet.models.network import Network
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.pointcloud.io import load_cloud
from dpcnet.pointcloud.synthetic import gen_synthetic_scene
from dpcnet.receptive.export import rf_export
from dpcnet.receptive.field import ReceptiveField, network_rf, rf_compute, rf_empirical, rf_stats
from dpcnet.schemas.reports import RfCell, RfReport
from dpcnet.schemas.run_config import NetworkConfig, TraceConfig, make_layers
from dpcnet.spatial.kdtree import select_sorted, sq_dist
from dpcnet.spatial.neighbors import NeighborCache
from dpcnet.utils.artifacts import write_artifact
from dpcnet.utils.hashing import short_hash
from dpcnet.utils.logger import carry_context


def default_target(cloud: PointCloud) -> int:
    """离有效点质心最近的有效点（距离相同取索引小者）"""
    rows = np.flatnonzero(cloud.valid)
    center = cloud.positions[rows].mean(axis=0)
    _, idx = select_sorted(sq_dist(cloud.positions[rows], center), rows, 1)
    return int(idx[0])


def trace_cloud(config: TraceConfig) -> PointCloud:
    if config.cloud:
        return load_cloud(config.cloud)
    return gen_synthetic_scene(config.scene_seed, config.scene_kind, n_points=config.n_points)


def trace_network(cloud: PointCloud, depth: int, k: int, d: int, config: TraceConfig) -> Network:
    """追踪用的随机网络：depth 层相同的 (k, d)"""
    net_config = NetworkConfig(
        layers=make_layers(depth, config.out_features, k, d),
        kernel_hidden=config.kernel_hidden,
        seed=config.seed,
    )
    return Network.build(net_config, cloud.in_features)


def trace_cell(
    cloud: PointCloud,
    target: int,
    depth: int,
    k: int,
    d: int,
    config: TraceConfig,
    cache: Optional[NeighborCache] = None,
) -> Tuple[RfCell, Optional[ReceptiveField]]:
    """计算一个格子；失败时记录在 error 字段里"""
    cache = cache or NeighborCache(cloud)
    try:
        tables = [cache.get(k, d)] * depth
        graph = rf_compute(tables, target, depth, cloud.valid)
        gradient = None
        if config.gradient:
            gradient = graph if depth == 0 else rf_empirical(trace_network(cloud, depth, k, d, config), cloud, target, cache=cache)
        cell = RfCell(
            depth=depth,
            k=k,
            d=d,
            graph=rf_stats(graph, cloud).to_model(),
            gradient=rf_stats(gradient, cloud).to_model() if gradient is not None else None,
        )
        return cell, graph
    except DPCError as e:
        logger.error(f"感受野格子 (L={depth}, k={k}, d={d}) 失败: {str(e)}")
        empty = {"size": 0, "radius": 0.0, "coverage": 0.0, "density": 0.0}
        return RfCell(depth=depth, k=k, d=d, graph=empty, error=str(e)), None


def rf_grid(
    cloud: PointCloud,
    target: int,
    config: TraceConfig,
    depths: Optional[Sequence[int]] = None,
    rows: Optional[Sequence[Tuple[int, int]]] = None,
    threads: int = 1,
) -> Tuple[RfReport, List[Optional[ReceptiveField]]]:
    """
    行 (k, d) × 列 depth 的感受野网格，按行优先排列

    近邻表先在主线程建好，工作线程只读缓存。
    """
    depths = list(depths or config.depths)
    rows = list(rows or config.rows)
    cache = NeighborCache(cloud)
    for k, d in rows:
        try:
            cache.get(k, d)
        except DPCError:
            pass  # 留到格子里记录错误
    jobs = [(depth, k, d) for k, d in rows for depth in depths]
    def run(job):
        return trace_cell(cloud, target, *job, config, cache)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(carry_context(run), jobs))
    else:
        results = [run(job) for job in jobs]
    report = RfReport(target=target, n_valid=cloud.n_valid, cells=[cell for cell, _ in results])
    return report, [rf for _, rf in results]


def cmd_trace_rf(
    out_ply: Union[str, Path],
    config: Optional[TraceConfig] = None,
    checkpoint: Optional[Union[str, Path]] = None,
    cloud: Optional[PointCloud] = None,
    target: Optional[int] = None,
    grid: bool = False,
    threads: int = 1,
) -> RfReport:
    """
    追踪感受野并导出着色点云 + 统计 JSON（与 out_ply 同名的 .json）

    - 给 checkpoint：用检查点网络的逐层 (k, d)，整网深度
    - grid=True：深度 × (k, d) 网格，每格导出 <stem>_L{depth}_k{k}_d{d}.ply
    - 否则：config 里的单格 (depth, k, d)
    """
    config = config or TraceConfig()
    cloud = cloud if cloud is not None else trace_cloud(config)
    target = target if target is not None else (config.target if config.target is not None else default_target(cloud))
    out_ply = Path(out_ply)
    logger.info(f"追踪感受野: target={target}, 有效点 {cloud.n_valid}")

    config_hash = short_hash(config.model_dump(mode="json"))
    if checkpoint:
        net, ckpt = Network.from_checkpoint(checkpoint)
        config_hash = ckpt.config_hash
        graph = network_rf(net, cloud, target)
        gradient = rf_empirical(net, cloud, target) if config.gradient else None
        first = net.layers[0]
        cell = RfCell(
            depth=net.depth,
            k=graph.k or first.k,
            d=graph.d or first.d,
            graph=rf_stats(graph, cloud).to_model(),
            gradient=rf_stats(gradient, cloud).to_model() if gradient is not None else None,
        )
        report = RfReport(target=target, n_valid=cloud.n_valid, cells=[cell])
        rf_export(cloud, graph, out_ply)
    elif grid:
        report, fields = rf_grid(cloud, target, config, threads=threads)
        for cell, rf in zip(report.cells, fields):
            if rf is not None:
                rf_export(cloud, rf, out_ply.with_name(f"{out_ply.stem}_L{cell.depth}_k{cell.k}_d{cell.d}.ply"))
    else:
        cell, rf = trace_cell(cloud, target, config.depth, config.k, config.d, config)
        report = RfReport(target=target, n_valid=cloud.n_valid, cells=[cell])
        if rf is not None:
            rf_export(cloud, rf, out_ply)

    report.config_hash = config_hash
    write_artifact(out_ply.with_suffix(".json"), report)
    for cell in report.cells:
        logger.info(
            f"L={cell.depth} k={cell.k} d={cell.d}: size={cell.graph.size} "
            f"radius={cell.graph.radius:.3f} coverage={cell.graph.coverage:.3f}"
            + (f" error={cell.error}" if cell.error else "")
        )
    return report
