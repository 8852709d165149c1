"""
裁剪采样与零填充
训练时从场景中取边长 3 米的立方体，无放回采样固定点数，不足补零
"""
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from dpcnet.exceptions import EmptyInputError
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.run_config import CropSpec

# 依赖行号的元数据，裁剪后失效
_ROW_BOUND_META = ("beacon_index",)


def pad_cloud(cloud: PointCloud, budget: int) -> PointCloud:
    """把点云补零到 budget 行（已经 ≥ budget 时原样返回）"""
    n = cloud.n_points
    if n >= budget:
        return cloud
    extra = budget - n
    return PointCloud(
        positions=np.vstack([cloud.positions, np.zeros((extra, 3))]),
        features=np.vstack([cloud.features, np.zeros((extra, cloud.in_features))]),
        labels=None if cloud.labels is None else np.concatenate([cloud.labels, np.zeros(extra, dtype=np.int64)]),
        valid=np.concatenate([cloud.valid, np.zeros(extra, dtype=bool)]),
        meta=dict(cloud.meta),
    )


def sample_crop(cloud: PointCloud, center: Sequence[float], spec: CropSpec) -> PointCloud:
    """
    在以 center 为中心、边长 spec.side_length 的轴对齐立方体内无放回均匀采样

    Returns:
        恰好 spec.point_budget 行的点云；立方体内点数不足时其余为零填充行（valid=False）
    """
    if cloud.n_valid == 0:
        raise EmptyInputError("不能从没有有效点的点云中裁剪")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    half = spec.side_length / 2.0

    inside = cloud.valid & np.all(np.abs(cloud.positions - center) <= half, axis=1)
    candidates = np.flatnonzero(inside)
    rng = np.random.default_rng(spec.seed)
    take = min(spec.point_budget, len(candidates))
    rows = rng.choice(candidates, size=take, replace=False) if take else np.empty(0, dtype=np.int64)

    if take == 0:
        logger.warning(f"裁剪块为空（中心 {center.tolist()}），输出全填充点云")
    elif take < spec.point_budget:
        logger.debug(f"裁剪块只有 {take} 个点，补零 {spec.point_budget - take} 行")

    f_in = cloud.in_features
    n_pad = spec.point_budget - take
    positions = np.vstack([cloud.positions[rows], np.zeros((n_pad, 3))])
    features = np.vstack([cloud.features[rows], np.zeros((n_pad, f_in))])
    valid = np.concatenate([np.ones(take, dtype=bool), np.zeros(n_pad, dtype=bool)])
    labels = None
    if cloud.labels is not None:
        labels = np.concatenate([cloud.labels[rows], np.zeros(n_pad, dtype=np.int64)])

    meta = {k: v for k, v in cloud.meta.items() if k not in _ROW_BOUND_META}
    meta["crop_center"] = center.tolist()
    return PointCloud(positions=positions, features=features, labels=labels, valid=valid, meta=meta)


def random_crop(cloud: PointCloud, spec: CropSpec, rng: np.random.Generator,
                seed: Optional[int] = None) -> PointCloud:
    """
    训练用的随机裁剪：中心在场景包围盒内均匀采样

    Args:
        rng: 决定裁剪中心与采样种子的随机源
        seed: 显式指定采样种子（默认从 rng 派生）
    """
    lo, hi = cloud.bounding_box()
    center = rng.uniform(lo, hi)
    sample_seed = int(rng.integers(0, 2 ** 32)) if seed is None else seed
    return sample_crop(cloud, center, spec.model_copy(update={"seed": sample_seed}))
