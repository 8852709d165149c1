"""
感受野

图感受野（逐层并集）：
    RF⁰(i) = {i}
    RFˡ(i) = ∪_{j ∈ A_i(第 l 层)} RFˡ⁻¹(j)
梯度感受野：目标点主干输出之和对输入特征的梯度非零的点集（全局池化路径不计入）。
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from dpcnet.config import settings
from dpcnet.exceptions import DimensionError, InvalidTargetError
from dpcnet.models.network import Network, layer_tables, trunk_backward, trunk_forward
from dpcnet.nn.init import SeedLike, as_rng
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.reports import RfStatsModel
from dpcnet.spatial.kdtree import sq_dist
from dpcnet.spatial.neighbors import NeighborCache, NeighborTable

AggregationLike = Union[NeighborTable, np.ndarray]


@dataclass(frozen=True)
class ReceptiveField:
    target: int
    members: np.ndarray  # 升序点索引，包含 target
    depth: int
    k: Optional[int] = None
    d: Optional[int] = None

    @property
    def size(self) -> int:
        return len(self.members)

    def as_set(self) -> set:
        return set(int(i) for i in self.members)


@dataclass(frozen=True)
class RfStats:
    size: int
    radius: float  # 目标到最远成员的距离（米）
    coverage: float  # 成员数 / 有效点数
    density: float  # 成员数 / 半径球内有效点数

    def to_model(self) -> RfStatsModel:
        return RfStatsModel(size=self.size, radius=self.radius, coverage=self.coverage, density=self.density)


def _check_target(valid: np.ndarray, target: int) -> int:
    target = int(target)
    if not 0 <= target < len(valid):
        raise InvalidTargetError(f"目标点 {target} 越界（共 {len(valid)} 行）")
    if not valid[target]:
        raise InvalidTargetError(f"目标点 {target} 是填充点")
    return target


def _uniform(values: Sequence[int]) -> Optional[int]:
    values = set(values)
    return values.pop() if len(values) == 1 else None


def rf_compute(
    neighbor_sets: Sequence[AggregationLike],
    target: int,
    depth: int,
    valid: Optional[np.ndarray] = None,
) -> ReceptiveField:
    """
    逐层并集求图感受野

    Args:
        neighbor_sets: 逐层近邻；NeighborTable 会自动并上自身，
            ndarray 视为已含自身的 N×S 聚合集
        target: 目标点
        depth: 使用前 depth 层（从第 depth 层往回传播）
        valid: 有效掩码；给 NeighborTable 时取表里的

    Raises:
        InvalidTargetError: 目标越界或是填充点
    """
    if depth < 0:
        raise DimensionError("depth 必须 ≥ 0")
    if depth > len(neighbor_sets):
        raise DimensionError(f"需要 {depth} 层近邻，只给了 {len(neighbor_sets)} 层")
    layers = list(neighbor_sets[:depth])
    tables = [s for s in layers if isinstance(s, NeighborTable)]
    if valid is None:
        if tables:
            valid = tables[0].valid
        elif layers:
            valid = np.ones(np.asarray(layers[0]).shape[0], dtype=bool)
        else:
            valid = np.ones(int(target) + 1, dtype=bool)
    target = _check_target(np.asarray(valid, dtype=bool), target)

    frontier = np.array([target], dtype=np.int64)
    for sets in reversed(layers):
        aggregation = sets.aggregation_sets() if isinstance(sets, NeighborTable) else np.asarray(sets, dtype=np.int64)
        frontier = np.unique(aggregation[frontier])

    return ReceptiveField(
        target=target,
        members=frontier,
        depth=depth,
        k=_uniform([t.k for t in tables]) if tables else None,
        d=_uniform([t.d_eff for t in tables]) if tables else None,
    )


def network_rf(
    net: Network,
    cloud: PointCloud,
    target: int,
    depth: Optional[int] = None,
    cache: Optional[NeighborCache] = None,
) -> ReceptiveField:
    """按网络每层的 (k, d) 计算前 depth 层的图感受野"""
    depth = net.depth if depth is None else depth
    tables = layer_tables(net, cloud, cache)
    return rf_compute(tables, target, depth, cloud.valid)


def rf_empirical(
    net: Network,
    cloud: PointCloud,
    target: int,
    eps: Optional[float] = None,
    cache: Optional[NeighborCache] = None,
) -> ReceptiveField:
    """
    梯度感受野：|∂(Σ_c skip[target, c]) / ∂features[j]| > eps 的点 j

    结果总是 rf_compute 的子集（ReLU 可能切断路径）。
    """
    eps = settings.RF_GRAD_EPS if eps is None else eps
    target = _check_target(cloud.valid, target)
    tables = layer_tables(net, cloud, cache)
    skip, tapes = trunk_forward(net, cloud, tables)
    skip_grad = np.zeros_like(skip)
    skip_grad[target] = 1.0
    _, feature_grad = trunk_backward(net, tapes, skip_grad)
    members = np.flatnonzero(np.abs(feature_grad).max(axis=1) > eps)
    return ReceptiveField(
        target=target,
        members=members,
        depth=net.depth,
        k=_uniform([t.k for t in tables]),
        d=_uniform([t.d_eff for t in tables]),
    )


def positive_construction(net: Network, seed: SeedLike = 0, low: float = 0.1, high: float = 1.0) -> Network:
    """
    所有参数替换为 U(low, high) 的副本

    核函数输出与投影预激活在非负输入特征下恒为正，
    梯度感受野因此与图感受野相等。
    """
    if not 0 < low < high:
        raise DimensionError("需要 0 < low < high")
    rng = as_rng(seed)
    positive = net.copy()
    for param in positive.parameters():
        param[...] = rng.uniform(low, high, size=param.shape)
    return positive


def rf_stats(rf: ReceptiveField, cloud: PointCloud) -> RfStats:
    """感受野大小、半径、覆盖率与密度"""
    target = _check_target(cloud.valid, rf.target)
    members = np.asarray(rf.members, dtype=np.int64)
    if len(members) == 0:
        return RfStats(size=0, radius=0.0, coverage=0.0, density=0.0)
    center = cloud.positions[target]
    d2 = sq_dist(cloud.positions[members], center)
    max_d2 = float(d2.max())
    in_ball = int((sq_dist(cloud.positions[cloud.valid], center) <= max_d2).sum())
    size = len(members)
    return RfStats(
        size=size,
        radius=float(np.sqrt(max_d2)),
        coverage=size / cloud.n_valid,
        density=size / in_ball,
    )
