"""
近邻选择：精确 KNN、空洞近邻（先取 k·d 个最近邻，再每隔 d 个保留一个）、暴力对照
"""
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from loguru import logger

from dpcnet.exceptions import InsufficientPointsError, InvalidTargetError
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.spatial.kdtree import SpatialIndex, build_index, select_sorted, sq_dist


@dataclass(frozen=True)
class NeighborList:
    """单个查询点的有序近邻（不含查询点自身）"""
    indices: np.ndarray  # k 个点索引，按距离升序
    distances: np.ndarray  # k 个距离（米），非降
    k: int
    d: int  # 实际使用的空洞系数

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class NeighborTable:
    """
    整片点云的近邻表，行与点云行对齐

    填充行的近邻全部指向自身、距离为 0，下游用 valid 掩码屏蔽。
    """
    indices: np.ndarray  # N×k
    distances: np.ndarray  # N×k
    valid: np.ndarray  # N
    k: int
    d: int  # 请求的空洞系数
    d_eff: int  # 实际使用的空洞系数

    def row(self, i: int) -> NeighborList:
        return NeighborList(indices=self.indices[i], distances=self.distances[i], k=self.k, d=self.d_eff)

    def aggregation_sets(self) -> np.ndarray:
        """A_i = 近邻 ∪ {i}，第 0 列是自身，形状 N×(k+1)"""
        own = np.arange(len(self.indices), dtype=np.int64)[:, None]
        return np.hstack([own, self.indices])


def effective_dilation(n_valid: int, k: int, d: int) -> int:
    """
    点数不足时的有效空洞系数：M = 有效点数 - 1，
    k·d ≤ M 时为 d，否则为 max(1, floor(M / k))

    Raises:
        InsufficientPointsError: 非自身候选点少于 k 个
    """
    m = n_valid - 1
    if k > m:
        raise InsufficientPointsError(k, max(m, 0))
    if k * d <= m:
        return d
    return max(1, m // k)


def _dilate(d2: np.ndarray, idx: np.ndarray, d_eff: int) -> Tuple[np.ndarray, np.ndarray]:
    """保留排名 d, 2d, ..., k·d（从 1 开始计数）"""
    return d2[..., d_eff - 1::d_eff], idx[..., d_eff - 1::d_eff]


def knn(index: SpatialIndex, query_index: int, k: int) -> NeighborList:
    """
    精确 k 近邻（排除自身），按距离升序，距离相同按点索引升序

    Raises:
        InsufficientPointsError: k 大于有效点数 - 1
    """
    d2, idx = index.nearest(query_index, k)
    return NeighborList(indices=idx, distances=np.sqrt(d2), k=k, d=1)


def dilated_neighbors(index: SpatialIndex, query_index: int, k: int, d: int) -> NeighborList:
    """
    空洞近邻：取排序后的 k·d_eff 个最近邻，保留第 d_eff, 2·d_eff, ..., k·d_eff 个

    d_eff = 1 时与 knn 完全相同。
    """
    d_eff = effective_dilation(index.size, k, d)
    d2, idx = index.nearest(query_index, k * d_eff)
    d2, idx = _dilate(d2, idx, d_eff)
    return NeighborList(indices=idx, distances=np.sqrt(d2), k=k, d=d_eff)


def brute_force_knn(cloud: PointCloud, query_index: int, k: int) -> NeighborList:
    """暴力对照：计算到所有有效点的距离后整体排序"""
    if not 0 <= query_index < cloud.n_points or not cloud.valid[query_index]:
        raise InvalidTargetError(f"查询点 {query_index} 越界或是填充点")
    rows = np.flatnonzero(cloud.valid)
    rows = rows[rows != query_index]
    if k > len(rows):
        raise InsufficientPointsError(k, len(rows))
    d2 = sq_dist(cloud.positions[rows], cloud.positions[query_index])
    d2, idx = select_sorted(d2, rows, k)
    return NeighborList(indices=idx, distances=np.sqrt(d2), k=k, d=1)


def brute_force_dilated(cloud: PointCloud, query_index: int, k: int, d: int) -> NeighborList:
    """空洞近邻的暴力对照"""
    d_eff = effective_dilation(cloud.n_valid, k, d)
    full = brute_force_knn(cloud, query_index, k * d_eff)
    return NeighborList(
        indices=full.indices[d_eff - 1::d_eff],
        distances=full.distances[d_eff - 1::d_eff],
        k=k,
        d=d_eff,
    )


def all_dilated_neighbors(index: SpatialIndex, k: int, d: int) -> NeighborTable:
    """
    一次性计算所有有效点的空洞近邻（与逐点调用 dilated_neighbors 逐位一致）
    """
    d_eff = effective_dilation(index.size, k, d)
    if d_eff != d:
        logger.warning(f"有效点数 {index.size} 不足以支撑 k·d = {k * d}，空洞系数降为 {d_eff}")
    d2, idx = index.nearest_all(k * d_eff)
    d2, idx = _dilate(d2, idx, d_eff)
    distances = np.sqrt(d2)
    distances[~index.valid] = 0.0
    return NeighborTable(
        indices=np.ascontiguousarray(idx),
        distances=np.ascontiguousarray(distances),
        valid=index.valid,
        k=k,
        d=d,
        d_eff=d_eff,
    )


def knn_table(index: SpatialIndex, k: int) -> NeighborTable:
    """逐点调用 knn 组装的普通 KNN 近邻表（不经过空洞选择路径）"""
    n = index.n_rows
    indices = np.tile(np.arange(n, dtype=np.int64)[:, None], (1, k))
    distances = np.zeros((n, k))
    for i in np.flatnonzero(index.valid):
        found = knn(index, int(i), k)
        indices[i] = found.indices
        distances[i] = found.distances
    return NeighborTable(indices=indices, distances=distances, valid=index.valid, k=k, d=1, d_eff=1)


def neighbor_table(cloud: PointCloud, k: int, d: int = 1) -> NeighborTable:
    """建立索引并计算整片点云的近邻表"""
    return all_dilated_neighbors(build_index(cloud), k, d)


class NeighborCache:
    """单片点云内按 (k, d) 缓存近邻表；位置在各层之间不变"""

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self._index: SpatialIndex = None
        self._tables: Dict[Tuple[int, int], NeighborTable] = {}

    @property
    def index(self) -> SpatialIndex:
        if self._index is None:
            self._index = build_index(self.cloud)
        return self._index

    def get(self, k: int, d: int) -> NeighborTable:
        """
        取 (k, d) 近邻表；有效点太少时把 k 降到 有效点数 - 1（只剩一个点时 A_i = {i}）
        """
        key = (k, d)
        if key not in self._tables:
            k_eff = min(k, self.index.size - 1)
            if k_eff < k:
                logger.warning(f"有效点只有 {self.index.size} 个，k 从 {k} 降为 {k_eff}")
            if k_eff == 0:
                n = self.cloud.n_points
                self._tables[key] = NeighborTable(
                    indices=np.empty((n, 0), dtype=np.int64),
                    distances=np.empty((n, 0)),
                    valid=self.cloud.valid,
                    k=0,
                    d=d,
                    d_eff=1,
                )
            else:
                self._tables[key] = all_dilated_neighbors(self.index, k_eff, d)
        return self._tables[key]
