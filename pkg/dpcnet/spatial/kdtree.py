"""
kd-tree 空间索引
按最宽轴取中位数划分，叶子大小默认 16；只收录有效点，保存原始点索引
"""
import heapq
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from dpcnet.config import settings
from dpcnet.exceptions import EmptyInputError, InsufficientPointsError, InvalidTargetError
from dpcnet.pointcloud.cloud import PointCloud


def sq_dist(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    """
    平方欧氏距离 (p - q)·(p - q)

    分量按 x、y、z 的固定顺序相加，所有调用方（树、批量查询、暴力法）
    都用这一个函数，保证距离逐位一致。
    """
    diff = points - query
    return diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]


def box_sq_dist(lo: np.ndarray, hi: np.ndarray, query: np.ndarray) -> np.ndarray:
    """点到包围盒的最小平方距离（对盒内任意点都不超过真实平方距离）"""
    gap = np.maximum(lo - query, 0.0) + np.maximum(query - hi, 0.0)
    return gap[..., 0] * gap[..., 0] + gap[..., 1] * gap[..., 1] + gap[..., 2] * gap[..., 2]


def select_sorted(dist2: np.ndarray, index: np.ndarray, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """按 (距离, 点索引) 升序取前 count 个；支持逐行的二维输入"""
    index = np.broadcast_to(index, dist2.shape)
    order = np.lexsort((index, dist2), axis=-1)[..., :count]
    return np.take_along_axis(dist2, order, axis=-1), np.take_along_axis(index, order, axis=-1)


@dataclass
class _Node:
    """树节点：叶子持有 order[start:stop]，内部节点持有左右子树"""
    lo: np.ndarray
    hi: np.ndarray
    start: int
    stop: int
    axis: int = -1
    split: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class SpatialIndex:
    """
    不可变 kd-tree

    构建后只读，多线程并发查询安全。
    """

    def __init__(self, cloud: PointCloud, leaf_size: Optional[int] = None):
        self.leaf_size = leaf_size or settings.KD_LEAF_SIZE
        self.positions = cloud.positions
        self.valid = cloud.valid
        self.n_rows = cloud.n_points

        order = np.flatnonzero(cloud.valid)
        if len(order) == 0:
            raise EmptyInputError("点云没有有效点，无法建立索引")
        self.order = order.copy()
        self.leaves: List[_Node] = []
        self.root = self._build(0, len(self.order))
        self.order.flags.writeable = False

        self._leaf_lo = np.array([leaf.lo for leaf in self.leaves])
        self._leaf_hi = np.array([leaf.hi for leaf in self.leaves])
        self._leaf_sizes = np.array([leaf.stop - leaf.start for leaf in self.leaves])
        logger.debug(f"kd-tree 构建完成: {self.size} 个点, {len(self.leaves)} 个叶子")

    # ---------- 构建 ----------

    def _build(self, start: int, stop: int) -> _Node:
        rows = self.order[start:stop]
        pts = self.positions[rows]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        node = _Node(lo=lo, hi=hi, start=start, stop=stop)
        count = stop - start
        if count <= self.leaf_size:
            self.leaves.append(node)
            return node

        axis = int(np.argmax(hi - lo))
        # 坐标相同按点索引排序，结构对给定点云是确定的
        ranked = np.lexsort((rows, pts[:, axis]))
        self.order[start:stop] = rows[ranked]
        mid = start + count // 2
        node.axis = axis
        node.split = float(self.positions[self.order[mid], axis])
        node.left = self._build(start, mid)
        node.right = self._build(mid, stop)
        return node

    @property
    def size(self) -> int:
        return len(self.order)

    def __len__(self) -> int:
        return self.size

    def __repr__(self):
        return f"<SpatialIndex(points={self.size}, leaves={len(self.leaves)}, leaf_size={self.leaf_size})>"

    # ---------- 查询 ----------

    def check_query(self, query_index: int) -> None:
        if not 0 <= query_index < self.n_rows:
            raise InvalidTargetError(f"查询点 {query_index} 越界（共 {self.n_rows} 行）")
        if not self.valid[query_index]:
            raise InvalidTargetError(f"查询点 {query_index} 是填充点")

    def nearest(self, query_index: int, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        单点最近邻（排除自身），最优优先遍历

        Returns:
            (平方距离, 点索引)，按 (距离, 索引) 升序，长度为 count
        """
        self.check_query(query_index)
        if count > self.size - 1:
            raise InsufficientPointsError(count, self.size - 1)
        query = self.positions[query_index]
        best_d2 = np.empty(0)
        best_idx = np.empty(0, dtype=np.int64)

        heap = [(0.0, 0, self.root)]
        tie = 1
        while heap:
            bound, _, node = heapq.heappop(heap)
            # 距离相等的节点仍需访问：更小的点索引可能在里面
            if len(best_idx) == count and bound > best_d2[-1]:
                break
            if node.is_leaf:
                rows = self.order[node.start:node.stop]
                rows = rows[rows != query_index]
                d2 = sq_dist(self.positions[rows], query)
                best_d2, best_idx = select_sorted(
                    np.concatenate([best_d2, d2]), np.concatenate([best_idx, rows]), count
                )
                continue
            for child in (node.left, node.right):
                child_bound = float(box_sq_dist(child.lo, child.hi, query))
                if len(best_idx) < count or child_bound <= best_d2[-1]:
                    heapq.heappush(heap, (child_bound, tie, child))
                    tie += 1
        return best_d2, best_idx

    def nearest_all(self, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        所有有效点的最近邻（排除自身），逐叶子批量计算

        每个叶子：先取盒间距离最近的若干叶子凑够 count+1 个候选，
        得到每个查询点的第 count 近距离上界，再收集盒间距离不超过该上界的所有叶子精确计算。

        Returns:
            (平方距离, 点索引)，形状 N_rows×count；填充行为 inf / 自身索引
        """
        if count > self.size - 1:
            raise InsufficientPointsError(count, self.size - 1)
        out_d2 = np.full((self.n_rows, count), np.inf)
        out_idx = np.tile(np.arange(self.n_rows, dtype=np.int64)[:, None], (1, count))

        for leaf in self.leaves:
            queries = self.order[leaf.start:leaf.stop]
            gap = np.maximum(self._leaf_lo - leaf.hi, 0.0) + np.maximum(leaf.lo - self._leaf_hi, 0.0)
            leaf_d2 = gap[:, 0] * gap[:, 0] + gap[:, 1] * gap[:, 1] + gap[:, 2] * gap[:, 2]
            ranked = np.lexsort((np.arange(len(self.leaves)), leaf_d2))
            enough = int(np.searchsorted(np.cumsum(self._leaf_sizes[ranked]), count + 1)) + 1
            seed_rows = self._rows_of(ranked[:enough])

            d2 = self._pairwise(queries, seed_rows)
            bound = np.partition(d2, count - 1, axis=1)[:, count - 1].max()

            rows = self._rows_of(np.flatnonzero(leaf_d2 <= bound))
            d2 = self._pairwise(queries, rows)
            out_d2[queries], out_idx[queries] = select_sorted(d2, rows, count)
        return out_d2, out_idx

    def _rows_of(self, leaf_ids: np.ndarray) -> np.ndarray:
        return np.concatenate([self.order[self.leaves[i].start:self.leaves[i].stop] for i in leaf_ids])

    def _pairwise(self, queries: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """查询点 × 候选点的平方距离，自身位置置为 inf"""
        d2 = sq_dist(self.positions[rows][None, :, :], self.positions[queries][:, None, :])
        d2[queries[:, None] == rows[None, :]] = np.inf
        return d2


def build_index(cloud: PointCloud, leaf_size: Optional[int] = None) -> SpatialIndex:
    """
    在点云的有效点上建立 kd-tree

    Raises:
        EmptyInputError: 没有有效点
    """
    return SpatialIndex(cloud, leaf_size=leaf_size)
