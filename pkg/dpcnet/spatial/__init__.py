"""
Spatial Package
kd-tree 索引与（空洞）近邻选择
"""
from dpcnet.spatial.kdtree import SpatialIndex, build_index, sq_dist
from dpcnet.spatial.neighbors import (
    NeighborList,
    NeighborTable,
    NeighborCache,
    knn,
    dilated_neighbors,
    brute_force_knn,
    brute_force_dilated,
    all_dilated_neighbors,
    knn_table,
    neighbor_table,
    effective_dilation,
)

__all__ = [
    "SpatialIndex",
    "build_index",
    "sq_dist",
    "NeighborList",
    "NeighborTable",
    "NeighborCache",
    "knn",
    "dilated_neighbors",
    "brute_force_knn",
    "brute_force_dilated",
    "all_dilated_neighbors",
    "knn_table",
    "neighbor_table",
    "effective_dilation",
]
