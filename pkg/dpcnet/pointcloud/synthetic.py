"""
合成带标签场景（桌面规模实验数据）

- rooms:  地面 / 墙面 / 箱体，逐点分割标签
- beacon: 远距离上下文任务，每个点的标签是信标相对该点所在的象限
- shapes: 单个几何体，整体分类标签，特征为单位法向量
"""
from typing import Dict, List, Optional, Tuple

import numpy as np

from dpcnet.exceptions import ConfigError
from dpcnet.pointcloud.cloud import PointCloud

SCENE_KINDS = ("rooms", "beacon", "shapes")

ROOM_CLASSES = ["floor", "wall", "box"]
BEACON_CLASSES = ["+x+y", "-x+y", "+x-y", "-x-y"]
SHAPE_CLASSES = ["sphere", "cube", "cylinder", "cone", "torus"]

DEFAULT_POINTS = {"rooms": 4096, "beacon": 512, "shapes": 1024}

NUM_CLASSES = {
    "rooms": len(ROOM_CLASSES),
    "beacon": len(BEACON_CLASSES),
    "shapes": len(SHAPE_CLASSES),
}


def _split_counts(total: int, weights: np.ndarray) -> np.ndarray:
    """按面积权重把 total 个点分配到各个面（总和精确等于 total）"""
    weights = np.asarray(weights, dtype=np.float64)
    raw = weights / weights.sum() * total
    counts = np.floor(raw).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


# ========== rooms ==========

def _rect(rng, n, origin, u, v) -> np.ndarray:
    """矩形面 origin + a·u + b·v 上的均匀采样"""
    a = rng.random((n, 1))
    b = rng.random((n, 1))
    return origin + a * u + b * v


def _rooms(rng: np.random.Generator, n_points: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Dict]:
    width, depth, height = rng.uniform(5.0, 8.0), rng.uniform(5.0, 8.0), rng.uniform(2.5, 3.2)
    surfaces: List[Tuple[int, np.ndarray, np.ndarray, np.ndarray]] = []
    # (label, origin, u, v)
    surfaces.append((0, np.zeros(3), np.array([width, 0, 0]), np.array([0, depth, 0])))
    surfaces.append((1, np.zeros(3), np.array([width, 0, 0]), np.array([0, 0, height])))
    surfaces.append((1, np.array([0, depth, 0]), np.array([width, 0, 0]), np.array([0, 0, height])))
    surfaces.append((1, np.zeros(3), np.array([0, depth, 0]), np.array([0, 0, height])))
    surfaces.append((1, np.array([width, 0, 0]), np.array([0, depth, 0]), np.array([0, 0, height])))

    boxes = []
    for _ in range(int(rng.integers(2, 5))):
        size = rng.uniform([0.4, 0.4, 0.4], [1.2, 1.2, 1.0])
        corner = np.array([rng.uniform(0.3, width - size[0] - 0.3),
                           rng.uniform(0.3, depth - size[1] - 0.3), 0.0])
        sx, sy, sz = size
        boxes.append({"corner": corner.tolist(), "size": size.tolist()})
        surfaces.append((2, corner + [0, 0, sz], np.array([sx, 0, 0]), np.array([0, sy, 0])))
        surfaces.append((2, corner, np.array([sx, 0, 0]), np.array([0, 0, sz])))
        surfaces.append((2, corner + [0, sy, 0], np.array([sx, 0, 0]), np.array([0, 0, sz])))
        surfaces.append((2, corner, np.array([0, sy, 0]), np.array([0, 0, sz])))
        surfaces.append((2, corner + [sx, 0, 0], np.array([0, sy, 0]), np.array([0, 0, sz])))

    areas = np.array([np.linalg.norm(np.cross(u, v)) for _, _, u, v in surfaces])
    counts = _split_counts(n_points, areas)
    positions, labels = [], []
    for (label, origin, u, v), count in zip(surfaces, counts):
        positions.append(_rect(rng, count, origin, u, v))
        labels.append(np.full(count, label, dtype=np.int64))
    positions = np.vstack(positions) + rng.normal(0.0, 0.005, (n_points, 3))
    labels = np.concatenate(labels)
    # 颜色与类别无关，模型只能依赖几何
    colors = np.clip(0.5 + rng.normal(0.0, 0.1, (n_points, 3)), 0.0, 1.0)
    meta = {"size": [width, depth, height], "boxes": boxes}
    return positions, colors, labels, meta


# ========== beacon ==========

def beacon_quadrant(beacon: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """信标相对每个点的象限：bit0 = (dx < 0)，bit1 = (dy < 0)"""
    delta = np.asarray(beacon)[:2] - np.asarray(positions)[:, :2]
    return (delta[:, 0] < 0).astype(np.int64) + 2 * (delta[:, 1] < 0).astype(np.int64)


def _beacon(rng: np.random.Generator, n_points: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Dict]:
    side = 4.0
    positions = np.column_stack([
        rng.uniform(0.0, side, n_points),
        rng.uniform(0.0, side, n_points),
        rng.uniform(0.0, 0.1, n_points),
    ])
    # 信标落在中间区域，保证四个象限都有足够的点
    beacon_index = int(rng.integers(n_points))
    positions[beacon_index, :2] = rng.uniform(side / 4, 3 * side / 4, 2)
    beacon = positions[beacon_index].copy()

    colors = np.full((n_points, 3), 0.5)
    colors[beacon_index] = [1.0, 0.0, 0.0]
    labels = beacon_quadrant(beacon, positions)
    meta = {"beacon_index": beacon_index, "beacon_position": beacon.tolist(), "side": side}
    return positions, colors, labels, meta


# ========== shapes ==========

def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sphere(rng, n):
    normals = _unit(rng.normal(size=(n, 3)))
    return normals * 0.5, normals


def _cube(rng, n):
    face = rng.integers(0, 6, n)
    axis, sign = face // 2, np.where(face % 2 == 0, 1.0, -1.0)
    positions = rng.uniform(-0.5, 0.5, (n, 3))
    positions[np.arange(n), axis] = 0.5 * sign
    normals = np.zeros((n, 3))
    normals[np.arange(n), axis] = sign
    return positions, normals


def _cylinder(rng, n, radius=0.4, height=1.0):
    counts = _split_counts(n, [2 * np.pi * radius * height, np.pi * radius ** 2, np.pi * radius ** 2])
    theta = rng.uniform(0, 2 * np.pi, counts[0])
    side = np.column_stack([radius * np.cos(theta), radius * np.sin(theta),
                            rng.uniform(-height / 2, height / 2, counts[0])])
    side_n = np.column_stack([np.cos(theta), np.sin(theta), np.zeros(counts[0])])
    caps, caps_n = [], []
    for count, z, nz in ((counts[1], height / 2, 1.0), (counts[2], -height / 2, -1.0)):
        r = radius * np.sqrt(rng.random(count))
        phi = rng.uniform(0, 2 * np.pi, count)
        caps.append(np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(count, z)]))
        caps_n.append(np.tile([0.0, 0.0, nz], (count, 1)))
    return np.vstack([side] + caps), np.vstack([side_n] + caps_n)


def _cone(rng, n, radius=0.5, height=1.0):
    slant = np.hypot(radius, height)
    counts = _split_counts(n, [np.pi * radius * slant, np.pi * radius ** 2])
    s = np.sqrt(rng.random(counts[0]))  # 距顶点的比例，面积均匀
    theta = rng.uniform(0, 2 * np.pi, counts[0])
    lateral = np.column_stack([radius * s * np.cos(theta), radius * s * np.sin(theta),
                               height / 2 - height * s])
    lateral_n = np.column_stack([height * np.cos(theta), height * np.sin(theta),
                                 np.full(counts[0], radius)]) / slant
    r = radius * np.sqrt(rng.random(counts[1]))
    phi = rng.uniform(0, 2 * np.pi, counts[1])
    base = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(counts[1], -height / 2)])
    base_n = np.tile([0.0, 0.0, -1.0], (counts[1], 1))
    return np.vstack([lateral, base]), np.vstack([lateral_n, base_n])


def _torus(rng, n, major=0.4, minor=0.15):
    # 拒绝采样：面积密度 ∝ (R + r·cosθ)
    thetas = np.empty(0)
    while len(thetas) < n:
        theta = rng.uniform(0, 2 * np.pi, 2 * n)
        keep = rng.random(2 * n) < (major + minor * np.cos(theta)) / (major + minor)
        thetas = np.concatenate([thetas, theta[keep]])
    theta = thetas[:n]
    phi = rng.uniform(0, 2 * np.pi, n)
    ring = major + minor * np.cos(theta)
    positions = np.column_stack([ring * np.cos(phi), ring * np.sin(phi), minor * np.sin(theta)])
    normals = np.column_stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), np.sin(theta)])
    return positions, normals


_SHAPE_SAMPLERS = {
    "sphere": _sphere,
    "cube": _cube,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
}


def _shapes(rng: np.random.Generator, n_points: int, shape: Optional[str]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Dict]:
    if shape is None:
        shape = SHAPE_CLASSES[int(rng.integers(len(SHAPE_CLASSES)))]
    if shape not in _SHAPE_SAMPLERS:
        raise ConfigError(f"未知的几何体: {shape}（支持: {', '.join(SHAPE_CLASSES)}）")
    class_label = SHAPE_CLASSES.index(shape)

    positions, normals = _SHAPE_SAMPLERS[shape](rng, n_points)
    scale = rng.uniform(0.5, 1.0)
    angle = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(angle), np.sin(angle)
    rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    positions = positions @ rotation.T * scale
    normals = _unit(normals @ rotation.T)

    labels = np.full(n_points, class_label, dtype=np.int64)
    meta = {"shape": shape, "class_label": class_label, "scale": scale, "angle": angle}
    return positions, normals, labels, meta


def gen_synthetic_scene(
    scene_seed: int,
    scene_kind: str,
    n_points: Optional[int] = None,
    shape: Optional[str] = None,
) -> PointCloud:
    """
    生成确定性的带标签点云

    Args:
        scene_seed: 场景种子（相同种子逐位相同）
        scene_kind: rooms / beacon / shapes
        n_points: 点数，默认见 DEFAULT_POINTS
        shape: shapes 模式下指定几何体，默认由种子决定

    Returns:
        PointCloud，meta 中记录 kind 与生成器元数据
    """
    if scene_kind not in SCENE_KINDS:
        raise ConfigError(f"未知的场景类型: {scene_kind}（支持: {', '.join(SCENE_KINDS)}）")
    n_points = n_points or DEFAULT_POINTS[scene_kind]
    if n_points < 2:
        raise ConfigError("合成场景至少需要 2 个点")
    rng = np.random.default_rng(scene_seed)

    if scene_kind == "rooms":
        positions, features, labels, meta = _rooms(rng, n_points)
    elif scene_kind == "beacon":
        positions, features, labels, meta = _beacon(rng, n_points)
    else:
        positions, features, labels, meta = _shapes(rng, n_points, shape)

    meta.update({"kind": scene_kind, "seed": int(scene_seed)})
    return PointCloud(positions=positions, features=features, labels=labels, meta=meta)
