"""
点云文件读写
支持 xyz-text（空白分隔，# 开头为注释）与 ply-ascii（不支持二进制 PLY）
"""
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from dpcnet.config import settings
from dpcnet.exceptions import DimensionError, EmptyInputError, ParseError
from dpcnet.pointcloud.cloud import PointCloud, constant_features

PathLike = Union[str, Path]

FORMATS = ("xyz-text", "ply-ascii")

# (element 名, 个数, [(属性名, 类型)])
PlyElement = Tuple[str, int, List[Tuple[str, str]]]

# xyz-text 每行列数 -> (特征列数, 是否带标签)
XYZ_ARITY = {
    3: (0, False),
    4: (0, True),
    6: (3, False),
    7: (3, True),
    9: (6, False),
    10: (6, True),
}


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise ParseError(f"未知的点云格式: {fmt}（支持: {', '.join(FORMATS)}）")
    return fmt


def guess_format(path: PathLike) -> str:
    """按扩展名推断格式"""
    return "ply-ascii" if str(path).lower().endswith(".ply") else "xyz-text"


def _to_label(value: float, line_number: Optional[int], path: str) -> int:
    if not np.isfinite(value) or value != int(value) or value < 0:
        raise ParseError(f"标签必须是非负整数，实际 {value}", line_number, path)
    return int(value)


def _iter_lines(path: Path) -> Iterator[Tuple[int, str]]:
    """逐行解码为 UTF-8，产出 (行号, 文本)；非法字节报告所在行"""
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, 1):
            try:
                yield line_number, raw.decode("utf-8")
            except UnicodeDecodeError:
                raise ParseError("不是合法的 UTF-8 文本", line_number, str(path))


# ========== xyz-text ==========

def _load_xyz(path: Path) -> PointCloud:
    rows: List[List[float]] = []
    arity: Optional[int] = None
    for line_number, raw in _iter_lines(path):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"无法解析数值: {line!r}", line_number, str(path))
        if arity is None:
            if len(values) not in XYZ_ARITY:
                raise ParseError(
                    f"列数 {len(values)} 不合法（允许: {sorted(XYZ_ARITY)}）", line_number, str(path)
                )
            arity = len(values)
        elif len(values) != arity:
            raise ParseError(f"列数不一致：期望 {arity}，实际 {len(values)}", line_number, str(path))
        rows.append(values)
        rows[-1].append(line_number)

    if not rows:
        raise EmptyInputError(f"点云文件为空: {path}")

    data = np.asarray(rows, dtype=np.float64)
    line_numbers = data[:, -1].astype(int)
    data = data[:, :-1]
    n_feat, has_label = XYZ_ARITY[arity]

    positions = data[:, :3]
    features = data[:, 3:3 + n_feat] if n_feat else constant_features(len(data))
    labels = None
    if has_label:
        labels = np.array(
            [_to_label(v, ln, str(path)) for v, ln in zip(data[:, -1], line_numbers)],
            dtype=np.int64,
        )
    return PointCloud(positions=positions, features=features, labels=labels)


def _feature_columns(cloud: PointCloud) -> np.ndarray:
    """保存时的特征列：常数通道省略，3/6 维原样写出"""
    features = cloud.features[cloud.valid]
    if cloud.in_features == 1:
        if not np.all(features == 1.0):
            raise DimensionError("单通道特征只支持常数 1.0（文本格式无法表达任意单通道特征）")
        return np.empty((len(features), 0))
    if cloud.in_features in (3, 6):
        return features
    raise DimensionError(f"文本格式只支持 1/3/6 维特征，实际 {cloud.in_features}")


def _save_xyz(cloud: PointCloud, path: Path, precision: int) -> None:
    features = _feature_columns(cloud)
    positions = cloud.positions[cloud.valid]
    columns = ["x", "y", "z"] + (["r", "g", "b"] if features.shape[1] >= 3 else [])
    columns += ["nx", "ny", "nz"] if features.shape[1] == 6 else []
    float_fmt = f"%.{precision}f"
    fmt = " ".join([float_fmt] * (3 + features.shape[1]))

    lines = ["# " + " ".join(columns + (["label"] if cloud.has_labels else []))]
    table = np.hstack([positions, features])
    labels = cloud.labels[cloud.valid] if cloud.has_labels else None
    for i, row in enumerate(table):
        line = fmt % tuple(row)
        if labels is not None:
            line += f" {int(labels[i])}"
        lines.append(line)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ========== ply-ascii ==========

def _read_ply_header(lines: Iterator[Tuple[int, str]], path: Path) -> Tuple[List[PlyElement], int]:
    """解析 PLY 头，返回 [(element, count, [(prop, type)])] 与头部行数"""
    line_number, first = next(lines, (1, ""))
    if first.strip() != "ply":
        raise ParseError("缺少 ply 魔数", 1, str(path))
    elements: List[PlyElement] = []
    for line_number, raw in lines:
        parts = raw.strip().split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise ParseError(f"只支持 ascii PLY，实际格式: {' '.join(parts[1:])}", line_number, str(path))
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise ParseError(f"非法的 element 行（需要非负整数个数）: {raw.strip()!r}", line_number, str(path))
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property 出现在 element 之前", line_number, str(path))
            if len(parts) == 5 and parts[1] == "list":
                elements[-1][2].append((parts[4], "list"))
            elif len(parts) == 3 and parts[1] != "list":
                elements[-1][2].append((parts[2], parts[1]))
            else:
                raise ParseError(f"非法的 property 行: {raw.strip()!r}", line_number, str(path))
        elif parts[0] == "end_header":
            return elements, line_number
        else:
            raise ParseError(f"无法识别的头部行: {raw.strip()!r}", line_number, str(path))
    raise ParseError("缺少 end_header", line_number, str(path))


def _load_ply(path: Path) -> PointCloud:
    lines = _iter_lines(path)
    try:
        return _parse_ply(lines, path)
    finally:
        lines.close()


def _parse_ply(lines: Iterator[Tuple[int, str]], path: Path) -> PointCloud:
    elements, line_number = _read_ply_header(lines, path)
    vertex = None
    skip = 0
    for name, count, props in elements:
        if name == "vertex":
            vertex = (count, props)
            break
        skip += count
    if vertex is None:
        raise ParseError("PLY 中没有 vertex 元素", line_number, str(path))
    count, props = vertex
    names = [p for p, _ in props]
    types = dict(props)
    if any(t == "list" for t in types.values()):
        raise ParseError("vertex 不支持 list 属性", line_number, str(path))
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"vertex 缺少 {axis} 属性", line_number, str(path))
    if count < 1:
        raise EmptyInputError(f"点云文件为空: {path}")

    for _ in range(skip):
        line_number, _ = next(lines, (line_number + 1, ""))
    rows = []
    for _ in range(count):
        line_number, raw = next(lines, (line_number + 1, ""))
        parts = raw.split()
        if len(parts) != len(names):
            raise ParseError(f"属性数不一致：期望 {len(names)}，实际 {len(parts)}", line_number, str(path))
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(f"无法解析数值: {raw.strip()!r}", line_number, str(path))

    data = np.asarray(rows, dtype=np.float64)
    column = {n: data[:, i] for i, n in enumerate(names)}
    positions = np.stack([column["x"], column["y"], column["z"]], axis=1)

    blocks = []
    if all(c in column for c in ("red", "green", "blue")):
        rgb = np.stack([column["red"], column["green"], column["blue"]], axis=1)
        if types["red"] in ("uchar", "uint8"):
            rgb = rgb / 255.0
        blocks.append(rgb)
    if all(c in column for c in ("nx", "ny", "nz")):
        blocks.append(np.stack([column["nx"], column["ny"], column["nz"]], axis=1))
    features = np.hstack(blocks) if blocks else constant_features(len(data))

    labels = None
    label_key = "label" if "label" in column else ("class" if "class" in column else None)
    if label_key:
        labels = np.array([_to_label(v, None, str(path)) for v in column[label_key]], dtype=np.int64)
    return PointCloud(positions=positions, features=features, labels=labels)


def write_ply(
    path: PathLike,
    positions: np.ndarray,
    colors: Optional[np.ndarray] = None,
    float_colors: Optional[np.ndarray] = None,
    normals: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    precision: Optional[int] = None,
) -> None:
    """
    写 ply-ascii

    Args:
        colors: N×3 uint8 颜色（red/green/blue 为 uchar）
        float_colors: N×3 浮点颜色（red/green/blue 为 float，与 colors 互斥）
        normals: N×3 法向量
        labels: N 整数标签
    """
    precision = settings.TEXT_PRECISION if precision is None else precision
    n = len(positions)
    header = ["ply", "format ascii 1.0", f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    float_fmt = f"%.{precision}f"
    fmt = [float_fmt] * 3
    blocks = [np.asarray(positions, dtype=np.float64)]
    if colors is not None and float_colors is not None:
        raise DimensionError("colors 与 float_colors 只能二选一")
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        fmt += ["%d"] * 3
        blocks.append(np.asarray(colors, dtype=np.float64))
    if float_colors is not None:
        header += ["property float red", "property float green", "property float blue"]
        fmt += [float_fmt] * 3
        blocks.append(np.asarray(float_colors, dtype=np.float64))
    if normals is not None:
        header += ["property float nx", "property float ny", "property float nz"]
        fmt += [float_fmt] * 3
        blocks.append(np.asarray(normals, dtype=np.float64))
    if labels is not None:
        header += ["property int label"]
        fmt += ["%d"]
        blocks.append(np.asarray(labels, dtype=np.float64).reshape(n, 1))
    header.append("end_header")

    table = np.hstack(blocks)
    row_fmt = " ".join(fmt)
    lines = header + [row_fmt % tuple(row) for row in table]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _save_ply(cloud: PointCloud, path: Path, precision: int) -> None:
    features = _feature_columns(cloud)
    valid = cloud.valid
    write_ply(
        path,
        cloud.positions[valid],
        float_colors=features[:, :3] if features.shape[1] >= 3 else None,
        normals=features[:, 3:6] if features.shape[1] == 6 else None,
        labels=cloud.labels[valid] if cloud.has_labels else None,
        precision=precision,
    )


# ========== 对外接口 ==========

def load_cloud(path: PathLike, format: Optional[str] = None) -> PointCloud:
    """
    读取点云文件

    Args:
        path: 文件路径
        format: xyz-text 或 ply-ascii，默认按扩展名推断

    Returns:
        PointCloud（valid 全为 True；没有特征列时补常数 1.0 通道）
    """
    path = Path(path)
    fmt = _check_format(format or guess_format(path))
    if not path.is_file():
        raise EmptyInputError(f"点云文件不存在: {path}")
    if path.stat().st_size == 0:
        raise EmptyInputError(f"点云文件为空: {path}")

    cloud = _load_ply(path) if fmt == "ply-ascii" else _load_xyz(path)
    logger.debug(f"读取点云 {path}: {cloud}")
    return cloud


def save_cloud(
    cloud: PointCloud,
    path: PathLike,
    format: Optional[str] = None,
    precision: Optional[int] = None,
) -> Path:
    """
    保存点云（只写有效点；填充行是训练期产物，不落盘）

    Returns:
        写入的路径
    """
    path = Path(path)
    fmt = _check_format(format or guess_format(path))
    precision = settings.TEXT_PRECISION if precision is None else precision
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "ply-ascii":
        _save_ply(cloud, path, precision)
    else:
        _save_xyz(cloud, path, precision)
    logger.debug(f"保存点云 {path}: {cloud}")
    return path
