"""
合成数据生成与数据集加载
"""
from pathlib import Path
from typing import List, Optional, Union

from loguru import logger
from pydantic import ValidationError

from dpcnet.exceptions import ConfigError, EmptyInputError, ParseError
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.pointcloud.io import FORMATS, load_cloud, save_cloud
from dpcnet.pointcloud.synthetic import NUM_CLASSES, SCENE_KINDS, SHAPE_CLASSES, gen_synthetic_scene
from dpcnet.schemas.reports import DatasetManifest, ManifestEntry
from dpcnet.utils.artifacts import write_artifact
from dpcnet.utils.hashing import short_hash

MANIFEST_NAME = "manifest.json"
_SUFFIX = {"xyz-text": ".xyz", "ply-ascii": ".ply"}


def cmd_gen_data(
    kind: str,
    seed: int,
    count: int,
    out_dir: Union[str, Path],
    n_points: Optional[int] = None,
    format: str = "xyz-text",
) -> DatasetManifest:
    """
    生成 count 片合成点云与清单

    第 i 片的种子为 seed + i；shapes 按类别轮流生成，保证类别均衡。
    相同参数重复运行逐字节相同。
    """
    if kind not in SCENE_KINDS:
        raise ConfigError(f"未知的场景类型: {kind}")
    if format not in FORMATS:
        raise ConfigError(f"未知的点云格式: {format}")
    if count < 1:
        raise ConfigError("count 必须 ≥ 1")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"无法创建输出目录 {out_dir}: {str(e)}")
        raise

    logger.info(f"生成 {count} 片 {kind} 点云 → {out_dir}（seed={seed}）")
    entries = []
    for i in range(count):
        scene_seed = seed + i
        shape = SHAPE_CLASSES[i % len(SHAPE_CLASSES)] if kind == "shapes" else None
        cloud = gen_synthetic_scene(scene_seed, kind, n_points=n_points, shape=shape)
        name = f"{kind}_{i:04d}{_SUFFIX[format]}"
        save_cloud(cloud, out_dir / name, format=format)
        entries.append(ManifestEntry(
            file=name,
            kind=kind,
            seed=scene_seed,
            n_points=cloud.n_valid,
            class_label=cloud.meta.get("class_label"),
        ))

    params = {"kind": kind, "seed": seed, "count": count, "n_points": n_points, "format": format}
    manifest = DatasetManifest(
        config_hash=short_hash(params),
        kind=kind,
        seed=seed,
        format=format,
        num_classes=NUM_CLASSES[kind],
        entries=entries,
    )
    write_artifact(out_dir / MANIFEST_NAME, manifest)
    logger.info(f"数据生成完成: {count} 个文件 + {MANIFEST_NAME}")
    return manifest


def read_manifest(path: Path) -> DatasetManifest:
    """读取数据清单；编码或结构不合法都报 ParseError"""
    try:
        return DatasetManifest.model_validate_json(path.read_bytes())
    except ValidationError as e:
        raise ParseError(f"数据清单不合法: {e.errors()[0]['msg']}", path=str(path))


def load_dataset(path: Union[str, Path], format: Optional[str] = None) -> List[PointCloud]:
    """
    加载数据集

    - 含 manifest.json 的目录：按清单顺序读取，分类标签取清单里的 class_label
    - 普通目录：按文件名排序读取所有 .xyz / .ply
    - 单个文件：只读这一片
    """
    path = Path(path)
    if path.is_file():
        return [load_cloud(path, format)]
    if not path.is_dir():
        raise EmptyInputError(f"数据路径不存在: {path}")

    manifest_path = path / MANIFEST_NAME
    if manifest_path.is_file():
        manifest = read_manifest(manifest_path)
        clouds = []
        for entry in manifest.entries:
            cloud = load_cloud(path / entry.file, manifest.format)
            if entry.class_label is not None:
                cloud.meta["class_label"] = entry.class_label
            clouds.append(cloud)
    else:
        files = sorted(p for p in path.iterdir() if p.suffix in (".xyz", ".ply"))
        clouds = [load_cloud(p, format) for p in files]
    if not clouds:
        raise EmptyInputError(f"目录中没有点云文件: {path}")
    logger.info(f"加载数据集 {path}: {len(clouds)} 片点云")
    return clouds
