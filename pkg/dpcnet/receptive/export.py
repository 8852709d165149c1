"""
感受野着色导出：成员为蓝色，目标点为红色，其余为灰色
"""
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from loguru import logger

from dpcnet.exceptions import DimensionError
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.pointcloud.io import write_ply
from dpcnet.receptive.field import ReceptiveField

MEMBER_COLOR = (0, 0, 255)
TARGET_COLOR = (255, 0, 0)
OTHER_COLOR = (180, 180, 180)


def rf_export(cloud: PointCloud, rf: ReceptiveField, path: Union[str, Path]) -> Path:
    """
    写 ply-ascii（只写有效点，成员索引按有效点顺序重排）

    相同输入逐字节相同。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    colors = np.tile(np.array(OTHER_COLOR, dtype=np.int64), (cloud.n_points, 1))
    colors[rf.members] = MEMBER_COLOR
    colors[rf.target] = TARGET_COLOR
    valid = cloud.valid
    write_ply(path, cloud.positions[valid], colors=colors[valid])
    logger.info(f"感受野已导出: {path}（{rf.size} 个成员，目标 {rf.target}）")
    return path


def rf_members_from_colors(cloud: PointCloud) -> Tuple[np.ndarray, int]:
    """
    从导出的着色点云还原 (成员索引, 目标索引)

    读入时 uchar 颜色已除以 255，这里乘回去比较。
    """
    if cloud.in_features < 3:
        raise DimensionError("点云没有颜色通道")
    rgb = np.rint(cloud.features[:, :3] * 255.0).astype(np.int64)
    is_member = (rgb == MEMBER_COLOR).all(axis=1)
    is_target = (rgb == TARGET_COLOR).all(axis=1)
    targets = np.flatnonzero(is_target)
    if len(targets) != 1:
        raise DimensionError(f"应恰好有一个红色目标点，实际 {len(targets)} 个")
    members = np.flatnonzero(is_member | is_target)
    return members, int(targets[0])
