"""
Point Cloud Package
数据模型、文件读写、裁剪采样与合成场景
"""
from dpcnet.pointcloud.cloud import PointCloud, constant_features
from dpcnet.pointcloud.io import load_cloud, save_cloud, write_ply, guess_format, FORMATS
from dpcnet.pointcloud.crop import sample_crop, random_crop, pad_cloud
from dpcnet.pointcloud.synthetic import (
    gen_synthetic_scene,
    beacon_quadrant,
    SCENE_KINDS,
    NUM_CLASSES,
    SHAPE_CLASSES,
    ROOM_CLASSES,
    BEACON_CLASSES,
)

__all__ = [
    "PointCloud",
    "constant_features",
    "load_cloud",
    "save_cloud",
    "write_ply",
    "guess_format",
    "FORMATS",
    "sample_crop",
    "random_crop",
    "pad_cloud",
    "gen_synthetic_scene",
    "beacon_quadrant",
    "SCENE_KINDS",
    "NUM_CLASSES",
    "SHAPE_CLASSES",
    "ROOM_CLASSES",
    "BEACON_CLASSES",
]
