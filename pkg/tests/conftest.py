"""
测试公共夹具
"""
import numpy as np
import pytest
from loguru import logger

from dpcnet.config import settings
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.run_config import NetworkConfig, make_layers


@pytest.fixture(autouse=True)
def _quiet_logs(monkeypatch):
    """测试期间不写日志文件，只保留 WARNING 以上的控制台输出"""
    monkeypatch.setattr(settings, "LOG_FILE", "")
    monkeypatch.setattr(settings, "LOG_LEVEL", "WARNING")
    yield
    logger.remove()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_cloud(rng, n_points=24, in_features=2, num_classes=3, positive=True):
    """单位立方体内的随机点云，两两距离几乎必然互不相同"""
    low = 0.1 if positive else -1.0
    return PointCloud(
        positions=rng.uniform(0.0, 1.0, size=(n_points, 3)),
        features=rng.uniform(low, 1.0, size=(n_points, in_features)),
        labels=rng.integers(0, num_classes, size=n_points),
    )


@pytest.fixture
def small_cloud(rng):
    return make_cloud(rng)


@pytest.fixture
def tiny_config():
    """两层、窄宽度的网络配置"""
    return NetworkConfig(
        layers=make_layers(2, 4, k=3, d=[1, 2]),
        kernel_hidden=[4],
        seg_head=[6],
        cls_head=[6],
        num_seg_classes=3,
        num_cls_classes=3,
        seed=7,
    )
