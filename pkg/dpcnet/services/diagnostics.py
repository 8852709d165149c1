"""
有限差分梯度检查套件（gradcheck 命令与测试共用）
"""
from typing import Callable, Dict, List

import numpy as np
from loguru import logger

from dpcnet.models.layer import PointConvLayer, layer_backward, layer_forward
from dpcnet.models.network import Network, loss_and_grad
from dpcnet.nn.gradcheck import numeric_grad, relative_error
from dpcnet.nn.losses import softmax_cross_entropy
from dpcnet.nn.mlp import Mlp, mlp_backward, mlp_forward
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.run_config import LayerSpec, Mode, NetworkConfig, make_layers
from dpcnet.spatial.neighbors import NeighborCache


def random_cloud(rng: np.random.Generator, n_points: int = 12, in_features: int = 2, num_classes: int = 3) -> PointCloud:
    return PointCloud(
        positions=rng.uniform(-1.0, 1.0, size=(n_points, 3)),
        features=rng.uniform(0.1, 1.0, size=(n_points, in_features)),
        labels=rng.integers(0, num_classes, size=n_points),
    )


MLP_CHECK_SIZES = (3, 16, 5)


def check_mlp(rng: np.random.Generator) -> float:
    """3 → 16 → 5 的两层 MLP，对参数与输入都做检查"""
    mlp = Mlp.create(list(MLP_CHECK_SIZES), rng)
    x = rng.normal(size=(6, MLP_CHECK_SIZES[0]))
    weights = rng.normal(size=(6, MLP_CHECK_SIZES[-1]))

    def f() -> float:
        out, _ = mlp_forward(mlp, x)
        return float((out * weights).sum())

    _, tape = mlp_forward(mlp, x)
    grads, x_grad = mlp_backward(mlp, tape, weights)
    errors = [relative_error(g, numeric_grad(f, p)) for g, p in zip(grads.as_list(), mlp.parameters())]
    errors.append(relative_error(x_grad, numeric_grad(f, x)))
    return max(errors)


def check_softmax_cross_entropy(rng: np.random.Generator) -> float:
    logits = rng.normal(size=(7, 4))
    labels = rng.integers(0, 4, size=7)
    mask = rng.uniform(size=7) < 0.8
    mask[0] = True
    _, grad = softmax_cross_entropy(logits, labels, mask)
    numeric = numeric_grad(lambda: softmax_cross_entropy(logits, labels, mask)[0], logits)
    return relative_error(grad, numeric)


def check_layer(rng: np.random.Generator) -> float:
    cloud = random_cloud(rng)
    layer = PointConvLayer.create(cloud.in_features, LayerSpec(out_features=3, k=4, d=2), [5], rng)
    # 偏置抬高，避免预激活落在 ReLU 拐点附近
    layer.projection.biases[0][...] = 0.5
    table = NeighborCache(cloud).get(layer.k, layer.d)
    features = np.array(cloud.features)
    weights = rng.normal(size=(cloud.n_points, layer.out_features))

    def f() -> float:
        out, _ = layer_forward(layer, cloud.positions, features, table, cloud.valid)
        return float((out * weights).sum())

    _, tape = layer_forward(layer, cloud.positions, features, table, cloud.valid)
    grads = layer_backward(layer, tape, weights)
    errors = [relative_error(g, numeric_grad(f, p)) for g, p in zip(grads.as_list(), layer.parameters())]
    errors.append(relative_error(grads.features, numeric_grad(f, features)))
    return max(errors)


def check_network(rng: np.random.Generator, mode: Mode = Mode.SEGMENTATION) -> float:
    cloud = random_cloud(rng)
    config = NetworkConfig(
        layers=make_layers(2, 4, k=3, d=[1, 2]),
        kernel_hidden=[4],
        seg_head=[6],
        cls_head=[6],
        num_seg_classes=3,
        num_cls_classes=3,
        seed=int(rng.integers(1 << 31)),
    )
    net = Network.build(config, cloud.in_features)
    cache = NeighborCache(cloud)
    result = loss_and_grad(net, cloud, mode, cache)

    def f() -> float:
        return loss_and_grad(net, cloud, mode, cache).loss

    return max(relative_error(g, numeric_grad(f, p)) for g, p in zip(result.grads.as_list(), net.parameters()))


CHECKS: Dict[str, Callable[[np.random.Generator], float]] = {
    "mlp": check_mlp,
    "softmax_cross_entropy": check_softmax_cross_entropy,
    "layer": check_layer,
    "network": check_network,
}


def gradcheck_suite(instances: int = 20, seed: int = 0) -> Dict[str, float]:
    """每项检查跑 instances 个随机实例，返回各项的最大相对误差"""
    rng = np.random.default_rng(seed)
    report: Dict[str, float] = {}
    for name, check in CHECKS.items():
        errors: List[float] = [check(rng) for _ in range(instances)]
        report[name] = max(errors)
        logger.info(f"梯度检查 {name}: {instances} 个实例，最大相对误差 {report[name]:.3e}")
    return report
