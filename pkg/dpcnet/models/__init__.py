"""
Models Package
点卷积层与堆叠网络（前向与手写反向）
"""
from dpcnet.models.layer import PointConvLayer, LayerTape, LayerGrads, layer_forward, layer_backward
from dpcnet.models.network import (
    Network,
    NetworkTape,
    NetworkGrads,
    LossResult,
    build_network,
    network_forward,
    network_backward,
    trunk_forward,
    trunk_backward,
    layer_tables,
    loss_and_grad,
    predict,
    parameter_count,
    targets_of,
    describe,
)

__all__ = [
    "PointConvLayer",
    "LayerTape",
    "LayerGrads",
    "layer_forward",
    "layer_backward",
    "Network",
    "NetworkTape",
    "NetworkGrads",
    "LossResult",
    "build_network",
    "network_forward",
    "network_backward",
    "trunk_forward",
    "trunk_backward",
    "layer_tables",
    "loss_and_grad",
    "predict",
    "parameter_count",
    "targets_of",
    "describe",
]
