"""
堆叠点卷积网络

    X_0 = 输入特征
    X_l = PointConv_l(P, X_{l-1}; k_l, d_l)        l = 1..L
    skip = [X_1 ‖ ... ‖ X_L]                         N×ΣF_l
    global = max over 有效行 (skip)                  ΣF_l
    分割分支: MLP([skip_i ‖ global]) → N×K
    分类分支: MLP(global) → 1×C

两个分支共享主干，参数量与 k、d 无关。
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from dpcnet.exceptions import (
    CheckpointError,
    ClassRangeError,
    DegenerateBatchError,
    DimensionError,
    MissingLabelsError,
)
from dpcnet.models.layer import LayerGrads, LayerTape, PointConvLayer, layer_backward, layer_forward
from dpcnet.nn.checkpoint import Checkpoint, load_checkpoint
from dpcnet.nn.init import as_rng
from dpcnet.nn.losses import softmax_cross_entropy
from dpcnet.nn.mlp import Mlp, MlpTape, mlp_backward, mlp_forward
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.run_config import Mode, NetworkConfig
from dpcnet.spatial.neighbors import NeighborCache, NeighborTable

ModeLike = Union[Mode, str]


@dataclass
class Network:
    """点卷积主干 + 分割/分类两个分支"""
    config: NetworkConfig
    in_features: int
    layers: List[PointConvLayer]
    seg_head: Mlp
    cls_head: Mlp

    @classmethod
    def build(cls, config: NetworkConfig, in_features: int, seed: Optional[int] = None) -> "Network":
        """按配置初始化（同一 seed 参数逐位相同）"""
        if in_features < 1:
            raise DimensionError("输入特征维度必须 ≥ 1")
        rng = as_rng(config.seed if seed is None else seed)
        layers = []
        width = in_features
        for spec in config.layers:
            layers.append(PointConvLayer.create(width, spec, config.kernel_hidden, rng))
            width = spec.out_features
        skip = sum(spec.out_features for spec in config.layers)
        seg_head = Mlp.create([2 * skip, *config.seg_head, config.num_seg_classes], rng)
        cls_head = Mlp.create([skip, *config.cls_head, config.num_cls_classes], rng)
        return cls(config=config, in_features=in_features, layers=layers, seg_head=seg_head, cls_head=cls_head)

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path]) -> Tuple["Network", Checkpoint]:
        """从检查点恢复网络结构与参数"""
        ckpt = load_checkpoint(path)
        try:
            config = NetworkConfig.model_validate(ckpt.extra["network"])
            in_features = int(ckpt.extra["in_features"])
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"检查点缺少网络结构信息: {path}") from e
        net = cls.build(config, in_features)
        net.load_state(ckpt.names, ckpt.arrays)
        return net, ckpt

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def skip_dim(self) -> int:
        return sum(layer.out_features for layer in self.layers)

    def head(self, mode: ModeLike) -> Mlp:
        return self.seg_head if Mode(mode) == Mode.SEGMENTATION else self.cls_head

    def parameters(self) -> List[np.ndarray]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"layers.{i}.")
        yield from self.seg_head.named_parameters("seg_head.")
        yield from self.cls_head.named_parameters("cls_head.")

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def load_state(self, names: Sequence[str], arrays: Sequence[np.ndarray]) -> None:
        """按名字原地载入参数"""
        incoming = dict(zip(names, arrays))
        own = dict(self.named_parameters())
        if set(incoming) != set(own):
            missing = sorted(set(own) - set(incoming))[:3]
            unexpected = sorted(set(incoming) - set(own))[:3]
            raise CheckpointError(f"参数名不匹配，缺少 {missing}，多余 {unexpected}")
        for name, param in own.items():
            value = np.asarray(incoming[name], dtype=np.float64)
            if value.shape != param.shape:
                raise CheckpointError(f"参数 {name} 形状 {value.shape} 与网络 {param.shape} 不一致")
            param[...] = value

    def copy(self) -> "Network":
        return Network(
            config=self.config,
            in_features=self.in_features,
            layers=[
                PointConvLayer(kernel=layer.kernel.copy(), projection=layer.projection.copy(), k=layer.k, d=layer.d)
                for layer in self.layers
            ],
            seg_head=self.seg_head.copy(),
            cls_head=self.cls_head.copy(),
        )


def build_network(config: NetworkConfig, in_features: int, seed: Optional[int] = None) -> Network:
    return Network.build(config, in_features, seed)


def parameter_count(net: Network) -> int:
    return net.parameter_count()


@dataclass
class NetworkTape:
    """整网前向缓存"""
    mode: Mode
    valid: np.ndarray
    layer_tapes: List[LayerTape]
    skip: np.ndarray  # N×ΣF
    global_argmax: np.ndarray  # ΣF 个行号
    head_tape: MlpTape
    tables: List[NeighborTable] = field(default_factory=list)


@dataclass
class NetworkGrads:
    """与 Network.parameters() 顺序对齐的梯度，外加输入特征梯度"""
    layers: List[LayerGrads]
    seg_head: List[np.ndarray]
    cls_head: List[np.ndarray]
    features: np.ndarray

    def as_list(self) -> List[np.ndarray]:
        grads = []
        for layer in self.layers:
            grads += layer.as_list()
        return grads + self.seg_head + self.cls_head


def layer_tables(
    net: Network,
    cloud: PointCloud,
    cache: Optional[NeighborCache] = None,
) -> List[NeighborTable]:
    """每层用自己的 (k, d) 取近邻表；相同 (k, d) 的层共享一次搜索"""
    cache = cache or NeighborCache(cloud)
    return [cache.get(layer.k, layer.d) for layer in net.layers]


def trunk_forward(
    net: Network,
    cloud: PointCloud,
    tables: Sequence[NeighborTable],
) -> Tuple[np.ndarray, List[LayerTape]]:
    """主干前向，返回 skip 拼接特征与逐层缓存"""
    if cloud.in_features != net.in_features:
        raise DimensionError(f"输入特征维度 {cloud.in_features} 与网络 {net.in_features} 不一致")
    if len(tables) != net.depth:
        raise DimensionError(f"需要 {net.depth} 张近邻表，实际 {len(tables)}")
    h = cloud.features
    outputs, tapes = [], []
    for layer, table in zip(net.layers, tables):
        h, tape = layer_forward(layer, cloud.positions, h, table, cloud.valid)
        outputs.append(h)
        tapes.append(tape)
    return np.hstack(outputs), tapes


def trunk_backward(
    net: Network,
    tapes: Sequence[LayerTape],
    skip_grad: np.ndarray,
) -> Tuple[List[LayerGrads], np.ndarray]:
    """主干反向：skip 梯度按层切开，与上层回传的梯度相加"""
    offsets = np.cumsum([0] + [layer.out_features for layer in net.layers])
    layer_grads: List[LayerGrads] = [None] * net.depth
    upstream = None
    for i in reversed(range(net.depth)):
        grad = skip_grad[:, offsets[i]:offsets[i + 1]]
        if upstream is not None:
            grad = grad + upstream
        layer_grads[i] = layer_backward(net.layers[i], tapes[i], grad)
        upstream = layer_grads[i].features
    return layer_grads, upstream


def network_forward(
    net: Network,
    cloud: PointCloud,
    mode: ModeLike,
    cache: Optional[NeighborCache] = None,
    tables: Optional[Sequence[NeighborTable]] = None,
) -> Tuple[np.ndarray, NetworkTape]:
    """
    整网前向

    Args:
        cloud: 至少 1 个有效点
        mode: segmentation 返回 N×K（填充行为 0），classification 返回 1×C
        cache: 近邻缓存，默认新建
        tables: 直接给定逐层近邻表（测试用），优先于 cache

    Returns:
        (logits, 反向缓存)
    """
    mode = Mode(mode)
    if cloud.n_valid == 0:
        raise DegenerateBatchError("点云没有有效点")
    tables = list(tables) if tables is not None else layer_tables(net, cloud, cache)
    skip, tapes = trunk_forward(net, cloud, tables)

    valid_rows = np.flatnonzero(cloud.valid)
    argmax = valid_rows[skip[valid_rows].argmax(axis=0)]
    global_feature = skip[argmax, np.arange(skip.shape[1])]

    if mode == Mode.SEGMENTATION:
        head_input = np.hstack([skip, np.broadcast_to(global_feature, skip.shape)])
        logits, head_tape = mlp_forward(net.seg_head, head_input)
        logits[~cloud.valid] = 0.0
    else:
        logits, head_tape = mlp_forward(net.cls_head, global_feature[None, :])

    tape = NetworkTape(
        mode=mode,
        valid=cloud.valid,
        layer_tapes=tapes,
        skip=skip,
        global_argmax=argmax,
        head_tape=head_tape,
        tables=tables,
    )
    return logits, tape


def network_backward(net: Network, tape: NetworkTape, logits_grad: np.ndarray) -> NetworkGrads:
    """
    整网反向

    全局最大池化的梯度只流向每个通道的最大行（并列时取行号最小者）；
    未使用的分支梯度为 0。
    """
    skip_dim = net.skip_dim
    n_rows = tape.skip.shape[0]
    logits_grad = np.array(logits_grad, dtype=np.float64)
    skip_grad = np.zeros((n_rows, skip_dim))
    seg_grads = [np.zeros_like(p) for p in net.seg_head.parameters()]
    cls_grads = [np.zeros_like(p) for p in net.cls_head.parameters()]

    if tape.mode == Mode.SEGMENTATION:
        logits_grad[~tape.valid] = 0.0
        head_grads, head_input_grad = mlp_backward(net.seg_head, tape.head_tape, logits_grad)
        seg_grads = head_grads.as_list()
        skip_grad += head_input_grad[:, :skip_dim]
        global_grad = head_input_grad[:, skip_dim:].sum(axis=0)
    else:
        head_grads, head_input_grad = mlp_backward(net.cls_head, tape.head_tape, logits_grad)
        cls_grads = head_grads.as_list()
        global_grad = head_input_grad[0]

    # 每个通道恰好一个最大行，(行, 列) 不重复
    skip_grad[tape.global_argmax, np.arange(skip_dim)] += global_grad

    layer_grads, feature_grad = trunk_backward(net, tape.layer_tapes, skip_grad)
    return NetworkGrads(layers=layer_grads, seg_head=seg_grads, cls_head=cls_grads, features=feature_grad)


def targets_of(cloud: PointCloud, mode: ModeLike, num_classes: int) -> Tuple[np.ndarray, np.ndarray]:
    """取损失/指标用的 (labels, mask)"""
    mode = Mode(mode)
    if mode == Mode.SEGMENTATION:
        if not cloud.has_labels:
            raise MissingLabelsError("分割训练需要逐点标签")
        cloud.check_labels(num_classes)
        return cloud.labels, cloud.valid
    label = cloud.class_label
    if label is None:
        raise MissingLabelsError("分类训练需要点云类别标签")
    if not 0 <= label < num_classes:
        raise ClassRangeError(f"类别 {label} 超出 [0, {num_classes})")
    return np.array([label], dtype=np.int64), np.ones(1, dtype=bool)


@dataclass
class LossResult:
    loss: float
    grads: NetworkGrads
    logits: np.ndarray
    labels: np.ndarray
    mask: np.ndarray


def loss_and_grad(
    net: Network,
    cloud: PointCloud,
    mode: ModeLike,
    cache: Optional[NeighborCache] = None,
) -> LossResult:
    """前向 + 交叉熵 + 反向（分割对有效行取均值）"""
    mode = Mode(mode)
    num_classes = net.config.num_seg_classes if mode == Mode.SEGMENTATION else net.config.num_cls_classes
    labels, mask = targets_of(cloud, mode, num_classes)
    logits, tape = network_forward(net, cloud, mode, cache)
    loss, logits_grad = softmax_cross_entropy(logits, labels, mask)
    grads = network_backward(net, tape, logits_grad)
    return LossResult(loss=loss, grads=grads, logits=logits, labels=labels, mask=mask)


def predict(
    net: Network,
    cloud: PointCloud,
    mode: ModeLike,
    cache: Optional[NeighborCache] = None,
) -> np.ndarray:
    """
    预测类别：分割返回 N 个标签（填充行为 -1），分类返回长度 1 的数组
    """
    mode = Mode(mode)
    logits, _ = network_forward(net, cloud, mode, cache)
    pred = logits.argmax(axis=1)
    if mode == Mode.SEGMENTATION:
        pred[~cloud.valid] = -1
    return pred


def describe(net: Network) -> Dict[str, object]:
    """网络结构摘要（日志与 show-config 用）"""
    info = {
        "in_features": net.in_features,
        "layers": [(layer.out_features, layer.k, layer.d) for layer in net.layers],
        "skip_dim": net.skip_dim,
        "parameters": net.parameter_count(),
    }
    logger.debug(f"网络结构: {info}")
    return info
