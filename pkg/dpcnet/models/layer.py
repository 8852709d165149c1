"""
（空洞）点卷积层

对每个有效点 i，聚合集 A_i = 近邻(i) ∪ {i}：
    a_i = (1/|A_i|) Σ_{j∈A_i} f_j ⊙ g(p_i − p_j; θ)
    y_i = ReLU(W a_i + b)
填充点输出 0。核函数 g 是 3 → hidden → F_in 的 MLP，参数量与 k、d 无关。
"""
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from dpcnet.exceptions import DimensionError, NonFiniteError
from dpcnet.nn.init import SeedLike, as_rng
from dpcnet.nn.mlp import Mlp, MlpGrads, MlpTape, mlp_backward, mlp_forward, relu
from dpcnet.schemas.run_config import LayerSpec
from dpcnet.spatial.neighbors import NeighborTable

Neighbors = Union[NeighborTable, np.ndarray]


@dataclass
class PointConvLayer:
    """一个点卷积单元：核函数 MLP + 逐点仿射投影"""
    kernel: Mlp  # g(·; θ)：相对位置 → F_in 维权重
    projection: Mlp  # 单层仿射 F_in → F_out（ReLU 在层内施加）
    k: int
    d: int

    def __post_init__(self):
        if self.kernel.in_dim != 3:
            raise DimensionError(f"核函数输入必须是 3 维相对位置，实际 {self.kernel.in_dim}")
        if self.kernel.out_dim != self.projection.in_dim:
            raise DimensionError(
                f"核函数输出 {self.kernel.out_dim} 必须等于输入特征维度 {self.projection.in_dim}"
            )
        if len(self.projection.weights) != 1:
            raise DimensionError("投影必须是单层仿射")

    @classmethod
    def create(
        cls,
        in_features: int,
        spec: LayerSpec,
        kernel_hidden: Sequence[int] = (64,),
        seed: SeedLike = 0,
    ) -> "PointConvLayer":
        rng = as_rng(seed)
        kernel = Mlp.create([3, *kernel_hidden, in_features], rng)
        projection = Mlp.create([in_features, spec.out_features], rng)
        return cls(kernel=kernel, projection=projection, k=spec.k, d=spec.d)

    @property
    def in_features(self) -> int:
        return self.projection.in_dim

    @property
    def out_features(self) -> int:
        return self.projection.out_dim

    def parameters(self) -> List[np.ndarray]:
        return self.kernel.parameters() + self.projection.parameters()

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        yield from self.kernel.named_parameters(f"{prefix}kernel.")
        yield from self.projection.named_parameters(f"{prefix}projection.")

    def parameter_count(self) -> int:
        return self.kernel.parameter_count() + self.projection.parameter_count()


@dataclass
class LayerTape:
    """层前向缓存"""
    aggregation: np.ndarray  # N×S，第 0 列为自身
    kernel_tape: MlpTape
    kernel_out: np.ndarray  # N×S×F_in
    gathered: np.ndarray  # N×S×F_in
    aggregated: np.ndarray  # N×F_in
    projection_tape: MlpTape
    pre_activation: np.ndarray  # N×F_out
    valid: np.ndarray


@dataclass
class LayerGrads:
    """层梯度；features 是对输入特征的梯度"""
    kernel: MlpGrads
    projection: MlpGrads
    features: np.ndarray

    def as_list(self) -> List[np.ndarray]:
        return self.kernel.as_list() + self.projection.as_list()


def _neighbor_indices(layer: PointConvLayer, neighbors: Neighbors, n_rows: int, valid: np.ndarray) -> np.ndarray:
    """取出近邻索引并检查元数"""
    indices = neighbors.indices if isinstance(neighbors, NeighborTable) else np.asarray(neighbors, dtype=np.int64)
    if indices.ndim != 2 or indices.shape[0] != n_rows:
        raise DimensionError(f"近邻表形状应为 {n_rows}×k，实际 {indices.shape}")
    arity = indices.shape[1]
    # 有效点太少时 k 会被降到 有效点数 - 1
    if arity != layer.k and not (arity < layer.k and arity == int(valid.sum()) - 1):
        raise DimensionError(f"近邻元数 {arity} 与层的 k={layer.k} 不一致")
    if indices.size and (indices.min() < 0 or indices.max() >= n_rows):
        raise DimensionError("近邻索引越界")
    return indices


def layer_forward(
    layer: PointConvLayer,
    positions: np.ndarray,
    features: np.ndarray,
    neighbors: Neighbors,
    valid: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, LayerTape]:
    """
    点卷积前向

    Args:
        positions: N×3
        features: N×F_in
        neighbors: 用本层 (k, d) 得到的近邻表（N×k，不含自身）
        valid: N 个布尔值，默认全有效

    Returns:
        (N×F_out 输出, 缓存)
    """
    positions = np.asarray(positions, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    n_rows = positions.shape[0]
    valid = np.ones(n_rows, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if features.shape != (n_rows, layer.in_features):
        raise DimensionError(f"输入特征形状应为 {(n_rows, layer.in_features)}，实际 {features.shape}")
    if not (np.isfinite(positions).all() and np.isfinite(features).all()):
        raise NonFiniteError("点卷积输入含 NaN/Inf")

    indices = _neighbor_indices(layer, neighbors, n_rows, valid)
    aggregation = np.hstack([np.arange(n_rows, dtype=np.int64)[:, None], indices])
    size = aggregation.shape[1]

    relative = positions[:, None, :] - positions[aggregation]  # p_i − p_j
    kernel_flat, kernel_tape = mlp_forward(layer.kernel, relative.reshape(n_rows * size, 3))
    kernel_out = kernel_flat.reshape(n_rows, size, layer.in_features)
    gathered = features[aggregation]
    aggregated = (gathered * kernel_out).sum(axis=1) / size

    pre_activation, projection_tape = mlp_forward(layer.projection, aggregated)
    output = relu(pre_activation)
    output[~valid] = 0.0

    tape = LayerTape(
        aggregation=aggregation,
        kernel_tape=kernel_tape,
        kernel_out=kernel_out,
        gathered=gathered,
        aggregated=aggregated,
        projection_tape=projection_tape,
        pre_activation=pre_activation,
        valid=valid,
    )
    return output, tape


def layer_backward(layer: PointConvLayer, tape: LayerTape, output_grad: np.ndarray) -> LayerGrads:
    """
    点卷积反向

    特征梯度在 j 处对每个 A_i ∋ j 的点 i 累加一项（按行序 bincount 累加，顺序固定）。
    """
    n_rows, size = tape.aggregation.shape
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != (n_rows, layer.out_features):
        raise DimensionError(f"输出梯度形状应为 {(n_rows, layer.out_features)}，实际 {output_grad.shape}")

    grad_pre = output_grad * (tape.pre_activation > 0)
    grad_pre[~tape.valid] = 0.0
    projection_grads, grad_aggregated = mlp_backward(layer.projection, tape.projection_tape, grad_pre)

    grad_product = np.broadcast_to(grad_aggregated[:, None, :] / size, tape.gathered.shape)
    grad_kernel_out = grad_product * tape.gathered
    grad_gathered = grad_product * tape.kernel_out

    kernel_grads, _ = mlp_backward(
        layer.kernel, tape.kernel_tape, grad_kernel_out.reshape(n_rows * size, layer.in_features)
    )

    f_in = layer.in_features
    flat_index = (tape.aggregation[:, :, None] * f_in + np.arange(f_in)).reshape(-1)
    grad_features = np.bincount(
        flat_index, weights=grad_gathered.reshape(-1), minlength=n_rows * f_in
    ).reshape(n_rows, f_in)

    return LayerGrads(kernel=kernel_grads, projection=projection_grads, features=grad_features)
