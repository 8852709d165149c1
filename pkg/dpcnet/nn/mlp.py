"""
稠密 MLP：隐藏层 ReLU，输出层恒等；手写前向/反向
矩阵统一用 C 连续的 float64 numpy 数组（行优先）
"""
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from dpcnet.exceptions import DimensionError, NonFiniteError
from dpcnet.nn.init import SeedLike, init_params


def as_matrix(x, cols: int = None, name: str = "input") -> np.ndarray:
    """校验并转换为二维 float64 矩阵"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"{name} 必须是二维矩阵，实际 {x.shape}")
    if cols is not None and x.shape[1] != cols:
        raise DimensionError(f"{name} 列数应为 {cols}，实际 {x.shape[1]}")
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{name} 含 NaN/Inf")
    return x


@dataclass
class Mlp:
    """多层感知机，layers[i] = (W: out×in, b: out)"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("权重与偏置层数必须一致且至少一层")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError(f"第 {i} 层形状不合法: W{w.shape}, b{b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionError(f"第 {i} 层输入维度 {w.shape[1]} 与上一层输出 {self.weights[i - 1].shape[0]} 不衔接")

    @classmethod
    def create(cls, dims: Sequence[int], seed: SeedLike) -> "Mlp":
        layers = init_params(dims, seed)
        return cls(weights=[w for w, _ in layers], biases=[b for _, b in layers])

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def parameters(self) -> List[np.ndarray]:
        """参数列表 [W0, b0, W1, b1, ...]（原地更新会作用到模型上）"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}{i}.weight", w
            yield f"{prefix}{i}.bias", b

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Mlp":
        return Mlp(weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])


@dataclass
class MlpTape:
    """前向缓存：每层输入与预激活"""
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


@dataclass
class MlpGrads:
    """与 Mlp.parameters() 顺序对齐的梯度"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def as_list(self) -> List[np.ndarray]:
        grads = []
        for w, b in zip(self.weights, self.biases):
            grads += [w, b]
        return grads


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def mlp_forward(mlp: Mlp, x: np.ndarray) -> Tuple[np.ndarray, MlpTape]:
    """
    前向：仿射层之间接 ReLU，输出层不加激活

    Args:
        x: B×in 输入

    Returns:
        (B×out 输出, 反向所需缓存)
    """
    h = as_matrix(x, mlp.in_dim)
    tape = MlpTape()
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        tape.inputs.append(h)
        z = h @ w.T + b
        tape.pre_activations.append(z)
        h = relu(z) if i < last else z
    return h, tape


def mlp_backward(mlp: Mlp, tape: MlpTape, output_grad: np.ndarray) -> Tuple[MlpGrads, np.ndarray]:
    """
    反向：给定输出梯度，返回参数梯度与输入梯度（ReLU 在 0 处的次梯度取 0）
    """
    if len(tape.inputs) != len(mlp.weights):
        raise DimensionError("缓存与模型层数不一致")
    batch = tape.inputs[0].shape[0]
    grad = np.asarray(output_grad, dtype=np.float64)
    if grad.shape != (batch, mlp.out_dim):
        raise DimensionError(f"输出梯度形状应为 {(batch, mlp.out_dim)}，实际 {grad.shape}")

    n_layers = len(mlp.weights)
    weight_grads: List[np.ndarray] = [None] * n_layers
    bias_grads: List[np.ndarray] = [None] * n_layers
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            grad = grad * (tape.pre_activations[i] > 0)
        weight_grads[i] = grad.T @ tape.inputs[i]
        bias_grads[i] = grad.sum(axis=0)
        grad = grad @ mlp.weights[i]
    return MlpGrads(weights=weight_grads, biases=bias_grads), grad
