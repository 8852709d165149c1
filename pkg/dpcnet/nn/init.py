"""
参数初始化
Glorot 均匀分布：W ~ U(-a, a)，a = sqrt(6 / (fan_in + fan_out))，偏置为 0
"""
from typing import List, Sequence, Tuple, Union

import numpy as np

from dpcnet.exceptions import DimensionError

SeedLike = Union[int, np.random.Generator]


def as_rng(seed: SeedLike) -> np.random.Generator:
    """整数种子或现成的 Generator 统一成 Generator"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(dims: Sequence[int], seed: SeedLike) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    按层维度 [in, h1, ..., out] 初始化 MLP 参数

    Args:
        dims: 各层宽度，至少两个
        seed: 整数种子（同一种子逐位相同）或共享的 Generator

    Returns:
        [(W: out×in, b: out), ...]
    """
    if len(dims) < 2 or any(int(d) < 1 for d in dims):
        raise DimensionError(f"MLP 维度不合法: {list(dims)}")
    rng = as_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = glorot_bound(fan_in, fan_out)
        weight = rng.uniform(-a, a, size=(fan_out, fan_in))
        bias = np.zeros(fan_out)
        layers.append((weight, bias))
    return layers
