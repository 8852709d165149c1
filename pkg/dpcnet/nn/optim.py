"""
Adam 优化器与指数衰减学习率
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from dpcnet.exceptions import DimensionError, TrainingDivergedError
from dpcnet.schemas.run_config import LrSchedule


@dataclass
class AdamState:
    """逐参数一阶/二阶矩与步数"""
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> Tuple[Sequence[np.ndarray], AdamState]:
    """
    一步带偏差修正的 Adam（原地更新 params 与 state）

    Raises:
        TrainingDivergedError: 梯度含 NaN/Inf
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError("参数、梯度与优化器状态长度不一致")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise DimensionError(f"第 {i} 个梯度形状 {g.shape} 与参数 {params[i].shape} 不一致")
        if not np.isfinite(g).all():
            raise TrainingDivergedError(f"第 {i} 个参数的梯度非有限", step=state.t)

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


class Adam:
    """把参数列表、状态与学习率调度绑在一起"""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        schedule: LrSchedule = None,
        steps_per_epoch: int = 1,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.schedule = schedule or LrSchedule()
        self.steps_per_epoch = steps_per_epoch
        self.weight_decay = weight_decay
        self.state = AdamState.zeros_like(self.params)

    @property
    def step_count(self) -> int:
        return self.state.t

    def current_lr(self) -> float:
        return self.schedule.lr(self.state.t, self.steps_per_epoch)

    def step(self, grads: Sequence[np.ndarray]) -> float:
        """执行一步更新，返回这一步使用的学习率"""
        lr = self.current_lr()
        adam_step(self.params, grads, self.state, lr, self.weight_decay)
        return lr
