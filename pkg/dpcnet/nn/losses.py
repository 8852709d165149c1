"""
带掩码的 softmax 交叉熵
"""
from typing import Tuple

import numpy as np

from dpcnet.exceptions import ClassRangeError, DegenerateBatchError, DimensionError


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """减去行最大值后计算，logit 量级到 1e6 仍然有限"""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray = None,
) -> Tuple[float, np.ndarray]:
    """
    对掩码选中的行求 -log softmax(logit)[label] 的均值

    Args:
        logits: B×K
        labels: B 个整数标签（被屏蔽的行不检查）
        mask: B 个布尔值，默认全选

    Returns:
        (loss, B×K 的 logit 梯度；被屏蔽行梯度为 0)
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DimensionError(f"logits 必须是 B×K，实际 {logits.shape}")
    batch, num_classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    mask = np.ones(batch, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if labels.shape != (batch,) or mask.shape != (batch,):
        raise DimensionError(f"labels/mask 长度应为 {batch}")

    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise DegenerateBatchError("所有行都被屏蔽，无法计算损失")
    picked = labels[rows]
    if (picked < 0).any() or (picked >= num_classes).any():
        raise ClassRangeError(f"标签超出 [0, {num_classes})")

    log_probs = log_softmax(logits[rows])
    count = len(rows)
    loss = float(-log_probs[np.arange(count), picked].sum() / count)

    grad = np.zeros_like(logits)
    probs = np.exp(log_probs)
    probs[np.arange(count), picked] -= 1.0
    grad[rows] = probs / count
    return loss, grad
