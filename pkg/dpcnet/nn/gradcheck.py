"""
中心差分梯度检查
"""
from typing import Callable

import numpy as np

from dpcnet.config import settings
from dpcnet.exceptions import DimensionError


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = None) -> np.ndarray:
    """
    对 x 的每个元素做中心差分 (f(x+h) - f(x-h)) / 2h

    x 会被原地扰动后恢复，f 不带参数、读取 x 的当前值。
    """
    h = settings.GRAD_CHECK_STEP if h is None else h
    if not x.flags.c_contiguous:
        raise DimensionError("numeric_grad 需要 C 连续数组（原地扰动）")
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = f()
        flat[i] = original - h
        minus = f()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |analytic - numeric| / max(1, |analytic|)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
