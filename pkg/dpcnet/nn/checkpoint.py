"""
检查点读写
格式：第一行 JSON 头（magic、version、shapes、config_hash、adam、extra），
随后是小端 float64 数据：参数，然后（可选）Adam 的 m 与 v
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from dpcnet.exceptions import CheckpointError
from dpcnet.nn.optim import AdamState

MAGIC = "DPCNET-CKPT"
VERSION = 1
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    """检查点内容"""
    names: List[str]
    arrays: List[np.ndarray]
    config_hash: str = ""
    adam: Optional[AdamState] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(zip(self.names, self.arrays))


def save_checkpoint(
    path: Union[str, Path],
    named_params: Sequence[Tuple[str, np.ndarray]],
    config_hash: str = "",
    adam: Optional[AdamState] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """写检查点（相同输入逐字节相同）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [name for name, _ in named_params]
    arrays = [np.asarray(a, dtype=np.float64) for _, a in named_params]
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "shapes": [[name, list(a.shape)] for name, a in zip(names, arrays)],
        "config_hash": config_hash,
        "adam": None if adam is None else {
            "t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
        },
        "extra": extra or {},
    }
    blocks = arrays + (list(adam.m) + list(adam.v) if adam is not None else [])
    payload = b"".join(np.ascontiguousarray(b, dtype=_DTYPE).tobytes() for b in blocks)
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    path.write_bytes(head + b"\n" + payload)
    logger.debug(f"检查点已写入 {path}（{len(names)} 个参数张量）")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """读检查点并校验魔数、版本与数据长度"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"无法读取检查点 {path}: {e}") from e
    head, sep, payload = raw.partition(b"\n")
    if not sep:
        raise CheckpointError(f"检查点缺少头部: {path}")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点头部不是合法 JSON: {path}") from e
    if header.get("magic") != MAGIC:
        raise CheckpointError(f"不是 DPCNet 检查点: {path}")
    if header.get("version") != VERSION:
        raise CheckpointError(f"不支持的检查点版本 {header.get('version')}")

    shapes = [(name, tuple(shape)) for name, shape in header["shapes"]]
    sizes = [int(np.prod(shape)) for _, shape in shapes]
    n_blocks = 3 if header.get("adam") else 1
    expected = sum(sizes) * n_blocks * _DTYPE.itemsize
    if len(payload) != expected:
        raise CheckpointError(f"检查点数据长度 {len(payload)} 与头部描述 {expected} 不一致")

    flat = np.frombuffer(payload, dtype=_DTYPE).astype(np.float64)
    arrays, offset = [], 0
    for block in range(n_blocks):
        for (_, shape), size in zip(shapes, sizes):
            arrays.append(flat[offset:offset + size].reshape(shape).copy())
            offset += size
    n = len(shapes)
    adam = None
    if header.get("adam"):
        meta = header["adam"]
        adam = AdamState(m=arrays[n:2 * n], v=arrays[2 * n:], t=int(meta["t"]),
                         beta1=meta["beta1"], beta2=meta["beta2"], eps=meta["eps"])
    return Checkpoint(
        names=[name for name, _ in shapes],
        arrays=arrays[:n],
        config_hash=header.get("config_hash", ""),
        adam=adam,
        extra=header.get("extra", {}),
    )
