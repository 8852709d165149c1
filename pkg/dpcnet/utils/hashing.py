"""
规范化 JSON 与短哈希（配置哈希、产物指纹）
"""
import hashlib
import json
from typing import Any


def canonical_json(payload: Any) -> str:
    """键排序、无空白的 JSON"""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def short_hash(payload: Any, length: int = 16) -> str:
    """sha256(规范化 JSON) 的前 length 位十六进制"""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:length]
