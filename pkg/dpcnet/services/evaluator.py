"""
评估服务：整片点云前向，累加混淆矩阵
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from loguru import logger

from dpcnet.metrics.confusion import ConfusionMatrix, cm_update
from dpcnet.models.network import ModeLike, Network, network_forward, targets_of
from dpcnet.nn.losses import softmax_cross_entropy
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.schemas.reports import MetricsReport
from dpcnet.schemas.run_config import Mode
from dpcnet.utils.artifacts import write_artifact
from dpcnet.utils.logger import carry_context


@dataclass
class Evaluation:
    confusion: ConfusionMatrix
    loss: float  # 各片点云损失的平均


def num_classes_of(net: Network, mode: ModeLike) -> int:
    if Mode(mode) == Mode.SEGMENTATION:
        return net.config.num_seg_classes
    return net.config.num_cls_classes


def _evaluate_one(net: Network, cloud: PointCloud, mode: Mode, num_classes: int):
    labels, mask = targets_of(cloud, mode, num_classes)
    logits, _ = network_forward(net, cloud, mode)
    loss, _ = softmax_cross_entropy(logits, labels, mask)
    counts = cm_update(ConfusionMatrix.zeros(num_classes), logits.argmax(axis=1), labels, mask)
    return counts, loss


def evaluate_split(
    net: Network,
    clouds: Sequence[PointCloud],
    mode: ModeLike,
    threads: int = 1,
) -> Evaluation:
    """对每片点云求损失与混淆矩阵；结果按输入顺序归约"""
    mode = Mode(mode)
    num_classes = num_classes_of(net, mode)
    if threads > 1 and len(clouds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            task = carry_context(_evaluate_one)
            results = list(pool.map(lambda c: task(net, c, mode, num_classes), clouds))
    else:
        results = [_evaluate_one(net, c, mode, num_classes) for c in clouds]

    confusion = ConfusionMatrix.zeros(num_classes)
    for counts, _ in results:
        confusion = confusion + counts
    loss = float(np.mean([loss for _, loss in results])) if results else 0.0
    return Evaluation(confusion=confusion, loss=loss)


def evaluate(net: Network, clouds: Sequence[PointCloud], mode: ModeLike, threads: int = 1) -> ConfusionMatrix:
    """分割：所有有效点计入；分类：每片点云计一次"""
    return evaluate_split(net, clouds, mode, threads).confusion


def cmd_eval(
    checkpoint: Union[str, Path],
    clouds: Sequence[PointCloud],
    mode: Optional[ModeLike] = None,
    out: Optional[Union[str, Path]] = None,
    threads: int = 1,
) -> MetricsReport:
    """
    用检查点评估数据集，可选写出 metrics.json

    mode 缺省时取检查点记录的模式。
    """
    net, ckpt = Network.from_checkpoint(checkpoint)
    mode = Mode(mode or ckpt.extra.get("mode", Mode.SEGMENTATION.value))
    logger.info(f"评估 {len(clouds)} 片点云（{mode.value}），检查点 {checkpoint}")
    try:
        confusion = evaluate(net, clouds, mode, threads)
    except Exception as e:
        logger.error(f"评估失败: {str(e)}")
        raise
    report = confusion.to_report(ckpt.config_hash)
    logger.info(f"mIoU={report.miou:.4f}  mAcc={report.macc:.4f}  oAcc={report.oacc:.4f}")
    if out is not None:
        write_artifact(Path(out) / "metrics.json", report)
    return report
