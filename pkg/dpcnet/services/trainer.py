"""
训练服务

每个 epoch 重新抽取随机裁剪块，按 batch_size 分组；同一批内各裁剪块的
前向/反向在线程池里并行，梯度按提交顺序求和后取平均，再做一步 Adam。
"""
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from loguru import logger

from dpcnet.exceptions import CheckpointError, EmptyInputError, TrainingDivergedError
from dpcnet.metrics.confusion import ConfusionMatrix, cm_update
from dpcnet.models.network import LossResult, Network, loss_and_grad
from dpcnet.nn.checkpoint import load_checkpoint, save_checkpoint
from dpcnet.nn.optim import Adam
from dpcnet.pointcloud.cloud import PointCloud
from dpcnet.pointcloud.crop import random_crop
from dpcnet.schemas.reports import HistoryRow, TrainHistory
from dpcnet.schemas.run_config import Mode, RunConfig
from dpcnet.services.datagen import load_dataset
from dpcnet.services.evaluator import evaluate_split, num_classes_of
from dpcnet.utils.artifacts import write_artifact
from dpcnet.utils.logger import carry_context, run_log

FINAL_CHECKPOINT = "final.ckpt"
HISTORY_FILE = "history.json"
_CROP_ATTEMPTS = 10


@dataclass
class TrainResult:
    net: Network
    history: TrainHistory
    optimizer: Adam
    checkpoint: Optional[Path] = None


class Trainer:
    """训练器：持有网络、优化器与历史"""

    def __init__(self, net: Network, config: RunConfig, threads: Optional[int] = None):
        self.net = net
        self.config = config
        self.mode = Mode(config.mode)
        self.threads = threads or config.threads
        training = config.training
        self.steps_per_epoch = math.ceil(training.crops_per_epoch / training.batch_size)
        self.optimizer = Adam(
            net.parameters(),
            schedule=training.lr,
            steps_per_epoch=self.steps_per_epoch,
            weight_decay=training.weight_decay,
        )
        self.history = TrainHistory(config_hash=config.config_hash(), mode=self.mode.value, seed=config.seed)
        self.start_epoch = 0

    # ---------- 检查点 ----------

    def _extra(self, epoch: int) -> dict:
        return {
            "network": self.net.config.model_dump(mode="json"),
            "in_features": self.net.in_features,
            "mode": self.mode.value,
            "epoch": epoch,
            "seed": self.config.seed,
            "history": [row.model_dump(mode="json") for row in self.history.rows],
        }

    def save(self, path: Union[str, Path], epoch: int) -> Path:
        return save_checkpoint(
            path,
            list(self.net.named_parameters()),
            config_hash=self.config.config_hash(),
            adam=self.optimizer.state,
            extra=self._extra(epoch),
        )

    def resume(self, path: Union[str, Path]) -> None:
        """恢复参数、Adam 状态、步数与历史"""
        ckpt = load_checkpoint(path)
        if ckpt.extra.get("network") != self.net.config.model_dump(mode="json"):
            raise CheckpointError(f"检查点 {path} 的网络结构与当前配置不一致")
        self.net.load_state(ckpt.names, ckpt.arrays)
        if ckpt.adam is not None:
            self.optimizer.state = ckpt.adam
        self.start_epoch = int(ckpt.extra.get("epoch", 0))
        self.history.rows = [HistoryRow.model_validate(row) for row in ckpt.extra.get("history", [])]
        logger.info(f"从检查点 {path} 继续：epoch={self.start_epoch}, step={self.optimizer.step_count}")

    # ---------- 数据 ----------

    def draw_crops(self, dataset: Sequence[PointCloud], epoch: int) -> List[PointCloud]:
        """抽取本轮的训练样本；随机源只取决于 (seed, epoch)"""
        rng = np.random.default_rng([self.config.seed, epoch])
        spec = self.config.training.crop
        crops = []
        for _ in range(self.config.training.crops_per_epoch):
            cloud = dataset[int(rng.integers(len(dataset)))]
            if spec is None:
                crops.append(cloud)
                continue
            for attempt in range(_CROP_ATTEMPTS):
                crop = random_crop(cloud, spec, rng)
                if crop.n_valid >= 2:
                    break
                logger.warning(f"裁剪块只有 {crop.n_valid} 个有效点，重新抽取（第 {attempt + 1} 次）")
            else:
                logger.warning("多次裁剪都为空，改用整片点云")
                crop = cloud
            crops.append(crop)
        return crops

    # ---------- 训练 ----------

    def _batch_results(self, batch: Sequence[PointCloud]) -> List[LossResult]:
        if self.threads <= 1 or len(batch) == 1:
            return [loss_and_grad(self.net, crop, self.mode) for crop in batch]
        task = carry_context(loss_and_grad)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            if self.config.deterministic:
                return list(pool.map(lambda c: task(self.net, c, self.mode), batch))
            futures = [pool.submit(task, self.net, c, self.mode) for c in batch]
            return [f.result() for f in as_completed(futures)]

    def train_step(self, batch: Sequence[PointCloud]) -> List[LossResult]:
        """一步：批内梯度取平均后更新参数"""
        results = self._batch_results(batch)
        step = self.optimizer.step_count
        grads = [g.copy() for g in results[0].grads.as_list()]
        for result in results[1:]:
            for acc, g in zip(grads, result.grads.as_list()):
                acc += g
        for g in grads:
            g /= len(results)
        loss = float(np.mean([r.loss for r in results]))
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"损失非有限: {loss}", step=step)
        lr = self.optimizer.step(grads)
        logger.debug(f"step {step + 1}: loss={loss:.6f}, lr={lr:.3e}")
        return results

    def fit(
        self,
        dataset: Sequence[PointCloud],
        val_dataset: Optional[Sequence[PointCloud]] = None,
        checkpoint_dir: Optional[Union[str, Path]] = None,
    ) -> TrainResult:
        if not dataset:
            raise EmptyInputError("训练集为空")
        training = self.config.training
        num_classes = num_classes_of(self.net, self.mode)
        checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None

        logger.info("=" * 60)
        logger.info(
            f"开始训练: mode={self.mode.value}, epochs={training.epochs}, "
            f"steps/epoch={self.steps_per_epoch}, params={self.net.parameter_count()}"
        )
        logger.info("=" * 60)

        for epoch in range(self.start_epoch, training.epochs):
            crops = self.draw_crops(dataset, epoch)
            confusion = ConfusionMatrix.zeros(num_classes)
            losses = []
            lr = self.optimizer.current_lr()
            for start in range(0, len(crops), training.batch_size):
                lr = self.optimizer.current_lr()
                results = self.train_step(crops[start:start + training.batch_size])
                for r in results:
                    losses.append(r.loss)
                    confusion = cm_update(confusion, r.logits.argmax(axis=1), r.labels, r.mask)

            row = HistoryRow(
                epoch=epoch + 1,
                step=self.optimizer.step_count,
                lr=lr,
                loss=float(np.mean(losses)),
                oacc=confusion.oacc(),
                miou=confusion.miou(),
                macc=confusion.macc(),
            )
            if val_dataset:
                val = evaluate_split(self.net, val_dataset, self.mode, self.threads)
                row.val_loss = val.loss
                row.val_oacc = val.confusion.oacc()
                row.val_miou = val.confusion.miou()
                row.val_macc = val.confusion.macc()
            self.history.rows.append(row)
            logger.info(
                f"epoch {row.epoch}/{training.epochs}: loss={row.loss:.4f} oAcc={row.oacc:.4f} mIoU={row.miou:.4f}"
                + (f" | val mIoU={row.val_miou:.4f}" if row.val_miou is not None else "")
            )
            every = training.checkpoint_every
            if checkpoint_dir and every and (epoch + 1) % every == 0:
                self.save(checkpoint_dir / f"epoch_{epoch + 1:03d}.ckpt", epoch + 1)

        final = None
        if checkpoint_dir:
            final = self.save(checkpoint_dir / FINAL_CHECKPOINT, max(training.epochs, self.start_epoch))
        return TrainResult(net=self.net, history=self.history, optimizer=self.optimizer, checkpoint=final)


def train(
    net: Network,
    dataset: Sequence[PointCloud],
    config: RunConfig,
    val_dataset: Optional[Sequence[PointCloud]] = None,
    checkpoint_dir: Optional[Union[str, Path]] = None,
    resume: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """训练入口；发散时抛 TrainingDivergedError"""
    trainer = Trainer(net, config)
    if resume:
        trainer.resume(resume)
    try:
        return trainer.fit(dataset, val_dataset, checkpoint_dir)
    except TrainingDivergedError as e:
        logger.error(f"训练发散: {str(e)}")
        raise


def cmd_train(config: RunConfig) -> TrainResult:
    """按配置加载数据、建网、训练并写出检查点与历史"""
    config.check_paths()
    dataset = load_dataset(config.paths.data, config.data_format)
    val_dataset = load_dataset(config.paths.val_data, config.data_format) if config.paths.val_data else None
    net = Network.build(config.network, dataset[0].in_features, seed=config.seed)

    with run_log(config.paths.reports, config.config_hash()):
        logger.info(f"配置哈希 {config.config_hash()}，种子 {config.seed}，{len(dataset)} 片训练点云")
        result = train(
            net,
            dataset,
            config,
            val_dataset=val_dataset,
            checkpoint_dir=config.paths.checkpoints,
            resume=config.resume,
        )
    write_artifact(Path(config.paths.reports) / HISTORY_FILE, result.history)
    return result
