"""
训练、评估与检查点续训
"""
import json

import numpy as np
import pytest

from dpcnet.exceptions import CheckpointError, EmptyInputError, TrainingDivergedError
from dpcnet.models import Network, loss_and_grad
from dpcnet.nn import load_checkpoint
from dpcnet.pointcloud import PointCloud, gen_synthetic_scene
from dpcnet.schemas.run_config import (
    CropSpec,
    LrSchedule,
    Mode,
    NetworkConfig,
    PathsConfig,
    RunConfig,
    TrainingConfig,
    make_layers,
)
from dpcnet.services import Trainer, cmd_train, evaluate, train
from dpcnet.services.trainer import FINAL_CHECKPOINT, HISTORY_FILE


def floor_and_wall(rng, n_points=64):
    """地面 (z=0) 标 0，竖墙 (x=4) 标 1；只能靠局部几何区分"""
    half = n_points // 2
    floor = np.column_stack([rng.uniform(0, 2, half), rng.uniform(0, 2, half), np.zeros(half)])
    wall = np.column_stack([np.full(half, 4.0), rng.uniform(0, 2, half), rng.uniform(0, 2, half)])
    return PointCloud(
        positions=np.vstack([floor, wall]),
        features=np.ones((2 * half, 1)),
        labels=np.repeat([0, 1], half),
    )


def rooms_run(seed=0, epochs=2, threads=1, batch_size=1, crops=2):
    network = NetworkConfig(
        layers=make_layers(2, 8, k=6, d=[1, 2]),
        kernel_hidden=[8],
        seg_head=[16],
        cls_head=[8],
        num_seg_classes=3,
        seed=seed,
    )
    training = TrainingConfig(
        epochs=epochs,
        crops_per_epoch=crops,
        batch_size=batch_size,
        crop=CropSpec(side_length=3.0, point_budget=96),
        lr=LrSchedule(lr0=5e-3, decay_factor=0.9),
    )
    return RunConfig(network=network, training=training, seed=seed, threads=threads)


@pytest.fixture(scope="module")
def rooms_data():
    return [gen_synthetic_scene(s, "rooms", n_points=600) for s in range(3)]


def params_of(net):
    return [p.copy() for p in net.parameters()]


class TestTrain:
    def test_overfit_single_cloud(self):
        cloud = floor_and_wall(np.random.default_rng(0))
        network = NetworkConfig(
            layers=make_layers(2, 16, k=8, d=1),
            kernel_hidden=[16],
            seg_head=[32],
            cls_head=[8],
            num_seg_classes=2,
            seed=0,
        )
        training = TrainingConfig(
            epochs=200,
            crops_per_epoch=1,
            crop=None,
            lr=LrSchedule(lr0=1e-2, decay_factor=1.0),
            checkpoint_every=0,
        )
        config = RunConfig(network=network, training=training)
        result = train(Network.build(network, 1), [cloud], config)
        assert evaluate(result.net, [cloud], Mode.SEGMENTATION).oacc() >= 0.95
        assert result.history.rows[-1].loss < result.history.rows[0].loss

    def test_history_length_and_steps(self, rooms_data):
        config = rooms_run(epochs=3)
        result = train(Network.build(config.network, 3), rooms_data, config)
        assert [row.epoch for row in result.history.rows] == [1, 2, 3]
        assert [row.step for row in result.history.rows] == [2, 4, 6]
        assert result.history.rows[0].lr == 5e-3
        assert all(np.isfinite(row.loss) for row in result.history.rows)

    def test_reproducible_bytes(self, tmp_path, rooms_data):
        config = rooms_run(seed=3)
        paths = []
        for run in ("a", "b"):
            result = train(Network.build(config.network, 3), rooms_data, config, checkpoint_dir=tmp_path / run)
            paths.append(result.checkpoint)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_threads_do_not_change_result(self, rooms_data):
        nets = []
        for threads in (1, 2):
            config = rooms_run(seed=1, threads=threads, batch_size=2, crops=4)
            nets.append(train(Network.build(config.network, 3), rooms_data, config).net)
        for a, b in zip(*(params_of(net) for net in nets)):
            np.testing.assert_array_equal(a, b)

    def test_zero_epochs_writes_initial_params(self, tmp_path, rooms_data):
        config = rooms_run(epochs=0)
        net = Network.build(config.network, 3)
        initial = params_of(net)
        result = train(net, rooms_data, config, checkpoint_dir=tmp_path)
        assert result.history.rows == []
        ckpt = load_checkpoint(tmp_path / FINAL_CHECKPOINT)
        for a, b in zip(ckpt.arrays, initial):
            np.testing.assert_array_equal(a, b)

    def test_resume_continues_step_counter(self, tmp_path, rooms_data):
        short = rooms_run(epochs=2)
        train(Network.build(short.network, 3), rooms_data, short, checkpoint_dir=tmp_path / "short")

        full = rooms_run(epochs=4)
        resumed = train(
            Network.build(full.network, 3),
            rooms_data,
            full,
            resume=tmp_path / "short" / "epoch_002.ckpt",
        )
        straight = train(Network.build(full.network, 3), rooms_data, full)

        assert resumed.optimizer.step_count == 8
        assert [row.epoch for row in resumed.history.rows] == [1, 2, 3, 4]
        for a, b in zip(params_of(resumed.net), params_of(straight.net)):
            np.testing.assert_array_equal(a, b)

    def test_resume_rejects_other_network(self, tmp_path, rooms_data):
        config = rooms_run(epochs=1)
        train(Network.build(config.network, 3), rooms_data, config, checkpoint_dir=tmp_path)
        other = config.model_copy(update={"network": config.network.with_neighborhood(k=4)})
        with pytest.raises(CheckpointError):
            train(Network.build(other.network, 3), rooms_data, other, resume=tmp_path / FINAL_CHECKPOINT)

    def test_validation_metrics_recorded(self, rooms_data):
        config = rooms_run(epochs=1)
        result = train(Network.build(config.network, 3), rooms_data[:2], config, val_dataset=rooms_data[2:])
        row = result.history.rows[0]
        assert row.val_miou is not None
        assert 0.0 <= row.val_oacc <= 1.0

    def test_classification_mode(self):
        shapes = [gen_synthetic_scene(i, "shapes", n_points=64, shape=s)
                  for i, s in enumerate(["sphere", "cube", "cone"])]
        network = NetworkConfig(layers=make_layers(2, 8, k=5, d=1), kernel_hidden=[8], seg_head=[8], cls_head=[8])
        config = RunConfig(
            mode=Mode.CLASSIFICATION,
            network=network,
            training=TrainingConfig(epochs=2, crops_per_epoch=3, crop=None),
        )
        result = train(Network.build(network, 3), shapes, config)
        assert len(result.history.rows) == 2
        assert np.isfinite(result.history.rows[-1].loss)

    def test_divergence_aborts(self, monkeypatch, rooms_data):
        def diverging(net, cloud, mode, cache=None):
            result = loss_and_grad(net, cloud, mode, cache)
            result.loss = float("nan")
            return result

        monkeypatch.setattr("dpcnet.services.trainer.loss_and_grad", diverging)
        config = rooms_run(epochs=1)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(Network.build(config.network, 3), rooms_data, config)
        assert excinfo.value.step == 0

    def test_empty_dataset(self):
        config = rooms_run()
        with pytest.raises(EmptyInputError):
            Trainer(Network.build(config.network, 3), config).fit([])

    def test_crops_depend_only_on_seed_and_epoch(self, rooms_data):
        config = rooms_run(seed=5)
        a = Trainer(Network.build(config.network, 3), config).draw_crops(rooms_data, 1)
        b = Trainer(Network.build(config.network, 3), config).draw_crops(rooms_data, 1)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.positions, y.positions)
            assert x.n_valid >= 2


class TestCmdTrain:
    def test_writes_checkpoints_and_history(self, tmp_path):
        from dpcnet.services import cmd_gen_data

        cmd_gen_data("rooms", seed=0, count=2, out_dir=tmp_path / "data", n_points=400)
        config = rooms_run(epochs=2).model_copy(update={
            "paths": PathsConfig(
                data=str(tmp_path / "data"),
                checkpoints=str(tmp_path / "ckpt"),
                reports=str(tmp_path / "reports"),
            ),
        })
        result = cmd_train(config)
        assert (tmp_path / "ckpt" / "epoch_001.ckpt").is_file()
        assert (tmp_path / "ckpt" / FINAL_CHECKPOINT).is_file()
        history = json.loads((tmp_path / "reports" / HISTORY_FILE).read_text(encoding="utf-8"))
        assert len(history["rows"]) == 2
        assert history["config_hash"] == config.config_hash()
        assert result.checkpoint == tmp_path / "ckpt" / FINAL_CHECKPOINT

    def test_run_log_tagged_with_config_hash(self, tmp_path):
        from dpcnet.services import cmd_gen_data
        from dpcnet.utils.logger import RUN_LOG_NAME

        cmd_gen_data("rooms", seed=0, count=1, out_dir=tmp_path / "data", n_points=300)
        config = rooms_run(epochs=1).model_copy(update={
            "paths": PathsConfig(
                data=str(tmp_path / "data"),
                checkpoints=str(tmp_path / "ckpt"),
                reports=str(tmp_path / "reports"),
            ),
        })
        cmd_train(config)
        lines = (tmp_path / "reports" / RUN_LOG_NAME).read_text(encoding="utf-8").splitlines()
        assert lines
        assert all(config.config_hash() in line for line in lines)

    def test_run_log_includes_worker_threads(self, tmp_path, monkeypatch):
        from loguru import logger

        from dpcnet.services import cmd_gen_data
        from dpcnet.services import trainer as trainer_module
        from dpcnet.utils.logger import RUN_LOG_NAME

        def logged_loss_and_grad(net, crop, mode):
            logger.debug("worker crop done")
            return loss_and_grad(net, crop, mode)

        monkeypatch.setattr(trainer_module, "loss_and_grad", logged_loss_and_grad)
        cmd_gen_data("rooms", seed=0, count=1, out_dir=tmp_path / "data", n_points=300)
        config = rooms_run(epochs=1, threads=2, batch_size=2, crops=2).model_copy(update={
            "paths": PathsConfig(
                data=str(tmp_path / "data"),
                checkpoints=str(tmp_path / "ckpt"),
                reports=str(tmp_path / "reports"),
            ),
        })
        cmd_train(config)
        lines = (tmp_path / "reports" / RUN_LOG_NAME).read_text(encoding="utf-8").splitlines()
        worker_lines = [line for line in lines if "worker crop done" in line]
        assert len(worker_lines) == 2
        assert all(config.config_hash() in line for line in worker_lines)

    def test_carry_context_keeps_run_id_in_pool(self):
        from concurrent.futures import ThreadPoolExecutor

        from loguru import logger

        from dpcnet.utils.logger import carry_context

        seen = []
        handler = logger.add(lambda message: seen.append(message.record["extra"]["run"]), level="DEBUG")
        try:
            with logger.contextualize(run="abc123"):
                task = carry_context(lambda i: logger.debug(f"job {i}"))
                with ThreadPoolExecutor(max_workers=3) as pool:
                    list(pool.map(task, range(6)))
        finally:
            logger.remove(handler)
        assert seen == ["abc123"] * 6
