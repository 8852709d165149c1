"""
数据生成、评估、感受野追踪、计时与消融服务
"""
import json

import numpy as np
import pytest

from dpcnet.exceptions import ParseError
from dpcnet.models import Network
from dpcnet.pointcloud import SHAPE_CLASSES, gen_synthetic_scene, load_cloud
from dpcnet.receptive import rf_members_from_colors
from dpcnet.schemas.run_config import (
    AblationConfig,
    BenchConfig,
    LrSchedule,
    NetworkConfig,
    RunConfig,
    TraceConfig,
    TrainingConfig,
    make_layers,
)
from dpcnet.services import (
    bench,
    cmd_bench,
    cmd_eval,
    cmd_gen_data,
    cmd_trace_rf,
    default_target,
    load_dataset,
    rf_grid,
    run_ablation,
    train,
)
from dpcnet.services.ablation import ablation_table, cmd_ablate
from dpcnet.services.benchmark import bench_table
from dpcnet.services.datagen import MANIFEST_NAME
from dpcnet.utils.hashing import short_hash


def small_network(k=4, d=1, depth=2):
    return NetworkConfig(layers=make_layers(depth, 8, k, d), kernel_hidden=[8], seg_head=[8], cls_head=[8])


class TestGenData:
    def test_single_file_and_manifest(self, tmp_path):
        manifest = cmd_gen_data("rooms", seed=0, count=1, out_dir=tmp_path, n_points=300)
        assert sorted(p.name for p in tmp_path.iterdir()) == [MANIFEST_NAME, "rooms_0000.xyz"]
        assert manifest.entries[0].seed == 0

    def test_rerun_identical_bytes(self, tmp_path):
        for run in ("a", "b"):
            cmd_gen_data("beacon", seed=4, count=2, out_dir=tmp_path / run, n_points=100)
        for name in ("beacon_0000.xyz", "beacon_0001.xyz", MANIFEST_NAME):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_counts_match_files(self, tmp_path):
        manifest = cmd_gen_data("rooms", seed=1, count=3, out_dir=tmp_path, n_points=250, format="ply-ascii")
        for entry in manifest.entries:
            assert load_cloud(tmp_path / entry.file).n_points == entry.n_points == 250

    def test_shapes_cycle_classes_and_reload_labels(self, tmp_path):
        cmd_gen_data("shapes", seed=0, count=6, out_dir=tmp_path, n_points=64)
        clouds = load_dataset(tmp_path)
        labels = [cloud.class_label for cloud in clouds]
        assert labels == [0, 1, 2, 3, 4, 0]
        assert len(SHAPE_CLASSES) == 5

    def test_load_dataset_single_file(self, tmp_path):
        cmd_gen_data("rooms", seed=0, count=2, out_dir=tmp_path, n_points=200)
        assert len(load_dataset(tmp_path / "rooms_0001.xyz")) == 1

    def test_manifest_config_hash_tracks_parameters(self, tmp_path):
        first = cmd_gen_data("rooms", seed=2, count=1, out_dir=tmp_path / "a", n_points=100)
        again = cmd_gen_data("rooms", seed=2, count=1, out_dir=tmp_path / "b", n_points=100)
        other = cmd_gen_data("rooms", seed=3, count=1, out_dir=tmp_path / "c", n_points=100)
        assert len(first.config_hash) == 16
        assert first.config_hash == again.config_hash != other.config_hash
        saved = json.loads((tmp_path / "a" / MANIFEST_NAME).read_text(encoding="utf-8"))
        assert saved["config_hash"] == first.config_hash

    def test_corrupt_manifest_is_parse_error(self, tmp_path):
        cmd_gen_data("rooms", seed=0, count=1, out_dir=tmp_path, n_points=50)
        (tmp_path / MANIFEST_NAME).write_bytes(b"{\"kind\": \xff}")
        with pytest.raises(ParseError):
            load_dataset(tmp_path)


class TestEval:
    def test_metrics_file_and_determinism(self, tmp_path):
        cmd_gen_data("rooms", seed=0, count=2, out_dir=tmp_path / "data", n_points=300)
        clouds = load_dataset(tmp_path / "data")
        config = RunConfig(network=small_network(), training=TrainingConfig(epochs=0))
        result = train(Network.build(config.network, 3), clouds, config, checkpoint_dir=tmp_path / "ckpt")

        a = cmd_eval(result.checkpoint, clouds, out=tmp_path / "a")
        b = cmd_eval(result.checkpoint, clouds, out=tmp_path / "b")
        assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()
        assert sum(a.support) == 600
        assert a.config_hash == config.config_hash()
        assert 0.0 <= b.miou <= 1.0


class TestTracer:
    @pytest.fixture(scope="class")
    def cloud(self):
        return gen_synthetic_scene(0, "rooms", n_points=600)

    def test_default_target_is_valid_and_central(self, cloud):
        target = default_target(cloud)
        center = cloud.positions.mean(axis=0)
        dist = np.linalg.norm(cloud.positions - center, axis=1)
        assert dist[target] == dist.min()

    def test_full_grid(self, cloud):
        config = TraceConfig(gradient=False)
        report, fields = rf_grid(cloud, 0, config)
        assert len(report.cells) == 30
        assert all(cell.error is None for cell in report.cells)
        for k, d in config.rows:
            radii = [c.graph.radius for c in report.cells if (c.k, c.d) == (k, d)]
            sizes = [c.graph.size for c in report.cells if (c.k, c.d) == (k, d)]
            assert radii == sorted(radii)
            assert sizes == sorted(sizes)

    def test_grid_threads_match_sequential(self, cloud):
        config = TraceConfig(depths=[1, 3], rows=[(5, 1), (5, 4)])
        sequential, _ = rf_grid(cloud, 3, config)
        threaded, _ = rf_grid(cloud, 3, config, threads=3)
        assert sequential == threaded

    def test_gradient_field_within_graph_field(self, cloud):
        config = TraceConfig(depths=[1, 2, 3], rows=[(5, 1), (5, 4)])
        report, _ = rf_grid(cloud, 10, config)
        for cell in report.cells:
            assert cell.gradient.size <= cell.graph.size

    def test_depth_zero_is_singleton(self, cloud):
        report, _ = rf_grid(cloud, 5, TraceConfig(depths=[0], rows=[(5, 1)]))
        stats = report.cells[0].graph
        assert stats.size == 1
        assert stats.radius == 0.0
        assert stats.coverage == pytest.approx(1 / 600)

    def test_failed_cell_recorded(self):
        small = gen_synthetic_scene(0, "beacon", n_points=10)
        report, fields = rf_grid(small, 50, TraceConfig(depths=[1], rows=[(5, 1)], gradient=False))
        assert report.cells[0].error is not None
        assert fields == [None]

    def test_single_cell_export(self, tmp_path, cloud):
        config = TraceConfig(depth=2, k=5, d=2)
        report = cmd_trace_rf(tmp_path / "rf.ply", config=config, cloud=cloud, target=7)
        members, target = rf_members_from_colors(load_cloud(tmp_path / "rf.ply"))
        assert target == 7
        assert len(members) == report.cells[0].graph.size
        saved = json.loads((tmp_path / "rf.json").read_text(encoding="utf-8"))
        assert saved["target"] == 7
        assert saved["config_hash"] == short_hash(config.model_dump(mode="json"))
        assert len(saved["config_hash"]) == 16

    def test_checkpoint_network(self, tmp_path, cloud):
        network = small_network(k=5, d=2, depth=3)
        config = RunConfig(network=network, training=TrainingConfig(epochs=0))
        result = train(Network.build(network, 3), [cloud], config, checkpoint_dir=tmp_path)
        report = cmd_trace_rf(tmp_path / "rf.ply", checkpoint=result.checkpoint, cloud=cloud, target=0)
        cell = report.cells[0]
        assert (cell.depth, cell.k, cell.d) == (3, 5, 2)
        assert cell.gradient.size <= cell.graph.size


class TestBench:
    def test_samples_and_ratio(self, tmp_path):
        config = BenchConfig(n_points=300, k=5, dilations=[1, 4], depth=2, out_features=8, trials=1)
        report = cmd_bench(config, tmp_path)
        assert [len(v) for v in report.samples_ms.values()] == [1, 1]
        assert report.ratio_to_d1["1"] == 1.0
        assert (tmp_path / "bench.json").is_file()
        assert "ratio_to_d1" in (tmp_path / "bench.txt").read_text(encoding="utf-8")

    def test_median_over_trials(self):
        report = bench(BenchConfig(n_points=200, k=4, dilations=[2], depth=1, out_features=4, trials=3))
        assert report.median_ms["2"] == pytest.approx(float(np.median(report.samples_ms["2"])))
        assert report.ratio_to_d1 == {}
        assert "forward_ms" in bench_table(report)


class TestAblation:
    def ablation_config(self, train_flag):
        run = RunConfig(
            network=small_network(),
            training=TrainingConfig(epochs=1, crops_per_epoch=1, crop=None, lr=LrSchedule(lr0=1e-2)),
        )
        return AblationConfig(
            run=run,
            depths=[1, 2],
            ks=[3, 5],
            dilations=[1, 2, 4],
            dilation_depth=2,
            dilation_k=3,
            timing_points=200,
            timing_trials=1,
            train=train_flag,
        )

    def test_parameter_column_constant_within_depth(self, tmp_path):
        report = cmd_ablate(self.ablation_config(False), tmp_path)
        assert len(report.rows) == 4 + 3
        for depth in (1, 2):
            params = {r.parameters for r in report.rows if r.group == "depth_k" and r.layers == depth}
            assert len(params) == 1
        dilation_params = {r.parameters for r in report.rows if r.group == "dilation"}
        assert len(dilation_params) == 1
        assert [r.d for r in report.rows if r.group == "dilation"] == [1, 2, 4]
        assert all(r.miou is None and r.error is None for r in report.rows)
        assert (tmp_path / "ablation.json").is_file()
        assert "parameters" in (tmp_path / "ablation.txt").read_text(encoding="utf-8")

    def test_training_fills_metrics(self):
        data = [gen_synthetic_scene(s, "rooms", n_points=200) for s in range(2)]
        report = run_ablation(self.ablation_config(True), data[:1], data[1:], threads=2)
        for row in report.rows:
            assert row.error is None
            assert 0.0 <= row.miou <= 1.0
            assert row.seeds == 1
        assert "miou" in ablation_table(report)
