"""
点云模型、文件读写、裁剪与合成场景
"""
import numpy as np
import pytest

from dpcnet.exceptions import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    NonFiniteError,
    ParseError,
)
from dpcnet.pointcloud import (
    BEACON_CLASSES,
    SHAPE_CLASSES,
    PointCloud,
    beacon_quadrant,
    gen_synthetic_scene,
    load_cloud,
    pad_cloud,
    random_crop,
    sample_crop,
    save_cloud,
)
from dpcnet.schemas.run_config import CropSpec


class TestPointCloud:
    def test_arrays_are_read_only(self, small_cloud):
        with pytest.raises(ValueError):
            small_cloud.positions[0, 0] = 1.0

    def test_padding_rows_must_be_zero(self):
        with pytest.raises(DimensionError):
            PointCloud(positions=np.ones((2, 3)), features=np.ones((2, 1)), valid=[True, False])

    def test_rejects_nan(self):
        positions = np.zeros((2, 3))
        positions[1, 2] = np.nan
        with pytest.raises(NonFiniteError):
            PointCloud(positions=positions, features=np.ones((2, 1)))

    def test_rejects_empty(self):
        with pytest.raises(EmptyInputError):
            PointCloud(positions=np.zeros((0, 3)), features=np.zeros((0, 1)))

    def test_class_label_prefers_meta(self):
        cloud = PointCloud(
            positions=np.zeros((3, 3)) + np.arange(3)[:, None],
            features=np.ones((3, 1)),
            labels=[0, 0, 1],
            meta={"class_label": 4},
        )
        assert cloud.class_label == 4
        assert cloud.subset([0, 1]).class_label == 4

    def test_class_label_majority_vote(self):
        cloud = PointCloud(positions=np.arange(9.0).reshape(3, 3), features=np.ones((3, 1)), labels=[2, 1, 2])
        assert cloud.class_label == 2


class TestXyzText:
    def test_round_trip_preserves_rows(self, tmp_path):
        cloud = gen_synthetic_scene(3, "rooms", n_points=200)
        path = save_cloud(cloud, tmp_path / "rooms.xyz")
        loaded = load_cloud(path)
        assert loaded.n_points == cloud.n_points
        np.testing.assert_allclose(loaded.positions, cloud.positions, atol=1e-6)
        np.testing.assert_allclose(loaded.features, cloud.features, atol=1e-6)
        np.testing.assert_array_equal(loaded.labels, cloud.labels)

    def test_positions_only_gets_constant_feature(self, tmp_path):
        path = tmp_path / "bare.xyz"
        path.write_text("0 0 0\n1 0 0\n0 1 0\n", encoding="utf-8")
        cloud = load_cloud(path)
        assert cloud.in_features == 1
        np.testing.assert_array_equal(cloud.features, np.ones((3, 1)))
        assert not cloud.has_labels

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "commented.xyz"
        path.write_text("# x y z label\n\n0 0 0 1\n1 1 1 0\n", encoding="utf-8")
        cloud = load_cloud(path)
        np.testing.assert_array_equal(cloud.labels, [1, 0])

    def test_parse_error_reports_line_number(self, tmp_path):
        path = tmp_path / "broken.xyz"
        path.write_text("0 0 0\n1 1 1\n2 2 oops\n", encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            load_cloud(path)
        assert excinfo.value.line_number == 3

    def test_inconsistent_columns(self, tmp_path):
        path = tmp_path / "ragged.xyz"
        path.write_text("0 0 0\n1 1 1 1\n", encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            load_cloud(path)
        assert excinfo.value.line_number == 2

    @pytest.mark.parametrize("row", ["0 0", "0 0 0 0 0", "0 0 0 1 1 1 1 1"])
    def test_bad_arity(self, tmp_path, row):
        path = tmp_path / "arity.xyz"
        path.write_text(row + "\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_cloud(path)

    def test_non_integer_label(self, tmp_path):
        path = tmp_path / "label.xyz"
        path.write_text("0 0 0 1.5\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_cloud(path)

    def test_invalid_utf8_reports_line(self, tmp_path):
        path = tmp_path / "bytes.xyz"
        path.write_bytes(b"0 0 0\n1 \xff 1\n")
        with pytest.raises(ParseError) as excinfo:
            load_cloud(path)
        assert excinfo.value.line_number == 2

    @pytest.mark.parametrize("label", ["nan", "inf", "-1"])
    def test_label_must_be_finite_and_non_negative(self, tmp_path, label):
        path = tmp_path / "label.xyz"
        path.write_text(f"0 0 0 {label}\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_cloud(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.xyz"
        path.write_text("", encoding="utf-8")
        with pytest.raises(EmptyInputError):
            load_cloud(path)

    def test_only_valid_rows_written(self, tmp_path, small_cloud):
        cloud = PointCloud(positions=small_cloud.positions, features=np.ones((small_cloud.n_points, 1)))
        padded = pad_cloud(cloud, cloud.n_points + 5)
        loaded = load_cloud(save_cloud(padded, tmp_path / "padded.xyz"))
        assert loaded.n_points == cloud.n_points

    def test_unsupported_feature_width(self, tmp_path, small_cloud):
        with pytest.raises(DimensionError):
            save_cloud(small_cloud, tmp_path / "two.xyz")


class TestPly:
    def test_round_trip_with_normals(self, tmp_path):
        cloud = gen_synthetic_scene(1, "shapes", n_points=100, shape="cube")
        loaded = load_cloud(save_cloud(cloud, tmp_path / "cube.ply"))
        np.testing.assert_allclose(loaded.positions, cloud.positions, atol=1e-6)
        np.testing.assert_array_equal(loaded.labels, cloud.labels)

    def test_binary_rejected(self, tmp_path):
        path = tmp_path / "binary.ply"
        path.write_text(
            "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n",
            encoding="utf-8",
        )
        with pytest.raises(ParseError):
            load_cloud(path)

    def test_uchar_colors_scaled(self, tmp_path):
        path = tmp_path / "colors.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            "property int class\nend_header\n"
            "0 0 0 255 0 0 1\n1 0 0 0 0 255 0\n",
            encoding="utf-8",
        )
        cloud = load_cloud(path)
        np.testing.assert_allclose(cloud.features, [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_array_equal(cloud.labels, [1, 0])

    def test_binary_payload_rejected_at_format_line(self, tmp_path):
        path = tmp_path / "payload.ply"
        header = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
        path.write_bytes(header + b"\x00\xff\xfe\x80" * 3)
        with pytest.raises(ParseError) as excinfo:
            load_cloud(path)
        assert excinfo.value.line_number == 2

    @pytest.mark.parametrize(
        "header_line, line_number",
        [
            ("element vertex many", 3),
            ("element vertex -2", 3),
            ("element vertex", 3),
            ("property float", 4),
            ("property list uchar", 4),
        ],
    )
    def test_malformed_header_line(self, tmp_path, header_line, line_number):
        lines = ["ply", "format ascii 1.0", "element vertex 1", "property float x", "property float y",
                 "property float z", "end_header", "0 0 0"]
        lines[line_number - 1] = header_line
        path = tmp_path / "header.ply"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            load_cloud(path)
        assert excinfo.value.line_number == line_number

    def test_truncated_body(self, tmp_path):
        path = tmp_path / "short.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n1 1 1\n",
            encoding="utf-8",
        )
        with pytest.raises(ParseError) as excinfo:
            load_cloud(path)
        assert excinfo.value.line_number == 10

    def test_missing_axis(self, tmp_path):
        path = tmp_path / "noz.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n",
            encoding="utf-8",
        )
        with pytest.raises(ParseError):
            load_cloud(path)


class TestCrop:
    def test_budget_and_padding(self):
        cloud = gen_synthetic_scene(0, "rooms", n_points=2000)
        spec = CropSpec(side_length=1.0, point_budget=1500, seed=3)
        crop = sample_crop(cloud, cloud.positions[0], spec)
        assert crop.n_points == 1500
        assert 0 < crop.n_valid < 1500
        assert not crop.valid[crop.n_valid:].any()
        np.testing.assert_array_equal(crop.positions[~crop.valid], 0.0)
        inside = np.abs(crop.positions[crop.valid] - cloud.positions[0]) <= 0.5
        assert inside.all()

    def test_same_seed_same_crop(self):
        cloud = gen_synthetic_scene(0, "rooms", n_points=1000)
        spec = CropSpec(side_length=3.0, point_budget=100, seed=11)
        a = sample_crop(cloud, [2.0, 2.0, 1.0], spec)
        b = sample_crop(cloud, [2.0, 2.0, 1.0], spec)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_empty_region_is_all_padding(self):
        cloud = gen_synthetic_scene(0, "rooms", n_points=500)
        crop = sample_crop(cloud, [100.0, 100.0, 100.0], CropSpec(point_budget=10))
        assert crop.n_points == 10
        assert crop.n_valid == 0

    def test_random_crop_reproducible(self):
        cloud = gen_synthetic_scene(2, "rooms", n_points=1000)
        spec = CropSpec(point_budget=64)
        a = random_crop(cloud, spec, np.random.default_rng(5))
        b = random_crop(cloud, spec, np.random.default_rng(5))
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_crop_drops_row_bound_meta(self):
        cloud = gen_synthetic_scene(0, "beacon", n_points=200)
        crop = sample_crop(cloud, [2.0, 2.0, 0.0], CropSpec(point_budget=50))
        assert "beacon_index" not in crop.meta
        assert "crop_center" in crop.meta


class TestSynthetic:
    @pytest.mark.parametrize("kind", ["rooms", "beacon", "shapes"])
    def test_deterministic(self, kind):
        a = gen_synthetic_scene(9, kind, n_points=300)
        b = gen_synthetic_scene(9, kind, n_points=300)
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.meta == b.meta

    def test_different_seeds_differ(self):
        a = gen_synthetic_scene(1, "rooms", n_points=300)
        b = gen_synthetic_scene(2, "rooms", n_points=300)
        assert not np.array_equal(a.positions, b.positions)

    def test_rooms_has_all_classes(self):
        cloud = gen_synthetic_scene(4, "rooms")
        assert cloud.n_points == 4096
        assert set(np.unique(cloud.labels)) == {0, 1, 2}

    def test_beacon_labels_follow_quadrant(self):
        cloud = gen_synthetic_scene(7, "beacon")
        beacon = np.asarray(cloud.meta["beacon_position"])
        assert 1.0 <= beacon[0] <= 3.0 and 1.0 <= beacon[1] <= 3.0
        np.testing.assert_array_equal(cloud.labels, beacon_quadrant(beacon, cloud.positions))
        index = cloud.meta["beacon_index"]
        np.testing.assert_array_equal(cloud.features[index], [1.0, 0.0, 0.0])
        others = np.delete(cloud.features, index, axis=0)
        np.testing.assert_array_equal(others, 0.5)
        assert len(BEACON_CLASSES) == 4

    def test_beacon_quadrant_bits(self):
        beacon = np.array([1.0, 1.0, 0.0])
        positions = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [2.0, 2.0, 0.0]])
        np.testing.assert_array_equal(beacon_quadrant(beacon, positions), [0, 1, 2, 3])

    @pytest.mark.parametrize("shape", SHAPE_CLASSES)
    def test_shapes_class_label(self, shape):
        cloud = gen_synthetic_scene(0, "shapes", n_points=128, shape=shape)
        assert cloud.class_label == SHAPE_CLASSES.index(shape)
        np.testing.assert_allclose(np.linalg.norm(cloud.features, axis=1), 1.0, atol=1e-9)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            gen_synthetic_scene(0, "forest")
