"""
MLP、交叉熵、Adam、学习率调度与检查点
"""
import numpy as np
import pytest

from dpcnet.exceptions import (
    CheckpointError,
    ClassRangeError,
    DegenerateBatchError,
    DimensionError,
    NonFiniteError,
    TrainingDivergedError,
)
from dpcnet.nn import (
    Adam,
    AdamState,
    LrSchedule,
    Mlp,
    adam_step,
    glorot_bound,
    init_params,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    numeric_grad,
    relative_error,
    save_checkpoint,
    softmax_cross_entropy,
)
from dpcnet.services.diagnostics import MLP_CHECK_SIZES, check_mlp, check_softmax_cross_entropy


class TestInit:
    def test_same_seed_same_params(self):
        a = init_params([3, 8, 2], seed=4)
        b = init_params([3, 8, 2], seed=4)
        for (wa, ba), (wb, bb) in zip(a, b):
            np.testing.assert_array_equal(wa, wb)
            np.testing.assert_array_equal(ba, bb)

    def test_glorot_bounds(self):
        for w, b in init_params([16, 32, 4], seed=0):
            bound = glorot_bound(w.shape[1], w.shape[0])
            assert np.abs(w).max() <= bound
            np.testing.assert_array_equal(b, 0.0)

    def test_different_seeds_differ(self):
        assert not np.array_equal(init_params([3, 4], 0)[0][0], init_params([3, 4], 1)[0][0])

    def test_bad_dims(self):
        with pytest.raises(DimensionError):
            init_params([3], seed=0)


class TestMlp:
    def test_forward_by_hand(self):
        mlp = Mlp(
            weights=[np.array([[1.0, -1.0]]), np.array([[2.0]])],
            biases=[np.array([0.5]), np.array([-1.0])],
        )
        out, _ = mlp_forward(mlp, np.array([[1.0, 3.0], [3.0, 1.0]]))
        # 第一行预激活 -1.5 被 ReLU 截断
        np.testing.assert_allclose(out, [[-1.0], [4.0]])

    def test_output_layer_has_no_activation(self):
        mlp = Mlp(weights=[np.array([[-1.0]])], biases=[np.array([0.0])])
        out, _ = mlp_forward(mlp, np.array([[2.0]]))
        assert out[0, 0] == -2.0

    def test_parameter_count(self):
        assert Mlp.create([3, 64, 2], seed=0).parameter_count() == (3 * 64 + 64) + (64 * 2 + 2)

    def test_zero_grad_gives_zero(self, rng):
        mlp = Mlp.create([3, 5, 2], rng)
        _, tape = mlp_forward(mlp, rng.normal(size=(4, 3)))
        grads, x_grad = mlp_backward(mlp, tape, np.zeros((4, 2)))
        for g in grads.as_list():
            np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_array_equal(x_grad, 0.0)

    def test_wrong_width(self, rng):
        with pytest.raises(DimensionError):
            mlp_forward(Mlp.create([3, 2], rng), np.zeros((2, 4)))

    def test_non_finite_input(self, rng):
        with pytest.raises(NonFiniteError):
            mlp_forward(Mlp.create([1, 2], rng), np.array([[np.inf]]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_check(self, seed):
        assert check_mlp(np.random.default_rng(seed)) < 1e-6

    def test_gradient_check_shape(self, monkeypatch):
        created = []
        original = Mlp.create

        def spy(sizes, rng):
            created.append(list(sizes))
            return original(sizes, rng)

        monkeypatch.setattr(Mlp, "create", staticmethod(spy))
        check_mlp(np.random.default_rng(0))
        assert created == [[3, 16, 5]]
        assert MLP_CHECK_SIZES == (3, 16, 5)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((3, 4)), [0, 1, 2])
        assert loss == pytest.approx(np.log(4.0))

    def test_large_logits_stay_finite(self):
        loss, grad = softmax_cross_entropy(np.array([[1e6, -1e6], [-1e6, 1e6]]), [1, 1])
        assert np.isfinite(loss)
        assert np.isfinite(grad).all()
        assert loss == pytest.approx(1e6)

    def test_masked_rows_ignored(self):
        logits = np.array([[5.0, 0.0], [0.0, 5.0]])
        loss_all, _ = softmax_cross_entropy(logits[:1], [0])
        # 被屏蔽行的标签越界也不报错
        loss_masked, grad = softmax_cross_entropy(logits, [0, 99], mask=[True, False])
        assert loss_masked == pytest.approx(loss_all)
        np.testing.assert_array_equal(grad[1], 0.0)

    def test_empty_mask(self):
        with pytest.raises(DegenerateBatchError):
            softmax_cross_entropy(np.zeros((2, 2)), [0, 1], mask=[False, False])

    def test_label_out_of_range(self):
        with pytest.raises(ClassRangeError):
            softmax_cross_entropy(np.zeros((1, 3)), [3])

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_check(self, seed):
        assert check_softmax_cross_entropy(np.random.default_rng(seed)) < 1e-6


class TestGradCheck:
    def test_numeric_grad_of_quadratic(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = numeric_grad(lambda: float((x ** 2).sum()), x)
        np.testing.assert_allclose(grad, 2 * x, rtol=1e-8)
        np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])

    def test_relative_error_floor(self):
        assert relative_error(np.array([1e-9]), np.array([0.0])) == pytest.approx(1e-9)


class TestLrSchedule:
    def test_step_zero_is_lr0(self):
        assert LrSchedule(lr0=0.01).lr(0) == 0.01

    def test_staircase_decay(self):
        schedule = LrSchedule(lr0=1.0, decay_factor=0.5, decay_steps=10)
        assert schedule.lr(9) == 1.0
        assert schedule.lr(10) == 0.5
        assert schedule.lr(25) == 0.25

    def test_defaults_to_epoch_steps(self):
        schedule = LrSchedule(lr0=1.0, decay_factor=0.7)
        assert schedule.lr(3, steps_per_epoch=4) == 1.0
        assert schedule.lr(4, steps_per_epoch=4) == pytest.approx(0.7)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = np.array([1.0, -1.0])
        adam_step([p], [np.array([0.3, -2.0])], AdamState.zeros_like([p]), lr=0.1)
        # 偏差修正后第一步的位移为 lr·sign(g)
        np.testing.assert_allclose(p, [0.9, -0.9], atol=1e-6)

    def test_minimizes_quadratic(self):
        p = np.array([3.0, -4.0])
        optimizer = Adam([p], schedule=LrSchedule(lr0=0.1, decay_factor=1.0))
        for _ in range(500):
            optimizer.step([2 * p])
        np.testing.assert_allclose(p, 0.0, atol=5e-2)
        assert optimizer.step_count == 500

    def test_non_finite_gradient(self):
        p = np.zeros(2)
        with pytest.raises(TrainingDivergedError):
            adam_step([p], [np.array([np.nan, 0.0])], AdamState.zeros_like([p]), lr=0.1)

    def test_shape_mismatch(self):
        p = np.zeros(2)
        with pytest.raises(DimensionError):
            adam_step([p], [np.zeros(3)], AdamState.zeros_like([p]), lr=0.1)


class TestCheckpoint:
    def params(self):
        return [("layer.weight", np.arange(6.0).reshape(2, 3)), ("layer.bias", np.array([0.5, -0.5]))]

    def test_round_trip(self, tmp_path):
        params = self.params()
        state = AdamState(m=[np.ones((2, 3)), np.ones(2)], v=[np.full((2, 3), 2.0), np.full(2, 2.0)], t=7)
        path = save_checkpoint(tmp_path / "a.ckpt", params, config_hash="abc", adam=state, extra={"epoch": 3})
        ckpt = load_checkpoint(path)
        assert ckpt.names == ["layer.weight", "layer.bias"]
        for (_, want), got in zip(params, ckpt.arrays):
            np.testing.assert_array_equal(got, want)
        assert ckpt.config_hash == "abc"
        assert ckpt.adam.t == 7
        np.testing.assert_array_equal(ckpt.adam.v[0], 2.0)
        assert ckpt.extra == {"epoch": 3}

    def test_bytes_deterministic(self, tmp_path):
        a = save_checkpoint(tmp_path / "a.ckpt", self.params(), extra={"b": 1, "a": 2})
        b = save_checkpoint(tmp_path / "b.ckpt", self.params(), extra={"a": 2, "b": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path / "a.ckpt", self.params())
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b'{"magic": "OTHER", "version": 1}\n')
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.ckpt")
