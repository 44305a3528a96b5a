import numpy as np
import pytest

from adt.nn import AdamOptimizer, Gradients, Mlp, SgdOptimizer, gradient_check, make_optimizer


def tiny_net(sizes, output_activation="identity", seed=0):
    return Mlp(sizes, output_activation, rng=np.random.default_rng(seed))


class TestForward:
    def test_linear_identity_layer(self):
        net = tiny_net([2, 1])
        net.weights[0][:] = [[2.0], [3.0]]
        net.biases[0][:] = [1.0]
        out = net.forward(np.array([1.0, 1.0]))
        assert out[0] == 6.0

    def test_relu_blocks_negative_preactivation(self):
        net = tiny_net([1, 1, 1])
        net.weights[0][:] = [[-1.0]]
        net.biases[0][:] = [0.0]
        net.weights[1][:] = [[5.0]]
        net.biases[1][:] = [0.5]
        out = net.forward(np.array([2.0]))  # hidden = max(-2, 0) = 0
        assert out[0] == 0.5

    def test_sigmoid_output_at_zero_logit(self):
        net = tiny_net([1, 1], output_activation="sigmoid")
        net.weights[0][:] = [[0.0]]
        net.biases[0][:] = [0.0]
        assert net.forward(np.array([3.0]))[0] == 0.5

    def test_batch_shape(self):
        net = tiny_net([3, 5, 2])
        out = net.forward(np.zeros((7, 3)))
        assert out.shape == (7, 2)

    def test_single_vector_is_squeezed(self):
        net = tiny_net([3, 2])
        assert net.forward(np.zeros(3)).shape == (2,)

    def test_rejects_wrong_input_width(self):
        net = tiny_net([3, 2])
        with pytest.raises(ValueError, match="features"):
            net.forward(np.zeros(4))

    def test_rejects_single_layer_spec(self):
        with pytest.raises(ValueError):
            tiny_net([4])

    def test_rejects_unknown_output_activation(self):
        with pytest.raises(ValueError, match="activation"):
            tiny_net([2, 1], output_activation="tanh")


class TestInit:
    def test_seeded_init_is_deterministic(self):
        a = tiny_net([4, 8, 2], seed=42)
        b = tiny_net([4, 8, 2], seed=42)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_different_seeds_differ(self):
        a = tiny_net([4, 8, 2], seed=1)
        b = tiny_net([4, 8, 2], seed=2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_fan_in_uniform_bounds_and_zero_biases(self):
        net = tiny_net([6, 64, 2], seed=5)
        for w, fan_in in zip(net.weights, [6, 64]):
            limit = np.sqrt(6.0 / fan_in)
            assert np.all(np.abs(w) <= limit)
        for b in net.biases:
            assert np.all(b == 0.0)

    def test_n_params(self):
        net = tiny_net([6, 8, 2])
        assert net.n_params == 6 * 8 + 8 + 8 * 2 + 2


class TestBackward:
    def test_hand_computed_linear_gradient(self):
        # y = 2x + 1 at x=3 gives 7; summed-squared-error vs 5 has
        # dL/dy = 2(7-5) = 4, so dW = 3*4 = 12 and db = 4.
        net = tiny_net([1, 1])
        net.weights[0][:] = [[2.0]]
        net.biases[0][:] = [1.0]
        out, cache = net.forward_cache(np.array([3.0]))
        assert out[0, 0] == 7.0
        grads = net.backward(cache, 2.0 * (out - 5.0))
        assert grads.weights[0][0, 0] == 12.0
        assert grads.biases[0][0] == 4.0

    def test_relu_gate_zeroes_upstream_gradient(self):
        net = tiny_net([1, 1, 1])
        net.weights[0][:] = [[1.0]]
        net.biases[0][:] = [-1.0]  # pre-activation -0.5 < 0 for x = 0.5
        net.weights[1][:] = [[3.0]]
        net.biases[1][:] = [0.0]
        out, cache = net.forward_cache(np.array([0.5]))
        grads = net.backward(cache, np.ones_like(out))
        assert grads.weights[0][0, 0] == 0.0
        assert grads.biases[0][0] == 0.0
        assert grads.biases[1][0] == 1.0

    def test_sigmoid_output_derivative(self):
        net = tiny_net([1, 1], output_activation="sigmoid")
        net.weights[0][:] = [[0.0]]
        net.biases[0][:] = [0.0]
        out, cache = net.forward_cache(np.array([4.0]))
        grads = net.backward(cache, np.ones_like(out))
        # dy/dz = y(1-y) = 0.25 at y = 0.5; dW = x * 0.25
        assert grads.weights[0][0, 0] == 1.0
        assert grads.biases[0][0] == 0.25

    def test_batch_gradients_are_summed(self):
        net = tiny_net([1, 1])
        net.weights[0][:] = [[1.0]]
        net.biases[0][:] = [0.0]
        x = np.array([[1.0], [2.0]])
        out, cache = net.forward_cache(x)
        grads = net.backward(cache, np.ones_like(out))
        assert grads.weights[0][0, 0] == 3.0  # 1*1 + 2*1
        assert grads.biases[0][0] == 2.0

    def test_rejects_mismatched_error_shape(self):
        net = tiny_net([2, 2])
        out, cache = net.forward_cache(np.zeros(2))
        with pytest.raises(ValueError, match="shape"):
            net.backward(cache, np.zeros((3, 2)))


class TestGradientCheck:
    def test_identity_output_net(self):
        net = tiny_net([3, 5, 2], seed=9)
        rng = np.random.default_rng(1)
        err = gradient_check(net, rng.normal(size=3), rng.normal(size=2))
        assert err < 1e-6

    def test_sigmoid_output_net(self):
        net = tiny_net([4, 6, 3], output_activation="sigmoid", seed=10)
        rng = np.random.default_rng(2)
        err = gradient_check(net, rng.normal(size=4), rng.uniform(size=3))
        assert err < 1e-6

    def test_batch_input(self):
        net = tiny_net([2, 4, 1], seed=11)
        rng = np.random.default_rng(3)
        err = gradient_check(net, rng.normal(size=(5, 2)), rng.normal(size=(5, 1)))
        assert err < 1e-6

    def test_rejects_large_networks(self):
        net = tiny_net([10, 20, 10])  # 430 parameters
        with pytest.raises(ValueError, match="200"):
            gradient_check(net, np.zeros(10), np.zeros(10))


class TestOptimizers:
    def test_sgd_step_is_exact(self):
        net = tiny_net([1, 1])
        net.weights[0][:] = [[1.0]]
        net.biases[0][:] = [0.5]
        grads = Gradients([np.array([[4.0]])], [np.array([2.0])])
        SgdOptimizer(lr=0.1).step(net, grads)
        assert net.weights[0][0, 0] == 1.0 - 0.1 * 4.0
        assert net.biases[0][0] == 0.5 - 0.1 * 2.0

    def test_adam_first_step_formula(self):
        # with zero state the first update is lr * g / (|g| + eps)
        net = tiny_net([1, 1])
        net.weights[0][:] = [[1.0]]
        net.biases[0][:] = [0.0]
        g_w, g_b = 4.0, -2.0
        grads = Gradients([np.array([[g_w]])], [np.array([g_b])])
        opt = AdamOptimizer(lr=1e-3)
        opt.step(net, grads)
        expected_w = 1.0 - 1e-3 * g_w / (abs(g_w) + 1e-8)
        expected_b = 0.0 - 1e-3 * g_b / (abs(g_b) + 1e-8)
        assert net.weights[0][0, 0] == pytest.approx(expected_w, rel=1e-12)
        assert net.biases[0][0] == pytest.approx(expected_b, rel=1e-12)

    def test_adam_accumulates_state(self):
        net = tiny_net([1, 1])
        grads = Gradients([np.array([[1.0]])], [np.array([1.0])])
        opt = AdamOptimizer(lr=1e-3)
        opt.step(net, grads)
        opt.step(net, grads)
        assert opt.t == 2

    def test_adam_converges_on_quadratic(self):
        # minimize (w - 3)^2 via its gradient 2(w - 3)
        net = tiny_net([1, 1])
        net.weights[0][:] = [[0.0]]
        net.biases[0][:] = [0.0]
        opt = AdamOptimizer(lr=0.05)
        for _ in range(2000):
            g = 2.0 * (net.weights[0][0, 0] - 3.0)
            opt.step(net, Gradients([np.array([[g]])], [np.array([0.0])]))
        assert net.weights[0][0, 0] == pytest.approx(3.0, abs=1e-3)

    def test_make_optimizer(self):
        assert isinstance(make_optimizer("adam", 1e-3), AdamOptimizer)
        assert isinstance(make_optimizer("sgd", 1e-2), SgdOptimizer)
        with pytest.raises(ValueError, match="unknown"):
            make_optimizer("rmsprop", 1e-3)

    def test_rejects_non_positive_lr(self):
        with pytest.raises(ValueError):
            AdamOptimizer(lr=0.0)
        with pytest.raises(ValueError):
            SgdOptimizer(lr=-1.0)


class TestCloneAndSync:
    def test_copy_parameters_from(self):
        a = tiny_net([2, 3, 1], seed=1)
        b = tiny_net([2, 3, 1], seed=2)
        b.copy_parameters_from(a)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_copy_rejects_shape_mismatch(self):
        a = tiny_net([2, 3, 1])
        b = tiny_net([2, 4, 1])
        with pytest.raises(ValueError, match="layer sizes"):
            b.copy_parameters_from(a)

    def test_clone_is_independent(self):
        a = tiny_net([2, 3, 1], seed=1)
        b = a.clone()
        b.weights[0][0, 0] += 1.0
        assert a.weights[0][0, 0] != b.weights[0][0, 0]


class TestWeightFile:
    def test_round_trip_is_exact(self, tmp_path):
        net = tiny_net([3, 7, 2], output_activation="sigmoid", seed=13)
        path = str(tmp_path / "net.w")
        net.save(path)
        loaded = Mlp.load(path)
        assert loaded.layer_sizes == net.layer_sizes
        assert loaded.output_activation == "sigmoid"
        for w1, w2 in zip(net.weights, loaded.weights):
            np.testing.assert_array_equal(w1, w2)
        for b1, b2 in zip(net.biases, loaded.biases):
            np.testing.assert_array_equal(b1, b2)

    def test_loaded_net_predicts_identically(self, tmp_path):
        net = tiny_net([4, 9, 3], seed=21)
        path = str(tmp_path / "net.w")
        net.save(path)
        loaded = Mlp.load(path)
        x = np.random.default_rng(0).normal(size=(6, 4))
        np.testing.assert_array_equal(net.forward(x), loaded.forward(x))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "net.w"
        net = tiny_net([2, 2])
        net.save(str(path))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="magic"):
            Mlp.load(str(path))

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "net.w"
        net = tiny_net([2, 2])
        net.save(str(path))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="bytes"):
            Mlp.load(str(path))

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "net.w"
        path.write_bytes(b"ADT")
        with pytest.raises(ValueError, match="truncated"):
            Mlp.load(str(path))

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "net.w"
        net = tiny_net([2, 2])
        net.save(str(path))
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version"):
            Mlp.load(str(path))
