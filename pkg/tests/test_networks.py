import numpy as np
import pytest

from hpmgen.errors import TrainingError, ValidationError
from hpmgen.networks import (
    NetworkParams,
    adam_step,
    forward,
    forward_batch,
    from_flat,
    init_adam,
    init_glorot,
)

from conftest import linear_net


class TestGlorotInit:
    def test_parameter_count_paper_architecture(self):
        net = init_glorot([52, 100, 100, 100, 1], seed=0)
        assert net.n_params == 25601  # 52*100+100 + 2*(100*100+100) + 100*1+1

    def test_same_seed_bit_identical(self):
        a = init_glorot([5, 8, 1], seed=42)
        b = init_glorot([5, 8, 1], seed=42)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_distinct_seeds_differ(self):
        a = init_glorot([5, 8, 1], seed=1)
        b = init_glorot([5, 8, 1], seed=2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_weight_bound_and_zero_biases(self):
        net = init_glorot([7, 11, 3, 1], seed=9)
        for w, (fan_in, fan_out) in zip(net.weights, zip(net.layer_sizes, net.layer_sizes[1:])):
            assert np.abs(w).max() <= np.sqrt(6.0 / (fan_in + fan_out))
        for b in net.biases:
            assert np.all(b == 0.0)

    @pytest.mark.parametrize("sizes", [[], [3], [3, 0, 1], [0, 1]])
    def test_bad_layer_sizes_rejected(self, sizes):
        with pytest.raises(ValidationError):
            init_glorot(sizes, seed=0)


class TestForward:
    def test_zero_params_give_zero(self):
        net = init_glorot([4, 6, 1], seed=0)
        zero = from_flat(net.layer_sizes, np.zeros(net.n_params))
        assert forward(zero, np.ones(4)) == 0.0

    def test_zero_weights_yield_final_bias(self):
        net = linear_net([0.0, 0.0], bias=0.75)
        assert forward(net, np.array([3.0, -1.0])) == 0.75

    def test_single_tanh_neuron_at_zero(self):
        # widths [1,1,1], inner weight 1, biases 0, outer weight 1: tanh(0) = 0
        net = NetworkParams(
            (1, 1, 1),
            (np.array([[1.0]]), np.array([[1.0]])),
            (np.zeros(1), np.zeros(1)),
        )
        assert forward(net, np.array([0.0])) == 0.0

    def test_linear_net_direct_arithmetic(self):
        net = linear_net([2.0], bias=1.0)  # y = 2x + 1
        assert forward(net, np.array([3.0])) == 7.0

    def test_final_layer_linearity_in_weights(self, rng):
        net = init_glorot([3, 5, 1], seed=4)
        x = rng.uniform(-1, 1, 3)
        base = forward(net, x)
        delta = 0.37
        unit = int(rng.integers(5))
        hidden_activation = np.tanh(x @ net.weights[0] + net.biases[0])[unit]
        perturbed_w = tuple(w.copy() for w in net.weights)
        perturbed_w[1][unit, 0] += delta
        perturbed = NetworkParams(net.layer_sizes, perturbed_w, net.biases)
        assert forward(perturbed, x) - base == pytest.approx(delta * hidden_activation, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        net = init_glorot([4, 6, 1], seed=0)
        with pytest.raises(ValidationError):
            forward(net, np.ones(5))
        with pytest.raises(ValidationError):
            forward_batch(net, np.ones((3, 5)))

    def test_batch_matches_scalar(self, rng):
        net = init_glorot([6, 9, 1], seed=8)
        batch = rng.uniform(-1, 1, (11, 6))
        out = forward_batch(net, batch)
        assert out.shape == (11,)
        for row, val in zip(batch, out):
            # batched GEMM and single GEMV may differ in the last bit
            assert forward(net, row) == pytest.approx(val, rel=1e-14)


class TestFlatRoundTrip:
    def test_to_flat_with_flat(self, rng):
        net = init_glorot([4, 7, 2, 1], seed=5)
        flat = net.to_flat()
        assert flat.shape == (net.n_params,)
        rebuilt = net.with_flat(flat)
        for a, b in zip(rebuilt.weights, net.weights):
            assert np.array_equal(a, b)
        other = from_flat(net.layer_sizes, flat)
        for a, b in zip(other.biases, net.biases):
            assert np.array_equal(a, b)

    def test_flat_length_checked(self):
        net = init_glorot([4, 7, 1], seed=5)
        with pytest.raises(ValidationError):
            net.with_flat(np.zeros(net.n_params + 1))
        with pytest.raises(ValidationError):
            from_flat(net.layer_sizes, np.zeros(3))


class TestAdam:
    def test_first_step_moves_by_lr_sign(self):
        params = np.array([1.0, -2.0, 0.5])
        grad = np.array([3.0, -0.25, 1e-3])
        state = init_adam(3)
        new, state = adam_step(params, grad, state, lr=0.01)
        # with bias correction the first step is -lr*g/(|g| + eps)
        expected = params - 0.01 * grad / (np.abs(grad) + state.epsilon)
        assert np.allclose(new, expected, rtol=0, atol=1e-15)
        assert state.step_count == 1

    def test_zero_gradient_keeps_params(self):
        params = np.array([1.0, 2.0])
        new, state = adam_step(params, np.zeros(2), init_adam(2), lr=0.1)
        assert np.array_equal(new, params)
        assert state.step_count == 1

    def test_scalar_quadratic_converges(self):
        # minimize (w - 3)^2 from w = 0: |w - 3| < 1e-2 after 500 steps at lr 0.1
        w = np.array([0.0])
        state = init_adam(1)
        for _ in range(500):
            grad = 2.0 * (w - 3.0)
            w, state = adam_step(w, grad, state, lr=0.1)
        assert abs(w[0] - 3.0) < 1e-2

    def test_deterministic(self):
        params = np.array([0.3, -0.6])
        grad = np.array([0.1, 0.2])
        a1, s1 = adam_step(params, grad, init_adam(2), lr=0.05)
        a2, s2 = adam_step(params, grad, init_adam(2), lr=0.05)
        assert np.array_equal(a1, a2)
        assert np.array_equal(s1.first_moment, s2.first_moment)

    def test_nonfinite_gradient_rejected(self):
        with pytest.raises(TrainingError, match="index 1"):
            adam_step(np.zeros(3), np.array([0.0, np.nan, 1.0]), init_adam(3), lr=0.1)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            adam_step(np.zeros(3), np.zeros(4), init_adam(3), lr=0.1)

    def test_state_invariants(self):
        with pytest.raises(ValidationError):
            init_adam(2).__class__(1, np.zeros(2), -np.ones(2))
