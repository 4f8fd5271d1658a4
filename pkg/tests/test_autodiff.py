import numpy as np
import pytest
import torch

from hpmgen.autodiff import (
    DerivativeBundle,
    DiffRequest,
    DifferentiableNetwork,
    evaluate,
    input_derivatives,
    loss_parameter_gradient,
)
from hpmgen.errors import TrainingError, ValidationError
from hpmgen.networks import NetworkParams, init_glorot

from conftest import fd_first, fd_second, linear_net, rel_norm_err


class TestEvaluate:
    def test_zero_weights_return_final_bias(self):
        net = init_glorot([4, 6, 1], seed=0)
        flat = np.zeros(net.n_params)
        flat[-1] = 0.125  # final bias is the last flat entry
        zeroed = net.with_flat(flat)
        assert evaluate(zeroed, np.ones(4)) == 0.125

    def test_single_tanh_neuron(self):
        net = NetworkParams(
            (1, 1, 1), (np.array([[1.0]]), np.array([[1.0]])), (np.zeros(1), np.zeros(1))
        )
        assert evaluate(net, np.array([0.0])) == 0.0

    def test_linear_direct(self):
        assert evaluate(linear_net([2.0], bias=1.0), np.array([3.0])) == 7.0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            evaluate(init_glorot([3, 4, 1], seed=0), np.ones(4))


class TestInputDerivatives:
    def test_linear_net_derivatives(self):
        w = np.array([1.5, -2.0, 0.25])
        net = linear_net(w, bias=0.3)
        bundle = input_derivatives(net, np.array([0.1, 0.2, 0.3]), DiffRequest((0, 1, 2), (0, 1)))
        for i in range(3):
            assert bundle.first[i] == pytest.approx(w[i], abs=1e-14)
        assert bundle.second[0] == pytest.approx(0.0, abs=1e-14)
        assert bundle.second[1] == pytest.approx(0.0, abs=1e-14)

    def test_tanh_at_origin(self):
        # y = tanh(x): y'(0) = 1, y''(0) = 0
        net = NetworkParams(
            (1, 1, 1), (np.array([[1.0]]), np.array([[1.0]])), (np.zeros(1), np.zeros(1))
        )
        bundle = input_derivatives(net, np.array([0.0]), DiffRequest((0,), (0,)))
        assert bundle.first[0] == pytest.approx(1.0, abs=1e-15)
        assert bundle.second[0] == pytest.approx(0.0, abs=1e-15)

    def test_three_hidden_layer_mlp_matches_fd(self, rng):
        net = init_glorot([4, 30, 30, 30, 1], seed=123)
        x = rng.uniform(-1, 1, 4)
        bundle = input_derivatives(net, x, DiffRequest((0, 1, 2, 3), (0, 1)))
        ad1 = np.array([bundle.first[i] for i in range(4)])
        or1 = np.array([fd_first(net, x, i) for i in range(4)])
        assert rel_norm_err(ad1, or1) < 1e-5
        ad2 = np.array([bundle.second[i] for i in (0, 1)])
        or2 = np.array([fd_second(net, x, i) for i in (0, 1)])
        assert rel_norm_err(ad2, or2) < 1e-3

    def test_fd_agreement_randomized(self, rng):
        # spot-check here; the acceptance suite runs the 100-pair version
        for _ in range(10):
            din = int(rng.integers(2, 7))
            widths = [din, int(rng.integers(8, 40)), 1]
            net = init_glorot(widths, int(rng.integers(2**31)))
            x = rng.uniform(-1, 1, din)
            bundle = input_derivatives(net, x, DiffRequest(tuple(range(din)), (0,)))
            ad1 = np.array([bundle.first[i] for i in range(din)])
            or1 = np.array([fd_first(net, x, i) for i in range(din)])
            assert rel_norm_err(ad1, or1) < 1e-5
            assert rel_norm_err(bundle.second[0], fd_second(net, x, 0)) < 1e-3

    def test_linearity_of_derivative_operator(self, rng):
        # a*net1 + b*net2 realized as one block-diagonal network
        a, b = 1.7, -0.4
        sizes = (3, 6, 1)
        net1 = init_glorot(sizes, seed=31)
        net2 = init_glorot(sizes, seed=32)
        w_hidden = np.zeros((3, 12))
        w_hidden[:, :6] = net1.weights[0]
        w_hidden[:, 6:] = net2.weights[0]
        b_hidden = np.concatenate([net1.biases[0], net2.biases[0]])
        w_out = np.vstack([a * net1.weights[1], b * net2.weights[1]])
        b_out = a * net1.biases[1] + b * net2.biases[1]
        combined = NetworkParams((3, 12, 1), (w_hidden, w_out), (b_hidden, b_out))

        x = rng.uniform(-1, 1, 3)
        req = DiffRequest((0, 1, 2), (0,))
        bc = input_derivatives(combined, x, req)
        b1 = input_derivatives(net1, x, req)
        b2 = input_derivatives(net2, x, req)
        assert bc.value == pytest.approx(a * b1.value + b * b2.value, rel=1e-12)
        for i in range(3):
            assert bc.first[i] == pytest.approx(a * b1.first[i] + b * b2.first[i], rel=1e-11, abs=1e-13)
        assert bc.second[0] == pytest.approx(a * b1.second[0] + b * b2.second[0], rel=1e-11, abs=1e-13)

    def test_finite_outputs(self, rng):
        net = init_glorot([3, 20, 1], seed=77)
        for _ in range(20):
            x = rng.uniform(-50, 50, 3)
            bundle = input_derivatives(net, x, DiffRequest((0, 1, 2), (0, 1)))
            assert np.isfinite(bundle.value)
            assert all(np.isfinite(v) for v in bundle.first.values())
            assert all(np.isfinite(v) for v in bundle.second.values())

    def test_bad_requests_rejected(self):
        net = init_glorot([3, 4, 1], seed=0)
        with pytest.raises(ValidationError):
            DiffRequest((0, 0), ())
        with pytest.raises(ValidationError):
            input_derivatives(net, np.zeros(3), DiffRequest((3,), ()))


def _residual_loss(xs, ts, sensors):
    """Composite loss containing nested input derivatives of the first net."""

    def loss_fn(sol: DifferentiableNetwork, hid: DifferentiableNetwork) -> torch.Tensor:
        n = len(xs)
        x = torch.tensor(xs.reshape(n, 1), requires_grad=True)
        t = torch.tensor(ts.reshape(n, 1), requires_grad=True)
        sens = torch.from_numpy(sensors).expand(n, len(sensors))
        u = sol(torch.cat([sens, x, t], dim=1))
        ones = torch.ones_like(u)
        u_x, u_t = torch.autograd.grad(u, [x, t], ones, create_graph=True)
        (u_xx,) = torch.autograd.grad(u_x, x, ones, create_graph=True)
        g = u_t - hid(torch.cat([x, t, u, u_x, u_xx], dim=1))
        return (g * g).mean()

    return loss_fn


class TestLossParameterGradient:
    def test_hand_expanded_quadratic(self):
        # loss = (w*1 + b)^2 at w=1, b=0: dL/dw = dL/db = 2
        net = linear_net([1.0], bias=0.0)

        def loss_fn(dn):
            return dn(torch.tensor([[1.0]], dtype=torch.float64))[0, 0] ** 2

        grad = loss_parameter_gradient(loss_fn, [net])
        assert np.allclose(grad, [2.0, 2.0], atol=1e-14)

    def test_zero_at_interpolation_point(self, rng):
        net = init_glorot([3, 8, 1], seed=3)
        x = rng.uniform(-1, 1, 3)
        # target computed on the same path, so the residual is exactly zero
        target = DifferentiableNetwork(net)(torch.tensor(x[None, :]))[0, 0].item()

        def loss_fn(dn):
            pred = dn(torch.tensor(x[None, :]))[0, 0]
            return (pred - target) ** 2

        grad = loss_parameter_gradient(loss_fn, [net])
        assert np.all(grad == 0.0)

    def test_two_network_residual_matches_fd(self, rng):
        from hpmgen.networks import from_flat

        sol = init_glorot([6, 16, 16, 1], seed=51)
        hid = init_glorot([5, 12, 1], seed=52)
        sensors = rng.uniform(-1, 1, 4)
        xs, ts = rng.uniform(0, 1, 5), rng.uniform(0, 10, 5)
        loss_fn = _residual_loss(xs, ts, sensors)

        grad = loss_parameter_gradient(loss_fn, [sol, hid])
        assert grad.shape == (sol.n_params + hid.n_params,)

        flat = np.concatenate([sol.to_flat(), hid.to_flat()])

        def loss_at(vector):
            s = from_flat(sol.layer_sizes, vector[: sol.n_params])
            h = from_flat(hid.layer_sizes, vector[sol.n_params :])
            return float(loss_fn(DifferentiableNetwork(s), DifferentiableNetwork(h)).detach())

        picked = rng.choice(len(flat), 40, replace=False)
        fd = np.empty(len(picked))
        step = 1e-5
        for j, i in enumerate(picked):
            up, down = flat.copy(), flat.copy()
            up[i] += step
            down[i] -= step
            fd[j] = (loss_at(up) - loss_at(down)) / (2 * step)
        assert rel_norm_err(grad[picked], fd) < 1e-4

    def test_gradient_of_sum_is_sum_of_gradients(self, rng):
        net = init_glorot([4, 10, 1], seed=9)
        xa = rng.uniform(-1, 1, 4)
        xb = rng.uniform(-1, 1, 4)

        def loss_a(dn):
            return dn(torch.tensor(xa[None, :]))[0, 0] ** 2

        def loss_b(dn):
            return torch.sin(dn(torch.tensor(xb[None, :]))[0, 0])

        def loss_sum(dn):
            return loss_a(dn) + loss_b(dn)

        ga = loss_parameter_gradient(loss_a, [net])
        gb = loss_parameter_gradient(loss_b, [net])
        gs = loss_parameter_gradient(loss_sum, [net])
        assert rel_norm_err(gs, ga + gb) < 1e-12

    def test_untouched_network_gets_zero_block(self):
        sol = init_glorot([3, 4, 1], seed=1)
        hid = init_glorot([5, 4, 1], seed=2)

        def loss_fn(dn_sol, dn_hid):
            return dn_sol(torch.ones((1, 3), dtype=torch.float64))[0, 0] ** 2

        grad = loss_parameter_gradient(loss_fn, [sol, hid])
        assert np.any(grad[: sol.n_params] != 0.0)
        assert np.all(grad[sol.n_params :] == 0.0)

    def test_nonfinite_loss_aborted(self):
        net = linear_net([1.0], bias=0.0)

        def loss_fn(dn):
            return dn(torch.tensor([[1.0]], dtype=torch.float64))[0, 0] / 0.0

        with pytest.raises(TrainingError):
            loss_parameter_gradient(loss_fn, [net])


class TestDifferentiableNetwork:
    def test_round_trip_and_flat_order(self, rng):
        net = init_glorot([4, 6, 2, 1], seed=12)
        dn = DifferentiableNetwork(net)
        back = dn.to_params()
        for a, b in zip(back.weights, net.weights):
            assert np.array_equal(a, b)
        flat = rng.normal(size=net.n_params)
        dn.load_flat(flat)
        assert np.array_equal(dn.to_params().to_flat(), flat)

    def test_forward_matches_numpy(self, rng):
        net = init_glorot([5, 9, 1], seed=13)
        dn = DifferentiableNetwork(net)
        x = rng.uniform(-1, 1, 5)
        torch_val = dn(torch.tensor(x[None, :]))[0, 0].item()
        assert torch_val == pytest.approx(evaluate(net, x), rel=1e-14)
