"""Finite-difference validation of every hand-written backward pass.

Each check builds a scalar loss as a fixed random weighting of the
operation's outputs, computes its analytic gradient through the reverse
pass, and compares against central differences.  Inputs are drawn away
from the model's non-smooth points (the speed floor and the load clamp),
where gradients are defined classically.
"""

import numpy as np
import pytest

from conftest import assert_grad_close, make_scale_geometry, make_scale_params
from racedyn import nn
from racedyn.estimator import Network, NetworkConfig
from racedyn.guard import project, project_grad, sim_profile
from racedyn.physics import PhysicsMode, pose_batch, pose_batch_vjp, \
    step_batch, step_batch_vjp
from racedyn.telemetry import WindowBatch
from racedyn.training import batch_loss_and_grads


def fd_grad(f, x, rel=1e-6, floor=1e-2):
    """Central differences with a per-component relative step.

    The floor keeps the step resolvable for near-zero components while the
    relative scaling keeps it proportionate for tiny physical quantities
    such as the yaw inertia.
    """
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        eps = rel * max(abs(flat[i]), floor)
        xp, xm = flat.copy(), flat.copy()
        xp[i] += eps
        xm[i] -= eps
        gflat[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * eps)
    return g


class TestActivationGrads:
    def test_mish_many_points(self, rng):
        x = rng.normal(scale=2.0, size=24)
        w = rng.normal(size=24)
        _, cache = nn.mish_forward(x)
        analytic = nn.mish_backward(w, cache)
        numeric = fd_grad(lambda v: float(np.dot(w, nn.mish(v))), x)
        assert_grad_close(analytic, numeric)

    def test_sigmoid_projection_grad(self, rng):
        bounds = sim_profile()
        z = rng.normal(scale=3.0, size=(4, 17))
        w = rng.normal(size=(4, 17))
        analytic = w * project_grad(z, bounds)
        numeric = fd_grad(lambda v: float(np.sum(w * project(v, bounds))), z)
        assert_grad_close(analytic, numeric)


class TestDenseGrads:
    def test_inputs_weights_bias(self, rng):
        x = rng.normal(size=(6, 5))
        w = rng.normal(size=(4, 5))
        b = rng.normal(size=4)
        gout = rng.normal(size=(6, 4))

        def loss(xv, wv, bv):
            y, _ = nn.dense_forward(xv, wv, bv)
            return float(np.sum(gout * y))

        _, cache = nn.dense_forward(x, w, b)
        gx, gw, gb = nn.dense_backward(gout, cache)
        assert_grad_close(gx, fd_grad(lambda v: loss(v, w, b), x))
        assert_grad_close(gw, fd_grad(lambda v: loss(x, v, b), w))
        assert_grad_close(gb, fd_grad(lambda v: loss(x, w, v), b))


class TestBatchNormGrads:
    def _loss(self, xv, gv, bv, gout, train):
        y, _, _, _ = nn.batchnorm_forward(
            xv, gv, bv, np.full(xv.shape[1], 0.3), np.full(xv.shape[1], 2.0),
            train=train)
        return float(np.sum(gout * y))

    @pytest.mark.parametrize("train", [True, False])
    def test_inputs_gamma_beta(self, rng, train):
        x = rng.normal(size=(8, 3))
        gamma = rng.uniform(0.5, 1.5, size=3)
        beta = rng.normal(size=3)
        gout = rng.normal(size=(8, 3))
        _, cache, _, _ = nn.batchnorm_forward(
            x, gamma, beta, np.full(3, 0.3), np.full(3, 2.0), train=train)
        gx, ggamma, gbeta = nn.batchnorm_backward(gout, cache)
        assert_grad_close(gx, fd_grad(
            lambda v: self._loss(v, gamma, beta, gout, train), x))
        assert_grad_close(ggamma, fd_grad(
            lambda v: self._loss(x, v, beta, gout, train), gamma))
        assert_grad_close(gbeta, fd_grad(
            lambda v: self._loss(x, gamma, v, gout, train), beta))


class TestGruGrads:
    def _weights(self, rng, in_dim, h):
        return (rng.normal(scale=0.4, size=(3 * h, in_dim)),
                rng.normal(scale=0.4, size=(3 * h, h)),
                rng.normal(scale=0.4, size=3 * h),
                rng.normal(scale=0.4, size=3 * h))

    def test_cell_all_inputs(self, rng):
        in_dim, h, b = 3, 4, 5
        weights = self._weights(rng, in_dim, h)
        x = rng.normal(size=(b, in_dim))
        h0 = rng.normal(size=(b, h))
        gout = rng.normal(size=(b, h))

        def loss(*args):
            y, _ = nn.gru_cell_forward(*args)
            return float(np.sum(gout * y))

        _, cache = nn.gru_cell_forward(x, h0, *weights)
        gx, gh, gwi, gwh, gbi, gbh = nn.gru_cell_backward(gout, cache)
        pieces = [x, h0, *weights]
        analytic = [gx, gh, gwi, gwh, gbi, gbh]
        for i, (piece, grad) in enumerate(zip(pieces, analytic)):
            def f(v, i=i):
                args = list(pieces)
                args[i] = v
                return loss(*args)
            assert_grad_close(grad, fd_grad(f, piece))

    @pytest.mark.parametrize("last_only", [False, True])
    def test_sequence_bptt(self, rng, last_only):
        in_dim, h, b, t = 2, 3, 4, 6
        weights = self._weights(rng, in_dim, h)
        xs = rng.normal(size=(b, t, in_dim))
        gout = rng.normal(size=(b, t, h))
        if last_only:
            gout[:, :-1, :] = 0.0

        def loss(*args):
            hs, _ = nn.gru_sequence_forward(args[0], *args[1:])
            return float(np.sum(gout * hs))

        _, caches = nn.gru_sequence_forward(xs, *weights)
        g_xs, gwi, gwh, gbi, gbh = nn.gru_sequence_backward(gout, caches)
        pieces = [xs, *weights]
        analytic = [g_xs, gwi, gwh, gbi, gbh]
        for i, (piece, grad) in enumerate(zip(pieces, analytic)):
            def f(v, i=i):
                args = list(pieces)
                args[i] = v
                return loss(*args)
            assert_grad_close(grad, fd_grad(f, piece))


def _smooth_operating_points(rng, n):
    """Batch of states/controls away from the speed floor and load clamp."""
    states = np.column_stack([
        rng.uniform(0.5, 3.0, size=n),        # vx well above the floor
        rng.uniform(-0.4, 0.4, size=n),
        rng.uniform(-4.0, 4.0, size=n),
    ])
    controls = np.column_stack([
        rng.uniform(-0.6, 0.9, size=n),
        rng.uniform(-0.35, 0.35, size=n),
    ])
    return states, controls


class TestPhysicsStepGrads:
    @pytest.mark.parametrize("mode", [PhysicsMode.FULL,
                                      PhysicsMode.NOMINAL_LOAD,
                                      PhysicsMode.LOAD_TRANSFER_ONLY])
    def test_states_controls_params(self, rng, mode):
        geom = make_scale_geometry()
        dt = 0.02
        n = 7
        states, controls = _smooth_operating_points(rng, n)
        base = make_scale_params().to_vector()
        params = base * rng.uniform(0.9, 1.1, size=(n, 17))
        gout = rng.normal(size=(n, 3))

        def loss(sv, cv, pv):
            ns, _ = step_batch(sv, cv, pv, geom, dt, mode)
            return float(np.sum(gout * ns))

        _, _, cache = step_batch(states, controls, params, geom, dt, mode,
                                 with_cache=True)
        g_states, g_controls, g_params = step_batch_vjp(cache, gout)
        assert_grad_close(g_states,
                          fd_grad(lambda v: loss(v, controls, params), states))
        assert_grad_close(g_controls,
                          fd_grad(lambda v: loss(states, v, params), controls))
        assert_grad_close(g_params,
                          fd_grad(lambda v: loss(states, controls, v), params))

    def test_many_random_points_full_mode(self, rng):
        # A wider sweep of operating points in the mode used for training.
        geom = make_scale_geometry()
        base = make_scale_params().to_vector()
        for _ in range(20):
            states, controls = _smooth_operating_points(rng, 1)
            params = base * rng.uniform(0.8, 1.2, size=17)
            gout = rng.normal(size=(1, 3))

            def loss(pv):
                ns, _ = step_batch(states, controls, pv, geom, 0.02,
                                   PhysicsMode.FULL)
                return float(np.sum(gout * ns))

            _, _, cache = step_batch(states, controls, params, geom, 0.02,
                                     PhysicsMode.FULL, with_cache=True)
            _, _, g_params = step_batch_vjp(cache, gout)
            assert_grad_close(g_params[0], fd_grad(loss, params))

    def test_clamped_load_zeroes_that_branch(self):
        # Drive the front axle onto the clamp: its load gradient w.r.t.
        # longitudinal force must vanish while the rear stays live.
        geom = make_scale_geometry()
        params = make_scale_params().to_vector()
        params[12] = 11.0                    # huge thrust gain
        state = np.array([[2.0, 0.0, 0.0]])
        control = np.array([[1.0, 0.2]])
        _, traces, cache = step_batch(state, control, params, geom, 0.02,
                                      PhysicsMode.FULL, with_cache=True)
        assert traces[0, 3] == geom.load_floor   # front load clamped
        gout = np.ones((1, 3))
        _, _, g_params = step_batch_vjp(cache, gout)

        def loss(pv):
            ns, _ = step_batch(state, control, pv, geom, 0.02,
                               PhysicsMode.FULL)
            return float(np.sum(ns))

        assert_grad_close(g_params[0], fd_grad(loss, params))


class TestPoseGrads:
    def test_poses_and_states(self, rng):
        n = 6
        poses = np.column_stack([rng.normal(size=n), rng.normal(size=n),
                                 rng.uniform(-2.0, 2.0, size=n)])
        states = np.column_stack([rng.uniform(0.5, 3.0, size=n),
                                  rng.normal(scale=0.3, size=n),
                                  rng.normal(scale=2.0, size=n)])
        gout = rng.normal(size=(n, 3))

        def loss(pv, sv):
            return float(np.sum(gout * pose_batch(pv, sv, 0.02)))

        g_poses, g_states = pose_batch_vjp(poses, states, 0.02, gout)
        assert_grad_close(g_poses, fd_grad(lambda v: loss(v, states), poses))
        assert_grad_close(g_states, fd_grad(lambda v: loss(poses, v), states))


class TestEndToEndGrad:
    def test_window_loss_through_physics_and_network(self, rng):
        """Full composition: features -> GRU -> head -> projection ->
        physics step -> MSE, differentiated w.r.t. every parameter."""
        config = NetworkConfig(history_len=3, gru_layers=1, gru_hidden=4,
                               dense_widths=(5,))
        network = Network.init(config, seed=42)
        bounds = sim_profile()
        geom = make_scale_geometry()

        b = 2
        features = rng.normal(scale=0.5, size=(b, 3, 7))
        features[..., 0] += 1.5              # plausible forward speed
        current = np.column_stack([rng.uniform(1.0, 2.0, size=b),
                                   rng.normal(scale=0.2, size=b),
                                   rng.normal(scale=1.0, size=b)])
        feedback = rng.uniform(-0.5, 0.5, size=(b, 2))
        batch = WindowBatch(features=features, targets=rng.normal(size=(b, 3)),
                            current_states=current, feedback=feedback,
                            command=feedback.copy(), starts=np.arange(b))

        _, grads = batch_loss_and_grads(network, bounds, batch, geom, 0.02,
                                        PhysicsMode.FULL, train=True)

        for name in network.params:
            def loss_of(v, name=name):
                trial = network.clone()
                trial.params[name] = v
                value, _ = batch_loss_and_grads(trial, bounds, batch, geom,
                                                0.02, PhysicsMode.FULL,
                                                train=True)
                return value
            assert_grad_close(grads[name],
                              fd_grad(loss_of, network.params[name]))
