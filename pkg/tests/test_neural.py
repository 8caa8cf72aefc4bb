"""Tests for the numpy Q-network."""

from __future__ import annotations

import math

import numpy as np
import pytest

from app.errors import ConfigurationError, ContractViolationError, TrainingFaultError
from app.services.neural import (
    LayerSpec,
    NetworkWeights,
    OptimizerState,
    dump_weights,
    forward,
    huber,
    init_weights,
    loss_and_gradients,
    numerical_gradients,
    parse_weights,
    rmsprop_update,
    soft_update,
    train_step,
)


@pytest.fixture
def hand_network() -> NetworkWeights:
    """2-2-1 network with identity first layer."""
    return NetworkWeights(
        weights=[np.eye(2), np.array([[2.0], [3.0]])],
        biases=[np.array([0.0, -1.0]), np.array([1.0])],
    )


class TestForward:
    """Forward pass and shapes."""

    def test_cluster_widths(self) -> None:
        """18 inputs, hidden 64 and 24, 8 outputs for seven FNs."""
        assert LayerSpec.for_cluster(7).widths == (18, 64, 24, 8)

    def test_needs_hidden_layer(self) -> None:
        """Input and output alone are refused."""
        with pytest.raises(ConfigurationError):
            LayerSpec(widths=(4, 2))

    def test_zero_weights_give_zero_output(self) -> None:
        """All-zero parameters map any input to zero."""
        spec = LayerSpec.for_cluster(2, hidden=(5,))
        w = NetworkWeights(
            weights=[np.zeros((8, 5)), np.zeros((5, 3))], biases=[np.zeros(5), np.zeros(3)]
        )
        assert w.spec == spec
        np.testing.assert_array_equal(forward(w, np.arange(8.0)), np.zeros(3))

    def test_hand_computed_outputs(self, hand_network: NetworkWeights) -> None:
        """ReLU clips the second hidden unit when its input is below the bias."""
        assert forward(hand_network, np.array([1.0, 2.0]))[0] == pytest.approx(6.0)
        assert forward(hand_network, np.array([1.0, 0.5]))[0] == pytest.approx(3.0)

    def test_batch_forward(self, hand_network: NetworkWeights) -> None:
        """Rows of a batch are independent."""
        out = forward(hand_network, np.array([[1.0, 2.0], [1.0, 0.5]]))
        np.testing.assert_allclose(out[:, 0], [6.0, 3.0])

    def test_wrong_input_width(self, hand_network: NetworkWeights) -> None:
        """A mismatched input is a contract violation."""
        with pytest.raises(ContractViolationError, match="Input width"):
            forward(hand_network, np.zeros(3))

    def test_mismatched_layers_rejected(self) -> None:
        """Fan-in must match the previous fan-out."""
        with pytest.raises(ContractViolationError):
            NetworkWeights(
                weights=[np.zeros((2, 3)), np.zeros((2, 1))], biases=[np.zeros(3), np.zeros(1)]
            )

    def test_init_is_seeded(self) -> None:
        """Same generator seed, same weights; biases start at zero."""
        spec = LayerSpec.for_cluster(7)
        a = init_weights(spec, np.random.default_rng(1))
        b = init_weights(spec, np.random.default_rng(1))
        assert a.allclose(b)
        assert all(not bias.any() for bias in a.biases)
        limit = math.sqrt(6.0 / 18)
        assert np.abs(a.weights[0]).max() <= limit


class TestGradients:
    """Loss and backpropagation."""

    def test_huber_regions(self) -> None:
        """Quadratic inside delta, linear outside."""
        np.testing.assert_allclose(huber(np.array([0.5, -2.0, 3.0])), [0.125, 1.5, 2.5])

    def test_backprop_matches_finite_differences(self) -> None:
        """Analytic and numerical gradients agree to 1e-4 relative error."""
        rng = np.random.default_rng(7)
        w = init_weights(LayerSpec(widths=(4, 6, 5, 3)), rng)
        for bias in w.biases:
            bias[:] = rng.uniform(0.05, 0.2, size=bias.shape)
        inputs = rng.uniform(0.1, 1.0, size=(5, 4))
        targets = rng.uniform(-0.5, 0.5, size=(5, 3))
        _, analytic = loss_and_gradients(w, inputs, targets, delta=10.0)
        numeric = numerical_gradients(w, inputs, targets, delta=10.0)
        for a, n in zip(analytic, numeric):
            scale = np.maximum(np.abs(a) + np.abs(n), 1e-8)
            assert np.max(np.abs(a - n) / scale) < 1e-4

    def test_loss_is_mean_over_batch_and_outputs(self) -> None:
        """Repeating the batch changes neither the loss nor the gradients."""
        rng = np.random.default_rng(3)
        w = init_weights(LayerSpec(widths=(3, 4, 2)), rng)
        inputs = rng.uniform(0.1, 1.0, size=(2, 3))
        targets = rng.uniform(-2.0, 2.0, size=(2, 2))
        loss, grads = loss_and_gradients(w, inputs, targets)
        outputs = forward(w, inputs)
        assert loss == pytest.approx(float(np.mean(huber(outputs - targets))))
        doubled_loss, doubled = loss_and_gradients(
            w, np.vstack([inputs, inputs]), np.vstack([targets, targets])
        )
        assert doubled_loss == pytest.approx(loss)
        for a, b in zip(grads, doubled):
            np.testing.assert_allclose(a, b)
        np.testing.assert_allclose(
            grads[-1], np.clip(outputs - targets, -1.0, 1.0).sum(axis=0) / outputs.size
        )

    def test_target_shape_checked(self, hand_network: NetworkWeights) -> None:
        """Targets must match the output shape."""
        with pytest.raises(ContractViolationError, match="Target shape"):
            loss_and_gradients(hand_network, np.ones((2, 2)), np.ones((2, 2)))


class TestOptimizer:
    """RMSprop, training steps and target blending."""

    def test_rmsprop_single_step(self) -> None:
        """ms = 0.1 * g^2 and v = lr * g / (sqrt(ms) + eps) after one update."""
        param = np.array([1.0])
        opt = OptimizerState(
            learning_rate=0.01,
            decay=0.0,
            momentum=0.9,
            rho=0.9,
            mean_square=[np.zeros(1)],
            velocity=[np.zeros(1)],
        )
        rmsprop_update([param], [np.array([0.5])], opt)
        expected_v = 0.005 / (math.sqrt(0.025) + 1e-7)
        assert opt.mean_square[0][0] == pytest.approx(0.025)
        assert opt.velocity[0][0] == pytest.approx(expected_v)
        assert param[0] == pytest.approx(1.0 - expected_v)
        assert opt.updates == 1

    def test_learning_rate_decays(self) -> None:
        """lr_t = lr / (1 + decay * updates)."""
        opt = OptimizerState(learning_rate=0.01, decay=0.5, updates=2)
        assert opt.current_learning_rate == pytest.approx(0.005)

    def test_zero_error_leaves_weights_unchanged(self, hand_network: NetworkWeights) -> None:
        """A batch whose targets equal the predictions has zero gradient."""
        inputs = np.array([[1.0, 2.0], [1.0, 0.5]])
        targets = forward(hand_network, inputs)
        before = hand_network.copy()
        loss = train_step(hand_network, OptimizerState.for_weights(hand_network), inputs, targets)
        assert loss == 0.0
        assert hand_network.allclose(before)

    def test_training_reduces_loss(self) -> None:
        """A few hundred steps fit a constant target."""
        rng = np.random.default_rng(3)
        w = init_weights(LayerSpec(widths=(3, 8, 2)), rng)
        opt = OptimizerState.for_weights(w, learning_rate=0.01)
        inputs = rng.uniform(size=(16, 3))
        targets = np.ones((16, 2))
        first = train_step(w, opt, inputs, targets)
        for _ in range(300):
            last = train_step(w, opt, inputs, targets)
        assert last < first

    def test_empty_batch_raises(self, hand_network: NetworkWeights) -> None:
        """Training on nothing is a contract violation."""
        opt = OptimizerState.for_weights(hand_network)
        with pytest.raises(ContractViolationError):
            train_step(hand_network, opt, np.zeros((0, 2)), np.zeros((0, 1)))

    def test_non_finite_loss_raises(self, hand_network: NetworkWeights) -> None:
        """An overflowing target surfaces as a training fault."""
        opt = OptimizerState.for_weights(hand_network)
        with pytest.raises(TrainingFaultError):
            train_step(hand_network, opt, np.ones((1, 2)), np.array([[np.inf]]))

    def test_soft_update_blends(self) -> None:
        """rho = 0.2 from zeros towards ones gives 0.2 then 0.36."""
        target = NetworkWeights(weights=[np.zeros((2, 2))], biases=[np.zeros(2)])
        online = NetworkWeights(weights=[np.ones((2, 2))], biases=[np.ones(2)])
        once = soft_update(target, online, 0.2)
        twice = soft_update(once, online, 0.2)
        np.testing.assert_allclose(once.weights[0], 0.2)
        np.testing.assert_allclose(twice.biases[0], 0.36)

    def test_soft_update_rho_one_copies(self) -> None:
        """rho = 1 replaces the target."""
        target = NetworkWeights(weights=[np.zeros((2, 2))], biases=[np.zeros(2)])
        online = NetworkWeights(weights=[np.full((2, 2), 4.0)], biases=[np.ones(2)])
        assert soft_update(target, online, 1.0).allclose(online)

    @pytest.mark.parametrize("rho", [0.0, 1.5])
    def test_soft_update_rate_range(self, rho: float) -> None:
        """rho must lie in (0, 1]."""
        w = NetworkWeights(weights=[np.zeros((2, 2))], biases=[np.zeros(2)])
        with pytest.raises(ContractViolationError):
            soft_update(w, w, rho)


class TestSerialization:
    """Weight snapshots."""

    def test_dump_and_parse(self) -> None:
        """Weights and metadata survive serialization."""
        w = init_weights(LayerSpec.for_cluster(3), np.random.default_rng(0))
        restored, meta = parse_weights(dump_weights(w, {"config_digest": "abc"}))
        assert restored.allclose(w)
        assert meta["config_digest"] == "abc"
        assert meta["widths"] == [10, 64, 24, 4]

    def test_frozen_copy_is_read_only(self, hand_network: NetworkWeights) -> None:
        """Frozen weights refuse writes."""
        frozen = hand_network.frozen()
        with pytest.raises(ValueError):
            frozen.weights[0][0, 0] = 5.0
