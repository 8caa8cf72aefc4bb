"""
Feed-forward Q-network in numpy.

ReLU hidden layers, linear output, Huber loss, RMSprop with momentum and
inverse-time learning-rate decay. All arithmetic is float64. Weight matrices
are stored (fan_in, fan_out) so a batch forward pass is x @ W + b.
"""

from __future__ import annotations

import io
import json
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from app.errors import ConfigurationError, ContractViolationError, TrainingFaultError

logger = logging.getLogger(__name__)

SNAPSHOT_SCHEMA = "qnet/1"


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths from input to output; at least one hidden layer."""

    widths: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.widths) < 3:
            raise ConfigurationError(
                f"Need input, at least one hidden and an output layer, got {self.widths}"
            )
        if any(w < 1 for w in self.widths):
            raise ConfigurationError(f"Layer widths must be >= 1: {self.widths}")

    @classmethod
    def for_cluster(cls, k: int, hidden: tuple[int, ...] = (64, 24)) -> LayerSpec:
        """Input 2k+4, output k+1."""
        return cls(widths=(2 * k + 4, *hidden, k + 1))

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]


@dataclass
class NetworkWeights:
    """Per-layer weight matrices and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractViolationError("Weights and biases must be non-empty and paired")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ContractViolationError(
                    f"Layer {i}: weight shape {w.shape} incompatible with bias shape {b.shape}"
                )
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ContractViolationError(
                    f"Layer {i}: fan-in {w.shape[0]} does not match previous fan-out "
                    f"{self.weights[i - 1].shape[1]}"
                )

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(widths=(self.weights[0].shape[0], *(w.shape[1] for w in self.weights)))

    def parameters(self) -> Iterator[np.ndarray]:
        """Weight and bias arrays interleaved per layer."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> NetworkWeights:
        return NetworkWeights(
            weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases]
        )

    def frozen(self) -> NetworkWeights:
        """Read-only copy."""
        clone = self.copy()
        for arr in clone.parameters():
            arr.setflags(write=False)
        return clone

    def allclose(self, other: NetworkWeights, atol: float = 0.0) -> bool:
        return all(
            a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol)
            for a, b in zip(self.parameters(), other.parameters())
        )


def init_weights(spec: LayerSpec, rng: np.random.Generator) -> NetworkWeights:
    """He-uniform weights (limit sqrt(6 / fan_in)) and zero biases."""
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return NetworkWeights(weights=weights, biases=biases)


def _as_batch(w: NetworkWeights, x: np.ndarray) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if batch.ndim != 2 or batch.shape[1] != w.weights[0].shape[0]:
        raise ContractViolationError(
            f"Input width {batch.shape[-1]} does not match network input {w.weights[0].shape[0]}"
        )
    return batch


def _forward_trace(w: NetworkWeights, batch: np.ndarray) -> list[np.ndarray]:
    """Activations per layer, input first; the last entry is the linear output."""
    activations = [batch]
    last = len(w.weights) - 1
    for i, (weight, bias) in enumerate(zip(w.weights, w.biases)):
        z = activations[-1] @ weight + bias
        activations.append(z if i == last else np.maximum(z, 0.0))
    return activations


def forward(w: NetworkWeights, x: np.ndarray) -> np.ndarray:
    """Q-values for one state (1-D input) or a batch (2-D input).

    Raises:
        ContractViolationError: If the input width does not match the network.
    """
    out = _forward_trace(w, _as_batch(w, x))[-1]
    return out[0] if np.ndim(x) == 1 else out


def huber(err: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """Elementwise Huber loss: err^2 / 2 inside [-delta, delta], linear outside."""
    abs_err = np.abs(err)
    quadratic = np.minimum(abs_err, delta)
    return 0.5 * quadratic**2 + delta * (abs_err - quadratic)


def loss_and_gradients(
    w: NetworkWeights, inputs: np.ndarray, targets: np.ndarray, delta: float = 1.0
) -> tuple[float, list[np.ndarray]]:
    """Huber loss averaged over batch and outputs, and its gradients aligned with parameters().

    The gradients carry the same 1 / (batch * outputs) scale as the loss.
    """
    batch = _as_batch(w, inputs)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    activations = _forward_trace(w, batch)
    if activations[-1].shape != targets.shape:
        raise ContractViolationError(
            f"Target shape {targets.shape} does not match output shape {activations[-1].shape}"
        )
    err = activations[-1] - targets
    loss = float(np.mean(huber(err, delta)))
    grad = np.clip(err, -delta, delta) / err.size
    grads: list[np.ndarray] = []
    for layer in range(len(w.weights) - 1, -1, -1):
        a_prev = activations[layer]
        grads.append(grad.sum(axis=0))
        grads.append(a_prev.T @ grad)
        if layer:
            grad = (grad @ w.weights[layer].T) * (a_prev > 0.0)
    grads.reverse()
    return loss, grads


def numerical_gradients(
    w: NetworkWeights,
    inputs: np.ndarray,
    targets: np.ndarray,
    delta: float = 1.0,
    step: float = 1e-5,
) -> list[np.ndarray]:
    """Central finite-difference gradients, aligned with parameters()."""
    grads: list[np.ndarray] = []
    shifted = w.copy()
    for param in shifted.parameters():
        grad = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + step
            upper, _ = loss_and_gradients(shifted, inputs, targets, delta)
            param[idx] = original - step
            lower, _ = loss_and_gradients(shifted, inputs, targets, delta)
            param[idx] = original
            grad[idx] = (upper - lower) / (2.0 * step)
        grads.append(grad)
    return grads


@dataclass
class OptimizerState:
    """RMSprop with momentum.

    ms <- rho * ms + (1 - rho) * g^2
    v  <- momentum * v + lr_t * g / (sqrt(ms) + epsilon)
    p  <- p - v
    with lr_t = learning_rate / (1 + decay * updates).
    """

    learning_rate: float = 0.01
    decay: float = 1e-4
    momentum: float = 0.9
    rho: float = 0.9
    epsilon: float = 1e-7
    updates: int = 0
    mean_square: list[np.ndarray] = field(default_factory=list)
    velocity: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError(f"Learning rate must be > 0, got {self.learning_rate}")

    @classmethod
    def for_weights(cls, w: NetworkWeights, **kwargs: Any) -> OptimizerState:
        params = list(w.parameters())
        return cls(
            mean_square=[np.zeros_like(p) for p in params],
            velocity=[np.zeros_like(p) for p in params],
            **kwargs,
        )

    @property
    def current_learning_rate(self) -> float:
        return self.learning_rate / (1.0 + self.decay * self.updates)


def rmsprop_update(params: list[np.ndarray], grads: list[np.ndarray], opt: OptimizerState) -> None:
    """Apply one RMSprop-with-momentum step to params in place."""
    if len(params) != len(grads) or len(params) != len(opt.mean_square):
        raise ContractViolationError("Parameter, gradient and accumulator counts differ")
    lr = opt.current_learning_rate
    for param, grad, ms, vel in zip(params, grads, opt.mean_square, opt.velocity):
        ms *= opt.rho
        ms += (1.0 - opt.rho) * grad * grad
        vel *= opt.momentum
        vel += lr * grad / (np.sqrt(ms) + opt.epsilon)
        param -= vel
    opt.updates += 1


def train_step(
    w: NetworkWeights,
    opt: OptimizerState,
    inputs: np.ndarray,
    targets: np.ndarray,
    delta: float = 1.0,
) -> float:
    """One gradient step on a batch, updating w and opt in place.

    Returns:
        The batch loss before the update.

    Raises:
        ContractViolationError: If the batch is empty or mis-shaped.
        TrainingFaultError: If the loss is not finite.
    """
    if len(inputs) == 0:
        raise ContractViolationError("Training batch is empty")
    loss, grads = loss_and_gradients(w, inputs, targets, delta)
    if not math.isfinite(loss):
        raise TrainingFaultError(f"Non-finite training loss {loss!r}", loss=loss)
    rmsprop_update(list(w.parameters()), grads, opt)
    return loss


def soft_update(target: NetworkWeights, online: NetworkWeights, rho: float) -> NetworkWeights:
    """Blend rho * online + (1 - rho) * target, elementwise.

    Raises:
        ContractViolationError: If rho is outside (0, 1] or shapes differ.
    """
    if not 0.0 < rho <= 1.0:
        raise ContractViolationError(f"Target update rate must be in (0, 1], got {rho}")
    if target.spec != online.spec:
        raise ContractViolationError(
            f"Target shape {target.spec.widths} differs from online {online.spec.widths}"
        )
    return NetworkWeights(
        weights=[rho * o + (1.0 - rho) * t for t, o in zip(target.weights, online.weights)],
        biases=[rho * o + (1.0 - rho) * t for t, o in zip(target.biases, online.biases)],
    )


def dump_weights(w: NetworkWeights, metadata: dict[str, Any] | None = None) -> bytes:
    """Serialize weights and metadata to .npz bytes."""
    meta = {"schema": SNAPSHOT_SCHEMA, "widths": list(w.spec.widths), **(metadata or {})}
    arrays: dict[str, np.ndarray] = {"metadata": np.array(json.dumps(meta, sort_keys=True))}
    for i, (weight, bias) in enumerate(zip(w.weights, w.biases)):
        arrays[f"w{i}"] = weight
        arrays[f"b{i}"] = bias
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    return buffer.getvalue()


def parse_weights(payload: bytes) -> tuple[NetworkWeights, dict[str, Any]]:
    """Inverse of dump_weights.

    Raises:
        ContractViolationError: If the payload has an unknown schema.
    """
    with np.load(io.BytesIO(payload), allow_pickle=False) as data:
        meta = json.loads(str(data["metadata"]))
        if meta.get("schema") != SNAPSHOT_SCHEMA:
            raise ContractViolationError(f"Unsupported snapshot schema {meta.get('schema')!r}")
        layers = len(meta["widths"]) - 1
        weights = [np.array(data[f"w{i}"]) for i in range(layers)]
        biases = [np.array(data[f"b{i}"]) for i in range(layers)]
    return NetworkWeights(weights=weights, biases=biases), meta
