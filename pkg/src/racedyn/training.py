"""End-to-end training of the parameter estimator through the physics.

The loss is the mean squared error between the measured next body state
and the one-step physics prediction made with the network's estimated
parameters.  The backward pass runs the chain by hand: loss -> physics
step -> bound projection -> dense/norm head -> GRU stack.  Optimization
is Adam with linear warmup into a cosine decay, fully deterministic for
a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDivergedError
from .estimator import Network, estimate_params
from .guard import ParamBounds, project, project_grad
from .physics import PhysicsMode, VehicleGeometry, step_batch, step_batch_vjp
from .telemetry import WindowBatch


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""

    epochs: int = 50
    batch_size: int = 128
    base_lr: float = 1e-3
    warmup_steps: int = 50
    final_lr_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.0   # global-norm cap; 0 disables
    standardize: bool = True
    seed: int = 0
    mode: PhysicsMode = PhysicsMode.FULL

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0 < self.final_lr_fraction <= 1:
            raise ValueError("final_lr_fraction must be in (0, 1]")


def learning_rate(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup to base_lr, then cosine decay to the final fraction."""
    warmup = min(config.warmup_steps, total_steps)
    if step < warmup:
        return config.base_lr * (step + 1) / warmup
    final = config.base_lr * config.final_lr_fraction
    span = max(total_steps - warmup, 1)
    frac = min((step - warmup) / span, 1.0)
    return final + 0.5 * (config.base_lr - final) * (1.0 + np.cos(np.pi * frac))


class Adam:
    """Adam with bias correction, iterating params in their dict order."""

    def __init__(self, params: dict, config: TrainConfig):
        self.config = config
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for key, p in params.items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients to a global L2 norm cap; returns the raw norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def batch_loss_and_grads(network: Network, bounds: ParamBounds,
                         batch: WindowBatch, geom: VehicleGeometry, dt: float,
                         mode: PhysicsMode, train: bool = True):
    """One-step-prediction MSE and its gradients for a window batch.

    Forward: window features -> latents -> projected parameters -> one
    physics step from the window's current state under the feedback
    controls -> squared error against the measured next state, averaged
    over batch and the three body-state components.  Backward runs the
    same chain in reverse.
    """
    latents, cache = network.forward(batch.features, train=train)
    params = project(latents, bounds)
    next_states, _, phys_cache = step_batch(
        batch.current_states, batch.feedback, params, geom, dt, mode,
        with_cache=True)
    residual = next_states - batch.targets
    n = residual.size
    loss = float(np.sum(residual * residual) / n)

    g_next = (2.0 / n) * residual
    _, _, g_params = step_batch_vjp(phys_cache, g_next)
    g_latents = g_params * project_grad(latents, bounds)
    grads = network.backward(cache, g_latents)
    return loss, grads



def evaluate_loss(network: Network, bounds: ParamBounds, batch: WindowBatch,
                  geom: VehicleGeometry, dt: float,
                  mode: PhysicsMode) -> float:
    """Inference-mode MSE (running norm statistics, no updates)."""
    params = estimate_params(network, bounds, batch.features, train=False)
    next_states, _ = step_batch(batch.current_states, batch.feedback, params,
                                geom, dt, mode)
    residual = next_states - batch.targets
    return float(np.sum(residual * residual) / residual.size)


@dataclass
class TrainResult:
    """Training artifacts: the fitted network plus loss curves."""

    network: Network
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    steps: int = 0


def fit(network: Network, bounds: ParamBounds, train_batch: WindowBatch,
        geom: VehicleGeometry, dt: float, config: TrainConfig,
        val_batch: WindowBatch = None) -> TrainResult:
    """Deterministic minibatch training loop.

    Shuffles with a generator seeded from config.seed, walks minibatches
    in order, applies Adam with the warmup/cosine schedule, and raises
    TrainingDivergedError at the first non-finite loss or gradient.
    """
    n = train_batch.features.shape[0]
    if n == 0:
        raise ValueError("training batch is empty")
    if config.standardize and "feat_mean" not in network.buffers:
        flat = train_batch.features.reshape(-1, train_batch.features.shape[-1])
        std = flat.std(axis=0)
        network.set_standardization(flat.mean(axis=0),
                                    np.where(std > 1e-12, std, 1.0))

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(network.params, config)
    batches_per_epoch = max(1, -(-n // config.batch_size))
    total_steps = config.epochs * batches_per_epoch
    result = TrainResult(network=network)

    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_total = 0.0
        for start in range(0, n, config.batch_size):
            chosen = order[start:start + config.batch_size]
            minibatch = train_batch.select(chosen)
            loss, grads = batch_loss_and_grads(
                network, bounds, minibatch, geom, dt, config.mode)
            if not np.isfinite(loss):
                raise TrainingDivergedError(step)
            norm = clip_gradients(grads, config.grad_clip)
            if not np.isfinite(norm):
                raise TrainingDivergedError(step)
            optimizer.step(network.params, grads,
                           learning_rate(step, total_steps, config))
            result.step_losses.append(loss)
            epoch_total += loss * len(chosen)
            step += 1
        result.epoch_losses.append(epoch_total / n)
        if val_batch is not None:
            result.val_losses.append(evaluate_loss(
                network, bounds, val_batch, geom, dt, config.mode))
    result.steps = step
    return result
