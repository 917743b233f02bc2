"""Recurrent parameter estimator with a physics-admissible output head.

The network maps a short history window of telemetry features to the 17
physical parameters of the single-track model: a stack of GRU layers reads
the window, a dense head (linear, mish, batch norm per layer) transforms
the final hidden state, a linear output layer emits unconstrained latents,
and the guard projection squashes them into the active bounds profile.
Prediction then runs one step of the actual vehicle physics with the
estimated parameters, so training gradients flow through the physics into
the network.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .errors import CheckpointError
from .guard import ParamBounds, get_profile, project, project_grad
from .physics import PARAM_NAMES, PhysicsMode, VehicleGeometry, step_batch
from .telemetry import FEATURE_COLUMNS, WindowBatch

CHECKPOINT_VERSION = 1


class AppliedInput(enum.Enum):
    """Which control channel drives the physics step of a prediction.

    Training uses the feedback channel (what the actuators actually did at
    the window's last step).  Closed-loop rollout uses the command channel,
    with feedback slots of later windows backfilled by previously applied
    commands.
    """

    FEEDBACK = "feedback"
    COMMAND = "command"


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture description; parameter shapes follow from this alone."""

    history_len: int = 12
    input_dim: int = len(FEATURE_COLUMNS)
    gru_layers: int = 2
    gru_hidden: int = 96
    dense_widths: tuple = (128, 128)
    output_dim: int = len(PARAM_NAMES)
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "dense_widths", tuple(int(w) for w in self.dense_widths))
        if self.history_len < 1 or self.gru_layers < 1 or self.gru_hidden < 1:
            raise ValueError("history_len, gru_layers, gru_hidden must be >= 1")
        if any(w < 1 for w in self.dense_widths):
            raise ValueError("dense widths must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        return cls(**json.loads(text))


def parameter_count(config: NetworkConfig) -> int:
    """Exact trainable-scalar total implied by the architecture."""
    total = 0
    in_dim = config.input_dim
    for _ in range(config.gru_layers):
        total += nn.gru_param_count(in_dim, config.gru_hidden)
        in_dim = config.gru_hidden
    width = config.gru_hidden
    for out in config.dense_widths:
        total += out * width + out      # linear map
        total += 2 * out                # norm scale and shift
        width = out
    total += config.output_dim * width + config.output_dim
    return total


def sim_default_config() -> NetworkConfig:
    """Compact stack for the tabletop-scale data."""
    return NetworkConfig(gru_layers=2, gru_hidden=96, dense_widths=(128, 128))


def real_default_config() -> NetworkConfig:
    """Larger stack for full-size vehicle data."""
    return NetworkConfig(gru_layers=5, gru_hidden=144, dense_widths=(184, 184))


class Network:
    """Parameter container plus explicit forward/backward passes.

    params maps dotted names to float64 arrays; buffers holds batch-norm
    running statistics and optional input standardization constants
    (feat_mean/feat_std).  Both dicts keep a fixed insertion order, which
    fixes the optimizer's iteration order and the checkpoint layout.
    """

    def __init__(self, config: NetworkConfig, params: dict, buffers: dict):
        self.config = config
        self.params = params
        self.buffers = buffers

    @classmethod
    def init(cls, config: NetworkConfig, seed: int) -> "Network":
        """Deterministic initialization: uniform +-1/sqrt(fan_in) draws in a
        fixed parameter order from one seeded generator."""
        rng = np.random.default_rng(seed)
        params: dict = {}
        buffers: dict = {}
        in_dim = config.input_dim
        h = config.gru_hidden
        for l in range(config.gru_layers):
            params[f"gru{l}.w_ih"] = nn.uniform_init(rng, (3 * h, in_dim), h)
            params[f"gru{l}.w_hh"] = nn.uniform_init(rng, (3 * h, h), h)
            params[f"gru{l}.b_ih"] = nn.uniform_init(rng, (3 * h,), h)
            params[f"gru{l}.b_hh"] = nn.uniform_init(rng, (3 * h,), h)
            in_dim = h
        width = h
        for i, out in enumerate(config.dense_widths):
            params[f"dense{i}.w"] = nn.uniform_init(rng, (out, width), width)
            params[f"dense{i}.b"] = nn.uniform_init(rng, (out,), width)
            params[f"bn{i}.gamma"] = np.ones(out)
            params[f"bn{i}.beta"] = np.zeros(out)
            buffers[f"bn{i}.run_mean"] = np.zeros(out)
            buffers[f"bn{i}.run_var"] = np.ones(out)
            width = out
        params["out.w"] = nn.uniform_init(rng, (config.output_dim, width), width)
        params["out.b"] = np.zeros(config.output_dim)
        return cls(config, params, buffers)

    def set_standardization(self, mean, std) -> None:
        """Install per-feature input standardization (train-split stats)."""
        mean = np.asarray(mean, dtype=float).reshape(-1)
        std = np.asarray(std, dtype=float).reshape(-1)
        if mean.shape != (self.config.input_dim,) or std.shape != mean.shape:
            raise ValueError("standardization stats must match input_dim")
        if np.any(std <= 0):
            raise ValueError("standardization std must be positive")
        self.buffers["feat_mean"] = mean
        self.buffers["feat_std"] = std

    def forward(self, features, train: bool = False):
        """Window batch (B, T, F) to unconstrained latents (B, 17).

        Training mode uses batch statistics in the norm layers and updates
        their running buffers in place.
        """
        x = np.asarray(features, dtype=float)
        if x.ndim != 3 or x.shape[1] != self.config.history_len \
                or x.shape[2] != self.config.input_dim:
            raise ValueError(
                f"expected (B, {self.config.history_len}, "
                f"{self.config.input_dim}) features, got {x.shape}")
        if "feat_mean" in self.buffers:
            x = (x - self.buffers["feat_mean"]) / self.buffers["feat_std"]

        cache = {"gru": [], "head": []}
        seq = x
        for l in range(self.config.gru_layers):
            seq, caches = nn.gru_sequence_forward(
                seq, self.params[f"gru{l}.w_ih"], self.params[f"gru{l}.w_hh"],
                self.params[f"gru{l}.b_ih"], self.params[f"gru{l}.b_hh"])
            cache["gru"].append(caches)
        hidden = seq[:, -1, :]
        cache["seq_shape"] = seq.shape

        out = hidden
        for i in range(len(self.config.dense_widths)):
            z, dcache = nn.dense_forward(out, self.params[f"dense{i}.w"],
                                         self.params[f"dense{i}.b"])
            a, mcache = nn.mish_forward(z)
            y, bcache, rm, rv = nn.batchnorm_forward(
                a, self.params[f"bn{i}.gamma"], self.params[f"bn{i}.beta"],
                self.buffers[f"bn{i}.run_mean"], self.buffers[f"bn{i}.run_var"],
                momentum=self.config.bn_momentum, eps=self.config.bn_eps,
                train=train)
            if train:
                self.buffers[f"bn{i}.run_mean"] = rm
                self.buffers[f"bn{i}.run_var"] = rv
            cache["head"].append((dcache, mcache, bcache))
            out = y
        latents, out_cache = nn.dense_forward(out, self.params["out.w"],
                                              self.params["out.b"])
        cache["out"] = out_cache
        return latents, cache

    def backward(self, cache, g_latents) -> dict:
        """Gradient of a scalar loss w.r.t. every parameter, given the
        gradient on the latents.  Returns a dict keyed like params."""
        grads = {}
        g, gw, gb = nn.dense_backward(np.asarray(g_latents, dtype=float),
                                      cache["out"])
        grads["out.w"], grads["out.b"] = gw, gb
        for i in reversed(range(len(self.config.dense_widths))):
            dcache, mcache, bcache = cache["head"][i]
            g, ggamma, gbeta = nn.batchnorm_backward(g, bcache)
            grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = ggamma, gbeta
            g = nn.mish_backward(g, mcache)
            g, gw, gb = nn.dense_backward(g, dcache)
            grads[f"dense{i}.w"], grads[f"dense{i}.b"] = gw, gb

        b, t, h = cache["seq_shape"]
        g_seq = np.zeros((b, t, h))
        g_seq[:, -1, :] = g
        for l in reversed(range(self.config.gru_layers)):
            g_seq, gwi, gwh, gbi, gbh = nn.gru_sequence_backward(
                g_seq, cache["gru"][l])
            grads[f"gru{l}.w_ih"], grads[f"gru{l}.w_hh"] = gwi, gwh
            grads[f"gru{l}.b_ih"], grads[f"gru{l}.b_hh"] = gbi, gbh
        return grads

    def clone(self) -> "Network":
        return Network(self.config,
                       {k: v.copy() for k, v in self.params.items()},
                       {k: v.copy() for k, v in self.buffers.items()})


def estimate_params(network: Network, bounds: ParamBounds, features,
                    train: bool = False, with_cache: bool = False):
    """Projected physical parameters (B, 17) for a window batch."""
    latents, cache = network.forward(features, train=train)
    params = project(latents, bounds)
    if with_cache:
        return params, latents, cache
    return params


def predict_next_state(network: Network, bounds: ParamBounds,
                       batch: WindowBatch, geom: VehicleGeometry, dt: float,
                       mode: PhysicsMode = PhysicsMode.FULL,
                       applied: AppliedInput = AppliedInput.FEEDBACK):
    """One-step state prediction for every window in the batch.

    Estimates parameters from each window, then advances the window's
    current state through one physics step driven by the chosen control
    channel.  Returns (next_states, params).
    """
    params = estimate_params(network, bounds, batch.features)
    controls = batch.feedback if applied is AppliedInput.FEEDBACK else batch.command
    next_states, _ = step_batch(batch.current_states, controls, params,
                                geom, dt, mode)
    return next_states, params


def save_checkpoint(path, network: Network, bounds: ParamBounds,
                    seed: int, steps_trained: int = 0) -> None:
    """Bit-exact snapshot: config, weights, norm statistics, bounds, seed."""
    payload = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "config_json": np.array(network.config.to_json()),
        "bounds_name": np.array(bounds.name),
        "bounds_lo": bounds.lo,
        "bounds_hi": bounds.hi,
        "seed": np.array(int(seed)),
        "steps_trained": np.array(int(steps_trained)),
        "param_names": np.array(list(network.params), dtype=object),
        "buffer_names": np.array(list(network.buffers), dtype=object),
    }
    for name, value in network.params.items():
        payload[f"param/{name}"] = value
    for name, value in network.buffers.items():
        payload[f"buffer/{name}"] = value
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (network, bounds, seed)."""
    with np.load(path, allow_pickle=True) as data:
        if "format_version" not in data:
            raise CheckpointError("not a checkpoint file")
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        config = NetworkConfig.from_json(str(data["config_json"]))
        bounds = ParamBounds(lo=data["bounds_lo"], hi=data["bounds_hi"],
                             name=str(data["bounds_name"]))
        params = {str(n): data[f"param/{n}"].copy()
                  for n in data["param_names"]}
        buffers = {str(n): data[f"buffer/{n}"].copy()
                   for n in data["buffer_names"]}
        seed = int(data["seed"])
    return Network(config, params, buffers), bounds, seed


def checkpoint_metadata(path) -> dict:
    """Provenance without the weights: config, bounds name, seed, steps."""
    with np.load(path, allow_pickle=True) as data:
        if "format_version" not in data:
            raise CheckpointError("not a checkpoint file")
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        return {
            "format_version": version,
            "config": NetworkConfig.from_json(str(data["config_json"])),
            "bounds_name": str(data["bounds_name"]),
            "seed": int(data["seed"]),
            "steps_trained": int(data["steps_trained"])
            if "steps_trained" in data else 0,
        }


def profile_default_config(profile: str) -> NetworkConfig:
    if profile == "sim":
        return sim_default_config()
    if profile == "real":
        return real_default_config()
    raise ValueError(f"no default architecture for profile {profile!r}")


def bounds_for_profile(profile: str) -> ParamBounds:
    return get_profile(profile)
