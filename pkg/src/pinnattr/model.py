"""Fully connected field network with jet-propagating forward pass.

The network maps (x, y) to (u1, u2, p).  Parameters live in one flat float64
vector; per layer the weight matrix is stored row-major, followed by the bias.
The forward pass is written once over jets and runs in three modes: plain
numbers (single point), numpy arrays (batched points), and tape variables
(batched and differentiable w.r.t. parameters).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .autodiff import ACTIVATIONS, Jet2, Tape, jet_activation, jet_linear, seed_x, seed_y
from .errors import ContractViolation
from .geometry import Point2
from .physics import FieldJet

CHECKPOINT_FORMAT = "pinnattr-checkpoint-v1"


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: int = 2
    hidden_width: int = 16
    activation: str = "gelu"
    seed: int = 0
    input_dim: int = 2
    output_dim: int = 3

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ContractViolation("network needs at least one hidden layer"
                                    " and unit")
        if self.input_dim != 2 or self.output_dim != 3:
            raise ContractViolation("this problem is fixed at 2 inputs and"
                                    " 3 outputs")
        if self.activation not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {self.activation!r}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers \
            + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims())


@dataclass
class ParamVector:
    """Flat parameter array; layout is (weights row-major, bias) per layer."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ContractViolation("parameter vector must be flat")

    def __len__(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy())

    def fingerprint(self) -> str:
        return params_fingerprint(self.values)


def params_fingerprint(values: np.ndarray) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(values, dtype=np.float64).tobytes()).hexdigest()


def init_params(config: MlpConfig) -> ParamVector:
    """Glorot-uniform weights, zero biases, deterministic under the seed."""
    rng = np.random.default_rng(config.seed)
    chunks = []
    for fan_in, fan_out in config.layer_dims():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks))


def _forward(theta, xs, ys, config: MlpConfig) -> FieldJet:
    """Jet forward pass; theta entries may be floats or tape Vars."""
    jets = [seed_x(xs), seed_y(ys)]
    offset = 0
    layers = config.layer_dims()
    for li, (fan_in, fan_out) in enumerate(layers):
        outs = []
        for j in range(fan_out):
            w = theta[offset + j * fan_in: offset + (j + 1) * fan_in]
            b = theta[offset + fan_in * fan_out + j]
            outs.append(jet_linear(jets, w, b))
        offset += fan_in * fan_out + fan_out
        if li < len(layers) - 1:
            outs = [jet_activation(o, config.activation) for o in outs]
        jets = outs
    return FieldJet(u1=jets[0], u2=jets[1], p=jets[2])


def forward_jet(params: ParamVector, point: Point2, config: MlpConfig,
                tape: Tape | None = None) -> FieldJet:
    """Field jets at one point; recorded on the tape when one is given."""
    _check_length(params, config)
    if tape is None:
        theta = [float(v) for v in params.values]
    else:
        theta = tape.register_params(params.values)
    return _forward(theta, point.x, point.y, config)


def forward_jet_batch(params: ParamVector, xs: np.ndarray, ys: np.ndarray,
                      config: MlpConfig, tape: Tape | None = None) -> FieldJet:
    """Field jets over a batch of points (components are (n,) arrays)."""
    _check_length(params, config)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if tape is None:
        theta = [float(v) for v in params.values]
    else:
        theta = tape.register_params(params.values)
    return _forward(theta, xs, ys, config)


def forward_values(params: ParamVector, xs: np.ndarray, ys: np.ndarray,
                   config: MlpConfig) -> np.ndarray:
    """Derivative-free forward pass, shape (n, 3); the plain-path oracle for
    jet consistency tests."""
    _check_length(params, config)
    act = ACTIVATIONS[config.activation][0]
    h = np.stack([np.asarray(xs, dtype=np.float64),
                  np.asarray(ys, dtype=np.float64)], axis=0)
    offset = 0
    layers = config.layer_dims()
    for li, (fan_in, fan_out) in enumerate(layers):
        w = params.values[offset: offset + fan_in * fan_out]
        w = w.reshape(fan_out, fan_in)
        b = params.values[offset + fan_in * fan_out:
                          offset + fan_in * fan_out + fan_out]
        h = w @ h + b[:, None]
        offset += fan_in * fan_out + fan_out
        if li < len(layers) - 1:
            h = act(h)
    return h.T


def _check_length(params: ParamVector, config: MlpConfig):
    if len(params) != config.param_count():
        raise ContractViolation(
            f"parameter vector has {len(params)} entries,"
            f" config needs {config.param_count()}")


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def checkpoint_payload(config: MlpConfig, params: ParamVector, phase: str,
                       step: int, label: str = "") -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "label": label,
        "model": {
            "hidden_layers": config.hidden_layers,
            "hidden_width": config.hidden_width,
            "activation": config.activation,
            "seed": config.seed,
        },
        "phase": phase,
        "step": step,
        # decimal strings keep the round trip bit-exact
        "params": [repr(float(v)) for v in params.values],
    }


def save_checkpoint(path, config: MlpConfig, params: ParamVector, phase: str,
                    step: int, label: str = ""):
    payload = checkpoint_payload(config, params, phase, step, label)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[MlpConfig, ParamVector, str, int, str]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ContractViolation(f"not a model checkpoint: {path}")
    m = payload["model"]
    config = MlpConfig(hidden_layers=m["hidden_layers"],
                       hidden_width=m["hidden_width"],
                       activation=m["activation"], seed=m["seed"])
    params = ParamVector(np.array([float(s) for s in payload["params"]]))
    _check_length(params, config)
    return config, params, payload["phase"], payload["step"], \
        payload.get("label", "")
