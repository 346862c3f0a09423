"""Feedback controller: 3 -> 20 -> 1 tanh network mapping the observed
state to a motion-direction angle, plus the action applicator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_INPUTS = 3
N_HIDDEN = 20

# gripper workspace, as fractions of strip length
X_MIN_FRAC = -0.2
X_MAX_FRAC = 1.1


def n_weights(n_inputs: int = N_INPUTS, n_hidden: int = N_HIDDEN) -> int:
    return n_inputs * n_hidden + n_hidden + n_hidden + 1


@dataclass(frozen=True)
class Observation:
    """Gripper position and desk-contact feedback feature, meters."""

    gripper_x: float
    gripper_z: float
    contact_x: float

    def as_array(self) -> np.ndarray:
        return np.array([self.gripper_x, self.gripper_z, self.contact_x])


class PolicyWeights:
    """Flat parameter vector of the controller network.

    Layout: hidden weights row-major, hidden biases, output weights,
    output bias.
    """

    def __init__(self, flat, n_inputs: int = N_INPUTS, n_hidden: int = N_HIDDEN):
        flat = np.asarray(flat, dtype=float)
        expected = n_weights(n_inputs, n_hidden)
        if flat.shape != (expected,):
            raise ValueError(f"expected {expected} weights, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ValueError("non-finite policy weights")
        self.flat = flat
        self.n_inputs = n_inputs
        self.n_hidden = n_hidden
        i = 0
        self.w_hidden = flat[i:i + n_inputs * n_hidden].reshape(n_hidden, n_inputs)
        i += n_inputs * n_hidden
        self.b_hidden = flat[i:i + n_hidden]
        i += n_hidden
        self.w_out = flat[i:i + n_hidden]
        i += n_hidden
        self.b_out = float(flat[i])

    @classmethod
    def zeros(cls, n_inputs: int = N_INPUTS, n_hidden: int = N_HIDDEN):
        return cls(np.zeros(n_weights(n_inputs, n_hidden)), n_inputs, n_hidden)

    def save(self, path: str | Path) -> None:
        lines = [f"stripfold-policy v1 {self.n_inputs} {self.n_hidden}"]
        lines += [repr(float(v)) for v in self.flat]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyWeights":
        lines = Path(path).read_text().splitlines()
        header = lines[0].split()
        if header[:2] != ["stripfold-policy", "v1"]:
            raise ValueError(f"not a policy weights file: {lines[0]!r}")
        n_inputs, n_hidden = int(header[2]), int(header[3])
        flat = np.array([float(v) for v in lines[1:] if v.strip()])
        return cls(flat, n_inputs, n_hidden)


def act(weights: PolicyWeights, obs: Observation, strip_length: float) -> float:
    """Motion-direction angle in (-pi, pi] for the observed state.

    Observation features are normalized by the strip length; the network
    output is squashed through pi * tanh to cover the direction circle.
    """
    x = obs.as_array() / strip_length
    hidden = np.tanh(weights.w_hidden @ x + weights.b_hidden)
    out = float(weights.w_out @ hidden + weights.b_out)
    return math.pi * math.tanh(out)


def apply_action(gripper, angle: float, step_size: float,
                 strip_length: float) -> tuple[float, float]:
    """Next gripper target: move ``step_size`` along ``angle``, kept inside
    the workspace (z >= 0, x within the lateral margins)."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    gx, gz = gripper
    tx = gx + step_size * math.cos(angle)
    tz = gz + step_size * math.sin(angle)
    tz = max(tz, 0.0)
    tx = min(max(tx, X_MIN_FRAC * strip_length), X_MAX_FRAC * strip_length)
    return (tx, tz)
