"""Episode rollout and reward assembly.

Total reward is the sum of per-step force penalties and a terminal
misalignment penalty; episodes that never reach layer touch within the
horizon are completed by forced horizontal motion and charged a fixed
overtime penalty, keeping the objective bounded.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core, sim
from .params import StripParams
from .policy import X_MAX_FRAC, X_MIN_FRAC, PolicyWeights
from .sim import TouchEvent, TrajectoryLog


@dataclass(frozen=True)
class EpisodeConfig:
    control_period: int = 10  # sim steps per control step
    action_step: float = 0.005  # m of gripper motion per control step
    horizon: int = 400  # control steps before forced completion
    force_scale: float = 0.01  # weight of the force penalty (a)
    overtime_penalty: float = 0.1  # charged when the horizon is exceeded (c_H)
    prelift_height: float = 0.1  # m, start-of-episode gripper height


@dataclass
class EpisodeResult:
    touched: bool
    d: float
    steps: int
    force_trace: list[float]
    intermediate_reward_sum: float
    terminal_reward: float
    total_reward: float
    trajectory: list[tuple[float, float, float]]
    failed: bool = False
    log: TrajectoryLog = field(default_factory=TrajectoryLog)

    def write_csv(self, path: str | Path) -> None:
        """Trajectory rows plus a one-line episode summary."""
        self.log.write(path)
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# summary", "touched", "d", "N", "total_reward"])
            w.writerow(["", int(self.touched), self.d, self.steps, self.total_reward])


def intermediate_reward(f_x: float, n_steps: int, scale: float) -> float:
    """Per-step force penalty: -scale * |f_x| / N."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if scale < 0:
        raise ValueError("scale must be non-negative")
    return -scale * abs(f_x) / n_steps

def terminal_reward(event: TouchEvent) -> float:
    """Misalignment penalty -|d| at layer touch; NaN when no touch occurred
    (the episode runner substitutes the bounded overtime completion)."""
    if not event.touched:
        return float("nan")
    return -abs(event.d)


def _assemble(touched, d, force_trace, terminal, trajectory, log,
              config: EpisodeConfig, failed=False) -> EpisodeResult:
    n = max(len(force_trace), 1)
    inter = sum(intermediate_reward(f, n, config.force_scale) for f in force_trace)
    return EpisodeResult(
        touched=touched, d=d, steps=len(force_trace), force_trace=force_trace,
        intermediate_reward_sum=inter, terminal_reward=terminal,
        total_reward=inter + terminal, trajectory=trajectory, failed=failed,
        log=log,
    )


def failure_reward(params: StripParams, config: EpisodeConfig) -> float:
    return -(config.overtime_penalty + params.strip_length)


def run_episode(weights: PolicyWeights, params: StripParams,
                config: EpisodeConfig = EpisodeConfig()) -> EpisodeResult:
    """Roll out the feedback policy on one strip until layer touch.

    The gripper is first lifted vertically to the start height. If no touch
    happens within the horizon, motion is forced horizontally toward the
    fixed end until touch or the workspace limit, and the overtime penalty
    is charged on top of the final misalignment.
    """
    L = params.strip_length
    state = sim.init_flat(params)
    pos, vel = state.positions, state.velocities
    prev = np.empty_like(pos)
    # bound on forced-completion steps: full workspace width
    max_extra = int(math.ceil(1.4 * L / config.action_step)) + 10
    cap = config.horizon + max_extra
    force = np.zeros(cap)
    traj = np.zeros((cap, 3))
    info = np.zeros(2, dtype=np.int64)
    status, steps, touch_sphere, touch_x = core._episode_kernel(
        pos, vel, prev, weights.flat, weights.n_inputs, weights.n_hidden, L,
        params.n_links, params.sphere_mass, params.link_length,
        params.sphere_radius, params.joint_stiffness, params.joint_damping,
        params.gravity, params.constraint_iterations,
        params.sim_dt / params.substeps, params.substeps,
        config.control_period, config.action_step, config.horizon, max_extra,
        config.prelift_height, X_MIN_FRAC * L, X_MAX_FRAC * L,
        sim.GROUND_TOL, sim.TOUCH_TOL, sim.TOUCH_GAP, sim.MAX_GRIPPER_SPEED,
        force, traj, info)

    force_trace = [float(f) for f in force[:steps]]
    trajectory = [(float(r[0]), float(r[1]), float(r[2]))
                  for r in traj[:steps]]
    touched = status in (0, 1)
    if touched:
        l1 = (params.n_links - touch_sphere) * params.link_length
        event = TouchEvent(True, int(touch_sphere), float(touch_x),
                           l1, float(touch_x), l1 - float(touch_x))
    else:
        event = TouchEvent(touched=False)

    log = TrajectoryLog()
    n_pre, n_sim = int(info[0]), int(info[1])
    for i in range(steps):
        t = (n_pre + min((i + 1) * config.control_period, n_sim)) * params.sim_dt
        last = i == steps - 1
        log.append(t, *trajectory[i], force_trace[i],
                   touched and last, event.d)

    if status == -1:
        return _assemble(False, float("nan"), force_trace,
                         failure_reward(params, config), trajectory, log,
                         config, failed=True)
    if touched:
        terminal = terminal_reward(event)
        if status == 1:  # touched only after forced overtime completion
            terminal -= config.overtime_penalty
        return _assemble(True, event.d, force_trace, terminal, trajectory,
                         log, config)
    # ran out of workspace without ever touching
    return _assemble(False, float("nan"), force_trace,
                     failure_reward(params, config), trajectory, log, config)
