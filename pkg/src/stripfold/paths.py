"""Material-agnostic baseline gripper paths and the open-loop path runner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import core, sim
from .params import StripParams
from .reward import EpisodeConfig, EpisodeResult, _assemble, failure_reward
from .sim import TouchEvent, TrajectoryLog

BASELINE_SPEED = 0.05  # m/s, near quasi-static


@dataclass(frozen=True)
class GripperPath:
    """Arc-length parameterized planar path of the grasped edge."""

    waypoints: np.ndarray
    total_length: float
    _eval: Callable[[float], tuple[float, float]]

    def point_at(self, s: float) -> tuple[float, float]:
        s = min(max(s, 0.0), self.total_length)
        return self._eval(s)


def triangular_path(strip_length: float) -> GripperPath:
    """Two straight segments via the apex at (L/2, L/2)."""
    if strip_length <= 0:
        raise ValueError("strip_length must be positive")
    L = strip_length
    seg = L / 2 * math.sqrt(2.0)

    def point(s: float) -> tuple[float, float]:
        if s <= seg:
            t = s / seg
            return (L - t * L / 2, t * L / 2)
        t = (s - seg) / seg
        return (L / 2 - t * L / 2, L / 2 - t * L / 2)

    wp = np.array([[L, 0.0], [L / 2, L / 2], [0.0, 0.0]])
    return GripperPath(wp, 2 * seg, point)


def circular_path(strip_length: float, n_waypoints: int = 181) -> GripperPath:
    """Semicircle of radius L/2 about (L/2, 0), from (L, 0) to (0, 0)."""
    if strip_length <= 0:
        raise ValueError("strip_length must be positive")
    L = strip_length
    r = L / 2

    def point(s: float) -> tuple[float, float]:
        a = s / r
        return (r + r * math.cos(a), r * math.sin(a))

    ang = np.linspace(0.0, math.pi, n_waypoints)
    wp = np.column_stack([r + r * np.cos(ang), r * np.sin(ang)])
    return GripperPath(wp, math.pi * r, point)


def run_path(path: GripperPath, params: StripParams,
             speed: float = BASELINE_SPEED,
             config: EpisodeConfig = EpisodeConfig()) -> EpisodeResult:
    """Drive the simulator along the path until layer touch or path end.

    The path is followed as the piecewise-linear interpolation of its
    waypoints (the analytic shape sampled below a hundredth of a link).
    """
    if speed > sim.MAX_GRIPPER_SPEED:
        raise ValueError("speed exceeds the gripper clamp")
    wp = np.asarray(path.waypoints, dtype=float)
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    knot_s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(knot_s[-1])

    state = sim.init_flat(params)
    pos, vel = state.positions, state.velocities
    prev = np.empty_like(pos)
    cap = int(math.ceil(total / (speed * params.sim_dt))) + 2
    force = np.zeros(cap)
    traj = np.zeros((cap, 3))
    info = np.zeros(1, dtype=np.int64)
    status, steps, touch_sphere, touch_x = core._path_kernel(
        pos, vel, prev, knot_s, wp, total, speed,
        params.sphere_mass, params.link_length, params.sphere_radius,
        params.joint_stiffness, params.joint_damping, params.gravity,
        params.constraint_iterations, params.sim_dt / params.substeps,
        params.substeps, config.control_period,
        sim.GROUND_TOL, sim.TOUCH_TOL, sim.TOUCH_GAP, sim.MAX_GRIPPER_SPEED,
        force, traj, info)
    if status == -1:
        raise sim.SolverDivergence(
            f"non-finite positions (path position s={touch_x:.4f} m)")

    force_trace = [float(f) for f in force[:steps]]
    trajectory = [(float(r[0]), float(r[1]), float(r[2]))
                  for r in traj[:steps]]
    touched = status == 0
    if touched:
        l1 = (params.n_links - touch_sphere) * params.link_length
        event = TouchEvent(True, int(touch_sphere), float(touch_x),
                           l1, float(touch_x), l1 - float(touch_x))
    else:
        event = TouchEvent(touched=False)
    log = TrajectoryLog()
    n_sim = int(info[0])
    for i in range(steps):
        t = min((i + 1) * config.control_period, n_sim) * params.sim_dt
        last = i == steps - 1
        log.append(t, *trajectory[i], force_trace[i], touched and last,
                   event.d)

    if touched:
        return _assemble(True, event.d, force_trace, -abs(event.d),
                         trajectory, log, config)
    # open-loop paths carry no overtime phase; no touch means the run just
    # records the bounded failure reward
    return _assemble(False, float("nan"), force_trace,
                     failure_reward(params, config), trajectory, log, config)
