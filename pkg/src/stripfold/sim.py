"""Planar strip simulator: state, stepping, and geometric event detection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core
from .params import StripParams

GROUND_TOL = 1e-4  # sphere counts as grounded when z <= radius + this
TOUCH_TOL = 1e-4  # hanging sphere counts as touching the layer below
TOUCH_GAP = 2  # spheres skipped past the grounded run before touch counts
MAX_GRIPPER_SPEED = 0.1  # m/s, kinematic clamp

TRAJECTORY_COLUMNS = (
    "time_s", "gripper_x", "gripper_z", "x_c", "f_x", "touched", "d_if_touched"
)


class SolverDivergence(RuntimeError):
    """The projection solver produced non-finite positions."""


@dataclass
class StripState:
    """Positions/velocities of all spheres; sphere 0 pinned, last one grasped."""

    positions: np.ndarray  # (n_spheres, 2)
    velocities: np.ndarray  # (n_spheres, 2)
    time: float = 0.0

    @property
    def gripper(self) -> tuple[float, float]:
        return (float(self.positions[-1, 0]), float(self.positions[-1, 1]))

    def copy(self) -> "StripState":
        return StripState(self.positions.copy(), self.velocities.copy(), self.time)


@dataclass(frozen=True)
class TouchEvent:
    touched: bool
    touch_sphere_index: int = -1
    touch_x: float = float("nan")
    l1: float = float("nan")
    l2: float = float("nan")
    d: float = float("nan")


@dataclass(frozen=True)
class ForceReadout:
    f_x: float


def init_flat(params: StripParams) -> StripState:
    """Strip at rest along +x: pin at the origin, spheres on the desk.

    Sphere 1 sits at x = sqrt(link^2 - radius^2) so link 0 has exact rest
    length despite the pinned sphere lying at z = 0.
    """
    n = params.n_spheres
    pos = np.zeros((n, 2))
    x1 = math.sqrt(max(params.link_length ** 2 - params.sphere_radius ** 2, 0.0))
    for i in range(1, n):
        pos[i, 0] = x1 + (i - 1) * params.link_length
        pos[i, 1] = params.sphere_radius
    vel = np.zeros((n, 2))
    return StripState(pos, vel)


def step(state: StripState, gripper_target, params: StripParams,
         desk_enabled: bool = True) -> tuple[StripState, ForceReadout]:
    """Advance one sim step driving the grasped sphere toward the target.

    ``gripper_target=None`` releases the grasped end (free dynamics).
    The target is clamped to the kinematic gripper speed.
    """
    new = state.copy()
    dt_sub = params.sim_dt / params.substeps
    grip_from = state.positions[-1].copy()
    if gripper_target is None:
        grip_to = grip_from
        driven = False
    else:
        gt = np.asarray(gripper_target, dtype=float)
        # the pinned inextensible strip cannot follow a target outside the
        # disk it can span; project such targets onto the reachable disk
        reach = params.strip_length - params.sphere_radius
        t_norm = float(np.hypot(*gt))
        if t_norm > reach:
            gt = gt * (reach / t_norm)
        if desk_enabled:
            # the gripper holds the strip edge; it cannot push it below the desk
            gt[1] = max(gt[1], params.sphere_radius)
        move = gt - grip_from
        dist = float(np.hypot(*move))
        max_move = MAX_GRIPPER_SPEED * params.sim_dt
        if dist > max_move:
            gt = grip_from + move * (max_move / dist)
        grip_to = gt
        driven = True
    status, fx = core.advance(
        new.positions, new.velocities, params.substeps, dt_sub,
        grip_from, grip_to, driven,
        params.sphere_mass, params.link_length, params.sphere_radius,
        params.joint_stiffness, params.joint_damping, params.gravity,
        params.constraint_iterations, desk_enabled,
    )
    if status != core.STATUS_OK:
        raise SolverDivergence(
            f"non-finite positions at t={state.time:.4f}s, substep {status - 1}"
        )
    new.time = state.time + params.sim_dt
    return new, ForceReadout(f_x=fx)


def grounded_run_length(state: StripState, params: StripParams) -> int:
    """Number of spheres in the contiguous grounded run from the pinned end."""
    z = state.positions[:, 1]
    limit = params.sphere_radius + GROUND_TOL
    n = 0
    for i in range(len(z)):
        if z[i] <= limit:
            n += 1
        else:
            break
    return n


def detect_desk_contact_x(state: StripState, params: StripParams) -> float:
    """Liftoff x-coordinate x_c: end of the grounded run from the pinned end."""
    run = grounded_run_length(state, params)
    if run <= 1:
        return 0.0
    return float(state.positions[run - 1, 0])


def detect_layer_touch(state: StripState, params: StripParams) -> TouchEvent:
    """Geometric first-touch test of the hanging layer on the laying layer."""
    run = grounded_run_length(state, params)
    x_c = detect_desk_contact_x(state, params)
    z = state.positions[:, 1]
    x = state.positions[:, 0]
    limit = 2.0 * params.sphere_radius + TOUCH_TOL
    best = -1
    for i in range(run + TOUCH_GAP, len(z)):
        if z[i] <= limit and x[i] <= x_c:
            if best < 0 or z[i] < z[best]:
                best = i
    if best < 0:
        return TouchEvent(touched=False)
    touch_x = float(x[best])
    l1 = (params.n_links - best) * params.link_length
    l2 = touch_x
    return TouchEvent(True, best, touch_x, l1, l2, l1 - l2)


def link_violation(state: StripState, params: StripParams) -> float:
    """Worst absolute deviation of any link length from rest."""
    lengths = np.linalg.norm(np.diff(state.positions, axis=0), axis=1)
    return float(np.abs(lengths - params.link_length).max())


def mechanical_energy(state: StripState, params: StripParams) -> float:
    return core.mechanical_energy(
        state.positions, state.velocities, params.sphere_mass,
        params.gravity, params.joint_stiffness,
    )


def drive_gripper_to(state: StripState, target, params: StripParams,
                     speed: float = MAX_GRIPPER_SPEED,
                     settle_time: float = 0.0) -> StripState:
    """Move the gripper to ``target`` at constant speed, then optionally hold.

    Targets outside the strip's reach are projected onto the reachable disk
    (matching the clamp in :func:`step`) so the loop terminates."""
    target = np.asarray(target, dtype=float)
    reach = params.strip_length - params.sphere_radius
    t_norm = float(np.hypot(*target))
    if t_norm > reach:
        target = target * (reach / t_norm)
    speed = min(speed, MAX_GRIPPER_SPEED)
    while True:
        move = target - state.positions[-1]
        dist = float(np.hypot(*move))
        if dist < 1e-12:
            break
        step_move = min(dist, speed * params.sim_dt)
        sub_target = state.positions[-1] + move * (step_move / dist)
        state, _ = step(state, sub_target, params)
    n_settle = int(round(settle_time / params.sim_dt))
    for _ in range(n_settle):
        state, _ = step(state, target, params)
    return state


def folded_height(params: StripParams, speed: float = 0.02,
                  settle_time: float = 2.0) -> float:
    """Height of the standing loop after a quasi-static full fold."""
    state = init_flat(params)
    state = drive_gripper_to(state, (0.0, params.sphere_radius), params,
                             speed=speed, settle_time=settle_time)
    return float(state.positions[:, 1].max())


@dataclass
class TrajectoryLog:
    """Control-rate trajectory rows in the canonical CSV layout."""

    rows: list[tuple] = field(default_factory=list)

    def append(self, time_s, gripper_x, gripper_z, x_c, f_x, touched, d):
        self.rows.append((time_s, gripper_x, gripper_z, x_c, f_x,
                          int(bool(touched)), d if touched else ""))

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            w.writerows(self.rows)
