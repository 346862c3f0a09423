"""Physical and numerical parameters of a simulated fabric strip."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

K_MIN = 0.02
K_MAX = 0.3
DAMPING_RATIO_MAX = 50.0


def min_damping(stiffness: float) -> float:
    """Smallest physically admissible joint damping for a given stiffness."""
    return 3e-3 * stiffness + 3.5e-4


@dataclass(frozen=True)
class StripParams:
    """Geometry, inertia and joint properties of one strip.

    Lengths are meters, masses kilograms, stiffness N*m/rad and damping
    N*m*s/rad. ``n_links`` defaults to ``strip_length / link_length``.
    """

    link_length: float = 0.002
    sphere_radius: float = 0.0005
    sphere_mass: float = 0.0033
    strip_length: float = 0.6
    n_links: int | None = None
    joint_stiffness: float = 0.1
    joint_damping: float = 0.01
    gravity: float = 9.81
    sim_dt: float = 0.005
    substeps: int = 10
    constraint_iterations: int = 100

    def __post_init__(self):
        if self.n_links is None:
            if self.link_length <= 0:
                raise ValueError("strip geometry and mass must be positive")
            object.__setattr__(
                self, "n_links", int(round(self.strip_length / self.link_length))
            )
        self.validate()

    def validate(self) -> None:
        if self.link_length <= 0 or self.sphere_mass <= 0 or self.sphere_radius <= 0:
            raise ValueError("strip geometry and mass must be positive")
        if self.n_links < 1:
            raise ValueError("need at least 1 link")
        if self.joint_stiffness < 0 or self.joint_damping < 0:
            raise ValueError("joint stiffness/damping must be non-negative")
        if self.sim_dt <= 0 or self.substeps < 1 or self.constraint_iterations < 1:
            raise ValueError("invalid integration settings")

    @property
    def n_spheres(self) -> int:
        return self.n_links + 1

    def replace(self, **changes) -> "StripParams":
        return dataclasses.replace(self, **changes)


DESK_LINK_RATIO = 5.0  # desk-scale links are 5x longer than full fidelity


def desk_scale_params(
    stiffness: float = 0.1, damping: float | None = None, **overrides
) -> StripParams:
    """Coarse 60-link strip used for training and tests.

    ``stiffness``/``damping`` are the canonical per-joint material values of
    the full-resolution model. Coarse graining preserves the continuum
    behavior: linear density (sphere mass scaled by the link ratio) and
    bending stiffness EI = k * link_length (joint constants divided by the
    link ratio).
    """
    if damping is None:
        damping = min_damping(stiffness) * math.sqrt(DAMPING_RATIO_MAX)
    kw = dict(
        link_length=0.002 * DESK_LINK_RATIO,
        sphere_mass=0.0033 * DESK_LINK_RATIO,
        joint_stiffness=stiffness / DESK_LINK_RATIO,
        joint_damping=damping / DESK_LINK_RATIO,
    )
    kw.update(overrides)
    return StripParams(**kw)


def full_fidelity_params(
    stiffness: float = 0.1, damping: float | None = None, **overrides
) -> StripParams:
    """Fine 300-link strip matching the calibrated constants; slow."""
    if damping is None:
        damping = min_damping(stiffness) * math.sqrt(DAMPING_RATIO_MAX)
    kw = dict(
        joint_stiffness=stiffness,
        joint_damping=damping,
        substeps=100,
    )
    kw.update(overrides)
    return StripParams(**kw)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(StripParams)}


def save_params(params: StripParams, path: str | Path) -> None:
    """Write params as flat ``key = value`` lines (SI units)."""
    lines = []
    for f in dataclasses.fields(StripParams):
        lines.append(f"{f.name} = {getattr(params, f.name)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path: str | Path) -> StripParams:
    """Read a ``key = value`` parameter file written by :func:`save_params`."""
    kw = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown strip parameter {key!r}")
        value = value.strip()
        kw[key] = int(value) if key in ("n_links", "substeps", "constraint_iterations") else float(value)
    return StripParams(**kw)
