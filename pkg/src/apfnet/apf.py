"""Attractive/repulsive potential fields and the ideal supervision maps.

The total potential at a point is the quadratic attraction toward the goal
plus the summed repulsion of every obstacle inside its influence distance.
Frames rasterize that potential at the 36x9 cell centers, add a boundary
potential for out-of-road cells, and cap-normalize into [0, 1] so the maps
can supervise a network with bounded outputs.

All functions are pure; frames of a sequence may be computed independently
and in parallel with bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import GridSpec, OccupancyGrid, Scenario, cell_centers, step_obstacles

# Distances below this are clamped before the repulsive term is evaluated;
# the 1/d pole would otherwise make supervision values unbounded.
D_MIN = 0.1


@dataclass(frozen=True)
class ApfParams:
    """Gains and limits of the potential field.

    xi     attraction gain (quadratic pull toward the goal)
    eta    repulsion gain
    d0     influence cutoff: obstacles farther than this exert no repulsion
    u_cap  potential value mapped to 1.0 when frames are normalized
    """

    xi: float = 0.05
    eta: float = 2.0
    d0: float = 8.0
    u_cap: float = 10.0

    def __post_init__(self):
        for name in ("xi", "eta", "d0", "u_cap"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ApfParams":
        unknown = set(doc) - {"xi", "eta", "d0", "u_cap"}
        if unknown:
            raise ValueError(f"unknown potential-field keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})

    def to_dict(self) -> dict:
        return {"xi": self.xi, "eta": self.eta, "d0": self.d0, "u_cap": self.u_cap}


@dataclass(frozen=True)
class FieldFrame:
    """One time step of the ideal field: raw potentials plus normalized grid."""

    raw_potential: np.ndarray
    grid: OccupancyGrid


def attractive_potential(p, goal, xi: float) -> float:
    """Quadratic attraction 0.5 * xi * ||p - goal||^2; zero only at the goal."""
    dx = p[0] - goal[0]
    dy = p[1] - goal[1]
    return 0.5 * xi * (dx * dx + dy * dy)


def repulsive_potential(p, obstacles, eta: float, d0: float) -> float:
    """Summed repulsion 0.5 * eta * (1/d - 1/d0)^2 over obstacles with d <= d0.

    ``obstacles`` is an iterable of 2D positions.  Distances are clamped to
    D_MIN so the result stays finite at obstacle centers.
    """
    total = 0.0
    inv_d0 = 1.0 / d0
    for o in obstacles:
        d = math.hypot(p[0] - o[0], p[1] - o[1])
        if d < D_MIN:
            d = D_MIN
        if d <= d0:
            diff = 1.0 / d - inv_d0
            total += 0.5 * eta * diff * diff
    return total


def total_potential(p, goal, obstacles, params: ApfParams) -> float:
    """Superposition of the attractive and all repulsive terms at ``p``."""
    return attractive_potential(p, goal, params.xi) + repulsive_potential(
        p, obstacles, params.eta, params.d0
    )


def normalize_potential(raw: np.ndarray, u_cap: float) -> np.ndarray:
    """Cap at u_cap and divide, mapping raw potentials into [0, 1]."""
    return np.minimum(raw, u_cap) / u_cap


def build_ideal_frame(
    scenario: Scenario, t: int, spec: GridSpec | None = None, params: ApfParams | None = None
) -> FieldFrame:
    """Ideal field map for step ``t``.

    Raw potential per cell is the total potential at the cell center, plus a
    boundary potential of u_cap for cells whose center lies outside the road
    corridor.  The grid holds the cap-normalized values.
    """
    spec = spec or GridSpec()
    params = params or ApfParams()
    centers = cell_centers(spec, scenario.ego_pos)
    cx = centers[:, :, 0]
    cy = centers[:, :, 1]

    raw = 0.5 * params.xi * ((cx - scenario.goal[0]) ** 2 + (cy - scenario.goal[1]) ** 2)

    inv_d0 = 1.0 / params.d0
    for ox, oy in step_obstacles(scenario, t):
        d = np.hypot(cx - ox, cy - oy)
        np.maximum(d, D_MIN, out=d)
        diff = 1.0 / d - inv_d0
        raw += np.where(d <= params.d0, 0.5 * params.eta * diff * diff, 0.0)

    raw += np.where(np.abs(cy) > scenario.road_halfwidth, params.u_cap, 0.0)

    grid = OccupancyGrid(normalize_potential(raw, params.u_cap), kind="field")
    return FieldFrame(raw_potential=raw, grid=grid)


def build_ideal_sequence(
    scenario: Scenario, spec: GridSpec | None = None, params: ApfParams | None = None
) -> list[FieldFrame]:
    """Ideal field maps for every step of the scenario horizon."""
    return [build_ideal_frame(scenario, t, spec, params) for t in range(scenario.horizon_steps)]
