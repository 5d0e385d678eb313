"""Driving scenarios on a straight road corridor and their grid rasterization.

The world frame is metric and fixed: x runs along the road (forward is +x),
y is lateral (+y to the left), and the corridor is |y| <= road_halfwidth.
Occupancy grids are 36x9 arrays anchored to the ego vehicle; rows advance
with x, columns with y.

Everything here is a pure function of its inputs, so values can be shared
freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

GRID_ROWS = 36
GRID_COLS = 9


@dataclass(frozen=True)
class Obstacle:
    """A disc obstacle propagated at constant velocity."""

    pos: tuple[float, float]
    vel: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (*self.pos, *self.vel, self.radius)):
            raise ValueError("obstacle fields must be finite")
        if self.radius <= 0.0:
            raise ValueError(f"obstacle radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Scenario:
    """World-frame description of ego, goal, obstacles and road over time.

    ``horizon_steps`` frames are defined, ``dt`` seconds apart.  The goal is
    required to lie inside the road corridor.
    """

    ego_pos: tuple[float, float]
    ego_vel: tuple[float, float]
    goal: tuple[float, float]
    obstacles: tuple[Obstacle, ...]
    road_halfwidth: float
    horizon_steps: int
    dt: float

    def __post_init__(self):
        values = (*self.ego_pos, *self.ego_vel, *self.goal, self.road_halfwidth, self.dt)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("scenario fields must be finite")
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.road_halfwidth <= 0.0:
            raise ValueError(f"road_halfwidth must be > 0, got {self.road_halfwidth}")
        if abs(self.goal[1]) > self.road_halfwidth:
            raise ValueError("goal lies outside the road corridor")


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the ego-anchored occupancy grid.

    The grid is exactly 36x9.  ``ego_cell`` is the (row, col) whose center
    coincides with the ego position; rows increase forward of the ego and
    columns increase leftward.
    """

    rows: int = GRID_ROWS
    cols: int = GRID_COLS
    cell_long: float = 2.0
    cell_lat: float = 1.0
    ego_cell: tuple[int, int] = (30, 4)

    def __post_init__(self):
        if self.rows != GRID_ROWS or self.cols != GRID_COLS:
            raise ValueError(f"grid must be {GRID_ROWS}x{GRID_COLS}")
        if self.cell_long <= 0.0 or self.cell_lat <= 0.0:
            raise ValueError("cell sizes must be > 0")
        r, c = self.ego_cell
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ValueError(f"ego_cell {self.ego_cell} outside the grid")


@dataclass(frozen=True)
class OccupancyGrid:
    """A 36x9 scalar grid, either a binary input map or a [0,1] field map."""

    values: np.ndarray
    kind: str  # "binary" | "field"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (GRID_ROWS, GRID_COLS):
            raise ValueError(f"grid shape must be {(GRID_ROWS, GRID_COLS)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        if self.kind == "binary":
            if not np.all((v == 0.0) | (v == 1.0)):
                raise ValueError("binary grid values must be 0 or 1")
        elif self.kind == "field":
            if np.any(v < 0.0) or np.any(v > 1.0):
                raise ValueError("field grid values must lie in [0, 1]")
        else:
            raise ValueError(f"unknown grid kind {self.kind!r}")


def world_to_grid(p, spec: GridSpec, ego) -> tuple[int, int] | None:
    """Return the grid cell containing world point ``p``, or None if outside.

    The ego-anchored frame puts ``ego`` at the center of ``spec.ego_cell``.
    """
    row = spec.ego_cell[0] + math.floor((p[0] - ego[0]) / spec.cell_long + 0.5)
    col = spec.ego_cell[1] + math.floor((p[1] - ego[1]) / spec.cell_lat + 0.5)
    if 0 <= row < spec.rows and 0 <= col < spec.cols:
        return (row, col)
    return None


def grid_to_world(cell: tuple[int, int], spec: GridSpec, ego) -> np.ndarray:
    """Return the world coordinates of a cell center."""
    r, c = cell
    if not (0 <= r < spec.rows and 0 <= c < spec.cols):
        raise ValueError(f"cell {cell} outside the grid")
    return np.array(
        [
            ego[0] + (r - spec.ego_cell[0]) * spec.cell_long,
            ego[1] + (c - spec.ego_cell[1]) * spec.cell_lat,
        ]
    )


def cell_centers(spec: GridSpec, ego) -> np.ndarray:
    """World coordinates of every cell center as a (rows, cols, 2) array."""
    rows = np.arange(spec.rows, dtype=float)
    cols = np.arange(spec.cols, dtype=float)
    x = ego[0] + (rows - spec.ego_cell[0]) * spec.cell_long
    y = ego[1] + (cols - spec.ego_cell[1]) * spec.cell_lat
    out = np.empty((spec.rows, spec.cols, 2))
    out[:, :, 0] = x[:, None]
    out[:, :, 1] = y[None, :]
    return out


def obstacle_positions_at(scenario: Scenario, seconds: float) -> np.ndarray:
    """Constant-velocity obstacle centers at an arbitrary time, as (K, 2)."""
    if not scenario.obstacles:
        return np.zeros((0, 2))
    pos = np.array([o.pos for o in scenario.obstacles], dtype=float)
    vel = np.array([o.vel for o in scenario.obstacles], dtype=float)
    return pos + vel * seconds


def step_obstacles(scenario: Scenario, t: int) -> np.ndarray:
    """Obstacle centers at step ``t`` (constant-velocity propagation)."""
    if not 0 <= t < scenario.horizon_steps:
        raise ValueError(f"step {t} outside horizon [0, {scenario.horizon_steps})")
    return obstacle_positions_at(scenario, t * scenario.dt)


def rasterize(scenario: Scenario, t: int, spec: GridSpec | None = None) -> OccupancyGrid:
    """Binary occupancy map at step ``t``.

    A cell is 1 iff any obstacle disc overlaps the cell rectangle or the cell
    center lies outside the road corridor, else 0.  Out-of-road cells encode
    the corridor boundary directly in the input map.
    """
    spec = spec or GridSpec()
    if not 0 <= t < scenario.horizon_steps:
        raise ValueError(f"step {t} outside horizon [0, {scenario.horizon_steps})")

    centers = cell_centers(spec, scenario.ego_pos)
    occupied = np.abs(centers[:, :, 1]) > scenario.road_halfwidth

    x_lo = centers[:, :, 0] - spec.cell_long / 2.0
    x_hi = centers[:, :, 0] + spec.cell_long / 2.0
    y_lo = centers[:, :, 1] - spec.cell_lat / 2.0
    y_hi = centers[:, :, 1] + spec.cell_lat / 2.0

    positions = step_obstacles(scenario, t)
    for (px, py), obstacle in zip(positions, scenario.obstacles):
        nx = np.clip(px, x_lo, x_hi)
        ny = np.clip(py, y_lo, y_hi)
        occupied |= (nx - px) ** 2 + (ny - py) ** 2 <= obstacle.radius**2

    return OccupancyGrid(occupied.astype(float), kind="binary")


# --- JSON interchange -------------------------------------------------------
#
# Scenario documents are strict: unknown keys are rejected so that typos in
# hand-written files fail loudly.  A suite file is a JSON array of documents.

_SCENARIO_KEYS = {"ego", "goal", "obstacles", "road_halfwidth", "horizon_steps", "dt"}
_EGO_KEYS = {"pos", "vel"}
_OBSTACLE_KEYS = {"pos", "vel", "radius"}


def _pair(value, name) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValueError(f"{name} must be a 2-element array")
    return (float(value[0]), float(value[1]))


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ValueError("scenario document must be a JSON object")
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    missing = _SCENARIO_KEYS - set(doc)
    if missing:
        raise ValueError(f"missing scenario keys: {sorted(missing)}")

    ego = doc["ego"]
    if not isinstance(ego, dict) or set(ego) != _EGO_KEYS:
        raise ValueError('"ego" must be an object with keys {"pos", "vel"}')

    obstacles = []
    for i, entry in enumerate(doc["obstacles"]):
        if not isinstance(entry, dict) or set(entry) != _OBSTACLE_KEYS:
            raise ValueError(f'obstacle {i} must have exactly keys {{"pos", "vel", "radius"}}')
        obstacles.append(
            Obstacle(
                pos=_pair(entry["pos"], f"obstacle {i} pos"),
                vel=_pair(entry["vel"], f"obstacle {i} vel"),
                radius=float(entry["radius"]),
            )
        )

    return Scenario(
        ego_pos=_pair(ego["pos"], "ego pos"),
        ego_vel=_pair(ego["vel"], "ego vel"),
        goal=_pair(doc["goal"], "goal"),
        obstacles=tuple(obstacles),
        road_halfwidth=float(doc["road_halfwidth"]),
        horizon_steps=int(doc["horizon_steps"]),
        dt=float(doc["dt"]),
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "ego": {"pos": list(s.ego_pos), "vel": list(s.ego_vel)},
        "goal": list(s.goal),
        "obstacles": [
            {"pos": list(o.pos), "vel": list(o.vel), "radius": o.radius} for o in s.obstacles
        ],
        "road_halfwidth": s.road_halfwidth,
        "horizon_steps": s.horizon_steps,
        "dt": s.dt,
    }


def load_scenarios(path) -> list[Scenario]:
    """Load a suite file (JSON array) or a single scenario document.

    Errors in a suite name the offending scenario index.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        return [scenario_from_dict(data)]
    if not isinstance(data, list):
        raise ValueError("suite file must be a JSON array of scenario objects")
    scenarios = []
    for i, doc in enumerate(data):
        try:
            scenarios.append(scenario_from_dict(doc))
        except ValueError as exc:
            raise ValueError(f"scenario {i}: {exc}") from exc
    return scenarios


def save_suite(scenarios: Sequence[Scenario], path) -> None:
    docs = [scenario_to_dict(s) for s in scenarios]
    Path(path).write_text(json.dumps(docs, indent=2) + "\n", encoding="utf-8")
