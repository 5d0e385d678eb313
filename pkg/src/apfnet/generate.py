"""Seeded synthetic scenario suites for training and benchmarking.

Scenarios put the ego at the origin of a straight corridor with the goal a
short stretch ahead near the centerline.  The goal stays in a narrow band
on purpose: the binary input maps encode obstacles and road boundaries but
not the goal, so the field-regression task is only well posed when the goal
distribution is tight.  Obstacles are where the presets differ:

  empty   no obstacles (baseline for planner soundness)
  single  one static obstacle just off the start-goal line
  sparse  one or two obstacles anywhere in the corridor
  dense   heavy static roadside clutter plus a couple of near-lane
          obstacles; the driving lane itself stays passable
  mixed   up to six obstacles anywhere, some moving slowly
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Obstacle, Scenario


@dataclass(frozen=True)
class _Preset:
    count: tuple[int, int]
    static_prob: float
    goal_x: tuple[float, float]
    goal_y: tuple[float, float]
    placement: str  # "corridor" | "on_path" | "roadside"


_PRESETS = {
    "empty": _Preset((0, 0), 1.0, (7.5, 9.5), (-0.3, 0.3), "corridor"),
    "single": _Preset((1, 1), 1.0, (7.5, 9.5), (-0.3, 0.3), "on_path"),
    "sparse": _Preset((1, 2), 0.7, (7.5, 9.5), (-0.3, 0.3), "corridor"),
    # Dense goals sit a couple of rows inside the grid so the field minimum
    # is interior (edge rows regress noisily).
    "dense": _Preset((60, 80), 1.0, (8.4, 8.8), (-0.15, 0.15), "roadside"),
    "mixed": _Preset((0, 6), 0.7, (7.5, 9.5), (-0.3, 0.3), "corridor"),
}

DIFFICULTIES = tuple(_PRESETS)

_HALFWIDTH = (3.2, 4.5)
_START_CLEARANCE = 1.2  # m beyond the obstacle radius, keeps the start collision-free
_GOAL_CLEARANCE = 1.8  # m beyond the obstacle radius, keeps the goal reachable


def _place(rng, halfwidth, goal, placement: str, index: int):
    """Sample one obstacle position and radius for the given placement."""
    for _ in range(64):
        if placement == "on_path":
            # Just off the start-goal line, biased to one side.
            radius = float(rng.uniform(0.3, 0.6))
            x = float(rng.uniform(3.5, 5.5))
            line_y = goal[1] * x / goal[0]
            y = line_y + float(rng.choice([-1.0, 1.0])) * float(rng.uniform(0.25, 0.8))
        elif placement == "roadside":
            if index == 0:
                # One near-lane obstacle shapes the path without blocking
                # it: the straight line stays collision-free with margin.
                radius = float(rng.uniform(0.25, 0.4))
                x = float(rng.uniform(3.0, 7.5))
                y = float(rng.choice([-1.0, 1.0])) * float(rng.uniform(1.3, 1.6))
            else:
                # Shoulder clutter along the whole grid stretch, including
                # behind the ego; a clear gap to the near-lane band keeps
                # swerves from getting sandwiched.
                radius = float(rng.uniform(0.25, 0.5))
                x = float(rng.uniform(-12.0, 11.2))
                y = float(rng.choice([-1.0, 1.0])) * float(rng.uniform(2.1, halfwidth - 0.35))
        else:
            radius = float(rng.uniform(0.3, 0.7))
            x = float(rng.uniform(2.5, 10.5))
            y = float(rng.uniform(-1.0, 1.0)) * min(halfwidth - 0.4, 4.0)
        if np.hypot(x, y) < radius + _START_CLEARANCE:
            continue
        if np.hypot(x - goal[0], y - goal[1]) < radius + _GOAL_CLEARANCE:
            continue
        return x, y, radius
    raise RuntimeError("could not place an obstacle after 64 attempts")


def generate_scenario(
    rng: np.random.Generator,
    difficulty: str = "mixed",
    horizon_steps: int = 5,
    dt: float = 0.1,
) -> Scenario:
    if difficulty not in _PRESETS:
        raise ValueError(f"difficulty must be one of {DIFFICULTIES}, got {difficulty!r}")
    preset = _PRESETS[difficulty]

    halfwidth = float(rng.uniform(*_HALFWIDTH))
    goal = (float(rng.uniform(*preset.goal_x)), float(rng.uniform(*preset.goal_y)))
    ego_speed = float(rng.uniform(5.0, 12.0))

    obstacles = []
    count = int(rng.integers(preset.count[0], preset.count[1] + 1))
    for i in range(count):
        x, y, radius = _place(rng, halfwidth, goal, preset.placement, i)
        if rng.uniform() < preset.static_prob:
            vel = (0.0, 0.0)
        else:
            vel = (float(rng.uniform(-0.4, 0.4)), float(rng.uniform(-0.2, 0.2)))
        obstacles.append(Obstacle(pos=(x, y), vel=vel, radius=radius))

    return Scenario(
        ego_pos=(0.0, 0.0),
        ego_vel=(ego_speed, 0.0),
        goal=goal,
        obstacles=tuple(obstacles),
        road_halfwidth=halfwidth,
        horizon_steps=horizon_steps,
        dt=dt,
    )


def generate_suite(
    count: int,
    seed: int,
    difficulty: str = "mixed",
    horizon_steps: int = 5,
    dt: float = 0.1,
) -> list[Scenario]:
    """Deterministic suite of ``count`` scenarios for the given seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return [generate_scenario(rng, difficulty, horizon_steps, dt) for _ in range(count)]
