"""Gradient-descent trajectory planning over analytic or learned fields.

Both field sources run through the same descent loop: the gradient is
estimated by central differences in space, the position moves a fixed step
against it, and a goal-directed step substitutes on plateaus.  The analytic
source evaluates the potential exactly at every query (recomputing it per
step as obstacles move); the learned source runs the network once per
scenario and bilinearly interpolates its frames afterwards.

Per-scenario wall-clock time is split into field construction (the single
network inference, or the analytic per-step field evaluations) and the
remaining descent work.  Planning is deterministic for fixed inputs; calls
for distinct scenarios are independent.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .apf import ApfParams, attractive_potential, repulsive_potential
from .network import CompiledPredictor, ModelParameters
from .scenario import GridSpec, Scenario, rasterize

OUTCOME_REACHED = "reached_goal"
OUTCOME_COLLIDED = "collided"
OUTCOME_TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class PlannerConfig:
    step_size: float = 0.5  # m per descent step (gradient direction is normalized)
    v_max: float = 15.0  # m/s, caps per-step displacement at v_max * dt
    dt: float = 0.1  # s between trajectory points
    goal_tol: float = 1.0  # m, reaching distance
    safety_margin: float = 0.5  # m added to obstacle radii for collision checks
    grad_floor: float = 1e-6  # below this gradient norm the plateau rule fires
    probe_eps: float = 0.25  # m, spatial step of the central differences


@dataclass
class Trajectory:
    """Planned path: uniformly spaced points, an outcome, and timing.

    ``stall_count`` counts plateau-rule activations; no further local-minimum
    escape is attempted, so a stalled plan simply times out.
    """

    times: np.ndarray  # (N,)
    positions: np.ndarray  # (N, 2)
    velocities: np.ndarray  # (N, 2)
    outcome: str
    stall_count: int
    plan_time_s: float
    field_time_s: float
    descent_time_s: float

    def path_length(self) -> float:
        if len(self.positions) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(self.positions, axis=0).T)))


class AnalyticField:
    """Exact potential evaluation; the field is recomputed as obstacles move.

    Out-of-corridor points get the normalization cap added, mirroring the
    boundary rule of the ideal frames, so descent sees the same corridor
    walls the learned maps were trained on.
    """

    kind = "analytic"

    def __init__(self, params: ApfParams | None = None):
        self.params = params or ApfParams()

    def start(self, scenario: Scenario) -> "_AnalyticState":
        return _AnalyticState(self.params, scenario)


class _AnalyticState:
    accrues_field_time = True

    def __init__(self, params: ApfParams, scenario: Scenario):
        self.params = params
        self.goal = scenario.goal
        self.halfwidth = scenario.road_halfwidth
        self._base = [(o.pos[0], o.pos[1], o.vel[0], o.vel[1]) for o in scenario.obstacles]
        self._positions: list[tuple[float, float]] = [(x, y) for x, y, _, _ in self._base]
        self.setup_seconds = 0.0

    def at_time(self, seconds: float) -> None:
        self._positions = [(x + vx * seconds, y + vy * seconds) for x, y, vx, vy in self._base]

    def value(self, p) -> float:
        u = attractive_potential(p, self.goal, self.params.xi) + repulsive_potential(
            p, self._positions, self.params.eta, self.params.d0
        )
        if abs(p[1]) > self.halfwidth:
            u += self.params.u_cap
        return u

    def clamp(self, p):
        return p


class LearnedField:
    """Network-predicted field maps, built once per scenario by inference.

    The predictor is compiled at construction (the conv matrices depend only
    on the frozen weights); only the per-scenario inference is counted as
    field-construction time.
    """

    kind = "learned"

    def __init__(self, params: ModelParameters, spec: GridSpec | None = None):
        self.params = params
        self.spec = spec or GridSpec()
        self._predictor = CompiledPredictor(params)

    def start(self, scenario: Scenario) -> "_LearnedState":
        inputs = np.stack(
            [rasterize(scenario, t, self.spec).values for t in range(scenario.horizon_steps)]
        )
        t0 = time.perf_counter()
        frames = self._predictor.run(inputs)
        setup = time.perf_counter() - t0
        return _LearnedState(frames, self.spec, scenario, setup)


class _LearnedState:
    accrues_field_time = False

    def __init__(self, frames: np.ndarray, spec: GridSpec, scenario: Scenario, setup: float):
        self.frames = frames
        self.spec = spec
        self.ego = scenario.ego_pos
        self.scenario_dt = scenario.dt
        self.setup_seconds = setup
        self._frame = frames[0]
        # Extent of the grid rectangle in continuous cell coordinates.
        self._u_max = spec.rows - 0.5
        self._v_max = spec.cols - 0.5

    def at_time(self, seconds: float) -> None:
        # Frames beyond the predicted horizon reuse the final frame.
        idx = min(int(seconds / self.scenario_dt + 1e-9), len(self.frames) - 1)
        self._frame = self.frames[idx]

    def _cell_coords(self, p) -> tuple[float, float]:
        u = (p[0] - self.ego[0]) / self.spec.cell_long + self.spec.ego_cell[0]
        v = (p[1] - self.ego[1]) / self.spec.cell_lat + self.spec.ego_cell[1]
        return u, v

    def value(self, p) -> float:
        u, v = self._cell_coords(p)
        if not (-0.5 <= u <= self._u_max and -0.5 <= v <= self._v_max):
            raise ValueError(f"query {tuple(p)} outside the grid extent")
        return self._bilinear(u, v)

    def _bilinear(self, u: float, v: float) -> float:
        # Border-replicate: coordinates beyond the outermost cell centers
        # clamp onto them, which keeps in-extent queries defined everywhere.
        rows, cols = self.spec.rows, self.spec.cols
        u = min(max(u, 0.0), rows - 1.0)
        v = min(max(v, 0.0), cols - 1.0)
        r0 = min(int(u), rows - 2)
        c0 = min(int(v), cols - 2)
        fu = u - r0
        fv = v - c0
        f = self._frame
        top = f[r0, c0] * (1.0 - fv) + f[r0, c0 + 1] * fv
        bot = f[r0 + 1, c0] * (1.0 - fv) + f[r0 + 1, c0 + 1] * fv
        return float(top * (1.0 - fu) + bot * fu)

    def clamp(self, p):
        # Keep planned positions a probe step inside the extent so the
        # central differences never leave it.
        margin = 0.5 + 1e-9
        r0, c0 = self.spec.ego_cell
        x_lo = self.ego[0] - (r0 + 0.5) * self.spec.cell_long + margin
        x_hi = self.ego[0] + (self.spec.rows - 1 - r0 + 0.5) * self.spec.cell_long - margin
        y_lo = self.ego[1] - (c0 + 0.5) * self.spec.cell_lat + margin
        y_hi = self.ego[1] + (self.spec.cols - 1 - c0 + 0.5) * self.spec.cell_lat - margin
        return (min(max(p[0], x_lo), x_hi), min(max(p[1], y_lo), y_hi))


def field_value_at(source, p, scenario: Scenario, t: int) -> float:
    """Field value at world point ``p`` for scenario step ``t``.

    Analytic sources evaluate the total potential exactly; learned sources
    bilinearly interpolate the frame-``t`` network output (the final frame
    for steps past the horizon) and reject queries outside the grid extent.
    """
    state = source.start(scenario)
    state.at_time(t * scenario.dt)
    return state.value(p)


def descent_step(state, p, goal, config: PlannerConfig):
    """One descent move from ``p``; returns (new position, stalled, eval_seconds).

    The gradient comes from central differences with spatial step
    ``probe_eps``.  When its norm is at or below ``grad_floor`` the plateau
    rule steps toward the goal instead (clipped to the remaining distance).
    Displacement is capped at v_max * dt.
    """
    eps = config.probe_eps
    x, y = p
    t0 = time.perf_counter()
    gx = state.value((x + eps, y)) - state.value((x - eps, y))
    gy = state.value((x, y + eps)) - state.value((x, y - eps))
    eval_seconds = time.perf_counter() - t0
    gx /= 2.0 * eps
    gy /= 2.0 * eps

    norm = math.hypot(gx, gy)
    stalled = norm <= config.grad_floor
    if stalled:
        dx = goal[0] - x
        dy = goal[1] - y
        dist = math.hypot(dx, dy)
        if dist == 0.0:
            step_x = step_y = 0.0
        else:
            scale = min(config.step_size, dist) / dist
            step_x = dx * scale
            step_y = dy * scale
    else:
        step_x = -config.step_size * gx / norm
        step_y = -config.step_size * gy / norm

    limit = config.v_max * config.dt
    step_norm = math.hypot(step_x, step_y)
    if step_norm > limit:
        step_x *= limit / step_norm
        step_y *= limit / step_norm

    new_p = state.clamp((x + step_x, y + step_y))
    return new_p, stalled, eval_seconds


def plan_trajectory(
    source, scenario: Scenario, budget: int = 200, config: PlannerConfig | None = None
) -> Trajectory:
    """Descend the field from the ego start until goal, collision or budget.

    Obstacles advance at constant velocity with the planner clock.  The
    trajectory records every visited position; velocities are forward
    differences of the positions.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    config = config or PlannerConfig()

    t_start = time.perf_counter()
    state = source.start(scenario)
    field_seconds = state.setup_seconds
    stalls = 0

    goal = scenario.goal
    p = (scenario.ego_pos[0], scenario.ego_pos[1])
    points = [p]
    outcome = OUTCOME_TIMED_OUT

    radii = [o.radius + config.safety_margin for o in scenario.obstacles]
    obs_base = [(o.pos[0], o.pos[1], o.vel[0], o.vel[1]) for o in scenario.obstacles]

    k = 0
    while True:
        seconds = k * config.dt
        if math.hypot(p[0] - goal[0], p[1] - goal[1]) <= config.goal_tol:
            outcome = OUTCOME_REACHED
            break
        collided = False
        for (ox, oy, vx, vy), reach in zip(obs_base, radii):
            if math.hypot(p[0] - (ox + vx * seconds), p[1] - (oy + vy * seconds)) <= reach:
                collided = True
                break
        if collided:
            outcome = OUTCOME_COLLIDED
            break
        if k == budget:
            break

        t_field = time.perf_counter()
        state.at_time(seconds)
        at_seconds = time.perf_counter() - t_field
        p, stalled, eval_seconds = descent_step(state, p, goal, config)
        if state.accrues_field_time:
            field_seconds += at_seconds + eval_seconds
        if stalled:
            stalls += 1
        points.append(p)
        k += 1

    plan_seconds = time.perf_counter() - t_start

    positions = np.array(points)
    times = np.arange(len(points)) * config.dt
    if len(points) > 1:
        velocities = np.empty_like(positions)
        velocities[:-1] = np.diff(positions, axis=0) / config.dt
        velocities[-1] = velocities[-2]
    else:
        velocities = np.zeros_like(positions)

    return Trajectory(
        times=times,
        positions=positions,
        velocities=velocities,
        outcome=outcome,
        stall_count=stalls,
        plan_time_s=plan_seconds,
        field_time_s=field_seconds,
        descent_time_s=plan_seconds - field_seconds,
    )


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Write points as ``t,x,y,vx,vy`` rows plus an outcome/timing footer."""
    lines = ["t,x,y,vx,vy"]
    for t, (x, y), (vx, vy) in zip(
        trajectory.times, trajectory.positions, trajectory.velocities
    ):
        lines.append(f"{t:.17g},{x:.17g},{y:.17g},{vx:.17g},{vy:.17g}")
    lines.append(f"outcome,{trajectory.outcome},plan_time_s,{trajectory.plan_time_s:.6g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
