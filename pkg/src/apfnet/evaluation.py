"""Safety and efficiency metrics for planned trajectories, plus suite reports.

Conventions (stated in every report footer, since there is no universal
definition): completion means the trajectory reached the goal; time to
collision is capped at 10 s and computed from closing gaps only; headway is
capped at 50 m and considers leaders ahead within one 3.5 m lane width;
vehicles are discs and the ego radius is 1 m.

Scenario evaluations are independent; timing is taken per scenario on the
executing thread.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .planner import OUTCOME_REACHED, PlannerConfig, Trajectory, plan_trajectory
from .scenario import Scenario

EGO_RADIUS = 1.0  # m, ego disc radius used in gap computations
TTC_CAP = 10.0  # s
HEADWAY_CAP = 50.0  # m
LANE_WIDTH = 3.5  # m, lateral window for headway leaders

CONVENTIONS = (
    "completion = reached_goal; ttc <= 10 s from closing gaps; "
    "headway <= 50 m for leaders ahead within a 3.5 m lane; ego radius 1 m; "
    "caps and the completion rule are toolkit conventions"
)


@dataclass(frozen=True)
class ScenarioResult:
    scenario_index: int
    method: str
    completed: bool
    outcome: str
    ttc_min: float
    jerk_mean: float
    headway_mean: float
    plan_time_s: float
    field_time_s: float
    descent_time_s: float


@dataclass(frozen=True)
class MethodAggregate:
    method: str
    tcr: float
    ttc: float
    jerk: float
    headway: float
    plan_time_s: float
    field_time_s: float
    descent_time_s: float


@dataclass(frozen=True)
class EvalReport:
    results: list[ScenarioResult]
    aggregates: dict[str, MethodAggregate]
    scenario_count: int


def _obstacle_tracks(trajectory: Trajectory, scenario: Scenario):
    """Obstacle centers at every trajectory time, one (N, 2) array each."""
    times = trajectory.times[:, None]
    for o in scenario.obstacles:
        yield np.asarray(o.pos) + np.asarray(o.vel) * times, o.radius


def compute_ttc(trajectory: Trajectory, scenario: Scenario) -> float:
    """Minimum time to collision over all steps and obstacles, capped.

    Per step and obstacle the gap is the center distance minus both radii;
    the closing speed is the finite difference of the gap.  Only pairs with
    a positive gap that is actually closing count; with none, or with no
    obstacles at all, the cap is returned.
    """
    if len(trajectory.positions) == 0:
        raise ValueError("trajectory is empty")
    if len(trajectory.times) > 1:
        dt = float(trajectory.times[1] - trajectory.times[0])
    else:
        dt = 0.0
    best = TTC_CAP
    for centers, radius in _obstacle_tracks(trajectory, scenario):
        dist = np.hypot(*(trajectory.positions - centers).T)
        gap = dist - radius - EGO_RADIUS
        if dt == 0.0:
            continue
        closing = (gap[:-1] - gap[1:]) / dt
        valid = (closing > 0.0) & (gap[:-1] > 0.0)
        if np.any(valid):
            best = min(best, float(np.min(gap[:-1][valid] / closing[valid])))
    return min(best, TTC_CAP)


def compute_jerk(trajectory: Trajectory) -> float:
    """Mean jerk magnitude from centered third differences of position.

    Each window of four consecutive points yields the third difference
    (p3 - 3 p2 + 3 p1 - p0) / dt^3, centered between the middle points; the
    result is the mean Euclidean norm over all windows.  Exact for cubic
    paths and zero for constant-acceleration ones.
    """
    p = trajectory.positions
    if len(p) < 4:
        raise ValueError(f"jerk needs at least 4 points, got {len(p)}")
    dt = float(trajectory.times[1] - trajectory.times[0])
    third = p[3:] - 3.0 * p[2:-1] + 3.0 * p[1:-2] - p[:-3]
    jerk = np.hypot(third[:, 0], third[:, 1]) / dt**3
    return float(np.mean(jerk))


def compute_headway(trajectory: Trajectory, scenario: Scenario) -> float:
    """Mean distance to the nearest in-lane leader, capped.

    A leader is an obstacle strictly ahead of the ego (positive longitudinal
    offset) within one lane width laterally.  Steps without a leader
    contribute the cap.
    """
    if len(trajectory.positions) == 0:
        raise ValueError("trajectory is empty")
    n = len(trajectory.positions)
    nearest = np.full(n, HEADWAY_CAP)
    for centers, _radius in _obstacle_tracks(trajectory, scenario):
        dx = centers[:, 0] - trajectory.positions[:, 0]
        dy = centers[:, 1] - trajectory.positions[:, 1]
        dist = np.hypot(dx, dy)
        leader = (dx > 0.0) & (np.abs(dy) <= LANE_WIDTH)
        nearest = np.where(leader, np.minimum(nearest, dist), nearest)
    return float(np.mean(np.minimum(nearest, HEADWAY_CAP)))


def task_completed(trajectory: Trajectory) -> bool:
    return trajectory.outcome == OUTCOME_REACHED


def _evaluate_one(
    index: int, method: str, source, scenario: Scenario, budget: int, config: PlannerConfig
) -> ScenarioResult:
    trajectory = plan_trajectory(source, scenario, budget=budget, config=config)
    # Trajectories shorter than a jerk window carry no smoothness signal.
    jerk = compute_jerk(trajectory) if len(trajectory.positions) >= 4 else 0.0
    return ScenarioResult(
        scenario_index=index,
        method=method,
        completed=task_completed(trajectory),
        outcome=trajectory.outcome,
        ttc_min=compute_ttc(trajectory, scenario),
        jerk_mean=jerk,
        headway_mean=compute_headway(trajectory, scenario),
        plan_time_s=trajectory.plan_time_s,
        field_time_s=trajectory.field_time_s,
        descent_time_s=trajectory.descent_time_s,
    )


def evaluate_suite(
    scenarios: Sequence[Scenario],
    sources: Mapping[str, object],
    budget: int = 200,
    config: PlannerConfig | None = None,
) -> EvalReport:
    """Plan every scenario under every source and aggregate per method.

    The completion rate averages over all scenarios; time to collision and
    headway average only over scenarios that contain obstacles; jerk and the
    timing means cover every scenario.
    """
    if len(scenarios) == 0:
        raise ValueError("scenario suite is empty")
    config = config or PlannerConfig()

    results: list[ScenarioResult] = []
    for method, source in sources.items():
        for index, scenario in enumerate(scenarios):
            results.append(_evaluate_one(index, method, source, scenario, budget, config))

    with_obstacles = [i for i, s in enumerate(scenarios) if s.obstacles]
    aggregates = {}
    for method in sources:
        rows = [r for r in results if r.method == method]
        metric_rows = [rows[i] for i in with_obstacles] if with_obstacles else []
        aggregates[method] = MethodAggregate(
            method=method,
            tcr=sum(r.completed for r in rows) / len(rows),
            ttc=float(np.mean([r.ttc_min for r in metric_rows])) if metric_rows else TTC_CAP,
            jerk=float(np.mean([r.jerk_mean for r in rows])),
            headway=(
                float(np.mean([r.headway_mean for r in metric_rows]))
                if metric_rows
                else HEADWAY_CAP
            ),
            plan_time_s=float(np.mean([r.plan_time_s for r in rows])),
            field_time_s=float(np.mean([r.field_time_s for r in rows])),
            descent_time_s=float(np.mean([r.descent_time_s for r in rows])),
        )
    return EvalReport(results=results, aggregates=aggregates, scenario_count=len(scenarios))


def write_report(report: EvalReport, out_dir) -> None:
    """Write per-scenario metrics, timing, a summary table and a JSON dump.

    ``per_scenario.csv`` holds only deterministic metric columns so reruns
    with the same seed are byte-identical; wall-clock numbers live in
    ``timing.csv`` and the summary Time column.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["scenario,method,completed,outcome,ttc_min,jerk_mean,headway_mean"]
    for r in report.results:
        lines.append(
            f"{r.scenario_index},{r.method},{int(r.completed)},{r.outcome},"
            f"{r.ttc_min:.17g},{r.jerk_mean:.17g},{r.headway_mean:.17g}"
        )
    lines.append(f"# {CONVENTIONS}")
    (out / "per_scenario.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["scenario,method,plan_time_s,field_time_s,descent_time_s"]
    for r in report.results:
        lines.append(
            f"{r.scenario_index},{r.method},{r.plan_time_s:.6g},"
            f"{r.field_time_s:.6g},{r.descent_time_s:.6g}"
        )
    (out / "timing.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["Method,TCR,TTC,Jerk,Head-Way,Time"]
    for method, a in report.aggregates.items():
        lines.append(
            f"{method},{a.tcr:.6g},{a.ttc:.6g},{a.jerk:.6g},{a.headway:.6g},{a.plan_time_s:.6g}"
        )
    lines.append(f"# {CONVENTIONS}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    doc = {
        "scenario_count": report.scenario_count,
        "conventions": CONVENTIONS,
        "aggregates": {
            m: {
                "tcr": a.tcr,
                "ttc": a.ttc,
                "jerk": a.jerk,
                "headway": a.headway,
                "plan_time_s": a.plan_time_s,
                "field_time_s": a.field_time_s,
                "descent_time_s": a.descent_time_s,
            }
            for m, a in report.aggregates.items()
        },
        "per_scenario": [
            {
                "scenario": r.scenario_index,
                "method": r.method,
                "completed": r.completed,
                "outcome": r.outcome,
                "ttc_min": r.ttc_min,
                "jerk_mean": r.jerk_mean,
                "headway_mean": r.headway_mean,
                "plan_time_s": r.plan_time_s,
                "field_time_s": r.field_time_s,
                "descent_time_s": r.descent_time_s,
            }
            for r in report.results
        ],
    }
    (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
