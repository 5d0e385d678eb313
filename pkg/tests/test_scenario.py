import json
import math

import numpy as np
import pytest

from apfnet.scenario import (
    GridSpec,
    Obstacle,
    Scenario,
    cell_centers,
    grid_to_world,
    load_scenarios,
    rasterize,
    save_suite,
    scenario_from_dict,
    scenario_to_dict,
    step_obstacles,
    world_to_grid,
)


def make_scenario(obstacles=(), halfwidth=10.0, horizon=5, dt=0.5, goal=(20.0, 0.0)):
    return Scenario(
        ego_pos=(0.0, 0.0),
        ego_vel=(5.0, 0.0),
        goal=goal,
        obstacles=tuple(obstacles),
        road_halfwidth=halfwidth,
        horizon_steps=horizon,
        dt=dt,
    )


class TestWorldGridMapping:
    def test_ego_maps_to_ego_cell(self):
        spec = GridSpec()
        assert world_to_grid((3.0, -1.0), spec, ego=(3.0, -1.0)) == (30, 4)

    def test_two_cells_forward(self):
        spec = GridSpec()
        p = (2.0 * spec.cell_long, 0.0)
        assert world_to_grid(p, spec, ego=(0.0, 0.0)) == (32, 4)

    def test_far_point_is_outside(self):
        assert world_to_grid((100_000.0, 0.0), GridSpec(), ego=(0.0, 0.0)) is None

    def test_round_trip_every_cell(self):
        spec = GridSpec()
        ego = (12.5, -3.25)
        for r in range(spec.rows):
            for c in range(spec.cols):
                center = grid_to_world((r, c), spec, ego)
                assert world_to_grid(center, spec, ego) == (r, c)

    def test_containing_cell_center_is_close(self):
        spec = GridSpec()
        ego = (1.0, 2.0)
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = ego + rng.uniform((-58.0, -4.4), (10.9, 4.4))
            cell = world_to_grid(p, spec, ego)
            assert cell is not None
            center = grid_to_world(cell, spec, ego)
            assert abs(p[0] - center[0]) <= spec.cell_long / 2 + 1e-9
            assert abs(p[1] - center[1]) <= spec.cell_lat / 2 + 1e-9

    def test_cell_centers_match_grid_to_world(self):
        spec = GridSpec()
        ego = (4.0, 1.0)
        centers = cell_centers(spec, ego)
        assert centers.shape == (36, 9, 2)
        assert np.allclose(centers[13, 7], grid_to_world((13, 7), spec, ego))


class TestStepObstacles:
    def test_static_obstacle_never_moves(self):
        s = make_scenario([Obstacle((3.0, 1.0), (0.0, 0.0), 0.5)], horizon=8)
        for t in range(8):
            assert np.allclose(step_obstacles(s, t), [[3.0, 1.0]])

    def test_constant_velocity_displacement(self):
        s = make_scenario([Obstacle((3.0, 1.0), (1.0, 0.0), 0.5)], dt=0.5, horizon=6)
        # 4 steps at 0.5 s each at 1 m/s: displaced by exactly 2 m.
        assert np.allclose(step_obstacles(s, 4), [[5.0, 1.0]])

    def test_time_zero_is_identity(self):
        s = make_scenario([Obstacle((3.0, -2.0), (1.0, 1.0), 0.5)])
        assert np.allclose(step_obstacles(s, 0), [[3.0, -2.0]])

    def test_step_out_of_range(self):
        s = make_scenario(horizon=3)
        with pytest.raises(ValueError):
            step_obstacles(s, 3)
        with pytest.raises(ValueError):
            step_obstacles(s, -1)


def overlap_oracle(scenario, t, spec):
    """Brute-force per-cell disc/rectangle overlap plus corridor test."""
    positions = [
        (o.pos[0] + o.vel[0] * t * scenario.dt, o.pos[1] + o.vel[1] * t * scenario.dt)
        for o in scenario.obstacles
    ]
    grid = np.zeros((spec.rows, spec.cols))
    for r in range(spec.rows):
        for c in range(spec.cols):
            cx, cy = grid_to_world((r, c), spec, scenario.ego_pos)
            if abs(cy) > scenario.road_halfwidth:
                grid[r, c] = 1.0
                continue
            for (px, py), o in zip(positions, scenario.obstacles):
                nx = min(max(px, cx - spec.cell_long / 2), cx + spec.cell_long / 2)
                ny = min(max(py, cy - spec.cell_lat / 2), cy + spec.cell_lat / 2)
                if (nx - px) ** 2 + (ny - py) ** 2 <= o.radius**2:
                    grid[r, c] = 1.0
                    break
    return grid


class TestRasterize:
    def test_empty_wide_road_is_all_zero(self):
        grid = rasterize(make_scenario(), 0)
        assert grid.kind == "binary"
        assert not grid.values.any()

    def test_single_obstacle_matches_overlap_oracle(self):
        spec = GridSpec()
        # Centered in the cell two rows ahead, small radius.
        s = make_scenario([Obstacle((4.0, 0.0), (0.0, 0.0), 0.4)])
        grid = rasterize(s, 0, spec)
        assert np.array_equal(grid.values, overlap_oracle(s, 0, spec))
        assert grid.values[32, 4] == 1.0

    def test_narrow_road_fills_outer_columns(self):
        spec = GridSpec()
        s = make_scenario(halfwidth=3.0)
        grid = rasterize(s, 0, spec)
        assert np.array_equal(grid.values, overlap_oracle(s, 0, spec))
        assert np.all(grid.values[:, 0] == 1.0)
        assert np.all(grid.values[:, 8] == 1.0)
        assert not grid.values[:, 4].any()

    def test_random_scenarios_match_oracle(self):
        spec = GridSpec()
        rng = np.random.default_rng(7)
        for _ in range(20):
            obstacles = [
                Obstacle(
                    pos=tuple(rng.uniform((-15, -5), (12, 5))),
                    vel=tuple(rng.uniform(-2, 2, size=2)),
                    radius=float(rng.uniform(0.2, 2.0)),
                )
                for _ in range(rng.integers(0, 6))
            ]
            s = make_scenario(obstacles, halfwidth=float(rng.uniform(2.0, 6.0)), dt=0.3)
            t = int(rng.integers(0, s.horizon_steps))
            assert np.array_equal(rasterize(s, t, spec).values, overlap_oracle(s, t, spec))

    def test_deterministic(self):
        s = make_scenario([Obstacle((4.0, 1.0), (1.0, 0.2), 0.7)], halfwidth=3.5)
        a = rasterize(s, 2)
        b = rasterize(s, 2)
        assert np.array_equal(a.values, b.values)

    def test_adding_obstacle_is_monotone(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            base = [
                Obstacle(tuple(rng.uniform((-10, -4), (10, 4))), (0.0, 0.0), 0.8)
                for _ in range(2)
            ]
            extra = Obstacle(tuple(rng.uniform((-10, -4), (10, 4))), (0.0, 0.0), 1.1)
            before = rasterize(make_scenario(base), 0).values
            after = rasterize(make_scenario(base + [extra]), 0).values
            assert np.all(after >= before)

    def test_step_out_of_range(self):
        with pytest.raises(ValueError):
            rasterize(make_scenario(horizon=2), 2)


class TestScenarioValidation:
    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            make_scenario(horizon=0)
        with pytest.raises(ValueError):
            make_scenario(dt=0.0)
        with pytest.raises(ValueError):
            make_scenario(halfwidth=-1.0)
        with pytest.raises(ValueError):
            Obstacle((0.0, 0.0), (0.0, 0.0), 0.0)

    def test_goal_must_be_inside_corridor(self):
        with pytest.raises(ValueError):
            make_scenario(halfwidth=2.0, goal=(20.0, 2.5))

    def test_grid_spec_is_fixed_36x9(self):
        with pytest.raises(ValueError):
            GridSpec(rows=35)
        with pytest.raises(ValueError):
            GridSpec(ego_cell=(36, 0))


class TestScenarioJson:
    def test_round_trip(self):
        s = make_scenario([Obstacle((3.0, 1.0), (1.0, -0.5), 0.5)], halfwidth=4.0)
        assert scenario_from_dict(scenario_to_dict(s)) == s

    def test_unknown_top_level_key_rejected(self):
        doc = scenario_to_dict(make_scenario())
        doc["extra"] = 1
        with pytest.raises(ValueError, match="unknown scenario keys"):
            scenario_from_dict(doc)

    def test_unknown_obstacle_key_rejected(self):
        doc = scenario_to_dict(make_scenario([Obstacle((1.0, 1.0), (0.0, 0.0), 0.5)]))
        doc["obstacles"][0]["spin"] = 3
        with pytest.raises(ValueError):
            scenario_from_dict(doc)

    def test_suite_errors_name_scenario_index(self, tmp_path):
        good = scenario_to_dict(make_scenario())
        bad = scenario_to_dict(make_scenario())
        bad["dt"] = -1.0
        path = tmp_path / "suite.json"
        path.write_text(json.dumps([good, bad]))
        with pytest.raises(ValueError, match="scenario 1"):
            load_scenarios(path)

    def test_suite_save_load(self, tmp_path):
        suite = [make_scenario(goal=(15.0 + i, 0.0)) for i in range(3)]
        path = tmp_path / "suite.json"
        save_suite(suite, path)
        assert load_scenarios(path) == suite

    def test_single_document_loads_as_one(self, tmp_path):
        path = tmp_path / "one.json"
        path.write_text(json.dumps(scenario_to_dict(make_scenario())))
        assert len(load_scenarios(path)) == 1
