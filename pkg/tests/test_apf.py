import math
from fractions import Fraction

import numpy as np
import pytest

from apfnet.apf import (
    D_MIN,
    ApfParams,
    attractive_potential,
    build_ideal_frame,
    build_ideal_sequence,
    repulsive_potential,
    total_potential,
)
from apfnet.scenario import GridSpec, Obstacle, Scenario, grid_to_world, step_obstacles


def make_scenario(obstacles=(), goal=(20.0, 0.0), halfwidth=10.0, horizon=5, dt=0.5):
    return Scenario(
        ego_pos=(0.0, 0.0),
        ego_vel=(5.0, 0.0),
        goal=goal,
        obstacles=tuple(obstacles),
        road_halfwidth=halfwidth,
        horizon_steps=horizon,
        dt=dt,
    )


class TestAttractive:
    def test_zero_at_goal(self):
        assert attractive_potential((3.0, -1.0), (3.0, -1.0), xi=0.7) == 0.0

    def test_hand_value_three_four_five(self):
        # 0.5 * 1 * (3^2 + 4^2) = 12.5
        assert attractive_potential((3.0, 4.0), (0.0, 0.0), xi=1.0) == 12.5

    def test_linear_in_gain(self):
        base = attractive_potential((2.0, 5.0), (-1.0, 1.0), xi=0.3)
        assert attractive_potential((2.0, 5.0), (-1.0, 1.0), xi=0.6) == pytest.approx(
            2.0 * base, rel=1e-15
        )


class TestRepulsive:
    def test_outside_influence_is_zero(self):
        assert repulsive_potential((0.0, 0.0), [(5.0, 0.0)], eta=2.0, d0=2.0) == 0.0

    def test_hand_value(self):
        # 0.5 * 2 * (1/1 - 1/2)^2 = 0.25
        assert repulsive_potential((0.0, 0.0), [(1.0, 0.0)], eta=2.0, d0=2.0) == 0.25

    def test_zero_exactly_at_cutoff(self):
        assert repulsive_potential((0.0, 0.0), [(2.0, 0.0)], eta=2.0, d0=2.0) == 0.0

    def test_continuous_at_cutoff(self):
        just_in = repulsive_potential((0.0, 0.0), [(2.0 - 1e-9, 0.0)], eta=3.0, d0=2.0)
        assert 0.0 <= just_in < 1e-15

    def test_clamped_at_obstacle_center(self):
        at_center = repulsive_potential((1.0, 1.0), [(1.0, 1.0)], eta=2.0, d0=8.0)
        at_clamp = repulsive_potential((1.0 + D_MIN, 1.0), [(1.0, 1.0)], eta=2.0, d0=8.0)
        assert math.isfinite(at_center)
        assert at_center == at_clamp

    def test_superposition(self):
        p = (0.3, -0.4)
        a, b = (2.0, 1.0), (-1.5, 0.5)
        both = repulsive_potential(p, [a, b], eta=2.0, d0=8.0)
        split = repulsive_potential(p, [a], eta=2.0, d0=8.0) + repulsive_potential(
            p, [b], eta=2.0, d0=8.0
        )
        assert both == pytest.approx(split, rel=1e-15)


class TestTotalPotential:
    def test_no_obstacles_is_attractive_only(self):
        params = ApfParams()
        p, goal = (1.0, 2.0), (4.0, 6.0)
        assert total_potential(p, goal, [], params) == attractive_potential(p, goal, params.xi)

    def test_at_goal_is_repulsive_only(self):
        params = ApfParams()
        goal = (4.0, 6.0)
        obstacles = [(4.5, 6.0)]
        assert total_potential(goal, goal, obstacles, params) == repulsive_potential(
            goal, obstacles, params.eta, params.d0
        )

    def test_sum_of_hand_values(self):
        params = ApfParams(xi=1.0, eta=2.0, d0=2.0, u_cap=10.0)
        # attraction 12.5 (3-4-5 triangle) plus repulsion 0.25 at distance 1
        value = total_potential((3.0, 4.0), (0.0, 0.0), [(3.0, 3.0)], params)
        assert value == pytest.approx(12.75, abs=1e-12)


def exact_case_table():
    """20 hand-evaluable cases computed in exact rational arithmetic.

    Points use Pythagorean offsets so every distance is rational and the
    expected potential is an exact fraction.
    """
    cases = []
    triples = [(3, 4, 5), (6, 8, 10), (5, 12, 13), (8, 15, 17), (9, 12, 15)]
    gains = [Fraction(1), Fraction(1, 2), Fraction(2), Fraction(5, 4)]
    for (dx, dy, dist), gain in zip(triples * 4, gains * 5):
        cases.append(("att", dx, dy, dist, gain))
    return cases


class TestExactnessTable:
    def test_twenty_cases_to_1e12(self):
        params_d0 = Fraction(20)
        for kind, dx, dy, dist, gain in exact_case_table():
            # attraction at the offset point
            expected_att = Fraction(1, 2) * gain * (dx * dx + dy * dy)
            got_att = attractive_potential((float(dx), float(dy)), (0.0, 0.0), float(gain))
            assert abs(got_att - float(expected_att)) < 1e-12
            # repulsion with the same geometry: d = dist <= d0 = 20
            expected_rep = Fraction(1, 2) * gain * (Fraction(1, dist) - 1 / params_d0) ** 2
            got_rep = repulsive_potential(
                (0.0, 0.0), [(float(dx), float(dy))], float(gain), float(params_d0)
            )
            assert abs(got_rep - float(expected_rep)) < 1e-12


class TestApfParams:
    def test_rejects_nonpositive(self):
        for field in ("xi", "eta", "d0", "u_cap"):
            with pytest.raises(ValueError):
                ApfParams(**{field: 0.0})

    def test_json_round_trip(self):
        p = ApfParams(xi=0.1, eta=3.0, d0=5.0, u_cap=8.0)
        assert ApfParams.from_dict(p.to_dict()) == p

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            ApfParams.from_dict({"xi": 1.0, "mystery": 2.0})


class TestIdealFrame:
    def test_values_match_pointwise_potentials(self):
        spec = GridSpec()
        params = ApfParams()
        s = make_scenario(
            [Obstacle((5.0, 1.0), (0.5, 0.0), 0.5), Obstacle((-3.0, -2.0), (0.0, 0.0), 1.0)],
            halfwidth=3.5,
        )
        t = 2
        frame = build_ideal_frame(s, t, spec, params)
        positions = step_obstacles(s, t)
        for r in range(0, 36, 5):
            for c in range(9):
                center = grid_to_world((r, c), spec, s.ego_pos)
                expected = total_potential(center, s.goal, positions, params)
                if abs(center[1]) > s.road_halfwidth:
                    expected += params.u_cap
                assert frame.raw_potential[r, c] == pytest.approx(expected, rel=1e-12)
                assert frame.grid.values[r, c] == pytest.approx(
                    min(expected, params.u_cap) / params.u_cap, rel=1e-12
                )

    def test_empty_scenario_decreases_toward_goal(self):
        # Goal straight ahead in the center column: walking up that column
        # toward the goal row must strictly decrease once below the cap.
        spec = GridSpec()
        params = ApfParams()
        s = make_scenario(goal=(8.0, 0.0))
        values = build_ideal_frame(s, 0, spec, params).grid.values
        goal_row = 34  # 8 m ahead at 2 m per row
        column = values[:, 4]
        below_cap = column < 1.0
        for r in range(goal_row):
            if below_cap[r] and below_cap[r + 1]:
                assert column[r] > column[r + 1]

    def test_obstacle_cell_saturates(self):
        spec = GridSpec()
        params = ApfParams()
        center = grid_to_world((32, 5), spec, (0.0, 0.0))
        s = make_scenario([Obstacle(tuple(center), (0.0, 0.0), 0.4)])
        frame = build_ideal_frame(s, 0, spec, params)
        assert frame.grid.values[32, 5] == 1.0

    def test_values_bounded(self):
        s = make_scenario([Obstacle((4.0, 0.0), (1.0, 0.0), 0.6)], halfwidth=3.0)
        for t in range(s.horizon_steps):
            values = build_ideal_frame(s, t).grid.values
            assert np.all(values >= 0.0)
            assert np.all(values <= 1.0)

    def test_normalization_scale_invariance(self):
        # Scaling the gains and the cap by the same constant leaves the
        # normalized grid unchanged.
        s = make_scenario([Obstacle((5.0, 1.0), (0.0, 0.0), 0.5)], halfwidth=3.5)
        p1 = ApfParams(xi=0.05, eta=2.0, d0=8.0, u_cap=10.0)
        c = 3.7
        p2 = ApfParams(xi=0.05 * c, eta=2.0 * c, d0=8.0, u_cap=10.0 * c)
        v1 = build_ideal_frame(s, 0, params=p1).grid.values
        v2 = build_ideal_frame(s, 0, params=p2).grid.values
        assert np.allclose(v1, v2, rtol=1e-13, atol=1e-15)

    def test_obstacle_free_argmin_at_goal_cell(self):
        # With no obstacles and no cap in the neighborhood, the cell nearest
        # the goal attains the frame minimum.
        spec = GridSpec()
        s = make_scenario(goal=(6.0, 1.0))
        values = build_ideal_frame(s, 0, spec).grid.values
        r, c = np.unravel_index(np.argmin(values), values.shape)
        assert (r, c) == (33, 5)


class TestIdealSequence:
    def test_static_scenario_frames_identical(self):
        s = make_scenario([Obstacle((5.0, 0.5), (0.0, 0.0), 0.5)], horizon=4)
        frames = build_ideal_sequence(s)
        for f in frames[1:]:
            assert np.array_equal(f.grid.values, frames[0].grid.values)

    def test_moving_obstacle_peak_tracks_rows(self):
        # Weak attraction so nothing else saturates, goal far away: the
        # max-value cell follows the obstacle's row from step_obstacles.
        spec = GridSpec()
        params = ApfParams(xi=1e-5, eta=2.0, d0=8.0, u_cap=10.0)
        s = make_scenario(
            [Obstacle((0.0, 0.0), (4.0, 0.0), 0.4)],
            goal=(200.0, 0.0),
            halfwidth=50.0,
            horizon=4,
            dt=0.5,
        )
        frames = build_ideal_sequence(s, spec, params)
        for t, frame in enumerate(frames):
            peak_row = np.unravel_index(np.argmax(frame.grid.values), (36, 9))[0]
            expected = 30 + t  # 2 m forward per step, one row per step
            assert peak_row == expected

    def test_horizon_one(self):
        assert len(build_ideal_sequence(make_scenario(horizon=1))) == 1

    def test_length_matches_horizon(self):
        assert len(build_ideal_sequence(make_scenario(horizon=7))) == 7
