import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intmpc.config import MpccConfig, ScenarioConfig
from intmpc.dynamics import ControlInput, VehicleState, step
from intmpc.mpcc import (DiscConfig, MpccPlanner, MpccWeights, ObstacleEllipse, SolveStatus,
                         collision_margin, load_problem, plan_cycle, save_problem, solve,
                         stage_cost)
from intmpc.mpcc.planner import braking_control
from intmpc.mpcc.solver import shift_controls
from intmpc.traffic.scenarios import spawn_scenario
from intmpc.traffic.world import step_world
from oracles import (DT, H, central_difference, convex_instance, obstacle_instance, random_point,
                     relative_error, shooting_terms, trajectory_cost)


def test_cost_gradient_on_obstacle_free_point():
    rng = np.random.default_rng(3)
    p, u = random_point(rng, with_obstacle=False)
    _, g, _, _ = shooting_terms(p, u)
    fd = central_difference(lambda x: shooting_terms(p, x, False)[0], u)
    assert relative_error(g, fd) < 1e-4


def test_states_follow_the_shooting_map():
    p = obstacle_instance(np.random.default_rng(0))
    sol = solve(p)
    s = p.state
    for k in range(H):
        s = step(s, ControlInput(*sol.controls[k]), DT, p.limits)
        np.testing.assert_allclose(sol.states[k + 1], s.as_array(), atol=1e-10)
    lam = p.lam0 + DT * np.concatenate([[0], np.cumsum(sol.states[:-1, 3])])
    np.testing.assert_allclose(sol.progress, lam, atol=1e-10)


def test_reported_cost_matches_stage_sum():
    p = obstacle_instance(np.random.default_rng(1))
    sol = solve(p)
    cost, clear = trajectory_cost(p, sol.controls)
    assert sol.cost == pytest.approx(cost, rel=1e-9)
    assert clear


def test_terminal_stage_has_no_control_terms():
    p = convex_instance(np.random.default_rng(0))
    s = VehicleState(5.0, 0.3, 0.0, 2.0)
    with_u = stage_cost(s, ControlInput(1.0, 0.2), 5.0, p.v_ref, p.weights, p.path)
    terminal = stage_cost(s, None, 5.0, p.v_ref, p.weights, p.path)
    w = p.weights
    assert with_u - terminal == pytest.approx(w.q_u * 1.0 + w.q_delta * 0.04)


def test_hard_bounds_hold():
    rng = np.random.default_rng(5)
    for _ in range(5):
        p = obstacle_instance(rng)
        sol = solve(p)
        lim = p.limits
        assert np.all(sol.controls[:, 0] >= lim.a_lo - 1e-9)
        assert np.all(sol.controls[:, 0] <= lim.a_hi + 1e-9)
        assert np.all(np.abs(sol.controls[:, 1]) <= lim.delta_max + 1e-9)
        assert np.all(sol.states[:, 3] >= -1e-9)
        assert np.all(sol.states[:, 3] <= lim.v_max + 1e-9)


def test_weight_scaling_leaves_solution_unchanged():
    rng = np.random.default_rng(7)
    for _ in range(5):
        p = obstacle_instance(rng)
        a = solve(p)
        b = solve(p.__class__(**{**p.__dict__, "weights": p.weights.scaled(10.0)}))
        np.testing.assert_allclose(a.controls, b.controls, atol=1e-6)
        assert b.cost == pytest.approx(10 * a.cost, rel=1e-6)


def test_warm_start_needs_no_more_iterations():
    rng = np.random.default_rng(11)
    fewer = 0
    trials = 20
    for _ in range(trials):
        p = obstacle_instance(rng)
        sol = solve(p)
        nxt = step(p.state, sol.first_control, DT, p.limits)
        q = p.__class__(**{**p.__dict__, "state": nxt, "lam0": p.lam0 + DT * p.state.v})
        warm = solve(q, shift_controls(sol.controls))
        cold = solve(q)
        fewer += warm.iterations <= cold.iterations
    assert fewer >= 0.9 * trials


def test_problem_round_trip(tmp_path):
    p = obstacle_instance(np.random.default_rng(2))
    save_problem(p, tmp_path / "p.json")
    q = load_problem(tmp_path / "p.json")
    a, b = solve(p), solve(q)
    assert a.status == b.status
    np.testing.assert_array_equal(a.controls, b.controls)


def test_iteration_log(tmp_path):
    p = obstacle_instance(np.random.default_rng(4))
    log = tmp_path / "sqp.jsonl"
    sol = solve(p, log_path=log)
    rows = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(rows) == sol.iterations + 1
    assert [r["iterate"] for r in rows] == list(range(sol.iterations + 1))
    assert set(rows[0]) == {"iterate", "merit", "kkt", "violation"}
    assert rows[-1]["violation"] <= 1e-4


def test_warm_start_shape_is_checked():
    p = convex_instance(np.random.default_rng(0))
    with pytest.raises(ValueError):
        solve(p, np.zeros((H + 1, 2)))


def test_shift_controls():
    c = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(shift_controls(c), [[2, 3], [4, 5], [4, 5]])


def test_overlap_at_stage_zero_is_infeasible():
    p = obstacle_instance(np.random.default_rng(0))
    s = p.state
    ob = ObstacleEllipse(np.tile([s.x, s.y], (H + 1, 1)), 0.0, 4.5, 3.0)
    q = p.__class__(**{**p.__dict__, "obstacles": (ob,)})
    sol = solve(q)
    assert sol.status == SolveStatus.INFEASIBLE
    assert not sol.usable


# ------------------------------------------------------------ collision margin

def test_collision_margin_examples():
    ob = ObstacleEllipse(np.zeros((2, 2)), 0.0, 4.0, 2.0)
    discs = DiscConfig(offsets=(0.0,), radius=1.0)
    assert collision_margin(VehicleState(4, 0, 0, 0), 0, ob, 0, discs) == pytest.approx(1.0)
    assert collision_margin(VehicleState(0, 2, 0, 0), 0, ob, 0, discs) == pytest.approx(1.0)
    assert collision_margin(VehicleState(2, 1, 0, 0), 0, ob, 0, discs) == pytest.approx(0.5)
    assert collision_margin(VehicleState(0, 0, 0, 0), 0, ob, 0, discs) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi),
       st.floats(-math.pi, math.pi), st.sampled_from([0, 1, 2]))
def test_collision_margin_is_rotation_invariant(x, y, psi, rot, disc):
    """Rotating ego and obstacle together about the origin keeps the margin."""
    c, s = math.cos(rot), math.sin(rot)
    ob = ObstacleEllipse(np.array([[1.0, -0.5]]), 0.3, 4.5, 3.0)
    oc = ob.centers[0]
    ob_r = ObstacleEllipse(np.array([[c * oc[0] - s * oc[1], s * oc[0] + c * oc[1]]]),
                           0.3 + rot, 4.5, 3.0)
    a = collision_margin(VehicleState(x, y, psi, 0), disc, ob, 0)
    b = collision_margin(VehicleState(c * x - s * y, s * x + c * y, psi + rot, 0), disc, ob_r, 0)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_enlarged_ellipse_contains_grown_body():
    """A disc center outside the enlarged ellipse cannot touch the 5 m x 2 m body."""
    r = DiscConfig().radius
    ob = ObstacleEllipse.constant_velocity(0, 0, 0, 0, 1)
    t = np.linspace(0, 1, 50)
    edges = np.concatenate([np.column_stack([5 * t - 2.5, np.full_like(t, s)]) for s in (-1, 1)]
                           + [np.column_stack([np.full_like(t, s), 2 * t - 1]) for s in (-2.5, 2.5)])
    ang = np.linspace(0, 2 * math.pi, 73)
    ring = (edges[:, None, :] + r * np.stack([np.cos(ang), np.sin(ang)], -1)[None]).reshape(-1, 2)
    m = ring[:, 0] ** 2 / ob.alpha**2 + ring[:, 1] ** 2 / ob.beta**2
    assert m.max() <= 1.0


# ------------------------------------------------------------ planning cycle

def test_plan_cycle_brakes_on_infeasible():
    w = spawn_scenario("ramp_merge", "mixed", 0, ScenarioConfig(n_vehicles=1))
    w.x = np.array([w.ego[0]])
    w.y = np.array([w.ego[1]])
    u, sol = plan_cycle(w, 3.0)
    assert not sol.usable
    assert u == braking_control(w.limits)


def test_planner_counts_and_warm_starts():
    w = spawn_scenario("ramp_merge", "cooperative", 3)
    planner = MpccPlanner(MpccConfig())
    for _ in range(5):
        u, sol = planner.plan(w, 2.0)
        w, _ = step_world(w, u, DT)
    assert planner.n_solves == 5
    assert planner.prev is sol


def test_plan_cycle_on_stationary_equilibrium():
    """At the reference speed on the path with nobody around, the plan keeps going."""
    w = spawn_scenario("ramp_merge", "mixed", 0, ScenarioConfig(n_vehicles=1))
    w.x = np.array([w.ego[0] - 200.0])
    u, sol = plan_cycle(w, float(w.ego[3]))
    assert sol.feasible
    assert abs(u.a) < 1.0


def test_plan_violation_check_agrees_with_collision_margin():
    from intmpc.mpcc.planner import plan_violates

    rng = np.random.default_rng(9)
    for _ in range(20):
        p = obstacle_instance(rng)
        ctrl = np.column_stack([rng.uniform(-1, 1, H), rng.uniform(-0.3, 0.3, H)])
        states = [p.state]
        for k in range(H):
            states.append(step(states[-1], ControlInput(*ctrl[k]), DT, p.limits))
        inside = any(collision_margin(states[k], d, p.obstacles[0], k) <= 1.0
                     for k in range(1, H + 1) for d in range(3))
        arr = np.array([s.as_array() for s in states])
        assert plan_violates(arr, p.obstacles) == inside
