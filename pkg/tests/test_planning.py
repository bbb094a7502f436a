import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import grid_of
from costmap_traffic.config import Limits, PlannerConfig
from costmap_traffic.planning import (NoPathError, Path, PlanInputError, arc_step,
                                      dynamic_window, dwa_step, footprint_hits, lookahead_point,
                                      plan_global, rollout, rollouts, score_trajectory)


def center(r, c, res=1.0):
    return ((c + 0.5) * res, (r + 0.5) * res)


def test_straight_path_on_free_grid():
    p = plan_global(grid_of(np.zeros((1, 5))), center(0, 0), center(0, 4))
    assert p.cost == pytest.approx(4.0)
    assert p.cells == [(0, c) for c in range(5)]


def test_diagonal_step_cost():
    p = plan_global(grid_of(np.zeros((2, 2)), 0.5), center(0, 0, 0.5), center(1, 1, 0.5))
    assert p.cost == pytest.approx(0.5 * math.sqrt(2))


def test_cost_weighting_prefers_cheap_detour():
    cells = np.zeros((3, 3), np.uint8)
    cells[1, 1] = 252
    p = plan_global(grid_of(cells), center(1, 0), center(1, 2))
    assert (1, 1) not in p.cells


def test_wall_blocks_and_no_path():
    cells = np.zeros((3, 3), np.uint8)
    cells[:, 1] = 253
    with pytest.raises(NoPathError):
        plan_global(grid_of(cells), center(0, 0), center(0, 2))


def test_blocked_start_or_offmap_goal():
    cells = np.zeros((3, 3), np.uint8)
    cells[0, 0] = 254
    with pytest.raises(PlanInputError):
        plan_global(grid_of(cells), center(0, 0), center(2, 2))
    with pytest.raises(PlanInputError):
        plan_global(grid_of(cells), center(2, 2), (10.0, 10.0))


def test_start_equals_goal():
    p = plan_global(grid_of(np.zeros((3, 3))), center(1, 1), center(1, 1))
    assert p.cost == 0 and p.cells == [(1, 1)]


def test_tie_break_is_deterministic():
    cells = np.zeros((3, 3), np.uint8)
    a = plan_global(grid_of(cells), center(0, 0), center(2, 2))
    b = plan_global(grid_of(cells.copy()), center(0, 0), center(2, 2))
    assert a.cells == b.cells


@settings(max_examples=80, deadline=None)
@given(arrays(np.uint8, (8, 8), elements=st.sampled_from([0, 0, 10, 64, 200, 252, 253, 254])),
       st.tuples(st.integers(0, 7), st.integers(0, 7)), st.tuples(st.integers(0, 7),
                                                                   st.integers(0, 7)))
def test_plan_cost_matches_graph_oracle(cells, s, g):
    cells[s] = cells[g] = 0
    want = oracles.shortest_cost(cells, 0.5, s, g)
    try:
        got = plan_global(grid_of(cells, 0.5), center(*s, 0.5), center(*g, 0.5))
    except NoPathError:
        assert math.isinf(want)
        return
    assert got.cost == pytest.approx(want, rel=1e-9, abs=1e-12)
    assert max(cells[r, c] for r, c in got.cells) < 253
    steps = np.abs(np.diff(np.array(got.cells), axis=0))
    assert (steps.max(axis=1) == 1).all()


def test_dynamic_window_examples():
    lim = Limits(v_max=0.5, w_max=1.0, a_v=0.5, a_w=1.5)
    w = dynamic_window((0.0, 0.0), lim, 0.1)
    assert (w.v_min, w.v_max) == (0.0, pytest.approx(0.05))
    assert (w.w_min, w.w_max) == (pytest.approx(-0.15), pytest.approx(0.15))
    w = dynamic_window((0.5, 1.0), lim, 0.1)
    assert w.v_max == 0.5 and w.w_max == 1.0


@given(st.floats(0, 0.5), st.floats(-1, 1))
def test_window_samples_inside_limits(v, w):
    lim = Limits()
    win = dynamic_window((v, w), lim, 0.1)
    vs, ws = win.samples(11, 21)
    assert len(vs) == 231
    assert (vs >= 0).all() and (vs <= lim.v_max + 1e-12).all()
    assert (np.abs(ws) <= lim.w_max + 1e-12).all()
    assert all(win.contains(a, b) for a, b in zip(vs, ws))


def test_arc_step_cases():
    assert np.allclose(arc_step(0, 0, 0, 1.0, 0.0, 1.0), (1, 0, 0))
    x, y, yaw = arc_step(0, 0, 0, 1.0, math.pi, 1.0)
    assert (x, y, yaw) == pytest.approx((0.0, 2 / math.pi, math.pi), abs=1e-9)
    assert np.allclose(arc_step(1, 2, 0.3, 0.0, 0.5, 2.0), (1, 2, 1.3))


@given(st.floats(0, 1), st.floats(-2, 2).filter(lambda w: abs(w) > 1e-3))
def test_rollout_keeps_constant_curvature(v, w):
    traj = np.array(rollout((0, 0, 0), v, w, 1.5, 0.1))
    assert len(traj) == 15
    r = v / w
    # all points lie on the circle centred at (0, r)
    assert np.allclose(np.hypot(traj[:, 0], traj[:, 1] - r), abs(r), atol=1e-9)


def test_rollouts_shape():
    assert rollouts((0, 0, 0), [0.1, 0.2], [0.0, 0.5], 1.0, 0.25).shape == (2, 4, 3)


def test_footprint_hits_against_sampling():
    cells = np.zeros((20, 20), np.uint8)
    cells[10, 10] = 254
    g = grid_of(cells, 0.1)
    rng = np.random.default_rng(1)
    xs, ys = rng.uniform(0.3, 1.7, 300), rng.uniform(0.3, 1.7, 300)
    got = footprint_hits(xs, ys, 0.25, g)
    # dense sampling of the obstacle square
    sx, sy = np.meshgrid(np.linspace(1.0, 1.1, 41), np.linspace(1.0, 1.1, 41))
    for x, y, h in zip(xs, ys, got):
        d = np.hypot(sx - x, sy - y).min()
        if abs(d - 0.25) > 0.005:
            assert h == (d < 0.25)


def test_footprint_off_map():
    g = grid_of(np.zeros((10, 10)), 0.1)
    assert footprint_hits([-0.1, 0.5], [0.5, 0.5], 0.1, g).tolist() == [True, False]


def test_score_terms():
    g = grid_of(np.zeros((40, 40)), 0.1)
    traj = rollout((1, 1, 0), 0.5, 0.0, 1.0, 0.1)
    s = score_trajectory(traj, (1, 1, 0), 0.5, g, (3, 1), None, PlannerConfig(), 0.2, 0.5)
    assert s.obstacle == 0 and s.velocity == 0 and s.path == 0
    assert s.goal == pytest.approx(1.5 / 2.0)


def test_score_inadmissible_trajectory():
    cells = np.zeros((40, 40), np.uint8)
    cells[:, 15] = 254
    traj = rollout((1, 1, 0), 0.5, 0.0, 1.0, 0.1)
    assert score_trajectory(traj, (1, 1, 0), 0.5, grid_of(cells, 0.1), (3, 1), None,
                            PlannerConfig(), 0.2, 0.5) is None


def test_lookahead_point():
    path = Path([(float(x), 0.0) for x in range(6)], 5.0)
    assert lookahead_point(path, (0.1, 0.2, 0), (5, 0), 2.0) == (2.0, 0.0)
    assert lookahead_point(path, (4.9, 0, 0), (5, 0), 2.0) == (5, 0)
    assert lookahead_point(None, (0, 0, 0), (5, 0), 2.0) == (5, 0)


def test_dwa_drives_toward_goal():
    g = grid_of(np.zeros((40, 60)), 0.1)
    path = plan_global(g, (1, 2, 0), (5, 2))
    v, w = dwa_step((1, 2, 0), (0.3, 0.0), g, path, (5, 2), PlannerConfig(), Limits(), 0.2, 0.1)
    assert v > 0.3 - 1e-9 and abs(w) < 0.2


def test_dwa_respects_window():
    g = grid_of(np.zeros((40, 60)), 0.1)
    lim = Limits()
    res = dwa_step((1, 2, 0), (0.0, 0.0), g, None, (5, 2), PlannerConfig(), lim, 0.2, 0.1,
                   detail=True)
    assert res.window.contains(*res.command)


def test_dwa_recovery_when_boxed_in():
    cells = np.zeros((40, 40), np.uint8)
    cells[:, 22] = 254
    g = grid_of(cells, 0.1)
    res = dwa_step((2.05, 2, 0), (0.0, 0.0), g, None, (3.5, 2), PlannerConfig(), Limits(), 0.2,
                   0.1, detail=True)
    assert res.reason == "recovery" and res.command[0] == 0 and res.command[1] != 0


def test_dwa_goal_tolerance_and_alignment():
    g = grid_of(np.zeros((40, 40)), 0.1)
    cfg, lim = PlannerConfig(), Limits()
    assert dwa_step((2, 2, 0), (0, 0), g, None, (2.1, 2), cfg, lim, 0.2, 0.1) == (0.0, 0.0)
    v, w = dwa_step((2, 2, 0), (0, 0), g, None, (2.1, 2, 1.0), cfg, lim, 0.2, 0.1)
    assert v == 0 and w > 0
    assert dwa_step((2, 2, 1.0), (0, 0), g, None, (2.1, 2, 1.1), cfg, lim, 0.2, 0.1) == (0.0, 0.0)
