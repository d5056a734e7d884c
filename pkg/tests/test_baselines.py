import numpy as np
import pytest

from energyplan.baselines import (SegmentChecker, WaypointPath, energy_lower_bound, prm, rrt_star,
                                  shortcut)
from energyplan.geometry import BoundaryConditions, PolygonEnvironment, segments_intersect

P0, PF = np.array([0.5, 0.5]), np.array([9.5, 9.5])
BOX = ((0.0, 0.0), (10.0, 10.0))
PLANNERS = {"rrt-star": rrt_star, "prm": prm}


def dense_segment_check(env, path):
    a, b = env.face_endpoints()
    for p, q in zip(path.waypoints, path.waypoints[1:]):
        assert not segments_intersect(p, q, a, b).any()
        for s in np.linspace(0, 1, 200):
            assert env.point_free(p + s * (q - p))


@pytest.fixture
def blocks():
    return PolygonEnvironment.from_rings([
        [(2, 2), (4, 2), (4, 4), (2, 4)],
        [(5, 5), (8, 5), (8, 7), (5, 7)],
        [(6, 1), (7, 1), (7, 3)],
    ])


@pytest.mark.parametrize("name", PLANNERS)
def test_empty_environment_nearly_straight(name):
    path = PLANNERS[name](PolygonEnvironment.empty(), P0, PF, budget=2500, seed=0, bounds=BOX)
    assert path.success
    assert path.length <= 1.05 * np.linalg.norm(PF - P0)
    assert np.array_equal(path.waypoints[0], P0) and np.array_equal(path.waypoints[-1], PF)


@pytest.mark.parametrize("name", PLANNERS)
def test_walled_off_goal_fails(name):
    wall = PolygonEnvironment.from_rings([[(-1, 4.8), (11, 4.8), (11, 5.2), (-1, 5.2)]])
    path = PLANNERS[name](wall, P0, PF, budget=300, seed=0, bounds=BOX)
    assert not path.success
    assert np.isnan(path.length)
    assert energy_lower_bound(path, BoundaryConditions(p0=P0, pf=PF, tf=10.0))[1] is False


@pytest.mark.parametrize("name", PLANNERS)
def test_fixed_seed_is_deterministic(name, blocks):
    a = PLANNERS[name](blocks, P0, PF, budget=500, seed=3, bounds=BOX)
    b = PLANNERS[name](blocks, P0, PF, budget=500, seed=3, bounds=BOX)
    assert a.success and np.array_equal(a.waypoints, b.waypoints)


@pytest.mark.parametrize("name", PLANNERS)
def test_paths_are_collision_free(name, blocks):
    for seed in range(3):
        path = PLANNERS[name](blocks, P0, PF, budget=800, seed=seed, bounds=BOX)
        assert path.success
        dense_segment_check(blocks, path)


@pytest.mark.parametrize("name", PLANNERS)
def test_blocked_endpoint_fails(name, blocks):
    assert not PLANNERS[name](blocks, (3, 3), PF, budget=100, bounds=BOX).success


def test_segment_checker_matches_environment(blocks, rng):
    check = SegmentChecker(blocks)
    pts = rng.uniform(0, 10, (300, 2))
    assert np.array_equal(check.points_free(pts), [blocks.point_free(p) for p in pts])
    p, q = rng.uniform(0, 10, (2, 100, 2))
    a, b = blocks.face_endpoints()
    expect = [not segments_intersect(x, y, a, b).any() for x, y in zip(p, q)]
    assert np.array_equal(check.segments_free(p, q), expect)


def test_shortcut_drops_visible_waypoints(blocks):
    zigzag = np.array([P0, (1, 5), (1, 9), (5, 9.5), PF])
    out = shortcut(zigzag, SegmentChecker(blocks))
    assert len(out) < len(zigzag)
    assert np.array_equal(out[0], P0) and np.array_equal(out[-1], PF)


class TestEnergyBound:
    bc = BoundaryConditions(p0=(0, 0), pf=(3, 4), tf=5.0)

    def test_endpoints_only_closed_form(self):
        cost, ok = energy_lower_bound(WaypointPath(np.array([(0, 0), (3, 4)])), self.bc)
        assert ok and cost == pytest.approx(6 * 25 / 125, rel=1e-12)

    def test_on_path_waypoint_at_symmetric_point(self):
        cost, ok = energy_lower_bound(WaypointPath(np.array([(0, 0), (1.5, 2), (3, 4)])), self.bc)
        assert ok and cost == pytest.approx(6 * 25 / 125, rel=1e-9)

    def test_off_path_waypoint_costs_more(self):
        base, _ = energy_lower_bound(WaypointPath(np.array([(0, 0), (3, 4)])), self.bc)
        cost, ok = energy_lower_bound(WaypointPath(np.array([(0, 0), (2, 1), (3, 4)])), self.bc)
        assert ok and cost > base

    def test_monotone_under_insertion(self, rng):
        for _ in range(20):
            pts = np.vstack([(0, 0), rng.uniform(0, 4, (int(rng.integers(0, 3)), 2)), (3, 4)])
            base, ok1 = energy_lower_bound(WaypointPath(pts), self.bc)
            k = int(rng.integers(1, len(pts)))
            more, ok2 = energy_lower_bound(
                WaypointPath(np.insert(pts, k, rng.uniform(0, 4, 2), axis=0)), self.bc)
            if ok1 and ok2:
                assert base <= more + 1e-9 * max(1.0, more)
