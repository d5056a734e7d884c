import numpy as np
import pytest

from energyplan.feasibility import chain_feasible
from energyplan.geometry import BoundaryConditions, PolygonEnvironment
from energyplan.planner import (OVERFLOW, plan, plan_min_distance, plan_min_energy,
                                plan_suffix, prefix_distance)
from energyplan.trajectory import trajectory_energy
from oracles import enumerate_min_distance, small_instances

SQUARE_DISTANCE = 1 + 2 * np.sqrt(1.5**2 + 0.5**2)


def check_result(result, env):
    assert result.success
    sol = result.solution
    assert sol.converged
    assert chain_feasible(sol) == (True, None)
    assert result.cost == pytest.approx(trajectory_energy(result.trajectory), rel=1e-12)
    assert result.distance == pytest.approx(prefix_distance(env, sol.problem.bc, result.sequence))


class TestMinDistance:
    def test_empty_environment_is_direct_arc(self):
        env = PolygonEnvironment.empty()
        bc = BoundaryConditions(p0=(0, 0), pf=(4, 0), tf=4.0)
        r = plan_min_distance(env, bc)
        check_result(r, env)
        assert r.sequence == ()
        assert r.cost == pytest.approx(6 * 16 / 64, rel=1e-12)

    def test_square_goes_around_two_corners(self, square, square_bc):
        r = plan_min_distance(square, square_bc)
        check_result(r, square)
        assert r.distance == pytest.approx(SQUARE_DISTANCE, abs=1e-9)
        assert len(r.sequence) == 2

    def test_symmetric_tie_picks_smaller_indices(self, square, square_bc):
        r = plan_min_distance(square, square_bc)
        assert r.sequence == (0, 1)
        mirror = prefix_distance(square, square_bc, (3, 2))
        assert mirror == pytest.approx(r.distance, abs=1e-12)

    def test_deterministic(self, square, square_bc):
        a = plan_min_distance(square, square_bc, timing=False)
        b = plan_min_distance(square, square_bc, timing=False)
        assert a.summary() == b.summary()
        assert np.array_equal(a.solution.times, b.solution.times)
        assert a.stats.wall_time is None

    def test_winner_no_longer_than_unexpanded_keys(self):
        for env, bc in small_instances(3, 10):
            r = plan_min_distance(env, bc)
            assert r.success
            assert all(r.distance <= key + 1e-12 for key, _, _ in r.queue)

    def test_stats_are_counted(self, square, square_bc):
        r = plan_min_distance(square, square_bc)
        s = r.stats
        assert s.pops >= 1 and s.solver_calls >= s.pops and s.max_queue >= 5
        assert s.wall_time is not None and s.wall_time >= 0

    def test_queue_cap_overflow_is_reported(self, square, square_bc):
        r = plan_min_distance(square, square_bc, queue_cap=3)
        assert r.status == OVERFLOW and not r.success
        assert r.summary()["cost"] is None

    def test_blocked_endpoint_rejected(self, square):
        bc = BoundaryConditions(p0=(0, 0), pf=(2, 0), tf=2.0)
        with pytest.raises(ValueError, match="not in free space"):
            plan_min_distance(square, bc)

    def test_trace_sees_every_solve(self, square, square_bc):
        rows = []
        r = plan_min_distance(square, square_bc, trace=rows.append)
        solved = {tuple(row["sequence"]) for row in rows}
        assert r.sequence in solved
        assert all("iteration" in row for row in rows)

    def test_matches_enumeration(self):
        compared = 0
        for env, bc in small_instances(11, 15):
            r = plan_min_distance(env, bc)
            seq, dist, prefixes_ok = enumerate_min_distance(env, bc)
            if seq is None or not prefixes_ok:
                continue
            compared += 1
            if len(r.sequence) <= 4:
                assert r.distance == pytest.approx(dist, abs=1e-9)
            else:
                assert r.distance <= dist + 1e-9
        assert compared >= 10

    def test_unknown_mode_rejected(self, square, square_bc):
        with pytest.raises(ValueError, match="unknown mode"):
            plan(square, square_bc, mode="fastest")


class TestMinEnergy:
    def test_empty_environment_same_as_distance(self):
        env = PolygonEnvironment.empty()
        bc = BoundaryConditions(p0=(0, 0), pf=(4, 0), tf=4.0)
        a, b = plan_min_distance(env, bc), plan_min_energy(env, bc)
        assert b.sequence == a.sequence and b.cost == a.cost
        assert b.mode == "energy"

    def test_square_energy_not_above_distance(self, square, square_bc):
        a = plan_min_distance(square, square_bc)
        b = plan_min_energy(square, square_bc)
        check_result(b, square)
        assert b.cost <= a.cost + 1e-12

    def test_dominance_on_random_instances(self):
        for env, bc in small_instances(5, 12):
            a = plan(env, bc, "distance")
            b = plan(env, bc, "energy")
            check_result(b, env)
            assert b.cost <= a.cost + 1e-12

    def test_energy_mode_finds_cheaper_sequence(self):
        env, bc = small_instances(3, 5)[4]
        a, b = plan_min_distance(env, bc), plan_min_energy(env, bc)
        check_result(b, env)
        assert a.sequence == (0, 5) and b.sequence == (3,)
        assert b.cost < a.cost and b.distance > a.distance


class TestSuffix:
    def test_empty_environment_same_arc(self):
        env = PolygonEnvironment.empty()
        bc = BoundaryConditions(p0=(0, 0), pf=(4, 0), tf=4.0)
        r = plan_suffix(env, bc)
        check_result(r, env)
        assert r.sequence == () and r.cost == pytest.approx(1.5, rel=1e-12)

    def test_symmetric_environment_reverses_prefix_result(self, square, square_bc):
        fwd = plan_min_distance(square, square_bc)
        bwd = plan_suffix(square, square_bc)
        check_result(bwd, square)
        assert bwd.mode == "suffix"
        backward = plan_min_distance(square, square_bc.reversed())
        assert bwd.sequence == tuple(reversed(backward.sequence)) == fwd.sequence
        assert bwd.distance == pytest.approx(fwd.distance, abs=1e-12)
        assert bwd.cost == pytest.approx(fwd.cost, rel=1e-9)

    def test_asymmetric_funnel_both_feasible(self):
        funnel = PolygonEnvironment.from_rings([
            [(-1, 0.3), (1, 1.0), (-1, 2)],
            [(-1, -2), (1, -1.0), (-1, -0.3)],
        ])
        bc = BoundaryConditions(p0=(-3, 0), pf=(3, 0.5), tf=6.0)
        fwd = plan_min_distance(funnel, bc)
        bwd = plan_suffix(funnel, bc)
        check_result(fwd, funnel)
        check_result(bwd, funnel)
        assert np.isfinite(fwd.cost) and np.isfinite(bwd.cost)
