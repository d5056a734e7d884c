import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from energyplan.trajectory import (CubicArc, Trajectory, arc_energy, hermite_arc,
                                   shift_coefficients, trajectory_energy)
from oracles import hermite_energy, qp_energy

small = st.floats(-5, 5, allow_nan=False)
vec = st.tuples(small, small)


def rest_arc(dp, T, t0=0.0):
    return hermite_arc((0, 0), (0, 0), dp, (0, 0), t0, t0 + T)


class TestCubicArc:
    def test_eval_returns_state_and_control(self):
        arc = CubicArc((1, 0), (0, 2), (3, 0), (0, 4), 0.0, 2.0)
        p, v, u, du = arc.eval(1.0)
        assert np.allclose(p, (4, 6))
        assert np.allclose(v, (6, 4))
        assert np.allclose(u, (6, 4))
        assert np.allclose(du, (6, 0))

    def test_eval_outside_interval_rejected(self):
        arc = CubicArc((0, 0), (0, 0), (1, 0), (0, 0), 0.0, 1.0)
        with pytest.raises(ValueError, match="outside"):
            arc.eval(1.5)

    def test_empty_interval_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            CubicArc((0, 0), (0, 0), (0, 0), (0, 0), 1.0, 1.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            CubicArc((np.nan, 0), (0, 0), (0, 0), (0, 0), 0.0, 1.0)

    def test_sample_matches_eval(self, rng):
        arc = CubicArc(*rng.normal(size=(4, 2)), 0.5, 2.0)
        t = np.linspace(0.5, 2.0, 7)
        p, v, u = arc.sample(t)
        for i, ti in enumerate(t):
            pe, ve, ue, _ = arc.eval(ti)
            assert np.allclose([p[i], v[i], u[i]], [pe, ve, ue])

    @given(st.floats(-3, 3), st.floats(0.2, 3))
    def test_shift_coefficients_matches_direct_evaluation(self, shift, scale):
        c = np.array([[1.5, -2.0], [0.3, 1.0], [-1.0, 0.5], [2.0, -0.7]])
        local = shift_coefficients(c, shift, scale)
        for s in (-1.0, 0.0, 0.7, 2.0):
            x = scale * s + shift
            direct = ((c[0] * x + c[1]) * x + c[2]) * x + c[3]
            shifted = ((local[0] * s + local[1]) * s + local[2]) * s + local[3]
            assert np.allclose(direct, shifted, rtol=1e-10, atol=1e-10)


class TestHermite:
    def test_rest_to_rest_coefficients(self):
        arc = rest_arc((1, 0), 1.0)
        assert np.allclose(arc.a3, (-2, 0))
        assert np.allclose(arc.a2, (3, 0))
        assert np.allclose(arc.a1, 0) and np.allclose(arc.a0, 0)

    @given(vec, vec, vec, vec, st.floats(-5, 5), st.floats(0.1, 10))
    def test_round_trips_boundary_conditions(self, p0, v0, pf, vf, t0, h):
        arc = hermite_arc(p0, v0, pf, vf, t0, t0 + h)
        ps, vs, _, _ = arc.eval(arc.t_start)
        pe, ve, _, _ = arc.eval(arc.t_end)
        scale = max(1.0, *np.abs([p0, v0, pf, vf]).ravel())
        for got, want in ((ps, p0), (vs, v0), (pe, pf), (ve, vf)):
            assert np.allclose(got, want, rtol=1e-9, atol=1e-9 * scale)

    def test_rejects_reversed_interval(self):
        with pytest.raises(ValueError):
            hermite_arc((0, 0), (0, 0), (1, 0), (0, 0), 1.0, 0.5)


class TestEnergy:
    def test_constant_control(self):
        arc = CubicArc((0, 0), (1, 0), (0, 0), (0, 0), 0.0, 1.0)
        assert arc_energy(arc) == pytest.approx(2.0, rel=1e-15)

    def test_rest_to_rest_unit(self):
        assert arc_energy(rest_arc((1, 0), 1.0)) == pytest.approx(6.0, rel=1e-12)

    def test_zero_arc(self):
        assert arc_energy(CubicArc((0, 0), (0, 0), (0, 0), (0, 0), 0.0, 1.0)) == 0.0

    def test_rest_to_rest_two_meters(self):
        traj = Trajectory((rest_arc((2, 0), 2.0),))
        assert trajectory_energy(traj) == pytest.approx(3.0, rel=1e-12)

    def test_additive_with_zero_arc(self):
        first = rest_arc((2, 0), 2.0)
        still = CubicArc((0, 0), (0, 0), (0, 0), (2, 0), 2.0, 3.0)
        assert trajectory_energy(Trajectory((first, still))) == pytest.approx(3.0, rel=1e-12)

    @given(st.floats(0.2, 5))
    def test_time_scaling_law(self, beta):
        traj = Trajectory((rest_arc((1.5, -0.5), 1.3),))
        scaled = traj.time_scaled(beta)
        assert scaled.energy() == pytest.approx(traj.energy() / beta**3, rel=1e-9)

    @given(st.floats(0.1, 10))
    def test_spatial_scaling_law(self, alpha):
        base = rest_arc((1.0, 2.0), 1.7)
        big = rest_arc((alpha * 1.0, alpha * 2.0), 1.7)
        assert arc_energy(big) == pytest.approx(alpha**2 * arc_energy(base), rel=1e-9)

    def test_matches_adaptive_quadrature(self, rng):
        for _ in range(50):
            t0 = rng.uniform(-2, 2)
            arc = CubicArc(*rng.normal(size=(4, 2)), t0, t0 + rng.uniform(0.1, 3))
            integrand = lambda t: 0.5 * float(np.sum((6 * arc.a3 * t + 2 * arc.a2) ** 2))
            ref, _ = quad(integrand, arc.t_start, arc.t_end, epsabs=0, epsrel=1e-13)
            assert arc_energy(arc) == pytest.approx(ref, rel=1e-9)

    def test_matches_closed_form_oracle(self, rng):
        for _ in range(50):
            p0, v0, p1, v1 = rng.normal(size=(4, 2))
            h = rng.uniform(0.2, 4)
            arc = hermite_arc(p0, v0, p1, v1, 1.0, 1.0 + h)
            assert arc_energy(arc) == pytest.approx(hermite_energy(p0, v0, p1, v1, h), rel=1e-9)

    def test_hermite_is_minimal_against_discrete_control(self, rng):
        for _ in range(20):
            p0, v0, pf, vf = rng.uniform(-3, 3, size=(4, 2))
            T = rng.uniform(0.5, 5)
            exact = arc_energy(hermite_arc(p0, v0, pf, vf, 0.0, T))
            oracle = qp_energy(p0, v0, pf, vf, T, steps=1000)
            assert oracle >= exact - 1e-6
            assert oracle == pytest.approx(exact, rel=1e-2)


class TestTrajectory:
    def two_arcs(self):
        a = hermite_arc((0, 0), (0, 0), (1, 1), (1, 0), 0.0, 1.0)
        b = hermite_arc((1, 1), (1, 0), (2, 0), (0, 0), 1.0, 2.5)
        return Trajectory((a, b), (7,))

    def test_arcs_must_abut(self):
        a = rest_arc((1, 0), 1.0)
        b = rest_arc((1, 0), 1.0, t0=1.5)
        with pytest.raises(ValueError, match="abut"):
            Trajectory((a, b))

    def test_junction_bookkeeping(self):
        traj = self.two_arcs()
        assert traj.junction_times == (1.0,)
        assert traj.junction_vertices == (7,)
        gaps = traj.junction_gaps()
        assert gaps.shape == (1, 3)
        assert gaps[0, 0] < 1e-12 and gaps[0, 1] < 1e-12

    def test_sample_covers_both_ends(self):
        rows = self.two_arcs().sample(rate_hz=10)
        assert rows.shape == (26, 7)
        assert rows[0, 0] == 0.0 and rows[-1, 0] == 2.5
        assert np.allclose(rows[-1, 1:5], [2, 0, 0, 0])

    def test_csv_header_and_precision(self):
        text = self.two_arcs().to_csv(rate_hz=4)
        lines = text.splitlines()
        assert lines[0] == "t,px,py,vx,vy,ux,uy"
        assert len(lines) == 1 + 11
        parsed = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
        assert np.array_equal(parsed, self.two_arcs().sample(rate_hz=4))

    def test_json_round_trip_bit_exact(self):
        traj = self.two_arcs()
        back = Trajectory.from_json(traj.to_json())
        assert back.junction_vertices == traj.junction_vertices
        for a, b in zip(traj.arcs, back.arcs):
            for ca, cb in zip(a.coefficients, b.coefficients):
                assert np.array_equal(ca, cb)
            assert (a.t_start, a.t_end) == (b.t_start, b.t_end)
        assert json.loads(traj.to_json())["junction_times"] == [1.0]

    def test_arc_at_picks_interval(self):
        traj = self.two_arcs()
        assert traj.arc_at(0.5) is traj.arcs[0]
        assert traj.arc_at(2.0) is traj.arcs[1]
        assert traj.arc_at(2.5) is traj.arcs[1]
