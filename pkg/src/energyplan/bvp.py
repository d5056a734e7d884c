"""Optimal cubic chains through a fixed sequence of contact points.

For a sequence of ``n`` junction points the trajectory consists of ``n + 1``
cubic arcs. Given junction times, the arc coefficients follow from one
square linear system (boundary states, pass-through and continuity rows);
the times themselves are fixed by the scalar junction residuals

    r_i = (udot(t_i-) - udot(t_i+)) . v(t_i),

which vanish exactly when the energy is stationary in ``t_i``.

All solves run on the normalized horizon ``tau = (t - t0) / T`` in [0, 1];
positions keep their units, velocities are scaled by ``T`` and the energy by
``T**3`` on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .geometry import BoundaryConditions, PolygonEnvironment
from .trajectory import CubicArc, Trajectory, shift_coefficients

# Minimum normalized separation between junction times (and from the ends).
TIME_SEPARATION = 1e-6
MAX_ITERATIONS = 50
RESIDUAL_TOL = 1e-9
# Relative bound on the linear-solve reconstruction error.
LINEAR_RESIDUAL_TOL = 1e-8
# Central-difference step for the residual Jacobian (normalized time).
FD_STEP = 1e-7
POLISH_STEPS = 1
# BFGS iterations for the energy-descent fallback.
DESCENT_ITERATIONS = 200


class ConditioningError(ValueError):
    """Junction times too close for a reliable linear solve."""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True, eq=False)
class ChainProblem:
    """Boundary conditions plus an ordered list of junction points.

    ``stops[i]`` marks junctions at reflex vertices, where the robot must be
    at rest; those use zero-velocity rows instead of velocity/control
    continuity.
    """

    bc: BoundaryConditions
    points: np.ndarray
    vertices: tuple = ()
    stops: np.ndarray | None = None
    env: PolygonEnvironment | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        n = len(pts)
        verts = tuple(int(v) for v in self.vertices) or (-1,) * n
        if len(verts) != n:
            raise ValueError("vertices and points differ in length")
        for a, b in zip(verts, verts[1:]):
            if a >= 0 and a == b:
                raise ValueError(f"vertex {a} repeated immediately in sequence")
        object.__setattr__(self, "vertices", verts)
        stops = np.zeros(n, bool) if self.stops is None else np.asarray(self.stops, bool).reshape(n)
        object.__setattr__(self, "stops", stops)

    @classmethod
    def from_sequence(cls, env: PolygonEnvironment, bc: BoundaryConditions,
                      sequence: Sequence[int]) -> "ChainProblem":
        seq = tuple(int(s) for s in sequence)
        for s in seq:
            if not 0 <= s < env.n_vertices:
                raise ValueError(f"vertex index {s} out of range")
        pts = env.vertices[list(seq)] if seq else np.zeros((0, 2))
        stops = ~env.convex[list(seq)] if seq else np.zeros(0, bool)
        return cls(bc, pts, seq, stops, env)

    @classmethod
    def through_points(cls, bc: BoundaryConditions, points) -> "ChainProblem":
        return cls(bc, np.asarray(points, float).reshape(-1, 2))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def size(self) -> int:
        return 8 * (self.n + 1)

    def chain_lengths(self) -> np.ndarray:
        """Straight-line leg lengths p0 -> c1 -> ... -> cn -> pf."""
        nodes = np.vstack([self.bc.p0, self.points, self.bc.pf])
        return np.linalg.norm(np.diff(nodes, axis=0), axis=1)

    def distance(self) -> float:
        return float(self.chain_lengths().sum())

    def to_normalized(self, times) -> np.ndarray:
        return (np.asarray(times, float) - self.bc.t0) / self.bc.horizon

    def to_absolute(self, tau) -> np.ndarray:
        return self.bc.t0 + np.asarray(tau, float) * self.bc.horizon

    def initial_times(self) -> np.ndarray:
        """Normalized junction times proportional to cumulative chain distance."""
        legs = self.chain_lengths()
        total = legs.sum()
        if total <= 0:
            tau = np.arange(1, self.n + 1) / (self.n + 1)
        else:
            tau = np.cumsum(legs)[:-1] / total
        return project_times(tau)


@dataclass(frozen=True, eq=False)
class ChainSolution:
    problem: ChainProblem
    times: np.ndarray
    arcs: tuple
    cost: float
    residual: float
    converged: bool
    iterations: int = 0
    normalized_times: np.ndarray = field(default=None, repr=False)

    @property
    def sequence(self) -> tuple:
        return self.problem.vertices

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(self.arcs, self.problem.vertices)


def project_times(tau, eps: float = TIME_SEPARATION) -> np.ndarray:
    """Nearest-ish ordered times with separation ``eps`` inside (0, 1)."""
    tau = np.clip(np.array(tau, dtype=float), eps, 1.0 - eps)
    n = len(tau)
    if n == 0:
        return tau
    if n * eps >= 1.0 - eps:
        return (np.arange(1, n + 1)) / (n + 1)
    for i in range(1, n):
        tau[i] = max(tau[i], tau[i - 1] + eps)
    tau[-1] = min(tau[-1], 1.0 - eps)
    for i in range(n - 2, -1, -1):
        tau[i] = min(tau[i], tau[i + 1] - eps)
    return tau


def _check_times(tau: np.ndarray) -> None:
    knots = np.concatenate([[0.0], tau, [1.0]])
    gaps = np.diff(knots)
    if np.any(~np.isfinite(gaps)) or np.any(gaps <= 0):
        raise ValueError(f"junction times must be strictly increasing inside the horizon: {tau}")
    smallest = float(gaps.min())
    if smallest < TIME_SEPARATION * (1 - 1e-9):
        raise ConditioningError(
            f"junction times only {smallest:.3g} apart (normalized); need >= {TIME_SEPARATION:g}",
            gap=smallest)


def _rhs(problem: ChainProblem) -> np.ndarray:
    n, T = problem.n, problem.bc.horizon
    z = np.zeros((4 * (n + 1), 2))
    z[0], z[1] = problem.bc.p0, problem.bc.v0 * T
    for i in range(n):
        z[2 + 4 * i] = z[3 + 4 * i] = problem.points[i]
    z[-2], z[-1] = problem.bc.pf, problem.bc.vf * T
    return z


# (multiplier, power) of the basis entries [a3, a2, a1, a0] for each row kind
_POS = ((1.0, 3), (1.0, 2), (1.0, 1), (1.0, 0))
_VEL = ((3.0, 2), (2.0, 1), (1.0, 0), (0.0, 0))
_CTL = ((6.0, 1), (2.0, 0), (0.0, 0), (0.0, 0))


class _Layout:
    """Sparsity pattern of the per-axis matrix: constant part plus entries
    ``sign * mult * tau[junction] ** power``."""

    def __init__(self, problem: ChainProblem):
        n = problem.n
        self.size = size = 4 * (n + 1)
        base = np.zeros((size, size))
        base[0, 3] = 1.0
        base[1, 2] = 1.0
        base[size - 2, size - 4:] = (1.0, 1.0, 1.0, 1.0)
        base[size - 1, size - 4:] = (3.0, 2.0, 1.0, 0.0)
        rows, cols, junction, power, mult = [], [], [], [], []

        def put(row, col0, kind, i, sign):
            for c, (mu, pw) in enumerate(kind):
                if mu == 0.0:
                    continue
                rows.append(row)
                cols.append(col0 + c)
                junction.append(i)
                power.append(pw)
                mult.append(sign * mu)

        for i in range(n):
            row, left, right = 2 + 4 * i, 4 * i, 4 * (i + 1)
            put(row, left, _POS, i, 1.0)
            put(row + 1, right, _POS, i, 1.0)
            put(row + 2, left, _VEL, i, 1.0)
            if problem.stops[i]:
                put(row + 3, right, _VEL, i, 1.0)
            else:
                put(row + 2, right, _VEL, i, -1.0)
                put(row + 3, left, _CTL, i, 1.0)
                put(row + 3, right, _CTL, i, -1.0)
        self.base = base
        self.rows = np.array(rows, dtype=int)
        self.cols = np.array(cols, dtype=int)
        self.junction = np.array(junction, dtype=int)
        self.power = np.array(power, dtype=float)
        self.mult = np.array(mult)
        self.rhs = _rhs(problem)
        self.rhs_scale = max(float(np.abs(self.rhs).max()), 1e-300)

    def matrices(self, taus: np.ndarray) -> np.ndarray:
        m = np.repeat(self.base[None], len(taus), axis=0)
        m[:, self.rows, self.cols] = self.mult * taus[:, self.junction] ** self.power
        return m


def _layout(problem: ChainProblem) -> _Layout:
    lay = problem.__dict__.get("_layout")
    if lay is None:
        lay = _Layout(problem)
        problem.__dict__["_layout"] = lay
    return lay


def _batch_matrices(problem: ChainProblem, taus: np.ndarray) -> np.ndarray:
    """Per-axis matrices for a batch of normalized time vectors ``taus`` (B, n)."""
    taus = np.asarray(taus, float)
    return _layout(problem).matrices(taus.reshape(len(taus), problem.n))


def axis_system(problem: ChainProblem, tau: np.ndarray):
    """Per-axis system ``M x = Z`` in normalized time; ``x`` is (4(n+1), 2) with
    rows ``[a3, a2, a1, a0]`` of arc 0, then arc 1, ..."""
    tau = np.asarray(tau, float).reshape(1, problem.n)
    return _batch_matrices(problem, tau)[0], _rhs(problem)


def assemble_linear_system(problem: ChainProblem, times):
    """Full ``A c = z`` of size 8(n+1) for absolute junction ``times``.

    The system is expressed on the normalized horizon. Unknowns are ordered
    arc-major, then coefficient (a3..a0), then axis (x, y).
    """
    tau = problem.to_normalized(times).reshape(problem.n)
    _check_times(tau)
    m, z = axis_system(problem, tau)
    return np.kron(m, np.eye(2)), z.reshape(-1)


def _min_gaps(taus: np.ndarray) -> np.ndarray:
    if taus.shape[1] == 0:
        return np.ones(len(taus))
    inner = taus[:, 1:] - taus[:, :-1]
    return np.minimum(np.minimum(taus[:, 0], 1.0 - taus[:, -1]),
                      inner.min(axis=1, initial=np.inf))


def _batch_solve(problem: ChainProblem, taus: np.ndarray):
    """Coefficients (B, n+1, 4, 2) and a per-item ok mask."""
    taus = np.asarray(taus, float).reshape(len(taus), problem.n)
    lay = _layout(problem)
    z = lay.rhs
    ok = _min_gaps(taus) >= TIME_SEPARATION * (1 - 1e-9)
    m = lay.matrices(taus)
    zb = np.broadcast_to(z, (len(taus),) + z.shape)
    try:
        x = np.linalg.solve(m, zb)
    except np.linalg.LinAlgError:
        x = np.full(zb.shape, np.nan)
        for j in range(len(taus)):
            try:
                x[j] = np.linalg.solve(m[j], z)
            except np.linalg.LinAlgError:
                ok[j] = False
    err = np.abs(m @ x - zb).max(axis=(1, 2))
    ok &= np.isfinite(err) & (err <= LINEAR_RESIDUAL_TOL * lay.rhs_scale)
    return x.reshape(len(taus), problem.n + 1, 4, 2), ok


def _solve_axes(problem: ChainProblem, tau: np.ndarray) -> np.ndarray:
    _check_times(tau)
    x, ok = _batch_solve(problem, tau[None, :])
    if not ok[0]:
        gap = float(_min_gaps(tau[None, :])[0])
        raise ConditioningError("junction system is singular or ill-conditioned", gap=gap)
    return x[0]


def _batch_residuals(problem: ChainProblem, taus: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    t = taus[..., None]
    left, right = coeffs[:, :-1], coeffs[:, 1:]
    v = 3 * left[:, :, 0] * t**2 + 2 * left[:, :, 1] * t + left[:, :, 2]
    generic = 6.0 * np.sum((left[:, :, 0] - right[:, :, 0]) * v, axis=-1)
    if not problem.stops.any():
        return generic
    ul = 6 * left[:, :, 0] * t + 2 * left[:, :, 1]
    ur = 6 * right[:, :, 0] * t + 2 * right[:, :, 1]
    stop = 0.5 * (np.sum(ur * ur, axis=-1) - np.sum(ul * ul, axis=-1))
    return np.where(problem.stops, stop, generic)


def _residuals_from(problem: ChainProblem, tau: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    return _batch_residuals(problem, tau[None, :], coeffs[None])[0]


def _normalized_energy(coeffs: np.ndarray, tau: np.ndarray) -> float:
    knots = np.concatenate([[0.0], tau, [1.0]])
    a, b = knots[:-1, None], knots[1:, None]
    us = 6 * coeffs[:, 0] * a + 2 * coeffs[:, 1]
    ue = 6 * coeffs[:, 0] * b + 2 * coeffs[:, 1]
    per_arc = (b[:, 0] - a[:, 0]) * np.sum(us * us + us * ue + ue * ue, axis=-1) / 6.0
    return float(per_arc.sum())


def _arcs_from(problem: ChainProblem, tau: np.ndarray, coeffs: np.ndarray) -> tuple:
    T, t0 = problem.bc.horizon, problem.bc.t0
    times = problem.to_absolute(tau)
    knots = np.concatenate([[t0], times, [problem.bc.tf]])
    arcs = []
    for j, c in enumerate(coeffs):
        # tau = t / T - t0 / T
        absolute = shift_coefficients(c, -t0 / T, 1.0 / T)
        arcs.append(CubicArc(*absolute, knots[j], knots[j + 1]))
    return tuple(arcs)


def solve_coefficients(problem: ChainProblem, times) -> tuple:
    """Arcs (absolute time) through the chain for fixed junction ``times``."""
    tau = problem.to_normalized(times).reshape(problem.n)
    coeffs = _solve_axes(problem, tau)
    return _arcs_from(problem, tau, coeffs)


def junction_residuals(problem: ChainProblem, times) -> np.ndarray:
    """Normalized-time junction residuals at absolute junction ``times``.

    Each residual equals the derivative of the normalized energy with respect
    to the corresponding normalized junction time.
    """
    tau = problem.to_normalized(times).reshape(problem.n)
    return _residuals_from(problem, tau, _solve_axes(problem, tau))


def chain_energy(problem: ChainProblem, times) -> float:
    """Energy (physical units) of the chain at fixed junction ``times``."""
    tau = problem.to_normalized(times).reshape(problem.n)
    coeffs = _solve_axes(problem, tau)
    return _normalized_energy(coeffs, tau) / problem.bc.horizon**3


def _evaluate(problem: ChainProblem, taus: np.ndarray):
    """Residuals (B, n) for a batch of time vectors; rows are NaN where the
    linear solve is unreliable."""
    coeffs, ok = _batch_solve(problem, taus)
    r = _batch_residuals(problem, taus, coeffs)
    r[~ok] = np.nan
    return r


def _jacobian(problem: ChainProblem, tau: np.ndarray, r0: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian, one-sided next to the separation limit."""
    n = len(tau)
    knots = np.concatenate([[0.0], tau, [1.0]])
    room_lo = tau - knots[:-2] - TIME_SEPARATION
    room_hi = knots[2:] - tau - TIME_SEPARATION
    h = FD_STEP
    up = np.where(room_hi >= h, h, 0.0)
    down = np.where(room_lo >= h, h, 0.0)
    both_zero = (up == 0) & (down == 0)
    up[both_zero] = np.maximum(room_hi[both_zero], 0.0)
    plus = tau + np.diag(up)
    minus = tau - np.diag(down)
    r = _evaluate(problem, np.vstack([plus, minus]))
    rp, rm = r[:n], r[n:]
    # column k: (r(tau + up_k e_k) - r(tau - down_k e_k)) / (up_k + down_k)
    rp = np.where((up > 0)[:, None], rp, r0[None, :])
    rm = np.where((down > 0)[:, None], rm, r0[None, :])
    width = up + down
    if np.any(width <= 0) or not np.all(np.isfinite(rp)) or not np.all(np.isfinite(rm)):
        raise ConditioningError("cannot difference residuals near coincident times",
                                gap=float(_min_gaps(tau[None, :])[0]))
    return ((rp - rm) / width[:, None]).T


def residual_tolerance(problem: ChainProblem) -> float:
    """Convergence threshold on the max residual (normalized units)."""
    return RESIDUAL_TOL * max(1.0, problem.distance() ** 2)


def _newton(problem: ChainProblem, tau: np.ndarray, tol: float, trace, it0: int = 0):
    """Damped Newton on the residuals from ``tau``.

    Returns ``(tau, r, iterations)``; ``r`` is None when the start point
    cannot be evaluated.
    """
    def f(tau_):
        r_ = _evaluate(problem, tau_[None, :])[0]
        if not np.all(np.isfinite(r_)):
            raise ConditioningError("ill-conditioned junction system",
                                    gap=float(_min_gaps(tau_[None, :])[0]))
        return r_

    try:
        r = f(tau)
    except ConditioningError:
        return tau, None, it0
    it = it0
    polish = 0
    while it < it0 + MAX_ITERATIONS:
        rmax = float(np.abs(r).max())
        if trace is not None:
            trace({"iteration": it, "times": problem.to_absolute(tau).tolist(), "residual": rmax})
        if rmax <= tol:
            if polish >= POLISH_STEPS or rmax == 0.0:
                break
            polish += 1
        it += 1
        try:
            jac = _jacobian(problem, tau, r)
        except ConditioningError:
            break
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        accepted = False
        lam = 1.0
        norm0 = float(np.linalg.norm(r))
        while lam >= 1.0 / 1024:
            trial = project_times(tau + lam * step)
            try:
                rt = f(trial)
            except ConditioningError:
                lam *= 0.5
                continue
            if np.linalg.norm(rt) < norm0:
                tau, r = trial, rt
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
    return tau, r, it


def _descend(problem: ChainProblem, tau: np.ndarray) -> np.ndarray:
    """Minimize the normalized energy over junction times by BFGS.

    Times are parameterized by softmax gap weights so every iterate stays
    ordered; the residuals supply the exact gradient.
    """
    n = len(tau)

    def times_of(z):
        g = np.exp(z - z.max())
        g /= g.sum()
        return g, project_times(np.cumsum(g)[:n])

    def fun(z):
        g, t = times_of(z)
        try:
            coeffs = _solve_axes(problem, t)
        except ConditioningError:
            return 1e300, np.zeros_like(z)
        energy = _normalized_energy(coeffs, t)
        r = _residuals_from(problem, t, coeffs)
        # dE/dg_j sums the gradient over every junction time after gap j
        dg = np.append(np.cumsum(r[::-1])[::-1], 0.0)
        return energy, g * (dg - g @ dg)

    knots = np.concatenate([[0.0], tau, [1.0]])
    z0 = np.log(np.diff(knots))
    res = minimize(fun, z0, jac=True, method="BFGS",
                   options={"maxiter": DESCENT_ITERATIONS, "gtol": 1e-10})
    return times_of(res.x)[1]


def solve_chain(problem: ChainProblem, initial_times=None,
                trace: Callable[[dict], None] | None = None) -> ChainSolution:
    """Junction times zeroing every residual, by damped Newton iteration.

    ``initial_times`` are absolute; by default times are placed in proportion
    to cumulative straight-line chain distance. If Newton stalls, the energy
    is minimized directly and Newton restarts from that minimizer.
    Non-convergence is reported through ``converged=False`` rather than an
    exception.
    """
    n = problem.n
    T = problem.bc.horizon
    if n == 0:
        coeffs = _solve_axes(problem, np.zeros(0))
        arcs = _arcs_from(problem, np.zeros(0), coeffs)
        cost = _normalized_energy(coeffs, np.zeros(0)) / T**3
        return ChainSolution(problem, np.zeros(0), arcs, cost, 0.0, True, 0, np.zeros(0))

    if initial_times is None:
        tau = problem.initial_times()
    else:
        tau = project_times(problem.to_normalized(initial_times))
    tol = residual_tolerance(problem)

    def failed(tau_, it_):
        return ChainSolution(problem, problem.to_absolute(tau_), (), float("inf"),
                             float("inf"), False, it_, tau_)

    tau, r, it = _newton(problem, tau, tol, trace)
    if r is None or float(np.abs(r).max()) > tol:
        tau, r, it = _newton(problem, _descend(problem, tau), tol, trace, it)
    if r is None:
        return failed(tau, it)

    rmax = float(np.abs(r).max())
    converged = rmax <= tol
    try:
        coeffs = _solve_axes(problem, tau)
    except ConditioningError:
        return failed(tau, it)
    arcs = _arcs_from(problem, tau, coeffs)
    cost = _normalized_energy(coeffs, tau) / T**3
    return ChainSolution(problem, problem.to_absolute(tau), arcs, cost, rmax, converged, it, tau)
