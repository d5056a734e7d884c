"""Piecewise-cubic trajectories of a planar double integrator.

Every arc stores its polynomial coefficients in absolute time,
``p(t) = a3 t^3 + a2 t^2 + a1 t + a0``, so neighbouring arcs share the
junction time ``t`` literally rather than through per-arc offsets.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .geometry import dumps_exact, format_float

# Relative slack when testing that an evaluation time lies inside an arc.
TIME_SLACK = 1e-12


def _vec(x) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(2)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CubicArc:
    a3: np.ndarray
    a2: np.ndarray
    a1: np.ndarray
    a0: np.ndarray
    t_start: float
    t_end: float

    def __post_init__(self):
        for name in ("a3", "a2", "a1", "a0"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))
        if not self.t_end > self.t_start:
            raise ValueError(f"arc interval [{self.t_start}, {self.t_end}] is empty")
        if not all(np.all(np.isfinite(c)) for c in self.coefficients):
            raise ValueError("arc coefficients must be finite")

    @property
    def coefficients(self) -> tuple:
        return self.a3, self.a2, self.a1, self.a0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def contains(self, t: float) -> bool:
        slack = TIME_SLACK * max(1.0, abs(self.t_start), abs(self.t_end))
        return self.t_start - slack <= t <= self.t_end + slack

    def eval(self, t: float):
        """Position, velocity, control and control rate at absolute time ``t``."""
        if not self.contains(t):
            raise ValueError(f"t={t} outside arc interval [{self.t_start}, {self.t_end}]")
        a3, a2, a1, a0 = self.coefficients
        p = ((a3 * t + a2) * t + a1) * t + a0
        v = (3 * a3 * t + 2 * a2) * t + a1
        u = 6 * a3 * t + 2 * a2
        return p, v, u, 6 * a3

    def sample(self, t: np.ndarray):
        """Vectorized evaluation; no range checking. Returns (p, v, u) of shape (m, 2)."""
        t = np.asarray(t, float)[:, None]
        a3, a2, a1, a0 = self.coefficients
        p = ((a3 * t + a2) * t + a1) * t + a0
        v = (3 * a3 * t + 2 * a2) * t + a1
        u = 6 * a3 * t + 2 * a2
        return p, v, u

    def local_coefficients(self) -> np.ndarray:
        """Coefficients (4, 2) of ``s -> p(t_start + s)``, highest power first."""
        return shift_coefficients(np.stack(self.coefficients), self.t_start)

    def time_scaled(self, beta: float) -> "CubicArc":
        """Arc traversing the same path with time stretched by ``beta``."""
        a3, a2, a1, a0 = self.coefficients
        return CubicArc(a3 / beta**3, a2 / beta**2, a1 / beta, a0,
                        self.t_start * beta, self.t_end * beta)


_BINOM = np.array([[comb(j, k) for j in range(8)] for k in range(8)], dtype=float)


def shift_coefficients(coeffs: np.ndarray, shift: float, scale: float = 1.0) -> np.ndarray:
    """Re-express ``q(x) = sum c_j x^j`` (highest power first) in ``s`` where
    ``x = scale * s + shift``."""
    coeffs = np.asarray(coeffs, float)
    m = len(coeffs)
    j = np.arange(m)
    # x^j = sum_k C(j, k) scale^k shift^(j-k) s^k, ascending powers
    power = np.clip(j[None, :] - j[:, None], 0, None)
    basis = _BINOM[:m, :m] * scale ** j[:, None] * shift ** power
    return (basis @ coeffs[::-1])[::-1]


def arc_from_local(local: np.ndarray, t_start: float, t_end: float) -> CubicArc:
    """Arc whose coefficients in ``s = t - t_start`` are ``local`` (4, 2)."""
    absolute = shift_coefficients(local, -t_start)
    return CubicArc(*absolute, t_start, t_end)


def hermite_arc(p0, v0, pf, vf, t0: float, tf: float) -> CubicArc:
    """Unique cubic meeting position and velocity at both ends."""
    if not tf > t0:
        raise ValueError(f"hermite_arc needs tf > t0, got [{t0}, {tf}]")
    h = tf - t0
    # per-axis system in local time s = t - t0
    m = np.array([
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [h**3, h**2, h, 1.0],
        [3 * h**2, 2 * h, 1.0, 0.0],
    ])
    rhs = np.array([p0, v0, pf, vf], dtype=float).reshape(4, 2)
    local = np.linalg.solve(m, rhs)
    return arc_from_local(local, t0, tf)


def arc_energy(arc: CubicArc) -> float:
    """Exact value of half the integral of the squared control over the arc."""
    # control is linear in time: integral of |u|^2 = h (|us|^2 + us.ue + |ue|^2) / 3
    us = 6 * arc.a3 * arc.t_start + 2 * arc.a2
    ue = 6 * arc.a3 * arc.t_end + 2 * arc.a2
    return float(arc.duration * (us @ us + us @ ue + ue @ ue) / 6.0)


@dataclass(frozen=True)
class Trajectory:
    """Ordered arcs joined at junctions.

    ``junction_vertices[i]`` is the environment vertex index touched at
    ``junction_times[i]`` (``-1`` for free waypoints).
    """

    arcs: tuple
    junction_vertices: tuple = ()
    junction_times: tuple = field(default=())

    def __post_init__(self):
        arcs = tuple(self.arcs)
        if not arcs:
            raise ValueError("trajectory needs at least one arc")
        object.__setattr__(self, "arcs", arcs)
        times = tuple(float(a.t_end) for a in arcs[:-1])
        object.__setattr__(self, "junction_times", times)
        verts = tuple(int(v) for v in self.junction_vertices) or (-1,) * len(times)
        if len(verts) != len(times):
            raise ValueError("one junction vertex per interior arc boundary")
        object.__setattr__(self, "junction_vertices", verts)
        for left, right in zip(arcs, arcs[1:]):
            if left.t_end != right.t_start:
                raise ValueError("arcs must abut exactly in time")

    @property
    def t_start(self) -> float:
        return self.arcs[0].t_start

    @property
    def t_end(self) -> float:
        return self.arcs[-1].t_end

    def arc_at(self, t: float) -> CubicArc:
        idx = int(np.searchsorted(self.junction_times, t, side="right"))
        return self.arcs[min(idx, len(self.arcs) - 1)]

    def eval(self, t: float):
        return self.arc_at(t).eval(t)

    def energy(self) -> float:
        return trajectory_energy(self)

    def junction_gaps(self) -> np.ndarray:
        """Per junction: max-norm jumps in position, velocity and control."""
        gaps = []
        for left, right in zip(self.arcs, self.arcs[1:]):
            t = left.t_end
            pl, vl, ul, _ = left.eval(t)
            pr, vr, ur, _ = right.eval(t)
            gaps.append([np.abs(pl - pr).max(), np.abs(vl - vr).max(), np.abs(ul - ur).max()])
        return np.array(gaps).reshape(-1, 3)

    def sample(self, rate_hz: float = 1000.0) -> np.ndarray:
        """Uniform samples as rows ``t, px, py, vx, vy, ux, uy``; both ends included."""
        n = max(1, int(np.ceil((self.t_end - self.t_start) * rate_hz)))
        t = self.t_start + (self.t_end - self.t_start) * np.arange(n + 1) / n
        idx = np.minimum(np.searchsorted(self.junction_times, t, side="right"), len(self.arcs) - 1)
        out = np.empty((len(t), 7))
        out[:, 0] = t
        for j, arc in enumerate(self.arcs):
            mask = idx == j
            if np.any(mask):
                p, v, u = arc.sample(t[mask])
                out[mask, 1:3], out[mask, 3:5], out[mask, 5:7] = p, v, u
        return out

    def to_csv(self, rate_hz: float = 1000.0) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "px", "py", "vx", "vy", "ux", "uy"])
        for row in self.sample(rate_hz):
            writer.writerow([format_float(x) for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "junction_times": list(self.junction_times),
            "junction_vertices": list(self.junction_vertices),
            "arcs": [
                {"t_start": a.t_start, "t_end": a.t_end,
                 "a3": a.a3.tolist(), "a2": a.a2.tolist(),
                 "a1": a.a1.tolist(), "a0": a.a0.tolist()}
                for a in self.arcs
            ],
        }

    def to_json(self) -> str:
        return dumps_exact(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        arcs = [CubicArc(a["a3"], a["a2"], a["a1"], a["a0"], float(a["t_start"]), float(a["t_end"]))
                for a in data["arcs"]]
        return cls(tuple(arcs), tuple(data.get("junction_vertices", ())))

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        return cls.from_dict(json.loads(text))

    def time_scaled(self, beta: float) -> "Trajectory":
        return Trajectory(tuple(a.time_scaled(beta) for a in self.arcs), self.junction_vertices)


def trajectory_energy(traj: Trajectory | Sequence[CubicArc]) -> float:
    arcs = traj.arcs if isinstance(traj, Trajectory) else traj
    return float(sum(arc_energy(a) for a in arcs))
