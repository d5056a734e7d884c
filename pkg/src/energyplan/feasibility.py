"""Analytical collision checks for cubic arcs against polygon faces.

A cubic arc meets the line through face ``k`` exactly where the cross
product ``(p(t) - c_k1) x (c_k2 - c_k1)`` vanishes, a cubic in ``t``. Real
roots inside the arc interval whose edge parameter lies in ``[0, 1]`` are
contacts; interior parameters mean the arc passes through the face, the two
end values mean it touches a vertex, which is legal only at chain junctions
with admissible velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geometry import PolygonEnvironment
from .trajectory import CubicArc

VELOCITY_TOL = 1e-6
LAMBDA_TOL = 1e-9
ROOT_MERGE_TOL = 1e-9
# Events on faces next to a junction vertex that fall this close to it
# (relative arc time and edge fraction) are the junction contact itself.
JUNCTION_WINDOW = 1e-6

INTERIOR = "interior-crossing"
CONTACT_START = "vertex-contact-start"
CONTACT_END = "vertex-contact-end"


class DegenerateOverlap(ValueError):
    """The arc lies on the supporting line of a face."""

    def __init__(self, face: int):
        super().__init__(f"arc runs along the line of face {face}")
        self.face = face


@dataclass(frozen=True)
class CrossingEvent:
    t: float
    face: int
    lam: float
    kind: str

    @property
    def vertex_end(self) -> int:
        """0 or 1 for a vertex contact (which end of the face), else -1."""
        if self.kind == CONTACT_START:
            return 0
        if self.kind == CONTACT_END:
            return 1
        return -1


@dataclass(frozen=True)
class Violation:
    arc: int
    face: int
    t: float
    lam: float
    reason: str

    def describe(self) -> str:
        return (f"arc {self.arc}: {self.reason} on face {self.face} "
                f"at t={self.t:.9g} (lambda={self.lam:.6g})")


# -- cubic roots --------------------------------------------------------------

def _poly(c, x):
    return ((c[0] * x + c[1]) * x + c[2]) * x + c[3]


def _dpoly(c, x):
    return (3 * c[0] * x + 2 * c[1]) * x + c[2]


def _polish(c, x, lo, hi, steps: int = 8):
    for _ in range(steps):
        d = _dpoly(c, x)
        fx = _poly(c, x)
        if fx == 0.0 or d == 0.0:
            break
        nx = x - fx / d
        if not lo - 1.0 <= nx <= hi + 1.0 or abs(_poly(c, nx)) >= abs(fx):
            break
        x = nx
    return x


def _cardano(c) -> list:
    """Real roots of ``c0 x^3 + c1 x^2 + c2 x + c3`` (degree may drop)."""
    a, b, cc, d = c
    if a == 0.0:
        if b == 0.0:
            return [] if cc == 0.0 else [-d / cc]
        disc = cc * cc - 4 * b * d
        if disc < 0:
            return []
        q = -0.5 * (cc + math.copysign(math.sqrt(disc), cc))
        roots = [q / b] if q != 0.0 else [0.0]
        if q != 0.0:
            roots.append(d / q)
        return roots
    A, B, C = b / a, cc / a, d / a
    Q = (A * A - 3 * B) / 9.0
    R = (2 * A**3 - 9 * A * B + 27 * C) / 54.0
    if R * R < Q**3:
        theta = math.acos(max(-1.0, min(1.0, R / math.sqrt(Q**3))))
        s = -2 * math.sqrt(Q)
        return [s * math.cos((theta + 2 * math.pi * k) / 3) - A / 3 for k in range(3)]
    S = -math.copysign((abs(R) + math.sqrt(R * R - Q**3)) ** (1.0 / 3.0), R)
    Tq = Q / S if S != 0.0 else 0.0
    return [S + Tq - A / 3]


def _bisect(c, lo, hi, flo):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = _poly(c, mid)
        if fm == 0.0 or hi - lo <= 1e-16 * max(1.0, abs(mid)):
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cubic_roots_in(c, lo: float = 0.0, hi: float = 1.0) -> list:
    """Real roots of the cubic ``c`` (highest power first) in ``[lo, hi]``.

    Closed-form candidates are Newton-polished against the original
    coefficients; every monotone piece of ``[lo, hi]`` showing a sign change
    is guaranteed a root (bisection backs up Cardano there), and tangential
    touches at critical points are reported as roots.
    """
    c = [float(x) for x in c]
    scale = max(abs(x) for x in c)
    if scale == 0.0:
        raise ValueError("identically zero polynomial")
    c = [x / scale for x in c]
    span = hi - lo
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    roots = [_polish(c, x, lo, hi) for x in _cardano(c)]
    roots = [min(max(x, lo), hi) for x in roots if lo - slack <= x <= hi + slack]

    # critical points split [lo, hi] into monotone pieces
    crit = [x for x in _cardano([0.0, 3 * c[0], 2 * c[1], c[2]]) if lo < x < hi]
    knots = sorted(set([lo, hi] + crit))
    ftol = 1e-13 * sum(abs(x) * max(1.0, abs(lo), abs(hi)) ** (3 - i) for i, x in enumerate(c))
    for x in crit:
        if abs(_poly(c, x)) <= ftol and not any(abs(x - r) <= 1e-9 * max(1.0, span) for r in roots):
            roots.append(x)
    for a, b in zip(knots, knots[1:]):
        fa, fb = _poly(c, a), _poly(c, b)
        if fa * fb < 0 and not any(a <= r <= b for r in roots):
            roots.append(_bisect(c, a, b, fa))
    roots.sort()
    merged = []
    for r in roots:
        # a double root comes back as two candidates about sqrt(eps) apart
        if merged and (r - merged[-1] <= ROOT_MERGE_TOL or (
                r - merged[-1] <= 1e-6 * max(1.0, span)
                and abs(_poly(c, 0.5 * (r + merged[-1]))) <= ftol)):
            continue
        merged.append(r)
    return merged


# -- crossings ----------------------------------------------------------------

def crossing_cubic(local: np.ndarray, c1, c2) -> np.ndarray:
    """Coefficients (highest first) of ``(p(s) - c1) x (c2 - c1)`` for an arc
    with local coefficients ``local`` (4, 2)."""
    e = np.asarray(c2, float) - np.asarray(c1, float)
    shifted = np.array(local, dtype=float)
    shifted[3] = shifted[3] - np.asarray(c1, float)
    return shifted[:, 0] * e[1] - shifted[:, 1] * e[0]


def _edge_parameter(p, c1, c2) -> float:
    e = c2 - c1
    axis = 0 if abs(e[0]) >= abs(e[1]) else 1
    return float((p[axis] - c1[axis]) / e[axis])


def _classify(lam: float):
    if lam < -LAMBDA_TOL or lam > 1.0 + LAMBDA_TOL:
        return None, lam
    if abs(lam) <= LAMBDA_TOL:
        return CONTACT_START, 0.0
    if abs(lam - 1.0) <= LAMBDA_TOL:
        return CONTACT_END, 1.0
    return INTERIOR, lam


def crossing_times(arc: CubicArc, env: PolygonEnvironment, k: int) -> list:
    """Contacts of ``arc`` with face ``k`` as a sorted list of events."""
    c1, c2 = env.vertices[env.faces[k]]
    local = arc.local_coefficients()
    h = arc.duration
    cubic = crossing_cubic(local, c1, c2)
    # measure the cubic against the size of the quantities it is built from
    ref = np.linalg.norm(c2 - c1) * max(1.0, float(np.abs(local[3] - c1).max()),
                                        *(float(np.abs(local[j]).max()) * h ** (3 - j) for j in range(3)))
    powers = np.array([h**3, h**2, h, 1.0])
    if np.all(np.abs(cubic) * powers <= 1e-13 * ref):
        raise DegenerateOverlap(k)
    # solve on x = s / h in [0, 1]
    events = []
    for x in cubic_roots_in(cubic * powers, 0.0, 1.0):
        s = x * h
        t = arc.t_start + s
        p = ((local[0] * s + local[1]) * s + local[2]) * s + local[3]
        kind, lam = _classify(_edge_parameter(p, c1, c2))
        if kind is not None:
            events.append(CrossingEvent(t, k, lam, kind))
    return events


def _arc_bbox(local: np.ndarray, h: float):
    ss = [0.0, h]
    for axis in range(2):
        a3, a2, a1 = local[0, axis], local[1, axis], local[2, axis]
        for r in _cardano([0.0, 3 * a3, 2 * a2, a1]):
            if 0.0 < r < h:
                ss.append(r)
    s = np.array(ss)[:, None]
    pts = ((local[0] * s + local[1]) * s + local[2]) * s + local[3]
    return pts.min(axis=0), pts.max(axis=0)


def candidate_faces(arc: CubicArc, env: PolygonEnvironment) -> np.ndarray:
    """Faces whose bounding box meets the arc's bounding box."""
    if env.n_faces == 0:
        return np.zeros(0, dtype=int)
    lo, hi = _arc_bbox(arc.local_coefficients(), arc.duration)
    pad = 1e-9 * max(1.0, float(np.abs(lo).max()), float(np.abs(hi).max()))
    a, b = env.face_endpoints()
    flo, fhi = np.minimum(a, b), np.maximum(a, b)
    hit = np.all((flo <= hi + pad) & (fhi >= lo - pad), axis=1)
    return np.nonzero(hit)[0]


def _unresolved_faces(arc: CubicArc, env: PolygonEnvironment, faces: np.ndarray) -> np.ndarray:
    """Drop faces whose crossing cubic provably keeps one strict sign on the arc.

    With x = s / h in [0, 1] the cubic moves at most |c3| + |c2| + |c1| away
    from its value at x = 0, so a larger constant term (with margin) rules
    out every root and every degenerate overlap.
    """
    if len(faces) == 0:
        return faces
    local = arc.local_coefficients()
    h = arc.duration
    c1 = env.vertices[env.faces[faces, 0]]
    e = env.vertices[env.faces[faces, 1]] - c1
    powers = np.array([h**3, h**2, h])
    moving = np.abs(local[:3, None, 0] * e[None, :, 1] - local[:3, None, 1] * e[None, :, 0])
    spread = (moving * powers[:, None]).sum(axis=0)
    d = local[3] - c1
    c0 = np.abs(d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0])
    ref = np.linalg.norm(e, axis=1) * max(1.0, float(np.abs(local).max()) * max(1.0, h) ** 3,
                                          float(np.abs(local[3]).max()) + float(np.abs(c1).max()))
    resolved = c0 > 2.0 * spread + 1e-9 * ref
    return faces[~resolved]


# -- legality -----------------------------------------------------------------

def vertex_contact_legal(env: PolygonEnvironment, i: int, v, tol: float = VELOCITY_TOL) -> bool:
    """Whether departing vertex ``i`` with velocity ``v`` stays outside."""
    v = np.asarray(v, float)
    if not env.convex[i]:
        return bool(np.linalg.norm(v) <= tol)
    k1, k2 = env.vertex_faces[i]
    return bool(v @ env.normals[k1] >= -tol or v @ env.normals[k2] >= -tol)


def _overlap_violation(arc: CubicArc, env: PolygonEnvironment, k: int, allowed) -> bool:
    """Collinear arc and face: infeasible unless they share only an allowed vertex."""
    local = arc.local_coefficients()
    c1 = env.vertices[env.faces[k, 0]]
    tk = env.tangents[k]
    lo, hi = _arc_bbox(local, arc.duration)
    # projection is linear in position, so its range comes from the bbox corners
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    proj = (corners - c1) @ tk
    pmin, pmax = float(proj.min()), float(proj.max())
    D = env.lengths[k]
    tol = LAMBDA_TOL * D
    if pmax < -tol or pmin > D + tol:
        return False
    if abs(pmax) <= tol and env.faces[k, 0] in allowed:
        return False
    if abs(pmin - D) <= tol and env.faces[k, 1] in allowed:
        return False
    return True


def arc_feasible(arc: CubicArc, env: PolygonEnvironment, allowed: Iterable[int] = (),
                 start_vertex: int = -1, end_vertex: int = -1, arc_index: int = 0):
    """Check one arc; returns ``(ok, first_violation_or_None)``.

    ``start_vertex``/``end_vertex`` name the junction vertices the arc leaves
    from and arrives at (``-1`` for free endpoints). Departure is judged with
    the arc velocity, arrival with the reversed velocity, and a touch in the
    middle of the arc must pass both.
    """
    allowed = set(int(a) for a in allowed) | {v for v in (start_vertex, end_vertex) if v >= 0}
    h = arc.duration
    violations = []

    for vert, t_end, sign in ((start_vertex, arc.t_start, 1.0), (end_vertex, arc.t_end, -1.0)):
        if vert >= 0:
            _, v, _, _ = arc.eval(t_end)
            if not vertex_contact_legal(env, vert, sign * v):
                k = env.vertex_faces[vert, 1]
                violations.append(Violation(arc_index, int(k), t_end, 0.0,
                                            f"illegal velocity at vertex {vert}"))

    for k in _unresolved_faces(arc, env, candidate_faces(arc, env)):
        k = int(k)
        try:
            events = crossing_times(arc, env, k)
        except DegenerateOverlap:
            if _overlap_violation(arc, env, k, allowed):
                violations.append(Violation(arc_index, k, arc.t_start, 0.0, "runs along face"))
            continue
        for ev in events:
            vert = int(env.faces[k, ev.vertex_end]) if ev.vertex_end >= 0 else -1
            # the junction contact itself is judged above
            if _is_junction_contact(ev, env, k, start_vertex, arc.t_start, h) or \
                    _is_junction_contact(ev, env, k, end_vertex, arc.t_end, h):
                continue
            if ev.kind == INTERIOR:
                violations.append(Violation(arc_index, k, ev.t, ev.lam, "crosses face"))
                continue
            if vert not in allowed:
                violations.append(Violation(arc_index, k, ev.t, ev.lam,
                                            f"touches vertex {vert} outside the chain"))
                continue
            _, v, _, _ = arc.eval(ev.t)
            if not (vertex_contact_legal(env, vert, v) and vertex_contact_legal(env, vert, -v)):
                violations.append(Violation(arc_index, k, ev.t, ev.lam,
                                            f"illegal velocity at vertex {vert}"))
    if not violations:
        return True, None
    return False, min(violations, key=lambda v: (v.t, v.face))


def _is_junction_contact(ev: CrossingEvent, env: PolygonEnvironment, k: int,
                         vertex: int, t_vertex: float, h: float) -> bool:
    if vertex < 0 or vertex not in env.faces[k]:
        return False
    if abs(ev.t - t_vertex) > JUNCTION_WINDOW * max(h, 1e-300):
        return False
    at = 0.0 if env.faces[k, 0] == vertex else 1.0
    return abs(ev.lam - at) <= JUNCTION_WINDOW


def chain_feasible(solution, upto: int | None = None):
    """Check arcs ``0 .. upto-1`` of a chain solution (all arcs by default)."""
    problem = solution.problem
    env = problem.env
    if not solution.converged:
        return False, None
    arcs = solution.arcs if upto is None else solution.arcs[:upto]
    if env is None or env.n_faces == 0:
        return True, None
    seq = problem.vertices
    allowed = {s for s in seq if s >= 0}
    for j, arc in enumerate(arcs):
        start = seq[j - 1] if j >= 1 else -1
        end = seq[j] if j < len(seq) else -1
        ok, violation = arc_feasible(arc, env, allowed, start, end, j)
        if not ok:
            return False, violation
    return True, None


def prefix_feasible(solution, length: int) -> bool:
    """Whether the chain is collision-free up to its ``length``-th junction."""
    ok, _ = chain_feasible(solution, upto=length)
    return ok


def trajectory_feasible(solution) -> bool:
    """Whether the whole chain, through the final arc, is collision-free."""
    ok, _ = chain_feasible(solution)
    return ok
