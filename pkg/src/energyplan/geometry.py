"""Polygonal obstacle environments.

Vertices are stored once in a flat array; each polygon is a counter-clockwise
ring of vertex indices. Face ``k`` joins the ``k``-th ring edge in traversal
order, so ``faces[k] = (k1, k2)`` with ``k2`` following ``k1`` on its ring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

# Relative threshold for calling a ring corner collinear.
COLLINEAR_TOL = 1e-9
# Slack on separation comparisons (meters).
SEPARATION_TOL = 1e-9


class InvalidEnvironment(ValueError):
    """Raised when an environment violates a geometric invariant."""


@dataclass(frozen=True)
class BoundaryConditions:
    p0: np.ndarray
    pf: np.ndarray
    t0: float = 0.0
    tf: float = 1.0
    v0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    vf: np.ndarray = field(default_factory=lambda: np.zeros(2))
    radius: float = 0.0

    def __post_init__(self):
        for name in ("p0", "pf", "v0", "vf"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(2)
            object.__setattr__(self, name, arr)
        if not self.tf > self.t0:
            raise ValueError(f"tf ({self.tf}) must exceed t0 ({self.t0})")
        if self.radius < 0:
            raise ValueError("robot radius must be non-negative")

    @property
    def horizon(self) -> float:
        return self.tf - self.t0

    def reversed(self) -> "BoundaryConditions":
        """Time-reversed problem: swap endpoints and negate velocities."""
        return BoundaryConditions(
            p0=self.pf, pf=self.p0, t0=self.t0, tf=self.tf,
            v0=-self.vf, vf=-self.v0, radius=self.radius,
        )

    def to_dict(self) -> dict:
        return {
            "p0": self.p0.tolist(), "v0": self.v0.tolist(),
            "pf": self.pf.tolist(), "vf": self.vf.tolist(),
            "t0": self.t0, "tf": self.tf, "radius": self.radius,
        }


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def segment_distance(p, a, b) -> np.ndarray:
    """Distance from points ``p`` to segments ``a``-``b`` (broadcasting)."""
    p, a, b = np.asarray(p, float), np.asarray(a, float), np.asarray(b, float)
    ab = b - a
    denom = np.einsum("...i,...i->...", ab, ab)
    s = np.einsum("...i,...i->...", p - a, ab) / np.where(denom > 0, denom, 1.0)
    s = np.clip(s, 0.0, 1.0)
    foot = a + s[..., None] * ab
    return np.linalg.norm(p - foot, axis=-1)


def segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Closed segment intersection test (touching counts), broadcasting."""
    p1, p2, q1, q2 = (np.asarray(x, float) for x in (p1, p2, q1, q2))
    d1 = _cross(q2 - q1, p1 - q1)
    d2 = _cross(q2 - q1, p2 - q1)
    d3 = _cross(p2 - p1, q1 - p1)
    d4 = _cross(p2 - p1, q2 - p1)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_seg(a, b, c, d):
        # c collinear with a-b and inside its bounding box
        return (d == 0) & (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & (
            c[..., 0] <= np.maximum(a[..., 0], b[..., 0])) & (
            np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (
            c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))

    touch = (on_seg(q1, q2, p1, d1) | on_seg(q1, q2, p2, d2)
             | on_seg(p1, p2, q1, d3) | on_seg(p1, p2, q2, d4))
    return proper | touch


def segment_segment_distance(p1, p2, q1, q2) -> float:
    if segments_intersect(p1, p2, q1, q2):
        return 0.0
    return float(min(
        segment_distance(p1, q1, q2), segment_distance(p2, q1, q2),
        segment_distance(q1, p1, p2), segment_distance(q2, p1, p2),
    ))


def signed_area(points) -> float:
    pts = np.asarray(points, float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_ring(points, ring) -> np.ndarray:
    """Even-odd test of ``points`` (M, 2) against a ring (n, 2); strict interior
    for points off the boundary, boundary points may land either way."""
    pts = np.atleast_2d(np.asarray(points, float))
    a = np.asarray(ring, float)
    b = np.roll(a, -1, axis=0)
    px, py = pts[:, 0:1], pts[:, 1:2]
    ay, by = a[None, :, 1], b[None, :, 1]
    ax, bx = a[None, :, 0], b[None, :, 0]
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
    hits = straddle & (px < xint)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


@dataclass(frozen=True, eq=False)
class PolygonEnvironment:
    """Validated obstacle field; immutable after construction."""

    vertices: np.ndarray
    polygons: tuple
    clearance: float = 0.0
    faces: np.ndarray = field(init=False, repr=False)
    tangents: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    lengths: np.ndarray = field(init=False, repr=False)
    vertex_faces: np.ndarray = field(init=False, repr=False)
    vertex_polygon: np.ndarray = field(init=False, repr=False)
    convex: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float).reshape(-1, 2)
        polys = tuple(tuple(int(i) for i in ring) for ring in self.polygons)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "polygons", polys)
        verts.setflags(write=False)
        _validate_topology(verts, polys)

        faces = []
        vertex_faces = np.full((len(verts), 2), -1, dtype=int)
        vertex_polygon = np.full(len(verts), -1, dtype=int)
        for l, ring in enumerate(polys):
            first = len(faces)
            n = len(ring)
            for j in range(n):
                k = first + j
                faces.append((ring[j], ring[(j + 1) % n]))
                vertex_faces[ring[j], 1] = k
                vertex_faces[ring[(j + 1) % n], 0] = k
                vertex_polygon[ring[j]] = l
        faces = np.array(faces, dtype=int).reshape(-1, 2)
        edge = verts[faces[:, 1]] - verts[faces[:, 0]] if len(faces) else np.zeros((0, 2))
        lengths = np.linalg.norm(edge, axis=1)
        tangents = edge / lengths[:, None] if len(faces) else edge
        # outward normal of a CCW ring: tangent rotated by -90 degrees
        normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1) if len(faces) else edge

        convex = np.zeros(len(verts), dtype=bool)
        for i in range(len(verts)):
            k_in, k_out = vertex_faces[i]
            convex[i] = _cross(tangents[k_in], tangents[k_out]) > 0

        for name, val in (("faces", faces), ("tangents", tangents), ("normals", normals),
                          ("lengths", lengths), ("vertex_faces", vertex_faces),
                          ("vertex_polygon", vertex_polygon), ("convex", convex)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        _validate_separation(self)

    # -- basic queries -------------------------------------------------

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def ring_points(self, l: int) -> np.ndarray:
        return self.vertices[list(self.polygons[l])]

    def face_endpoints(self):
        return self.vertices[self.faces[:, 0]], self.vertices[self.faces[:, 1]]

    def project_onto_face(self, p, k: int) -> float:
        return float(np.dot(np.asarray(p, float) - self.vertices[self.faces[k, 0]], self.tangents[k]))

    def distance_to_face(self, p, k: int) -> float:
        p = np.asarray(p, float)
        c1, c2 = self.vertices[self.faces[k]]
        proj = self.project_onto_face(p, k)
        if proj < 0:
            return float(np.linalg.norm(p - c1))
        if proj > self.lengths[k]:
            return float(np.linalg.norm(p - c2))
        foot = c1 + proj * self.tangents[k]
        return float(np.linalg.norm(p - foot))

    def face_distances(self, p) -> np.ndarray:
        """Distances from ``p`` to every face."""
        a, b = self.face_endpoints()
        return segment_distance(np.asarray(p, float)[None, :], a, b)

    def vertex_convexity(self, i: int) -> str:
        return "convex" if self.convex[i] else "reflex"

    def inside(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        out = np.zeros(len(pts), dtype=bool)
        for l in range(len(self.polygons)):
            out |= points_in_ring(pts, self.ring_points(l))
        return out

    def point_free(self, p) -> bool:
        """True iff ``p`` is strictly outside every obstacle."""
        p = np.asarray(p, float)
        if self.n_faces == 0:
            return True
        if np.min(self.face_distances(p)) <= 0.0:
            return False
        return not bool(self.inside(p)[0])

    def bounds(self):
        if self.n_vertices == 0:
            return np.zeros(2), np.zeros(2)
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "polygons": [list(r) for r in self.polygons],
            "clearance": float(self.clearance),
        }

    def to_json(self) -> str:
        return dumps_exact(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "PolygonEnvironment":
        try:
            verts = data["vertices"]
            polys = data["polygons"]
        except (KeyError, TypeError) as exc:
            raise InvalidEnvironment(f"missing field {exc}") from None
        clearance = float(data.get("clearance", 0.0))
        return cls(np.array(verts, dtype=float).reshape(-1, 2), tuple(polys), clearance)

    @classmethod
    def load(cls, path) -> "PolygonEnvironment":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_rings(cls, rings: Sequence, clearance: float = 0.0) -> "PolygonEnvironment":
        verts, polys = [], []
        for ring in rings:
            start = len(verts)
            verts.extend([list(map(float, p)) for p in ring])
            polys.append(list(range(start, start + len(ring))))
        return cls(np.array(verts, dtype=float).reshape(-1, 2), tuple(polys), clearance)

    @classmethod
    def empty(cls) -> "PolygonEnvironment":
        return cls(np.zeros((0, 2)), ())


def _validate_topology(verts: np.ndarray, polys: tuple) -> None:
    if not np.all(np.isfinite(verts)):
        raise InvalidEnvironment("non-finite vertex coordinates")
    owner = {}
    for l, ring in enumerate(polys):
        if len(ring) < 3:
            raise InvalidEnvironment(f"polygon {l}: ring has {len(ring)} vertices, need >= 3")
        for i in ring:
            if not 0 <= i < len(verts):
                raise InvalidEnvironment(f"polygon {l}: vertex index {i} out of range")
            if i in owner:
                raise InvalidEnvironment(
                    f"vertex {i} appears in polygon {owner[i]} and polygon {l}")
            owner[i] = l
    unused = sorted(set(range(len(verts))) - set(owner))
    if unused:
        raise InvalidEnvironment(f"vertex {unused[0]} belongs to no polygon")

    for l, ring in enumerate(polys):
        pts = verts[list(ring)]
        n = len(pts)
        for j in range(n):
            a, b, c = pts[j - 1], pts[j], pts[(j + 1) % n]
            e1, e2 = b - a, c - b
            n1, n2 = np.linalg.norm(e1), np.linalg.norm(e2)
            if n2 == 0:
                raise InvalidEnvironment(
                    f"polygon {l}: zero-length edge {ring[j]}->{ring[(j + 1) % n]}")
            if abs(_cross(e1, e2)) <= COLLINEAR_TOL * n1 * n2:
                raise InvalidEnvironment(
                    f"polygon {l}: collinear vertices {ring[j - 1]}, {ring[j]}, {ring[(j + 1) % n]}")
        if signed_area(pts) <= 0:
            raise InvalidEnvironment(f"polygon {l}: ring is not counter-clockwise")
        for j in range(n):
            for m in range(j + 2, n):
                if j == 0 and m == n - 1:
                    continue
                if segments_intersect(pts[j], pts[(j + 1) % n], pts[m], pts[(m + 1) % n]):
                    raise InvalidEnvironment(
                        f"polygon {l}: edges {j} and {m} intersect (ring not simple)")


def polygon_separation(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum distance between two polygons; 0 if they touch or nest."""
    if points_in_ring(a[:1], b)[0] or points_in_ring(b[:1], a)[0]:
        return 0.0
    a2, b2 = np.roll(a, -1, axis=0), np.roll(b, -1, axis=0)
    p1, p2 = a[:, None, :], a2[:, None, :]
    q1, q2 = b[None, :, :], b2[None, :, :]
    if np.any(segments_intersect(p1, p2, q1, q2)):
        return 0.0
    d = np.minimum.reduce([
        segment_distance(p1, q1, q2), segment_distance(p2, q1, q2),
        segment_distance(q1, p1, p2), segment_distance(q2, p1, p2),
    ])
    return float(d.min())


def _validate_separation(env: PolygonEnvironment) -> None:
    rings = [env.ring_points(l) for l in range(len(env.polygons))]
    for i in range(len(rings)):
        for j in range(i + 1, len(rings)):
            sep = polygon_separation(rings[i], rings[j])
            if sep <= 0.0:
                raise InvalidEnvironment(f"polygons {i} and {j} overlap")
            if sep < env.clearance - SEPARATION_TOL:
                raise InvalidEnvironment(
                    f"polygons {i} and {j} are {sep:.6g} m apart, "
                    f"closer than clearance {env.clearance:.6g} m")


def inflate_environment(env: PolygonEnvironment, radius: float) -> PolygonEnvironment:
    """Offset every polygon outward by ``radius`` using miter joins."""
    if radius < 0:
        raise ValueError("inflation radius must be non-negative")
    if radius == 0 or env.n_vertices == 0:
        return env
    new = np.array(env.vertices, dtype=float)
    for i in range(env.n_vertices):
        k_in, k_out = env.vertex_faces[i]
        na, nb = env.normals[k_in], env.normals[k_out]
        new[i] = env.vertices[i] + radius * (na + nb) / (1.0 + float(np.dot(na, nb)))
    try:
        return PolygonEnvironment(new, env.polygons, max(0.0, env.clearance - 2 * radius))
    except InvalidEnvironment as exc:
        raise InvalidEnvironment(f"inflation by {radius:g} m: {exc}") from None


def format_float(x: float) -> str:
    """17-significant-digit decimal text; round-trips bit-exactly."""
    return format(float(x), ".17g")


def dumps_exact(obj, indent: int | None = 1) -> str:
    """JSON text with every float written at 17 significant digits."""
    return _encode(obj, indent, 0)


def _encode(obj, indent, level) -> str:
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if np.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ", " if indent is None else ","
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(str(k)) + ": " + _encode(v, indent, level + 1)
                 for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")
