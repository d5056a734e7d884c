"""Seeded random polygonal environments.

Recipe: scatter points uniformly over a square domain, drop those near the
start or goal, partition the rest into clusters, and turn the convex hull of
every cluster with at least three non-collinear points into an obstacle.
Draws that break the obstacle clearance, fail inflation by the robot radius,
or leave an endpoint blocked are regenerated from the next sub-seed.

Randomness comes from numpy's ``Generator`` over the PCG64 bit generator,
seeded with ``SeedSequence([seed, attempt])``, so an environment is fully
determined by ``(config, seed)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import (BoundaryConditions, InvalidEnvironment, PolygonEnvironment,
                       inflate_environment)

KMEANS_ITERATIONS = 100


class GenerationFailure(RuntimeError):
    """No acceptable environment within the retry budget."""

    def __init__(self, message: str, reasons: dict):
        super().__init__(f"{message}; rejections: {reasons}")
        self.reasons = reasons


@dataclass(frozen=True)
class EnvGenConfig:
    seed: int = 0
    domain: float = 10.0
    points: int = 50
    clusters: int = 12
    endpoint_clearance: float = 1.0
    radius: float = 0.1
    max_attempts: int = 200

    def __post_init__(self):
        if self.domain <= 0 or self.endpoint_clearance < 0 or self.radius < 0:
            raise ValueError("domain must be positive; clearances non-negative")
        if self.points < 1 or self.clusters < 1:
            raise ValueError("point and cluster counts must be positive")
        if self.clusters > self.points:
            raise ValueError(f"cluster count {self.clusters} exceeds point count {self.points}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    @property
    def obstacle_clearance(self) -> float:
        return 2.0 * self.radius

    def to_dict(self) -> dict:
        return asdict(self)


def default_endpoints(domain: float = 10.0):
    """Opposite corners of the domain, inset by 5% of its side."""
    inset = 0.05 * domain
    return np.array([inset, inset]), np.array([domain - inset, domain - inset])


def derive_seed(root: int, *keys: int) -> int:
    """Child seed of ``root`` for the path ``keys``; fixed splitting, 32-bit."""
    ss = np.random.SeedSequence([int(root), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(seed: int, attempt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(attempt)])))


def kmeans(points: np.ndarray, k: int, iterations: int = KMEANS_ITERATIONS) -> np.ndarray:
    """Lloyd's algorithm from a farthest-point start; returns a label per point.

    The first centre is the point nearest the centroid, so the result depends
    only on the point set.
    """
    points = np.asarray(points, float)
    k = min(k, len(points))
    first = int(np.argmin(np.linalg.norm(points - points.mean(axis=0), axis=1)))
    centers = [points[first]]
    d = np.linalg.norm(points - centers[0], axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d))
        centers.append(points[nxt])
        d = np.minimum(d, np.linalg.norm(points - points[nxt], axis=1))
    centers = np.array(centers)
    labels = np.full(len(points), -1)
    for _ in range(iterations):
        dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new = np.argmin(dist, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return labels


def hull_ring(points: np.ndarray):
    """Counter-clockwise convex hull vertices, or None for degenerate clusters."""
    if len(points) < 3:
        return None
    try:
        hull = ConvexHull(points)
    except QhullError:
        return None
    if hull.volume <= 1e-12 * max(1.0, np.ptp(points, axis=0).max() ** 2):
        return None
    # scipy returns 2-D hull vertices in counter-clockwise order
    return points[hull.vertices]


def _draw(config: EnvGenConfig, p0, pf, rng: np.random.Generator) -> list:
    pts = rng.uniform(0.0, config.domain, size=(config.points, 2))
    near = ((np.linalg.norm(pts - p0, axis=1) < config.endpoint_clearance)
            | (np.linalg.norm(pts - pf, axis=1) < config.endpoint_clearance))
    pts = pts[~near]
    if len(pts) == 0:
        return []
    labels = kmeans(pts, config.clusters)
    rings = []
    for j in range(labels.max() + 1):
        ring = hull_ring(pts[labels == j])
        if ring is not None:
            rings.append(ring)
    return rings


def generate(config: EnvGenConfig, p0=None, pf=None) -> PolygonEnvironment:
    """Random obstacle field for ``config``; deterministic in ``config.seed``.

    The returned environment is uninflated, carries clearance ``2R``, and is
    guaranteed to survive ``inflate_environment(env, R)`` with both endpoints
    still free.
    """
    dp0, dpf = default_endpoints(config.domain)
    p0 = dp0 if p0 is None else np.asarray(p0, float)
    pf = dpf if pf is None else np.asarray(pf, float)
    for p in (p0, pf):
        if not np.all((p >= 0) & (p <= config.domain)):
            raise ValueError(f"endpoint {p.tolist()} lies outside the domain")

    reasons: dict = {}
    for attempt in range(config.max_attempts):
        rings = _draw(config, p0, pf, rng_for(config.seed, attempt))
        try:
            env = PolygonEnvironment.from_rings(rings, clearance=config.obstacle_clearance)
            inflated = inflate_environment(env, config.radius)
        except InvalidEnvironment as exc:
            key = "inflation" if "inflation" in str(exc) else "clearance"
            reasons[key] = reasons.get(key, 0) + 1
            continue
        if not (inflated.point_free(p0) and inflated.point_free(pf)):
            reasons["endpoint"] = reasons.get("endpoint", 0) + 1
            continue
        return env
    raise GenerationFailure(
        f"seed {config.seed}: no valid environment in {config.max_attempts} attempts", reasons)


def study_problem(config: EnvGenConfig, horizon: float = 10.0):
    """Inflated environment and rest-to-rest boundary conditions for one study seed."""
    p0, pf = default_endpoints(config.domain)
    env = generate(config, p0, pf)
    bc = BoundaryConditions(p0=p0, pf=pf, t0=0.0, tf=horizon, radius=config.radius)
    return env, inflate_environment(env, config.radius), bc


def corridor_fixture() -> PolygonEnvironment:
    """Hand-made arena of staggered walls forming connected corridors.

    Meant for the default endpoints of a 10 m domain. Three horizontal walls
    leave alternating gaps on the right, left and right; each wall runs far
    past the opposite side of the domain so detours around its far end are
    never shorter than the corridor.
    """
    rings = [
        # lower wall, gap on the right
        [(-15.0, 2.5), (7.5, 2.5), (7.5, 3.0), (-15.0, 3.0)],
        # middle wall, gap on the left
        [(2.5, 5.0), (25.0, 5.0), (25.0, 5.5), (2.5, 5.5)],
        # upper wall, gap on the right
        [(-15.0, 7.5), (7.5, 7.5), (7.5, 8.0), (-15.0, 8.0)],
        # pillars inside the corridors
        [(4.0, 1.0), (5.0, 1.0), (5.0, 1.6), (4.0, 1.6)],
        [(5.0, 6.2), (6.0, 6.2), (6.0, 6.8), (5.0, 6.8)],
    ]
    return PolygonEnvironment.from_rings(rings, clearance=0.2)


def corridor_problem(radius: float = 0.1, horizon: float = 10.0):
    """Corridor fixture, its inflation by ``radius``, and default boundary conditions."""
    env = corridor_fixture()
    p0, pf = default_endpoints(10.0)
    bc = BoundaryConditions(p0=p0, pf=pf, t0=0.0, tf=horizon, radius=radius)
    return env, inflate_environment(env, radius), bc
