"""Sampling-based reference planners: RRT* and PRM with straight-line edges.

Both return piecewise-linear waypoint paths after greedy shortcut smoothing.
They know nothing about time or energy; ``energy_lower_bound`` prices a path
by the cheapest double-integrator trajectory forced through its waypoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .bvp import ChainProblem, solve_chain
from .envgen import rng_for
from .geometry import (BoundaryConditions, PolygonEnvironment, segment_distance,
                       segments_intersect)

STEER_RADIUS = 0.5
GAMMA_SCALE = 1.5
GOAL_BIAS = 0.05
PRM_NEIGHBORS = 10
DEFAULT_BUDGET = 2500


@dataclass(frozen=True)
class WaypointPath:
    waypoints: np.ndarray
    success: bool = True
    nodes: int = 0

    @property
    def length(self) -> float:
        if not self.success or len(self.waypoints) < 2:
            return float("nan")
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    @classmethod
    def failure(cls, nodes: int = 0) -> "WaypointPath":
        return cls(np.zeros((0, 2)), False, nodes)


class SegmentChecker:
    """Vectorized straight-segment collision tests against every face.

    A segment is free when both ends are free points and it neither crosses
    nor touches any face; free endpoints then rule out a segment lying
    entirely inside an obstacle.
    """

    def __init__(self, env: PolygonEnvironment):
        self.env = env
        self.a, self.b = env.face_endpoints() if env.n_faces else (np.zeros((0, 2)),) * 2

    def points_free(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float).reshape(-1, 2)
        if self.env.n_faces == 0:
            return np.ones(len(pts), bool)
        dist = segment_distance(pts[:, None, :], self.a[None], self.b[None])
        return ~self._inside(pts) & np.all(dist > 0, axis=1)

    def _inside(self, pts) -> np.ndarray:
        # even-odd ray cast over all faces at once; rings are disjoint, so an
        # odd count means inside exactly one obstacle
        x, y = pts[:, None, 0], pts[:, None, 1]
        ax, ay, bx, by = self.a[None, :, 0], self.a[None, :, 1], self.b[None, :, 0], self.b[None, :, 1]
        straddle = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = ax + (y - ay) * (bx - ax) / (by - ay)
        return (np.count_nonzero(straddle & (x < xcross), axis=1) % 2) == 1

    def segments_free(self, p, q) -> np.ndarray:
        p = np.asarray(p, float).reshape(-1, 2)
        q = np.asarray(q, float).reshape(-1, 2)
        if self.env.n_faces == 0:
            return np.ones(len(p), bool)
        hit = segments_intersect(p[:, None, :], q[:, None, :], self.a[None], self.b[None])
        return ~np.any(hit, axis=1)


def shortcut(path: np.ndarray, checker: SegmentChecker) -> np.ndarray:
    """Greedy smoothing: from each kept waypoint jump to the farthest visible one."""
    path = np.asarray(path, float)
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        later = path[i + 1:]
        free = checker.segments_free(np.repeat(path[i][None], len(later), axis=0), later)
        j = i + 1 + int(np.flatnonzero(free)[-1]) if np.any(free) else i + 1
        out.append(path[j])
        i = j
    return np.array(out)


def _sampling_box(env: PolygonEnvironment, p0, pf, bounds):
    if bounds is not None:
        lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
        return lo, hi
    pts = np.vstack([env.vertices, p0, pf])
    return pts.min(axis=0) - 0.5, pts.max(axis=0) + 0.5


def rrt_star(env: PolygonEnvironment, p0, pf, budget: int = DEFAULT_BUDGET, seed: int = 0,
             bounds=None, steer: float = STEER_RADIUS) -> WaypointPath:
    """RRT* with straight-line steering; ``budget`` counts samples drawn."""
    p0, pf = np.asarray(p0, float), np.asarray(pf, float)
    check = SegmentChecker(env)
    if not check.points_free(np.vstack([p0, pf])).all():
        return WaypointPath.failure()
    lo, hi = _sampling_box(env, p0, pf, bounds)
    gamma = GAMMA_SCALE * float(np.linalg.norm(hi - lo))
    rng = rng_for(seed)

    nodes = np.empty((budget + 1, 2))
    parent = np.full(budget + 1, -1)
    cost = np.zeros(budget + 1)
    children: list = [[]]
    nodes[0] = p0
    n = 1
    best_goal, best_cost = -1, np.inf
    for _ in range(budget):
        sample = pf if rng.random() < GOAL_BIAS else rng.uniform(lo, hi)
        d = np.linalg.norm(nodes[:n] - sample, axis=1)
        near_idx = int(np.argmin(d))
        step = sample - nodes[near_idx]
        dist = d[near_idx]
        new = sample if dist <= steer else nodes[near_idx] + step * (steer / dist)
        if dist == 0 or not check.points_free(new)[0]:
            continue
        radius = gamma * np.sqrt(np.log(n + 1) / (n + 1))
        dn = np.linalg.norm(nodes[:n] - new, axis=1)
        near = np.flatnonzero(dn <= max(radius, 1e-12))
        if near_idx not in near:
            near = np.append(near, near_idx)
        free = check.segments_free(nodes[near], np.repeat(new[None], len(near), axis=0))
        if not np.any(free):
            continue
        near, dn_near = near[free], dn[near[free]]
        through = cost[near] + dn_near
        k = int(np.argmin(through))
        nodes[n], parent[n], cost[n] = new, near[k], through[k]
        children.append([])
        children[near[k]].append(n)
        # rewire neighbours that are cheaper to reach through the new node
        better = cost[n] + dn_near < cost[near] - 1e-12
        for j in near[better]:
            children[parent[j]].remove(j)
            children[n].append(j)
            parent[j] = n
            _propagate(children, cost, j, cost[n] + dn[j] - cost[j])
        new_idx = n
        n += 1
        to_goal = float(np.linalg.norm(pf - new))
        if to_goal <= steer and check.segments_free(new, pf)[0]:
            if cost[new_idx] + to_goal < best_cost:
                best_goal, best_cost = new_idx, cost[new_idx] + to_goal
    if best_goal < 0:
        return WaypointPath.failure(n)
    # costs may have dropped through rewiring after the goal link was found
    near_goal = np.flatnonzero(np.linalg.norm(nodes[:n] - pf, axis=1) <= steer)
    free = check.segments_free(nodes[near_goal], np.repeat(pf[None], len(near_goal), axis=0))
    cand = near_goal[free]
    totals = cost[cand] + np.linalg.norm(nodes[cand] - pf, axis=1)
    best_goal = int(cand[int(np.argmin(totals))])
    chain = [pf]
    i = best_goal
    while i >= 0:
        chain.append(nodes[i])
        i = parent[i]
    path = np.array(chain[::-1])
    return WaypointPath(shortcut(path, check), True, n)


def _propagate(children, cost, root, delta):
    """Apply a cost change to ``root`` and all of its descendants."""
    stack = [root]
    while stack:
        j = stack.pop()
        cost[j] += delta
        stack.extend(children[j])


def prm(env: PolygonEnvironment, p0, pf, budget: int = DEFAULT_BUDGET,
        neighbors: int = PRM_NEIGHBORS, seed: int = 0, bounds=None) -> WaypointPath:
    """Probabilistic roadmap of ``budget`` free samples joined to ``neighbors`` nearest."""
    p0, pf = np.asarray(p0, float), np.asarray(pf, float)
    check = SegmentChecker(env)
    if not check.points_free(np.vstack([p0, pf])).all():
        return WaypointPath.failure()
    lo, hi = _sampling_box(env, p0, pf, bounds)
    rng = rng_for(seed)
    samples = []
    drawn = 0
    while len(samples) < budget and drawn < 20 * budget:
        batch = rng.uniform(lo, hi, size=(budget, 2))
        drawn += budget
        samples.extend(batch[check.points_free(batch)])
    pts = np.vstack([p0, pf, np.array(samples[:budget]).reshape(-1, 2)])
    k = min(neighbors + 1, len(pts))
    dist, idx = cKDTree(pts).query(pts, k=k)
    i = np.repeat(np.arange(len(pts)), k - 1)
    j = idx[:, 1:].ravel()
    w = dist[:, 1:].ravel()
    keep = check.segments_free(pts[i], pts[j]) & (w > 0)
    i, j, w = i[keep], j[keep], w[keep]
    graph = coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                       shape=(len(pts), len(pts))).tocsr()
    d, pred = dijkstra(graph, indices=0, return_predecessors=True)
    if not np.isfinite(d[1]):
        return WaypointPath.failure(len(pts))
    chain = [1]
    while chain[-1] != 0:
        chain.append(int(pred[chain[-1]]))
    path = pts[chain[::-1]]
    return WaypointPath(shortcut(path, check), True, len(pts))


def energy_lower_bound(path: WaypointPath, bc: BoundaryConditions):
    """Energy of the optimal chain through the interior waypoints.

    Returns ``(cost, converged)``. Any trajectory visiting those waypoints in
    order costs at least this much.
    """
    if not path.success:
        return float("nan"), False
    sol = solve_chain(ChainProblem.through_points(bc, path.waypoints[1:-1]))
    return (sol.cost if sol.converged else float("nan")), sol.converged
