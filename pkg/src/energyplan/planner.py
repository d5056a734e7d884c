"""Best-first search over vertex sequences.

Prefixes are ordered vertex sequences keyed by the straight-line length of
``p0 -> c1 -> ... -> ck -> pf``. The search pops the shortest prefix, records
it when its full chain trajectory is collision-free, and otherwise extends it
by every unused vertex. A child survives only if its chain is collision-free
up to its last junction; that check is deferred until the child is popped,
which leaves the pop order unchanged but skips children whose key never
beats the incumbent. An optional second pass re-keys the leftover prefixes
by chain energy, which lower-bounds every trajectory containing the prefix.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bvp import ChainProblem, ChainSolution, solve_chain
from .feasibility import chain_feasible
from .geometry import BoundaryConditions, PolygonEnvironment
from .trajectory import Trajectory

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAP = 1_000_000

OK = "ok"
INFEASIBLE = "infeasible"
OVERFLOW = "overflow"


class QueueOverflow(RuntimeError):
    pass


@dataclass
class SearchStats:
    prefixes_expanded: int = 0
    solver_calls: int = 0
    pops: int = 0
    max_queue: int = 0
    wall_time: float | None = None

    def to_dict(self) -> dict:
        return {
            "prefixes_expanded": self.prefixes_expanded,
            "solver_calls": self.solver_calls,
            "pops": self.pops,
            "max_queue": self.max_queue,
            "wall_time": self.wall_time,
        }


@dataclass
class PlanResult:
    status: str
    mode: str
    sequence: tuple = ()
    cost: float = float("inf")
    distance: float = float("inf")
    solution: ChainSolution | None = field(default=None, repr=False)
    stats: SearchStats = field(default_factory=SearchStats)
    queue: list = field(default_factory=list, repr=False)

    @property
    def success(self) -> bool:
        return self.status == OK

    @property
    def trajectory(self) -> Trajectory | None:
        return self.solution.trajectory if self.solution is not None else None

    def summary(self) -> dict:
        return {
            "status": self.status,
            "mode": self.mode,
            "sequence": list(self.sequence),
            "junctions": len(self.sequence),
            "junction_times": [] if self.solution is None else self.solution.times.tolist(),
            "cost": self.cost if self.success else None,
            "distance": self.distance if self.success else None,
            "stats": self.stats.to_dict(),
        }


def prefix_distance(env: PolygonEnvironment, bc: BoundaryConditions, seq) -> float:
    """Straight-line length from the start through ``seq`` to the goal."""
    nodes = [bc.p0] + [env.vertices[s] for s in seq] + [bc.pf]
    return float(sum(np.linalg.norm(b - a) for a, b in zip(nodes, nodes[1:])))


class _Search:
    """Shared state of one planning run: solution cache, queue, counters."""

    def __init__(self, env: PolygonEnvironment, bc: BoundaryConditions,
                 queue_cap: int = DEFAULT_QUEUE_CAP, warm_start: bool = True,
                 timing: bool = True, trace=None):
        self.env = env
        self.trace = trace
        self.bc = bc
        self.queue_cap = queue_cap
        self.warm_start = warm_start
        self.timing = timing
        self.cache: dict = {}
        self.stats = SearchStats()
        self.seen: set = set()
        # queued prefixes whose chain has not been solved and checked yet
        self.pending: set = set()
        self._t0 = time.perf_counter()

    def finish(self):
        if self.timing:
            self.stats.wall_time = time.perf_counter() - self._t0

    def solve(self, seq: tuple) -> ChainSolution:
        sol = self.cache.get(seq)
        if sol is not None:
            return sol
        problem = ChainProblem.from_sequence(self.env, self.bc, seq)
        guess = self._warm_guess(seq, problem) if self.warm_start else None
        hook = None
        if self.trace is not None:
            def hook(rec, seq=seq):
                self.trace({"sequence": list(seq), **rec})
        self.stats.solver_calls += 1
        sol = solve_chain(problem, initial_times=guess, trace=hook)
        if not sol.converged and guess is not None:
            self.stats.solver_calls += 1
            cold = solve_chain(problem, trace=hook)
            if cold.converged:
                sol = cold
        self.cache[seq] = sol
        return sol

    def _warm_guess(self, seq: tuple, problem: ChainProblem):
        parent = self.cache.get(seq[:-1])
        if len(seq) < 2 or parent is None or not parent.converged:
            return None
        tau = parent.normalized_times
        last = tau[-1]
        a = np.linalg.norm(self.env.vertices[seq[-1]] - self.env.vertices[seq[-2]])
        b = np.linalg.norm(self.bc.pf - self.env.vertices[seq[-1]])
        frac = a / (a + b) if a + b > 0 else 0.5
        new = last + (1.0 - last) * frac
        return problem.to_absolute(np.append(tau, new))

    def admit(self, seq: tuple) -> bool:
        """Deferred prefix-feasibility check for a popped child."""
        if seq not in self.pending:
            return True
        self.pending.discard(seq)
        return self.prefix_ok(seq)

    def full_feasible(self, seq: tuple) -> bool:
        ok, _ = chain_feasible(self.solve(seq))
        return ok

    def prefix_ok(self, seq: tuple) -> bool:
        ok, _ = chain_feasible(self.solve(seq), upto=len(seq))
        return ok

    def extensions(self, seq: tuple):
        """Children of ``seq`` in ascending vertex order, not yet solved."""
        used = set(seq)
        self.stats.prefixes_expanded += 1
        for k in range(self.env.n_vertices):
            q = seq + (k,)
            if k not in used and q not in self.seen:
                yield q

    def push(self, heap: list, key: float, seq: tuple, checked: bool = True):
        heapq.heappush(heap, (key, len(seq), seq))
        self.seen.add(seq)
        if not checked:
            self.pending.add(seq)
        self.stats.max_queue = max(self.stats.max_queue, len(heap))
        if len(heap) > self.queue_cap:
            raise QueueOverflow(f"prefix queue exceeded {self.queue_cap} entries")

    def result(self, status: str, mode: str, seq, heap) -> PlanResult:
        self.finish()
        if seq is None:
            return PlanResult(status, mode, stats=self.stats, queue=heap)
        sol = self.solve(seq)
        return PlanResult(status, mode, tuple(seq), sol.cost,
                          prefix_distance(self.env, self.bc, seq), sol, self.stats, heap)


def _check_endpoints(env: PolygonEnvironment, bc: BoundaryConditions):
    for name, p in (("start", bc.p0), ("goal", bc.pf)):
        if not env.point_free(p):
            raise ValueError(f"{name} position {p.tolist()} is not in free space")


def _distance_search(search: _Search, mode: str = "distance") -> PlanResult:
    env, bc = search.env, search.bc
    heap: list = []
    search.push(heap, prefix_distance(env, bc, ()), ())
    for k in range(env.n_vertices):
        search.push(heap, prefix_distance(env, bc, (k,)), (k,))

    best = None
    best_distance = np.inf
    last_key = -np.inf
    while heap and heap[0][0] < best_distance:
        key, _, seq = heapq.heappop(heap)
        assert key >= last_key
        last_key = key
        if not search.admit(seq):
            continue
        search.stats.pops += 1
        if search.full_feasible(seq):
            best, best_distance = seq, key
            log.debug("feasible sequence %s at distance %.6g", seq, key)
        for q in search.extensions(seq):
            search.push(heap, prefix_distance(env, bc, q), q, checked=False)
    status = OK if best is not None else INFEASIBLE
    return search.result(status, mode, best, heap)


def plan_min_distance(env: PolygonEnvironment, bc: BoundaryConditions,
                      queue_cap: int = DEFAULT_QUEUE_CAP, warm_start: bool = True,
                      timing: bool = True, trace=None) -> PlanResult:
    """Minimum-distance feasible vertex sequence by best-first prefix search.

    Ties in distance are broken by sequence length, then lexicographically.
    ``trace`` receives one dict per Newton iteration of every chain solve.
    """
    _check_endpoints(env, bc)
    search = _Search(env, bc, queue_cap, warm_start, timing, trace)
    try:
        return _distance_search(search)
    except QueueOverflow:
        return search.result(OVERFLOW, "distance", None, [])


def refine_min_energy(env: PolygonEnvironment, bc: BoundaryConditions,
                      first: PlanResult, search: _Search | None = None) -> PlanResult:
    """Continue from a minimum-distance result, searching by energy bound.

    Leftover prefixes whose chain energy exceeds the incumbent are dropped;
    the rest are expanded cheapest-bound first until no bound can beat the
    incumbent.
    """
    if not first.success:
        return first
    search = search or _Search(env, bc)
    search.seen.update(seq for _, _, seq in first.queue)
    incumbent, best_cost = first.sequence, first.cost
    heap: list = []
    # prefixes enter under their parent's cost, a valid lower bound on their
    # own, and are re-keyed with their solved cost when first popped
    provisional: set = set()
    try:
        for _, _, seq in sorted(first.queue):
            parent = search.cache.get(seq[:-1])
            if parent is not None and parent.converged:
                if parent.cost < best_cost:
                    search.push(heap, parent.cost, seq, checked=seq not in search.pending)
                    provisional.add(seq)
                continue
            sol = search.solve(seq)
            if sol.converged and sol.cost < best_cost:
                search.push(heap, sol.cost, seq, checked=seq not in search.pending)
        while heap and heap[0][0] < best_cost:
            cost, _, seq = heapq.heappop(heap)
            if seq in provisional:
                provisional.discard(seq)
                sol = search.solve(seq)
                if sol.converged and sol.cost < best_cost:
                    heapq.heappush(heap, (sol.cost, len(seq), seq))
                continue
            if not search.admit(seq):
                continue
            search.stats.pops += 1
            if search.full_feasible(seq) and cost < best_cost:
                incumbent, best_cost = seq, cost
                log.debug("energy incumbent %s cost %.6g", seq, cost)
            for q in search.extensions(seq):
                search.push(heap, cost, q, checked=False)
                provisional.add(q)
    except QueueOverflow:
        return search.result(OVERFLOW, "energy", None, [])
    return search.result(OK, "energy", incumbent, heap)


def plan_min_energy(env: PolygonEnvironment, bc: BoundaryConditions,
                    queue_cap: int = DEFAULT_QUEUE_CAP, warm_start: bool = True,
                    timing: bool = True, trace=None, on_distance=None) -> PlanResult:
    """Minimum-distance search followed by the energy refinement pass.

    ``on_distance``, if given, is called with the minimum-distance result
    before refinement starts (its stats keep counting afterwards).
    """
    _check_endpoints(env, bc)
    search = _Search(env, bc, queue_cap, warm_start, timing, trace)
    try:
        first = _distance_search(search)
    except QueueOverflow:
        if on_distance is not None:
            on_distance(search.result(OVERFLOW, "distance", None, []))
        return search.result(OVERFLOW, "energy", None, [])
    if on_distance is not None:
        on_distance(first)
    if not first.success:
        first.mode = "energy"
        return first
    return refine_min_energy(env, bc, first, search)


def plan_suffix(env: PolygonEnvironment, bc: BoundaryConditions,
                queue_cap: int = DEFAULT_QUEUE_CAP, warm_start: bool = True,
                timing: bool = True, trace=None) -> PlanResult:
    """Prefix search on the time-reversed problem, mapped back to forward time."""
    backward = plan_min_distance(env, bc.reversed(), queue_cap, warm_start, timing, trace)
    backward.mode = "suffix"
    if not backward.success:
        return backward
    seq = tuple(reversed(backward.sequence))
    problem = ChainProblem.from_sequence(env, bc, seq)
    guess = bc.t0 + bc.tf - backward.solution.times[::-1]
    sol = solve_chain(problem, initial_times=guess)
    backward.stats.solver_calls += 1
    if not (sol.converged and chain_feasible(sol)[0]):
        return PlanResult(INFEASIBLE, "suffix", stats=backward.stats)
    return PlanResult(OK, "suffix", seq, sol.cost, prefix_distance(env, bc, seq), sol,
                      backward.stats)


def plan(env: PolygonEnvironment, bc: BoundaryConditions, mode: str = "distance",
         **kwargs) -> PlanResult:
    planners = {"distance": plan_min_distance, "energy": plan_min_energy, "suffix": plan_suffix}
    if mode not in planners:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(planners)}")
    return planners[mode](env, bc, **kwargs)
