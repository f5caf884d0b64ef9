"""Exact OP solving: depth-first path branch and bound, and an arc-based
branch and cut for instances where the path bound is too weak.

Produces the optimal routes used as training labels, plus a brute-force
enumerator for small instances that serves as an independent oracle.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyTrainingSetError, InfeasibleInstanceError, InvalidInstanceError
from .features import EdgeFeatureMatrix, extract
from .instance import Instance, Route, feasible, make_route

log = logging.getLogger(__name__)

# kernel status codes
_DONE = 0
_PAUSED = 1


@dataclass(frozen=True)
class ExactResult:
    route: Route
    objective: float
    nodes_explored: int
    proved_optimal: bool
    wall_time: float


@njit(cache=True)
def _knapsack_bound(cost, score, cur, end, slack, cand, n_cand, in_w, ratio):
    """Fractional-knapsack bound on score still collectable from ``cand``.

    Any path cur -> v1 .. vk -> end costs at least half the cheapest edge out
    of cur, half the cheapest edge into end, and for each visited v half its
    cheapest in-edge plus half its cheapest out-edge within the candidate set.
    """
    if n_cand == 0:
        return 0.0
    min_out_cur = np.inf
    min_in_end = np.inf
    for a in range(n_cand):
        v = cand[a]
        if cost[cur, v] < min_out_cur:
            min_out_cur = cost[cur, v]
        if cost[v, end] < min_in_end:
            min_in_end = cost[v, end]
    cap = slack - 0.5 * (min_out_cur + min_in_end)
    if cap < 0.0:
        cap = 0.0
    for a in range(n_cand):
        v = cand[a]
        best_in = cost[cur, v]
        best_out = cost[v, end]
        for b in range(n_cand):
            if a == b:
                continue
            u = cand[b]
            if cost[u, v] < best_in:
                best_in = cost[u, v]
            if cost[v, u] < best_out:
                best_out = cost[v, u]
        in_w[a] = 0.5 * (best_in + best_out)
        if in_w[a] <= 0.0:
            ratio[a] = np.inf
        else:
            ratio[a] = score[v] / in_w[a]
    order = np.argsort(-ratio[:n_cand])
    total = 0.0
    for a in range(n_cand):
        k = order[a]
        v = cand[k]
        w = in_w[k]
        if w <= cap:
            cap -= w
            total += score[v]
        else:
            total += score[v] * cap / w
            break
    return total


@njit(cache=True)
def _bnb_kernel(cost, score, start, end, t_max, closed, is_inter, state, path, t_at, s_at,
                cand, cand_len, cand_pos, bound_at, visited, best_path, best_info, node_limit):
    """Resumable DFS. ``state`` = [depth, nodes, initialised]; returns a status code.

    best_info = [best_score, best_len]. Scores exclude the end vertex until a
    path is closed off.
    """
    n = cost.shape[0]
    end_score = 0.0 if closed else score[end]
    in_w = np.empty(n)
    ratio = np.empty(n)
    tmp = np.empty(n, dtype=np.int64)
    keys = np.empty(n)
    budget = node_limit

    depth = state[0]
    if state[2] == 0:
        state[2] = 1
        depth = 0
        path[0] = start
        t_at[0] = 0.0
        s_at[0] = score[start]
        visited[start] = True
        visited[end] = True
        cand_len[0] = -1
    while depth >= 0:
        if cand_len[depth] < 0:
            # first visit of this node: record, bound, order children
            state[1] += 1
            budget -= 1
            cur = path[depth]
            t = t_at[depth]
            s = s_at[depth]
            complete = s + end_score
            if complete > best_info[0]:
                best_info[0] = complete
                for a in range(depth + 1):
                    best_path[a] = path[a]
                best_path[depth + 1] = end
                best_info[1] = depth + 2
            nc = 0
            simple = 0.0
            for v in range(n):
                if is_inter[v] and not visited[v]:
                    if t + cost[cur, v] + cost[v, end] <= t_max:
                        tmp[nc] = v
                        nc += 1
                        simple += score[v]
            bound = complete + simple
            if nc > 0 and bound > best_info[0]:
                kb = complete + _knapsack_bound(cost, score, cur, end, t_max - t, tmp, nc, in_w, ratio)
                if kb < bound:
                    bound = kb
            bound_at[depth] = bound
            if nc == 0 or bound <= best_info[0]:
                cand_len[depth] = 0
            else:
                # greedy-first: descending s_j / c(cur, j), ties by index
                for a in range(nc):
                    v = tmp[a]
                    c = cost[cur, v]
                    keys[a] = -(score[v] / c) if c > 0 else -np.inf
                order = np.argsort(keys[:nc], kind="mergesort")
                for a in range(nc):
                    cand[depth, a] = tmp[order[a]]
                cand_len[depth] = nc
            cand_pos[depth] = 0
        if cand_pos[depth] < cand_len[depth] and bound_at[depth] > best_info[0]:
            v = cand[depth, cand_pos[depth]]
            cand_pos[depth] += 1
            cur = path[depth]
            path[depth + 1] = v
            t_at[depth + 1] = t_at[depth] + cost[cur, v]
            s_at[depth + 1] = s_at[depth] + score[v]
            visited[v] = True
            depth += 1
            cand_len[depth] = -1
        else:
            if depth > 0:
                visited[path[depth]] = False
            depth -= 1
        if budget <= 0 and depth >= 0:
            state[0] = depth
            return _PAUSED
    state[0] = depth
    return _DONE


def solve_bnb(
    inst: Instance,
    time_limit: float = 60.0,
    incumbent: Route | None = None,
    method: str = "auto",
    dfs_slice: float = 5.0,
) -> ExactResult:
    """Solve ``inst`` exactly within ``time_limit`` seconds.

    ``method`` picks the search: "dfs" is the path branch and bound,
    "cut" the arc-based branch and cut, and "auto" runs dfs for at most
    ``dfs_slice`` seconds before handing over to branch and cut. Either way a
    timeout returns the incumbent with ``proved_optimal=False``.
    """
    if method == "dfs":
        return solve_dfs(inst, time_limit, incumbent)
    if method == "cut":
        return solve_cut(inst, time_limit, incumbent)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    t0 = time.perf_counter()
    first = solve_dfs(inst, min(time_limit, dfs_slice), incumbent)
    left = time_limit - (time.perf_counter() - t0)
    if first.proved_optimal or left <= 0:
        return first
    second = solve_cut(inst, left, first.route)
    best = second if second.objective > first.objective else first
    return ExactResult(
        route=best.route,
        objective=best.objective,
        nodes_explored=first.nodes_explored + second.nodes_explored,
        proved_optimal=second.proved_optimal,
        wall_time=time.perf_counter() - t0,
    )


def solve_dfs(
    inst: Instance,
    time_limit: float = 60.0,
    incumbent: Route | None = None,
    node_chunk: int = 200_000,
) -> ExactResult:
    """Depth-first branch and bound over paths from the start vertex.

    A partial path is pruned when no remaining vertex fits the budget, or when
    its score plus an upper bound on what is still collectable cannot beat
    the incumbent.
    """
    t0 = time.perf_counter()
    n = inst.n
    if inst.cost[inst.start, inst.end] > inst.t_max:
        raise InfeasibleInstanceError(f"{inst.name}: start->end cost exceeds the budget")
    if time_limit < 0:
        raise InvalidInstanceError("time_limit must be >= 0")
    trivial = make_route(inst, [inst.start, inst.end])
    best = trivial
    if incumbent is not None:
        if not feasible(inst, incumbent):
            raise ValueError("incumbent route is infeasible")
        if incumbent.objective > best.objective:
            best = make_route(inst, incumbent.vertices)
    if time_limit == 0:
        return ExactResult(best, best.objective, 0, False, time.perf_counter() - t0)

    is_inter = np.zeros(n, dtype=np.bool_)
    is_inter[inst.intermediates()] = True
    state = np.zeros(3, dtype=np.int64)
    path = np.zeros(n + 1, dtype=np.int64)
    t_at = np.zeros(n + 1)
    s_at = np.zeros(n + 1)
    cand = np.zeros((n + 1, n), dtype=np.int64)
    cand_len = np.zeros(n + 1, dtype=np.int64)
    cand_pos = np.zeros(n + 1, dtype=np.int64)
    bound_at = np.zeros(n + 1)
    visited = np.zeros(n, dtype=np.bool_)
    best_path = np.zeros(n + 1, dtype=np.int64)
    # the kernel only records strictly better paths, so seed it with the incumbent
    best_info = np.array([best.objective, 0.0])

    status = _PAUSED
    while status == _PAUSED:
        status = _bnb_kernel(
            inst.cost, inst.score, inst.start, inst.end, inst.t_max, inst.closed, is_inter, state,
            path, t_at, s_at, cand, cand_len, cand_pos, bound_at, visited, best_path, best_info, node_chunk,
        )
        if status == _PAUSED and time.perf_counter() - t0 >= time_limit:
            break
    if best_info[1] > 0:
        best = make_route(inst, best_path[: int(best_info[1])].tolist())
    return ExactResult(
        route=best,
        objective=best.objective,
        nodes_explored=int(state[1]),
        proved_optimal=status == _DONE,
        wall_time=time.perf_counter() - t0,
    )


class _CutModel:
    """Arc/vertex binary program with connectivity cuts added on demand.

    x[a] for each arc i != j, y[v] for each vertex. Every visited vertex must
    be reachable from the start: x(into S) >= y[v] for S not holding start.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        n = inst.n
        s, e = inst.start, inst.end
        self.arcs = [(i, j) for i in range(n) for j in range(n) if i != j]
        self.index = {a: k for k, a in enumerate(self.arcs)}
        self.n_arcs = len(self.arcs)
        self.n_vars = self.n_arcs + n
        self.objective = np.zeros(self.n_vars)
        self.objective[self.n_arcs:] = -inst.score
        self.upper = np.ones(self.n_vars)
        self.lower = np.zeros(self.n_vars)
        self._r, self._c, self._v, self.lo, self.hi = [], [], [], [], []
        y = self.n_arcs
        for v in range(n):
            into = [(self.index[(i, v)], 1.0) for i in range(n) if i != v]
            out = [(self.index[(v, j)], 1.0) for j in range(n) if j != v]
            if inst.closed or v not in (s, e):
                self._row(into + [(y + v, -1.0)], 0.0, 0.0)
                self._row(out + [(y + v, -1.0)], 0.0, 0.0)
            elif v == s:
                self._row(into, 0.0, 0.0)
                self._row(out, 1.0, 1.0)
            else:
                self._row(into, 1.0, 1.0)
                self._row(out, 0.0, 0.0)
        if inst.closed:
            for v in range(n):
                if v != s:
                    self._row([(y + v, 1.0), (y + s, -1.0)], -np.inf, 0.0)
        else:
            self.lower[y + s] = self.lower[y + e] = 1.0
        self.budget_row = len(self.lo)
        self._row([(k, inst.cost[a]) for k, a in enumerate(self.arcs)], -np.inf, inst.t_max)
        for i in range(n):
            for j in range(i + 1, n):
                pair = [(self.index[(i, j)], 1.0), (self.index[(j, i)], 1.0)]
                if inst.closed or not ({i, j} <= {s, e}):
                    self._row(pair + [(y + i, -1.0)], -np.inf, 0.0)
                    self._row(pair + [(y + j, -1.0)], -np.inf, 0.0)
        self.n_cuts = 0

    def _row(self, coefs, lo, hi):
        r = len(self.lo)
        for k, v in coefs:
            self._r.append(r)
            self._c.append(k)
            self._v.append(v)
        self.lo.append(lo)
        self.hi.append(hi)

    def add_cut(self, inside: set, v: int):
        n = self.inst.n
        coefs = [(self.index[(i, j)], 1.0) for i in range(n) if i not in inside for j in inside]
        self._row(coefs + [(self.n_arcs + v, -1.0)], 0.0, np.inf)
        self.n_cuts += 1

    def solve(self, integral: bool, time_limit: float):
        from scipy.optimize import Bounds, LinearConstraint, milp
        from scipy.sparse import coo_matrix

        A = coo_matrix((self._v, (self._r, self._c)), shape=(len(self.lo), self.n_vars)).tocsr()
        return milp(
            self.objective,
            constraints=LinearConstraint(A, np.array(self.lo), np.array(self.hi)),
            integrality=np.full(self.n_vars, 1 if integral else 0),
            bounds=Bounds(self.lower, self.upper),
            options={"time_limit": max(time_limit, 1e-3), "mip_rel_gap": 1e-9},
        )

    def flows(self, x) -> np.ndarray:
        n = self.inst.n
        w = np.zeros((n, n))
        for k, (i, j) in enumerate(self.arcs):
            w[i, j] = x[k]
        return w

    def separate_fractional(self, x, tol=1e-4) -> int:
        """Add violated connectivity cuts found by max-flow from the start."""
        from scipy.sparse import csr_matrix
        from scipy.sparse.csgraph import maximum_flow

        n, s = self.inst.n, self.inst.start
        scale = 1e6
        cap = np.round(self.flows(x) * scale).astype(np.int32)
        graph = csr_matrix(cap)
        added = 0
        for v in range(n):
            yv = x[self.n_arcs + v]
            if v == s or yv < tol:
                continue
            res = maximum_flow(graph, s, v)
            if res.flow_value / scale < yv - tol:
                resid = cap - res.flow.toarray()
                reach = {s}
                stack = [s]
                while stack:
                    u = stack.pop()
                    for w in np.flatnonzero(resid[u] > 0):
                        w = int(w)
                        if w not in reach:
                            reach.add(w)
                            stack.append(w)
                self.add_cut(set(range(n)) - reach, v)
                added += 1
        return added

    def walk(self, x) -> tuple[list[int], list[list[int]]]:
        """Route from the start plus any disjoint cycles in an integral x."""
        s, e = self.inst.start, self.inst.end
        succ = {i: j for k, (i, j) in enumerate(self.arcs) if x[k] > 0.5}
        route = [s]
        u = succ.get(s)
        while u is not None:
            route.append(u)
            if u == e:
                break
            u = succ.get(u)
        if len(route) == 1:
            route.append(e)
        on_route = set(route)
        cycles, seen = [], set()
        for v in range(self.inst.n):
            if x[self.n_arcs + v] > 0.5 and v not in on_route and v not in seen:
                cyc, u = [], v
                while u not in cyc:
                    cyc.append(u)
                    u = succ[u]
                seen.update(cyc)
                cycles.append(cyc)
        return route, cycles


def solve_cut(inst: Instance, time_limit: float = 600.0, incumbent: Route | None = None) -> ExactResult:
    """Branch and cut on the arc formulation, using HiGHS for the LP/MIP work.

    Fractional connectivity cuts are separated at the root LP first; integer
    solutions that still contain detached cycles get more cuts and are
    re-solved until the route is connected.
    """
    t0 = time.perf_counter()
    model = _CutModel(inst)
    best = make_route(inst, [inst.start, inst.end])
    if incumbent is not None and incumbent.objective > best.objective and feasible(inst, incumbent):
        best = make_route(inst, incumbent.vertices)

    def left():
        return time_limit - (time.perf_counter() - t0)

    rounds = 0
    while left() > 0:
        res = model.solve(False, left())
        if res.x is None:
            break
        rounds += 1
        if model.separate_fractional(res.x) == 0:
            break
    proved = False
    while left() > 0:
        res = model.solve(True, left())
        if res.x is None:
            break
        rounds += 1
        route, cycles = model.walk(res.x)
        if cycles:
            for cyc in cycles:
                for v in cyc:
                    model.add_cut(set(cyc), v)
            continue
        found = make_route(inst, route)
        if not feasible(inst, found):
            # float budget slack admitted a route a hair over t_max; tighten and retry
            model.hi[model.budget_row] = inst.t_max - (found.cost - inst.t_max) - 1e-9 * max(1.0, inst.t_max)
            continue
        if found.objective > best.objective:
            best = found
        proved = res.status == 0
        break
    return ExactResult(best, best.objective, rounds, proved, time.perf_counter() - t0)


def brute_force(inst: Instance) -> ExactResult:
    """Enumerate every ordered subset of intermediates. Only for tiny n."""
    t0 = time.perf_counter()
    inter = inst.intermediates().tolist()
    if len(inter) > 9:
        raise ValueError(f"brute force refused for {len(inter)} intermediate vertices")
    best = make_route(inst, [inst.start, inst.end])
    count = 0
    for k in range(1, len(inter) + 1):
        for perm in itertools.permutations(inter, k):
            count += 1
            verts = [inst.start, *perm, inst.end]
            total = 0.0
            for a, b in zip(verts[:-1], verts[1:]):
                total += inst.cost[a, b]
            if total <= inst.t_max:
                r = make_route(inst, verts)
                if r.objective > best.objective:
                    best = r
    return ExactResult(best, best.objective, count, True, time.perf_counter() - t0)


def label_instances(instances, time_limit: float) -> list[ExactResult]:
    out = []
    for inst in instances:
        res = solve_bnb(inst, time_limit)
        log.info(
            "%s: objective=%g proved=%s nodes=%d %.2fs",
            inst.name, res.objective, res.proved_optimal, res.nodes_explored, res.wall_time,
        )
        out.append(res)
    return out


def build_training_set(
    instances: list[Instance],
    time_limit: float = 60.0,
    m: int | None = None,
    seed: int = 0,
    results: list[ExactResult] | None = None,
) -> EdgeFeatureMatrix:
    """Labelled features from every instance solved to proven optimality.

    Instances that time out contribute no rows. ``results`` may carry
    precomputed solver output aligned with ``instances``.
    """
    if not instances:
        raise EmptyTrainingSetError("no instances given")
    if results is None:
        results = label_instances(instances, time_limit)
    parts = []
    for k, (inst, res) in enumerate(zip(instances, results)):
        if not res.proved_optimal:
            log.info("%s dropped: not proved optimal within %.1fs", inst.name, time_limit)
            continue
        parts.append(extract(inst, m=m, seed=seed + k, optimal=res.route))
    if not parts:
        raise EmptyTrainingSetError("no instance was solved to optimality")
    return EdgeFeatureMatrix.concat(parts)
