"""Ant System and Max-Min Ant System for the OP, with ML integration modes.

The prediction matrix p can enter the probabilistic model as the heuristic
weight (``eta``), multiplied into the score/cost heuristic (``eta_hat``), or
as the initial pheromone matrix (``tau_seed``). Construction and pheromone
deposits run in numba kernels; each ant draws from its own RNG stream keyed
by (seed, iteration, ant) so runs are reproducible.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .classifier import Prediction
from .errors import ConfigError, InvalidObjectiveError
from .instance import Instance, Route, make_route
from .sampler import stream_seeds

log = logging.getLogger(__name__)

VARIANTS = ("as", "mmas")
INTEGRATIONS = ("none", "eta", "eta_hat", "tau_seed")
UPDATE_RULES = ("iteration-best", "global-best")
TERMINATIONS = ("construction-budget", "no-improve")
DEPOSITS = ("paper", "proportional")
COST_FLOOR = 1e-9


@dataclass(frozen=True)
class AcoConfig:
    """Run parameters. ``ants`` and ``budget`` default from n when None:
    AS uses 100n ants, MMAS n ants, and the budget is 1000n constructions."""

    variant: str = "mmas"
    alpha: float = 1.0
    beta: float = 1.0
    rho: float = 0.05
    delta: float = 0.5
    t_pts: int = 100
    c_scale: float = 100.0
    ants: int | None = None
    budget: int | None = None
    update_rule: str = "iteration-best"
    integration: str = "none"
    seed: int = 0
    termination: str = "construction-budget"
    t_ter: int = 200
    local_search: bool = False
    deposit: str = "paper"
    p_floor: float = 1e-6

    def __post_init__(self):
        for name, value, allowed in (
            ("variant", self.variant, VARIANTS),
            ("integration", self.integration, INTEGRATIONS),
            ("update_rule", self.update_rule, UPDATE_RULES),
            ("termination", self.termination, TERMINATIONS),
            ("deposit", self.deposit, DEPOSITS),
        ):
            if value not in allowed:
                raise ConfigError(f"{name}={value!r}; expected one of {allowed}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must lie in [0, 1)")
        if self.variant == "mmas" and self.rho == 0.0:
            raise ConfigError("mmas needs rho > 0 for a finite tau_max")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta must lie in [0, 1]")
        if self.ants is not None and self.ants < 1:
            raise ConfigError("ants must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.t_pts < 1 or self.t_ter < 1:
            raise ConfigError("t_pts and t_ter must be >= 1")

    def n_ants(self, n: int) -> int:
        if self.ants is not None:
            return self.ants
        return 100 * n if self.variant == "as" else n

    def n_constructions(self, n: int) -> int:
        return self.budget if self.budget is not None else 1000 * n

    def to_dict(self) -> dict:
        return dict(self.__dict__)


PRESETS = {
    "as": dict(variant="as"),
    "mmas": dict(variant="mmas"),
    "sota": dict(variant="mmas", ants=50, update_rule="global-best", termination="no-improve",
                 t_ter=200, local_search=True, integration="eta_hat"),
}


def preset(name: str, **overrides) -> AcoConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return AcoConfig(**{**PRESETS[name], **overrides})


@dataclass
class PheromoneState:
    tau: np.ndarray
    eta: np.ndarray
    tau_max: float = np.inf
    tau_min: float = 0.0
    stagnation: int = 0
    y_best: float = 0.0
    seed_p: np.ndarray | None = None

    def clamp(self):
        np.clip(self.tau, self.tau_min, self.tau_max, out=self.tau)


@dataclass
class RunTrace:
    constructions: list = field(default_factory=list)
    best_objective: list = field(default_factory=list)
    best: Route | None = None
    wall_time: float = 0.0
    iterations: int = 0
    smoothing_events: int = 0
    config: dict = field(default_factory=dict)

    def checkpoint(self, constructions: int, best: float):
        self.constructions.append(int(constructions))
        self.best_objective.append(float(best))

    @property
    def first_iteration_best(self) -> float:
        return self.best_objective[0]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["constructions", "best_objective"])
            for c, b in zip(self.constructions, self.best_objective):
                w.writerow([c, repr(b)])
        return path

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        tr = cls()
        with Path(path).open() as fh:
            for row in csv.DictReader(fh):
                tr.checkpoint(int(row["constructions"]), float(row["best_objective"]))
        return tr


def heuristic(inst: Instance) -> np.ndarray:
    """eta_ij = s_j / c_ij off the diagonal."""
    c = np.maximum(inst.cost, COST_FLOOR)
    eta = inst.score[None, :] / c
    np.fill_diagonal(eta, 0.0)
    return eta


def rescale(p: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Min-max map of the off-diagonal entries of p onto [lo, hi]."""
    n = p.shape[0]
    off = ~np.eye(n, dtype=bool)
    vals = p[off]
    out = np.full_like(p, (lo + hi) / 2.0, dtype=float)
    span = vals.max() - vals.min() if vals.size else 0.0
    if span <= 0.0:
        log.info("constant prediction; pheromone seeded at the interval midpoint")
    else:
        out[off] = lo + (vals - vals.min()) * (hi - lo) / span
    np.fill_diagonal(out, lo)
    return out


def greedy_route(inst: Instance) -> Route:
    """Repeatedly move to the feasible vertex with the best s_j / c_ij."""
    eta = heuristic(inst)
    cur, t = inst.start, 0.0
    todo = set(int(v) for v in inst.intermediates())
    path = [cur]
    while True:
        best, best_val = -1, -1.0
        for v in sorted(todo):
            if t + inst.cost[cur, v] + inst.cost[v, inst.end] <= inst.t_max and eta[cur, v] > best_val:
                best, best_val = v, eta[cur, v]
        if best < 0:
            break
        t += inst.cost[cur, best]
        cur = best
        path.append(best)
        todo.discard(best)
    path.append(inst.end)
    return make_route(inst, path)


def _mmas_bounds(rho: float, y: float, n: int) -> tuple[float, float]:
    tau_max = 1.0 / (rho * y)
    return tau_max, tau_max / (2 * n)


def init_model(inst: Instance, config: AcoConfig, pred: Prediction | None = None) -> PheromoneState:
    """Initial tau and eta for the configured variant and integration mode.

    MMAS needs y_best before any ant has run; the greedy route objective
    stands in for it so that tau_max is finite from the start.
    """
    mode = config.integration
    if mode != "none" and pred is None:
        raise ConfigError(f"integration={mode!r} needs a prediction")
    n = inst.n
    eta = heuristic(inst)
    p = None
    if pred is not None:
        p = np.asarray(pred.p, dtype=float)
        if p.shape != (n, n):
            raise ConfigError(f"prediction shape {p.shape} does not match n={n}")
        p = np.maximum(p, config.p_floor)
        np.fill_diagonal(p, 0.0)
    if mode == "eta":
        eta = p.copy()
    elif mode == "eta_hat":
        eta = p * eta
    state = PheromoneState(tau=np.ones((n, n)), eta=eta)
    if config.variant == "mmas":
        y0 = greedy_route(inst).objective
        if y0 > 0:
            state.y_best = y0
            state.tau_max, state.tau_min = _mmas_bounds(config.rho, y0, n)
        else:
            state.tau_max, state.tau_min = 1.0, 1.0 / (2 * n)
        state.tau[:] = state.tau_max
    if mode == "tau_seed":
        state.seed_p = p
        if config.variant == "mmas":
            state.tau = rescale(p, state.tau_min, state.tau_max)
        else:
            state.tau = p.copy()
    np.fill_diagonal(state.tau, state.tau_min if config.variant == "mmas" else 1.0)
    return state


def transition_weights(state: PheromoneState, config: AcoConfig) -> np.ndarray:
    return state.tau ** config.alpha * state.eta ** config.beta


@njit(cache=True)
def _construct_kernel(cost, score, weight, start, end, t_max, inter, closed, seeds, paths, lengths, costs, objectives):
    """One route per seed. Returns the number of uniform fallbacks taken."""
    n_ants = seeds.shape[0]
    k_inter = inter.shape[0]
    cand = np.empty(k_inter, dtype=np.int64)
    cum = np.empty(k_inter)
    free = np.empty(k_inter, dtype=np.int64)
    fallbacks = 0
    for k in range(n_ants):
        np.random.seed(seeds[k])
        for a in range(k_inter):
            free[a] = inter[a]
        n_free = k_inter
        cur = start
        t_c = 0.0
        y = score[start]
        pos = 0
        paths[k, pos] = start
        pos += 1
        while True:
            nc = 0
            total = 0.0
            for a in range(n_free):
                v = free[a]
                if t_c + cost[cur, v] + cost[v, end] <= t_max:
                    cand[nc] = a
                    total += weight[cur, v]
                    cum[nc] = total
                    nc += 1
            if nc == 0:
                break
            if total > 0.0 and np.isfinite(total):
                u = np.random.random() * total
                pick = nc - 1
                for b in range(nc):
                    if cum[b] > u:
                        pick = b
                        break
            else:
                fallbacks += 1
                pick = np.random.randint(0, nc)
            a = cand[pick]
            v = free[a]
            free[a] = free[n_free - 1]
            free[n_free - 1] = v
            n_free -= 1
            paths[k, pos] = v
            pos += 1
            t_c += cost[cur, v]
            y += score[v]
            cur = v
        paths[k, pos] = end
        pos += 1
        t_c += cost[cur, end]
        if not closed:
            y += score[end]
        lengths[k] = pos
        costs[k] = t_c
        objectives[k] = y
    return fallbacks


@dataclass
class Colony:
    """Routes from one iteration in padded-array form."""

    paths: np.ndarray
    lengths: np.ndarray
    costs: np.ndarray
    objectives: np.ndarray

    def route(self, inst: Instance, k: int) -> Route:
        return make_route(inst, self.paths[k, : self.lengths[k]].tolist())


def construct_many(inst: Instance, state: PheromoneState, config: AcoConfig, seeds: np.ndarray) -> Colony:
    n = inst.n
    m = len(seeds)
    paths = np.zeros((m, n + 1), dtype=np.int64)
    lengths = np.zeros(m, dtype=np.int64)
    costs = np.zeros(m)
    objectives = np.zeros(m)
    weight = transition_weights(state, config)
    inter = np.asarray(inst.intermediates(), dtype=np.int64)
    fallbacks = _construct_kernel(
        inst.cost, inst.score, weight, inst.start, inst.end, inst.t_max, inter, inst.closed,
        np.asarray(seeds, dtype=np.uint32), paths, lengths, costs, objectives,
    )
    if fallbacks:
        log.debug("%d steps had all-zero weights; chose uniformly", fallbacks)
    return Colony(paths, lengths, costs, objectives)


def construct(inst: Instance, state: PheromoneState, config: AcoConfig, rng) -> Route:
    """Build a single route; ``rng`` is a Generator or an integer seed."""
    if not isinstance(rng, (int, np.integer)):
        rng = int(rng.integers(0, 2**32))
    col = construct_many(inst, state, config, np.array([rng], dtype=np.uint32))
    return col.route(inst, 0)


@njit(cache=True)
def _deposit(tau, paths, lengths, amounts):
    for k in range(paths.shape[0]):
        a = amounts[k]
        if a == 0.0:
            continue
        for idx in range(lengths[k] - 1):
            tau[paths[k, idx], paths[k, idx + 1]] += a


def _as_padded(routes) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(routes, Colony):
        return routes.paths, routes.lengths
    width = max(len(r.vertices) for r in routes)
    paths = np.zeros((len(routes), width), dtype=np.int64)
    lengths = np.zeros(len(routes), dtype=np.int64)
    for k, r in enumerate(routes):
        paths[k, : len(r.vertices)] = r.vertices
        lengths[k] = len(r.vertices)
    return paths, lengths


def update_as(state: PheromoneState, routes, objectives, config: AcoConfig, y_best: float | None = None):
    """tau <- (1 - rho) tau + sum_k y_k / C on each route's edges, C = c_scale * y_best."""
    objectives = np.asarray(objectives, dtype=float)
    state.tau *= 1.0 - config.rho
    if y_best is None:
        y_best = max(state.y_best, float(objectives.max()) if objectives.size else 0.0)
    if y_best <= 0 or objectives.size == 0:
        return
    paths, lengths = _as_padded(routes)
    _deposit(state.tau, paths, lengths, objectives / (config.c_scale * y_best))


def update_mmas(state: PheromoneState, best_route: Route, y_best: float, config: AcoConfig, n: int | None = None):
    """Evaporate, deposit on the best route, refresh the bounds and clamp.

    ``y_best`` is the depositing route's objective; the bounds use the best
    objective seen so far, which is tracked in ``state.y_best``.
    """
    if not y_best > 0:
        raise InvalidObjectiveError(f"MMAS deposit needs a positive objective, got {y_best}")
    n = state.tau.shape[0] if n is None else n
    state.y_best = max(state.y_best, float(y_best))
    tau_max, tau_min = _mmas_bounds(config.rho, state.y_best, n)
    if config.deposit == "paper":
        amount = 1.0 / y_best
    else:
        amount = y_best / state.y_best**2
    state.tau *= 1.0 - config.rho
    paths, lengths = _as_padded([best_route])
    _deposit(state.tau, paths, lengths, np.array([amount]))
    state.tau_max, state.tau_min = tau_max, tau_min
    state.clamp()


def smooth(state: PheromoneState, config: AcoConfig, pred: Prediction | None = None):
    """Trail smoothing on stagnation; tau_seed re-seeds from the prediction."""
    if config.integration == "tau_seed":
        p = state.seed_p if state.seed_p is not None else np.asarray(pred.p, dtype=float)
        if config.variant == "mmas":
            state.tau = rescale(p, state.tau_min, state.tau_max)
        else:
            state.tau = np.array(p, dtype=float)
    else:
        state.tau += config.delta * (state.tau_max - state.tau)
    if config.variant == "mmas":
        state.clamp()
    state.stagnation = 0


@njit(cache=True)
def _two_opt(cost, path, length):
    """First-improvement 2-opt on path[0:length] with both ends fixed.

    Handles asymmetric costs through prefix sums of the forward and backward
    edge costs. Returns True if anything changed.
    """
    changed = False
    fwd = np.zeros(length)
    bwd = np.zeros(length)
    improved = True
    while improved:
        improved = False
        for a in range(1, length):
            fwd[a] = fwd[a - 1] + cost[path[a - 1], path[a]]
            bwd[a] = bwd[a - 1] + cost[path[a], path[a - 1]]
        for i in range(1, length - 2):
            for j in range(i + 1, length - 1):
                # reverse path[i..j]
                p, q = path[i - 1], path[j + 1]
                old = cost[p, path[i]] + (fwd[j] - fwd[i]) + cost[path[j], q]
                new = cost[p, path[j]] + (bwd[j] - bwd[i]) + cost[path[i], q]
                if new < old - 1e-10:
                    lo, hi = i, j
                    while lo < hi:
                        tmp = path[lo]
                        path[lo] = path[hi]
                        path[hi] = tmp
                        lo += 1
                        hi -= 1
                    improved = True
                    changed = True
                    break
            if improved:
                break
    return changed


def two_opt_improve(inst: Instance, route: Route) -> Route:
    """Alternate 2-opt and greedy insertion until no vertex can be added.

    Insertion picks the unvisited positive-score vertex with the best
    score / added-cost ratio among those that fit the budget, each at its
    cheapest position.
    """
    cost = inst.cost
    path = np.array(route.vertices, dtype=np.int64)
    _two_opt(cost, path, len(path))
    visited = set(path.tolist())
    todo = [int(v) for v in inst.intermediates() if v not in visited and inst.score[v] > 0]
    cur_cost = make_route(inst, path.tolist()).cost
    while todo:
        best = None
        for v in todo:
            inc = cost[path[:-1], v] + cost[v, path[1:]] - cost[path[:-1], path[1:]]
            pos = int(np.argmin(inc))
            if cur_cost + inc[pos] > inst.t_max:
                continue
            ratio = inst.score[v] / inc[pos] if inc[pos] > 0 else np.inf
            key = (ratio, inst.score[v], -v)
            if best is None or key > best[0]:
                best = (key, v, pos)
        if best is None:
            break
        _, v, pos = best
        cand = np.insert(path, pos + 1, v)
        _two_opt(cost, cand, len(cand))
        cand_cost = make_route(inst, cand.tolist()).cost
        if cand_cost > inst.t_max:
            # accumulated float error can disagree with the incremental estimate
            todo.remove(v)
            continue
        path, cur_cost = cand, cand_cost
        todo.remove(v)
    out = make_route(inst, path.tolist())
    if out.objective < route.objective or (out.objective == route.objective and out.cost > route.cost):
        return route
    return out


def run(inst: Instance, config: AcoConfig, pred: Prediction | None = None, checkpoint_every: int = 1) -> RunTrace:
    """Iterate construct / local search / update / smooth until termination."""
    t0 = time.perf_counter()
    n = inst.n
    ants = config.n_ants(n)
    budget = config.n_constructions(n)
    if config.termination == "construction-budget":
        max_iter = max(1, budget // ants)
    else:
        max_iter = max(1, budget // ants) if config.budget is not None else np.iinfo(np.int64).max
    state = init_model(inst, config, pred)
    trace = RunTrace(config=config.to_dict())
    best: Route | None = None
    since_improve = 0
    it = 0
    while it < max_iter:
        seeds = stream_seeds(config.seed, ants, it)
        col = construct_many(inst, state, config, seeds)
        # first index of the max objective, lowest cost among equals
        order = np.lexsort((col.costs, -col.objectives))
        ib_k = int(order[0])
        ib = col.route(inst, ib_k)
        if config.local_search:
            improved = two_opt_improve(inst, ib)
            if improved.objective > ib.objective:
                col.objectives[ib_k] = improved.objective
                paths, lengths = _as_padded([improved])
                col.paths[ib_k, :] = 0
                col.paths[ib_k, : lengths[0]] = paths[0]
                col.lengths[ib_k] = lengths[0]
                col.costs[ib_k] = improved.cost
            ib = improved
        if best is None or ib.objective > best.objective:
            best = ib
            since_improve = 0
            state.stagnation = 0
        else:
            since_improve += 1
            state.stagnation += 1

        if config.variant == "as":
            update_as(state, col, col.objectives, config, y_best=best.objective)
            state.y_best = best.objective
        else:
            dep = best if config.update_rule == "global-best" else ib
            if dep.objective > 0:
                update_mmas(state, dep, dep.objective, config, n)
            if state.stagnation >= config.t_pts:
                smooth(state, config, pred)
                trace.smoothing_events += 1
        it += 1
        if it % checkpoint_every == 0 or it == max_iter:
            trace.checkpoint(it * ants, best.objective)
        if config.termination == "no-improve" and since_improve >= config.t_ter:
            if trace.constructions[-1] != it * ants:
                trace.checkpoint(it * ants, best.objective)
            break
    trace.best = best
    trace.iterations = it
    trace.wall_time = time.perf_counter() - t0
    return trace
