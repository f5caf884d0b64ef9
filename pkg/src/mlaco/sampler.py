"""Random feasible routes for an OP instance, kept in set (vertex-list) form.

Each route walks a fresh uniform permutation of the intermediate vertices
and appends every vertex that still leaves room to reach the end vertex.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import InfeasibleInstanceError
from .instance import Instance, Route

log = logging.getLogger(__name__)


def stream_seeds(seed: int, count: int, *keys: int) -> np.ndarray:
    """Independent 32-bit seeds, one per stream, derived from (seed, *keys)."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return ss.generate_state(count, dtype=np.uint32)


@njit(cache=True)
def _sample_kernel(cost, score, start, end, t_max, inter, seeds, paths, lengths, costs, objectives, closed):
    m = seeds.shape[0]
    k_inter = inter.shape[0]
    perm = np.empty(k_inter, dtype=np.int64)
    for k in range(m):
        np.random.seed(seeds[k])
        for a in range(k_inter):
            perm[a] = inter[a]
        # Fisher-Yates
        for a in range(k_inter - 1, 0, -1):
            b = np.random.randint(0, a + 1)
            tmp = perm[a]
            perm[a] = perm[b]
            perm[b] = tmp
        cur = start
        t_c = 0.0
        y = score[start]
        pos = 0
        paths[k, pos] = start
        pos += 1
        for a in range(k_inter):
            v = perm[a]
            if t_c + cost[cur, v] + cost[v, end] <= t_max:
                paths[k, pos] = v
                pos += 1
                y += score[v]
                t_c += cost[cur, v]
                cur = v
        paths[k, pos] = end
        pos += 1
        if not closed:
            y += score[end]
        t_c += cost[cur, end]
        lengths[k] = pos
        costs[k] = t_c
        objectives[k] = y


@dataclass(frozen=True, eq=False)
class SampleSet:
    """m feasible routes as padded vertex lists plus objectives and ranks.

    ``paths[k, :lengths[k]]`` is route k; rankings are 1-based, 1 = best.
    """

    paths: np.ndarray
    lengths: np.ndarray
    costs: np.ndarray
    objectives: np.ndarray
    rankings: np.ndarray

    @property
    def m(self) -> int:
        return int(self.objectives.shape[0])

    def route(self, k: int) -> Route:
        return Route(
            tuple(int(v) for v in self.paths[k, : self.lengths[k]]),
            float(self.costs[k]),
            float(self.objectives[k]),
        )

    @property
    def routes(self) -> list[Route]:
        return [self.route(k) for k in range(self.m)]

    def dump_jsonl(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for k in range(self.m):
                route = self.paths[k, : self.lengths[k]].tolist()
                fh.write(json.dumps({"route": route, "objective": float(self.objectives[k])}) + "\n")
        return path


def rank(objectives) -> np.ndarray:
    """1-based ranks by descending objective; ties keep sample order."""
    obj = np.asarray(objectives, dtype=float)
    if obj.size == 0:
        raise ValueError("cannot rank an empty objective list")
    order = np.argsort(-obj, kind="stable")
    ranks = np.empty(obj.size, dtype=np.int64)
    ranks[order] = np.arange(1, obj.size + 1)
    return ranks


def sample(inst: Instance, m: int, seed: int) -> SampleSet:
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if inst.cost[inst.start, inst.end] > inst.t_max:
        raise InfeasibleInstanceError(f"{inst.name}: start->end cost exceeds the budget")
    if m < inst.n - 1:
        log.warning("m=%d < n-1=%d: some edges cannot be sampled", m, inst.n - 1)
    inter = inst.intermediates().astype(np.int64)
    width = inter.size + 2
    paths = np.full((m, width), -1, dtype=np.int64)
    lengths = np.zeros(m, dtype=np.int64)
    costs = np.zeros(m)
    objectives = np.zeros(m)
    _sample_kernel(
        inst.cost,
        inst.score,
        inst.start,
        inst.end,
        inst.t_max,
        inter,
        stream_seeds(seed, m),
        paths,
        lengths,
        costs,
        objectives,
        inst.closed,
    )
    return SampleSet(paths, lengths, costs, objectives, rank(objectives))
