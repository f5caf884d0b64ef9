"""Orienteering-problem instances: model, generation, parsing and feasibility.

Vertex indices are 0-based in memory and 1-based in every file format.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InfeasibleInstanceError,
    InfeasibleStartEndError,
    InvalidInstanceError,
    InvalidRouteError,
    MalformedHeaderError,
    NonNumericFieldError,
    ParseError,
)

ROUNDING_MODES = (
    "exact-euclidean",
    "tsplib-euc2d",
    "tsplib-ceil2d",
    "tsplib-att",
    "tsplib-geo",
    "explicit",
)


@dataclass(frozen=True, eq=False)
class Instance:
    """A complete directed OP graph with a travel budget.

    ``start == end`` is allowed and means a closed tour from a depot, which is
    how OPLib instances are defined.
    """

    name: str
    cost: np.ndarray
    score: np.ndarray
    t_max: float
    start: int
    end: int
    coords: np.ndarray | None = None
    rounding: str = "exact-euclidean"

    def __post_init__(self):
        cost = np.array(self.cost, dtype=np.float64)
        score = np.array(self.score, dtype=np.float64)
        n = score.shape[0]
        if n < 2:
            raise InvalidInstanceError(f"instance needs at least 2 vertices, got {n}")
        if cost.shape != (n, n):
            raise InvalidInstanceError(f"cost matrix shape {cost.shape} does not match n={n}")
        off = ~np.eye(n, dtype=bool)
        if not np.all(np.isfinite(cost[off])) or np.any(cost[off] < 0):
            raise InvalidInstanceError("costs must be finite and nonnegative")
        if np.any(score < 0) or not np.all(np.isfinite(score)):
            raise InvalidInstanceError("scores must be finite and nonnegative")
        if not (0 <= self.start < n and 0 <= self.end < n):
            raise InvalidInstanceError("start/end index out of range")
        if self.rounding not in ROUNDING_MODES:
            raise InvalidInstanceError(f"unknown rounding mode {self.rounding!r}")
        t_max = float(self.t_max)
        if not math.isfinite(t_max) or t_max < 0:
            raise InvalidInstanceError(f"t_max must be a nonnegative number, got {self.t_max}")
        np.fill_diagonal(cost, 0.0)
        cost.setflags(write=False)
        score.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "t_max", t_max)
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "end", int(self.end))
        if self.coords is not None:
            coords = np.array(self.coords, dtype=np.float64).reshape(n, 2)
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)
        if cost[self.start, self.end] > t_max:
            raise InfeasibleInstanceError(
                f"{self.name}: cost[start][end]={cost[self.start, self.end]} exceeds t_max={t_max}"
            )

    @property
    def n(self) -> int:
        return int(self.score.shape[0])

    @property
    def closed(self) -> bool:
        return self.start == self.end

    def intermediates(self) -> np.ndarray:
        """Indices of every vertex other than start and end, ascending."""
        mask = np.ones(self.n, dtype=bool)
        mask[[self.start, self.end]] = False
        return np.flatnonzero(mask)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        same_coords = (self.coords is None and other.coords is None) or (
            self.coords is not None
            and other.coords is not None
            and np.array_equal(self.coords, other.coords)
        )
        return (
            self.name == other.name
            and self.start == other.start
            and self.end == other.end
            and self.t_max == other.t_max
            and self.rounding == other.rounding
            and np.array_equal(self.score, other.score)
            and np.array_equal(self.cost, other.cost)
            and same_coords
        )

    __hash__ = None


@dataclass(frozen=True)
class Route:
    vertices: tuple[int, ...]
    cost: float
    objective: float
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self):
        return len(self.vertices)

    def edges(self):
        v = self.vertices
        return list(zip(v[:-1], v[1:]))


def make_route(inst: Instance, vertices: Sequence[int]) -> Route:
    """Build a Route, accumulating cost edge by edge and scoring distinct vertices."""
    verts = tuple(int(v) for v in vertices)
    cost = 0.0
    for a, b in zip(verts[:-1], verts[1:]):
        cost += inst.cost[a, b]
    objective = 0.0
    for v in dict.fromkeys(verts):
        objective += inst.score[v]
    return Route(verts, float(cost), float(objective))


def route_cost(inst: Instance, vertices: Sequence[int]) -> float:
    cost = 0.0
    for a, b in zip(vertices[:-1], vertices[1:]):
        cost += inst.cost[a, b]
    return float(cost)


def feasible(inst: Instance, route: Route | Sequence[int]) -> bool:
    """True iff the route runs start->end, repeats nothing and fits the budget.

    Out-of-range indices raise InvalidRouteError rather than returning False.
    """
    verts = route.vertices if isinstance(route, Route) else tuple(route)
    if len(verts) == 0:
        raise InvalidRouteError("empty route")
    for v in verts:
        if not 0 <= v < inst.n:
            raise InvalidRouteError(f"vertex {v} out of range for n={inst.n}")
    if len(verts) < 2 or verts[0] != inst.start or verts[-1] != inst.end:
        return False
    body = verts[:-1] if inst.closed else verts
    if len(set(body)) != len(body):
        return False
    if inst.closed and inst.start in verts[1:-1]:
        return False
    return route_cost(inst, verts) <= inst.t_max


def euclidean_costs(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def generate_random(
    n: int,
    seed: int,
    budget_range: tuple[int, int] = (100, 400),
    coord_range: tuple[float, float] = (0.0, 100.0),
    score_range: tuple[int, int] = (0, 100),
    name: str | None = None,
) -> Instance:
    """Random Euclidean instance with start = 0, end = n-1, both scored 0."""
    if n < 2:
        raise InvalidInstanceError(f"n must be >= 2, got {n}")
    lo, hi = budget_range
    if lo > hi:
        raise InvalidInstanceError(f"empty budget range [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(coord_range[0], coord_range[1], size=(n, 2))
    scores = rng.integers(score_range[0], score_range[1], size=n, endpoint=True).astype(float)
    scores[0] = scores[n - 1] = 0.0
    t_max = int(rng.integers(lo, hi, endpoint=True))
    cost = euclidean_costs(coords)
    # coords span up to 141 apart; lift t_max to the start->end distance so a route exists
    if cost[0, n - 1] > t_max:
        t_max = int(math.ceil(cost[0, n - 1]))
    return Instance(
        name=name or f"rand_n{n}_s{seed}",
        cost=cost,
        score=scores,
        t_max=t_max,
        start=0,
        end=n - 1,
        coords=coords,
        rounding="exact-euclidean",
    )


# --------------------------------------------------------------------------
# JSON


def to_json_dict(inst: Instance) -> dict:
    d = {
        "name": inst.name,
        "n": inst.n,
        "start": inst.start + 1,
        "end": inst.end + 1,
        "t_max": inst.t_max,
        "scores": inst.score.tolist(),
        "rounding": inst.rounding,
    }
    if inst.coords is not None and inst.rounding != "explicit":
        d["coords"] = inst.coords.tolist()
    else:
        d["costs"] = inst.cost.tolist()
    return d


def write_json(inst: Instance, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_json_dict(inst), indent=1) + "\n")
    return path


def from_json_dict(d: dict, path=None) -> Instance:
    for key in ("n", "start", "end", "t_max", "scores"):
        if key not in d:
            raise MalformedHeaderError("missing key", path=path, field=key)
    rounding = d.get("rounding", "exact-euclidean")
    n = int(d["n"])
    scores = np.asarray(d["scores"], dtype=float)
    if scores.shape != (n,):
        raise MalformedHeaderError(f"expected {n} scores", path=path, field="scores")
    coords = None
    if "costs" in d:
        cost = np.asarray(d["costs"], dtype=float)
        if "coords" in d:
            coords = np.asarray(d["coords"], dtype=float)
    elif "coords" in d:
        coords = np.asarray(d["coords"], dtype=float)
        if coords.shape != (n, 2):
            raise MalformedHeaderError(f"expected {n} coordinate pairs", path=path, field="coords")
        cost = tsplib_costs(coords, _tsplib_kind(rounding)) if rounding.startswith("tsplib") else euclidean_costs(coords)
    else:
        raise MalformedHeaderError("one of coords/costs is required", path=path, field="coords")
    return _checked_instance(
        path,
        name=d.get("name", Path(path).stem if path else "instance"),
        cost=cost,
        score=scores,
        t_max=float(d["t_max"]),
        start=int(d["start"]) - 1,
        end=int(d["end"]) - 1,
        coords=coords,
        rounding=rounding,
    )


def _checked_instance(path, **kw) -> Instance:
    try:
        return Instance(**kw)
    except InfeasibleInstanceError as exc:
        raise InfeasibleStartEndError(str(exc), path=path, field="t_max") from exc


# --------------------------------------------------------------------------
# TSPLIB / OPLib


def _nint(x: float) -> int:
    return int(x + 0.5)


def _tsplib_kind(rounding: str) -> str:
    return {
        "tsplib-euc2d": "EUC_2D",
        "tsplib-ceil2d": "CEIL_2D",
        "tsplib-att": "ATT",
        "tsplib-geo": "GEO",
    }[rounding]


def tsplib_costs(coords: np.ndarray, kind: str) -> np.ndarray:
    """TSPLIB integer distance functions (EUC_2D, CEIL_2D, ATT, GEO)."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    out = np.zeros((n, n))
    if kind == "GEO":
        pi = 3.141592
        lat = [pi * (int(x) + 5.0 * (x - int(x)) / 3.0) / 180.0 for x in coords[:, 0]]
        lon = [pi * (int(y) + 5.0 * (y - int(y)) / 3.0) / 180.0 for y in coords[:, 1]]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                q1 = math.cos(lon[i] - lon[j])
                q2 = math.cos(lat[i] - lat[j])
                q3 = math.cos(lat[i] + lat[j])
                out[i, j] = int(6378.388 * math.acos(0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3)) + 1.0)
        return out
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = coords[i, 0] - coords[j, 0]
            dy = coords[i, 1] - coords[j, 1]
            if kind == "EUC_2D":
                out[i, j] = _nint(math.sqrt(dx * dx + dy * dy))
            elif kind == "CEIL_2D":
                out[i, j] = math.ceil(math.sqrt(dx * dx + dy * dy))
            elif kind == "ATT":
                r = math.sqrt((dx * dx + dy * dy) / 10.0)
                t = _nint(r)
                out[i, j] = t + 1 if t < r else t
            else:
                raise ValueError(f"unsupported edge weight type {kind}")
    return out


_ROUNDING_OF = {
    "EUC_2D": "tsplib-euc2d",
    "CEIL_2D": "tsplib-ceil2d",
    "ATT": "tsplib-att",
    "GEO": "tsplib-geo",
    "EXPLICIT": "explicit",
}

_SECTIONS = {
    "NODE_COORD_SECTION",
    "NODE_SCORE_SECTION",
    "EDGE_WEIGHT_SECTION",
    "DEPOT_SECTION",
    "DISPLAY_DATA_SECTION",
}


def _number(tok: str, path, line: int, fld: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise NonNumericFieldError(f"expected a number, got {tok!r}", path=path, line=line, field=fld) from None


def _explicit_matrix(values: list[float], n: int, fmt: str, path) -> np.ndarray:
    m = np.zeros((n, n))
    it = iter(values)

    def take():
        try:
            return next(it)
        except StopIteration:
            raise MalformedHeaderError(
                f"EDGE_WEIGHT_SECTION too short for {fmt} with n={n}", path=path, field="EDGE_WEIGHT_SECTION"
            ) from None

    if fmt == "FULL_MATRIX":
        for i in range(n):
            for j in range(n):
                m[i, j] = take()
        return m
    pairs = []
    for i in range(n):
        if fmt == "UPPER_ROW":
            pairs += [(i, j) for j in range(i + 1, n)]
        elif fmt == "LOWER_ROW":
            pairs += [(i, j) for j in range(i)]
        elif fmt == "UPPER_DIAG_ROW":
            pairs += [(i, j) for j in range(i, n)]
        elif fmt == "LOWER_DIAG_ROW":
            pairs += [(i, j) for j in range(i + 1)]
        else:
            raise MalformedHeaderError(f"unsupported EDGE_WEIGHT_FORMAT {fmt}", path=path, field="EDGE_WEIGHT_FORMAT")
    for i, j in pairs:
        m[i, j] = m[j, i] = take()
    return m


def parse_oplib(path) -> Instance:
    """TSPLIB-style OP file (OPLib). COST_LIMIT or TMAX gives the budget.

    With a DEPOT_SECTION the instance is a closed tour from that depot;
    otherwise start/end are the first and last vertices in file order.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    header: dict[str, tuple[str, int]] = {}
    coords: dict[int, tuple[float, float]] = {}
    scores: dict[int, float] = {}
    weights: list[float] = []
    depots: list[int] = []
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if upper == "EOF":
            break
        key = upper.split(":")[0].strip() if ":" in line else upper.split()[0]
        if key in _SECTIONS:
            section = key
            continue
        if ":" in line and re.match(r"^[A-Z_]+\s*:", upper):
            k, v = line.split(":", 1)
            header[k.strip().upper()] = (v.strip(), lineno)
            section = None
            continue
        toks = line.split()
        if section == "NODE_COORD_SECTION":
            if len(toks) < 3:
                raise MalformedHeaderError("coordinate line needs 'id x y'", path=path, line=lineno, field=section)
            idx = int(_number(toks[0], path, lineno, "node id"))
            coords[idx] = (_number(toks[1], path, lineno, "x"), _number(toks[2], path, lineno, "y"))
        elif section == "NODE_SCORE_SECTION":
            if len(toks) < 2:
                raise MalformedHeaderError("score line needs 'id score'", path=path, line=lineno, field=section)
            scores[int(_number(toks[0], path, lineno, "node id"))] = _number(toks[1], path, lineno, "score")
        elif section == "EDGE_WEIGHT_SECTION":
            weights += [_number(t, path, lineno, "edge weight") for t in toks]
        elif section == "DEPOT_SECTION":
            for t in toks:
                d = int(_number(t, path, lineno, "depot"))
                if d >= 1:
                    depots.append(d)
        elif section == "DISPLAY_DATA_SECTION":
            continue
        else:
            raise MalformedHeaderError(f"unrecognised line {line!r}", path=path, line=lineno)

    def get(name, *alts):
        for k in (name, *alts):
            if k in header:
                return header[k]
        raise MalformedHeaderError("missing header keyword", path=path, field=name)

    dim_s, dim_line = get("DIMENSION")
    n = int(_number(dim_s, path, dim_line, "DIMENSION"))
    tmax_s, tmax_line = get("COST_LIMIT", "TMAX")
    t_max = _number(tmax_s, path, tmax_line, "COST_LIMIT")
    ewt, ewt_line = get("EDGE_WEIGHT_TYPE")
    ewt = ewt.upper()
    if ewt not in _ROUNDING_OF:
        raise MalformedHeaderError(f"unsupported EDGE_WEIGHT_TYPE {ewt}", path=path, line=ewt_line, field="EDGE_WEIGHT_TYPE")
    xy = None
    if coords:
        if sorted(coords) != list(range(1, n + 1)):
            raise MalformedHeaderError(f"NODE_COORD_SECTION must list ids 1..{n}", path=path, field="NODE_COORD_SECTION")
        xy = np.array([coords[i] for i in range(1, n + 1)])
    if ewt == "EXPLICIT":
        fmt = header.get("EDGE_WEIGHT_FORMAT", ("FULL_MATRIX", 0))[0].upper()
        cost = _explicit_matrix(weights, n, fmt, path)
    else:
        if xy is None:
            raise MalformedHeaderError("NODE_COORD_SECTION required", path=path, field="NODE_COORD_SECTION")
        cost = tsplib_costs(xy, ewt)
    if sorted(scores) != list(range(1, n + 1)):
        raise MalformedHeaderError(f"NODE_SCORE_SECTION must list ids 1..{n}", path=path, field="NODE_SCORE_SECTION")
    score = np.array([scores[i] for i in range(1, n + 1)])
    if depots:
        start = end = depots[0] - 1
    else:
        start, end = 0, n - 1
    name = header.get("NAME", (path.stem, 0))[0]
    return _checked_instance(
        path, name=name, cost=cost, score=score, t_max=t_max, start=start, end=end, coords=xy, rounding=_ROUNDING_OF[ewt]
    )


def write_oplib(inst: Instance, path, comment: str = "") -> Path:
    """Write a TSPLIB-style OP file; non-coordinate instances use FULL_MATRIX."""
    path = Path(path)
    kind = {v: k for k, v in _ROUNDING_OF.items()}.get(inst.rounding)
    out = [f"NAME : {inst.name}"]
    if comment:
        out.append(f"COMMENT : {comment}")
    out += ["TYPE : OP", f"DIMENSION : {inst.n}", f"COST_LIMIT : {inst.t_max:g}"]
    if kind is None or kind == "EXPLICIT" or inst.coords is None:
        out += ["EDGE_WEIGHT_TYPE : EXPLICIT", "EDGE_WEIGHT_FORMAT : FULL_MATRIX", "EDGE_WEIGHT_SECTION"]
        out += [" ".join(repr(float(x)) for x in row) for row in inst.cost]
    else:
        out += [f"EDGE_WEIGHT_TYPE : {kind}", "NODE_COORD_SECTION"]
        out += [f"{i + 1} {x:g} {y:g}" for i, (x, y) in enumerate(inst.coords)]
    out.append("NODE_SCORE_SECTION")
    out += [f"{i + 1} {s:g}" for i, s in enumerate(inst.score)]
    if inst.closed:
        out += ["DEPOT_SECTION", f" {inst.start + 1}", " -1"]
    out.append("EOF")
    path.write_text("\n".join(out) + "\n")
    return path


# --------------------------------------------------------------------------
# Chao


def parse_chao(path) -> Instance:
    """Chao/Tsiligirides text: a 't_max P' header, then one 'x y score' line per vertex.

    P is the number of paths and must be 1. The first vertex is the start,
    the second the end, and costs are exact Euclidean distances.
    """
    path = Path(path)
    rows = [(i, ln.split()) for i, ln in enumerate(path.read_text().splitlines(), start=1) if ln.strip()]
    if not rows:
        raise MalformedHeaderError("empty file", path=path, line=1)
    lineno, head = rows[0]
    if len(head) != 2:
        raise MalformedHeaderError("header must be 't_max P'", path=path, line=lineno)
    t_max = _number(head[0], path, lineno, "t_max")
    paths = _number(head[1], path, lineno, "P")
    if paths != 1:
        raise MalformedHeaderError(f"only single-path instances are supported (P={paths:g})", path=path, line=lineno, field="P")
    body = rows[1:]
    n = len(body)
    if n < 2:
        raise MalformedHeaderError("need at least start and end vertex lines", path=path, line=lineno)
    data = np.zeros((n, 3))
    for k, (ln, toks) in enumerate(body):
        if len(toks) != 3:
            raise MalformedHeaderError("vertex line must be 'x y score'", path=path, line=ln)
        for c, (tok, fld) in enumerate(zip(toks, ("x", "y", "score"))):
            data[k, c] = _number(tok, path, ln, fld)
    return _checked_instance(
        path,
        name=path.stem,
        cost=euclidean_costs(data[:, :2]),
        score=data[:, 2],
        t_max=t_max,
        start=0,
        end=1,
        coords=data[:, :2],
        rounding="exact-euclidean",
    )


def parse(path, format: str | None = None) -> Instance:
    """Load an instance. ``format`` is one of oplib/chao/json, or inferred from the suffix."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = format or {".json": "json", ".oplib": "oplib", ".op": "oplib", ".gop": "oplib", ".tsp": "oplib"}.get(
        path.suffix.lower(), "chao"
    )
    if fmt == "json":
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
        return from_json_dict(d, path)
    if fmt == "oplib":
        return parse_oplib(path)
    if fmt == "chao":
        return parse_chao(path)
    raise ValueError(f"unknown format {format!r}")
