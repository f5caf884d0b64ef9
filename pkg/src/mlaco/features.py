"""Per-edge features f1..f5 for OP instances.

f1..f3 are local graph ratios; f4 and f5 are the ranking- and
correlation-based measures over a SampleSet, computed from the route edge
lists in O(mn + n^2) rather than from n^2-bit incidence strings.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DegenerateSamplesError, InvalidInstanceError
from .instance import Instance, Route
from .sampler import SampleSet, sample

log = logging.getLogger(__name__)

COST_FLOOR = 1e-9
FEATURE_NAMES = ("f1", "f2", "f3", "f4", "f5")


@dataclass(eq=False)
class EdgeFeatureMatrix:
    """Feature rows for directed edges, optionally labelled +1/-1.

    Rows of a single-instance matrix are in row-major order over i != j.
    ``n`` is 0 for matrices concatenated from several instances.
    """

    n: int
    i: np.ndarray
    j: np.ndarray
    X: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return int(self.X.shape[0])

    @property
    def positives(self) -> int:
        return 0 if self.labels is None else int(np.sum(self.labels == 1))

    def dense(self, column: int) -> np.ndarray:
        """One feature column as an n x n matrix (NaN on the diagonal)."""
        if self.n <= 0:
            raise ValueError("dense view needs a single-instance matrix")
        out = np.full((self.n, self.n), np.nan)
        out[self.i, self.j] = self.X[:, column]
        return out

    @classmethod
    def concat(cls, parts: list["EdgeFeatureMatrix"]) -> "EdgeFeatureMatrix":
        if not parts:
            raise ValueError("nothing to concatenate")
        has_labels = all(p.labels is not None for p in parts)
        return cls(
            n=parts[0].n if len(parts) == 1 else 0,
            i=np.concatenate([p.i for p in parts]),
            j=np.concatenate([p.j for p in parts]),
            X=np.vstack([p.X for p in parts]),
            labels=np.concatenate([p.labels for p in parts]) if has_labels else None,
        )

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            header = ["i", "j", *FEATURE_NAMES]
            if self.labels is not None:
                header.append("label")
            w.writerow(header)
            for r in range(len(self)):
                row = [int(self.i[r]) + 1, int(self.j[r]) + 1, *(repr(float(x)) for x in self.X[r])]
                if self.labels is not None:
                    row.append(int(self.labels[r]))
                w.writerow(row)
        return path

    @classmethod
    def from_csv(cls, path, n: int | None = None) -> "EdgeFeatureMatrix":
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
        data = np.atleast_1d(data)
        i = data["i"].astype(np.int64) - 1
        j = data["j"].astype(np.int64) - 1
        X = np.column_stack([data[name] for name in FEATURE_NAMES])
        labels = data["label"].astype(np.int64) if "label" in data.dtype.names else None
        if n is None:
            # a single instance lists each ordered pair exactly once
            k = int(max(i.max(), j.max())) + 1
            n = k if len(i) == k * (k - 1) else 0
        return cls(n=n, i=i, j=j, X=X, labels=labels)


def edge_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    return ii.astype(np.int64), jj.astype(np.int64)


def graph_features(inst: Instance) -> np.ndarray:
    """f1, f2, f3 as an (n, n, 3) array; the diagonal is zero.

    f3 uses the cancelled form min_k c_kj / c_ij, which equals the ratio
    definition whenever s_j > 0 and stays defined when s_j = 0.
    """
    if inst.t_max <= 0:
        raise InvalidInstanceError(f"{inst.name}: t_max must be positive for f1")
    n = inst.n
    off = ~np.eye(n, dtype=bool)
    c = np.maximum(inst.cost, COST_FLOOR)
    out = np.zeros((n, n, 3))
    out[..., 0] = np.where(off, inst.cost / inst.t_max, 0.0)

    ratio = np.where(off, inst.score[None, :] / c, 0.0)
    row_max = ratio.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[..., 1] = np.where((row_max > 0) & off, ratio / row_max, 0.0)

    c_in = np.where(off, c, np.inf)
    col_min = c_in.min(axis=0, keepdims=True)
    out[..., 2] = np.where(off, col_min / c, 0.0)
    return out


@njit(cache=True)
def _accumulate(paths, lengths, ranks, objectives, n):
    m = paths.shape[0]
    f_r = np.zeros((n, n))
    count = np.zeros((n, n), dtype=np.int64)
    s1 = np.zeros((n, n))
    y_bar = 0.0
    for k in range(m):
        y_bar += objectives[k]
    y_bar /= m
    for k in range(m):
        inv_r = 1.0 / ranks[k]
        dy = objectives[k] - y_bar
        for idx in range(lengths[k] - 1):
            i = paths[k, idx]
            j = paths[k, idx + 1]
            if i == j:
                continue
            f_r[i, j] += inv_r
            count[i, j] += 1
            s1[i, j] += dy
    return f_r, count, s1, y_bar


def statistical_measures(samples: SampleSet, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw ranking measure f_r and Pearson correlation f_c, each (n, n)."""
    y = samples.objectives
    m = samples.m
    f_r, count, s1, y_bar = _accumulate(samples.paths, samples.lengths, samples.rankings, y, n)
    y_d = float(np.sum(y - y_bar))
    sigma_y = float(np.sum((y - y_bar) ** 2))
    if sigma_y <= 0.0:
        raise DegenerateSamplesError("all sampled objectives are equal; retry with a larger m")
    x_bar = count / m
    sigma_c = (1.0 - x_bar) * s1 - x_bar * (y_d - s1)
    sigma_x = x_bar * (1.0 - x_bar) * m
    degenerate = (count == 0) | (count == m)
    with np.errstate(invalid="ignore", divide="ignore"):
        f_c = np.where(degenerate, 0.0, sigma_c / np.sqrt(sigma_x * sigma_y))
    np.fill_diagonal(f_c, 0.0)
    return f_r, f_c


def statistical_features(inst: Instance, samples: SampleSet) -> np.ndarray:
    """f4, f5 as an (n, n, 2) array."""
    if samples.m < 1:
        raise ValueError("samples must be nonempty")
    f_r, f_c = statistical_measures(samples, inst.n)
    out = np.zeros((inst.n, inst.n, 2))
    out[..., 0] = f_r / f_r.max()
    top = f_c.max()
    if top <= 0.0:
        top = np.abs(f_c).max()
        log.warning("%s: no positively correlated edge; f5 scaled by max |f_c|", inst.name)
    if top > 0.0:
        out[..., 1] = f_c / top
    return out


def assemble(inst: Instance, samples: SampleSet, optimal: Route | None = None) -> EdgeFeatureMatrix:
    """All five features for every directed edge; labels from ``optimal`` if given."""
    ii, jj = edge_index(inst.n)
    g = graph_features(inst)
    s = statistical_features(inst, samples)
    X = np.concatenate([g[ii, jj], s[ii, jj]], axis=1)
    labels = None
    if optimal is not None:
        on_route = np.zeros((inst.n, inst.n), dtype=bool)
        for a, b in optimal.edges():
            on_route[a, b] = True
        labels = np.where(on_route[ii, jj], 1, -1).astype(np.int64)
    return EdgeFeatureMatrix(n=inst.n, i=ii, j=jj, X=X, labels=labels)


def extract(inst: Instance, m: int | None = None, seed: int = 0, optimal: Route | None = None) -> EdgeFeatureMatrix:
    """Sample ``m`` routes (default 100n) and assemble the feature matrix."""
    m = 100 * inst.n if m is None else m
    return assemble(inst, sample(inst, m, seed), optimal)
