"""Correlation matrix, metric distance transform and minimum spanning tree.

The complete asset graph carries the distance d = sqrt(2*(1 - c)) on each
pair, mapping correlation c in [-1, 1] onto [0, 2]. Its minimum spanning
tree keeps the n-1 strongest-correlation links, which is the skeleton the
community detection runs on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, ZeroVarianceAsset
from .returns import ReturnPanel

#: Assets with return variance below this are rejected outright.
MIN_RETURN_VARIANCE = 1e-18


@dataclass(frozen=True)
class CorrelationMatrix:
    tickers: tuple[str, ...]
    values: np.ndarray  # symmetric, unit diagonal, entries in [-1, 1]

    def __post_init__(self):
        object.__setattr__(self, "tickers", tuple(self.tickers))
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        n = len(self.tickers)
        if v.shape != (n, n):
            raise DataError("correlation matrix shape mismatch")
        if not np.array_equal(np.diag(v), np.ones(n)):
            raise DataError("correlation diagonal must be exactly 1")
        if not np.array_equal(v, v.T):
            raise DataError("correlation matrix must be symmetric")
        if (np.abs(v) > 1 + 1e-12).any():
            raise DataError("correlation entries must lie in [-1, 1]")


@dataclass(frozen=True)
class DistanceMatrix:
    tickers: tuple[str, ...]
    values: np.ndarray  # symmetric, zero diagonal, entries in [0, 2]

    def __post_init__(self):
        object.__setattr__(self, "tickers", tuple(self.tickers))
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        n = len(self.tickers)
        if v.shape != (n, n):
            raise DataError("distance matrix shape mismatch")
        if np.diag(v).any():
            raise DataError("distance diagonal must be exactly 0")
        if not np.array_equal(v, v.T):
            raise DataError("distance matrix must be symmetric")
        if (v < 0).any() or (v > 2 + 1e-12).any():
            raise DataError("distance entries must lie in [0, 2]")


class TreeEdge(NamedTuple):
    a: str
    b: str
    weight: float


@dataclass(frozen=True)
class SpanningTree:
    nodes: tuple[str, ...]
    edges: tuple[TreeEdge, ...]
    total_weight: float

    def __post_init__(self):
        if len(self.edges) != len(self.nodes) - 1:
            raise DataError("spanning tree must have n-1 edges")


def pearson_matrix(rp: ReturnPanel, *,
                   min_variance: float = MIN_RETURN_VARIANCE) -> CorrelationMatrix:
    """Pairwise Pearson correlations of asset returns over the panel window."""
    variances = rp.returns.var(axis=1)
    for ticker, var in zip(rp.tickers, variances):
        if var < min_variance:
            raise ZeroVarianceAsset(ticker)
    corr = np.corrcoef(rp.returns)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(tickers=rp.tickers, values=corr)


def to_distance(cm: CorrelationMatrix) -> DistanceMatrix:
    """Elementwise sqrt(2*(1 - c)); exact zero diagonal."""
    dist = np.sqrt(np.clip(2.0 * (1.0 - cm.values), 0.0, 4.0))
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(tickers=cm.tickers, values=dist)


class _UnionFind:
    """Union by rank with path halving; equal ranks keep the smaller root."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb] or (
                self.rank[ra] == self.rank[rb] and rb < ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def mst(dm: DistanceMatrix) -> SpanningTree:
    """Kruskal on the complete graph, deterministic under ties.

    Candidate edges sort by (weight, smaller ticker, larger ticker), so
    identical runs and platforms produce identical trees.
    """
    n = len(dm.tickers)
    if n < 2:
        raise DataError("mst needs at least 2 nodes")
    iu, ju = np.triu_indices(n, 1)
    candidates = []
    for i, j in zip(iu.tolist(), ju.tolist()):
        a, b = dm.tickers[i], dm.tickers[j]
        if b < a:
            a, b = b, a
        candidates.append((float(dm.values[i, j]), a, b, i, j))
    candidates.sort(key=lambda e: (e[0], e[1], e[2]))

    uf = _UnionFind(n)
    edges: list[TreeEdge] = []
    total = 0.0
    for w, a, b, i, j in candidates:
        if uf.union(i, j):
            edges.append(TreeEdge(a, b, w))
            total += w
            if len(edges) == n - 1:
                break
    return SpanningTree(nodes=dm.tickers, edges=tuple(edges), total_weight=total)
