"""Similarity graphs on a sequence of observations.

Nodes are 0-based internally; the edge-list file format is 1-based.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ._backend import kernels


class GraphError(ValueError):
    """Raised for invalid graphs, inputs, or infeasible constructions."""


def as_observations(values) -> np.ndarray:
    """Validate an ``n x d`` observation matrix (1-D input is one column)."""
    obs = np.asarray(values, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.ndim != 2:
        raise GraphError(f"observations must be 2-D, got shape {obs.shape}")
    if obs.shape[0] < 2:
        raise GraphError("need at least 2 observations")
    bad = ~np.isfinite(obs).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise GraphError(f"non-finite value in observation row {row + 1}")
    return obs


@dataclass(frozen=True)
class DistanceMatrix:
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise GraphError(f"distance matrix must be square, got {d.shape}")
        if not np.isfinite(d).all():
            raise GraphError("distance matrix has non-finite entries")
        if np.any(np.diag(d) != 0):
            raise GraphError("distance matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise GraphError("distance matrix must be symmetric")
        if (d < 0).any():
            raise GraphError("distances must be nonnegative")
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return self.dist.shape[0]


def compute_distances(obs, metric: str = "euclidean") -> DistanceMatrix:
    """Pairwise distances between rows, ``metric`` in {'euclidean', 'l1'}."""
    obs = as_observations(obs)
    names = {"euclidean": "euclidean", "l1": "cityblock"}
    if metric not in names:
        raise GraphError(f"unknown metric {metric!r}; use 'euclidean' or 'l1'")
    return DistanceMatrix(squareform(pdist(obs, metric=names[metric])))


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Simple undirected graph stored as a sorted ``(m, 2)`` edge array."""

    n: int
    edges: np.ndarray
    kind: str = "edges"
    k: int | None = None
    _csr: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n)
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if n < 2:
            raise GraphError("graph needs at least 2 nodes")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError(f"edge endpoint out of range [1, {n}]")
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise GraphError("duplicate edges are not allowed")
        e.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "_csr", _to_csr(n, e))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self._csr[0])

    @property
    def sum_sq_degrees(self) -> int:
        return int(np.sum(self.degrees.astype(np.int64) ** 2))

    @property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """``(indptr, indices)`` adjacency, both int64."""
        return self._csr

    def relabel(self, perm) -> "SimilarityGraph":
        """Graph with node ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return SimilarityGraph(self.n, perm[self.edges], kind=self.kind, k=self.k)

    def __eq__(self, other):
        if not isinstance(other, SimilarityGraph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    __hash__ = None


def _to_csr(n: int, edges: np.ndarray):
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    indices = np.ascontiguousarray(dst[order], dtype=np.int64)
    indptr.setflags(write=False)
    indices.setflags(write=False)
    return indptr, indices


def _pair_index(n: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    # position of (i, j), i < j, in np.triu_indices(n, 1) order
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


class _SortedPairs:
    """Upper-triangle pairs sorted by (weight, i, j)."""

    def __init__(self, dist: DistanceMatrix):
        n = dist.n
        ii, jj = np.triu_indices(n, 1)
        w = dist.dist[ii, jj]
        order = np.lexsort((jj, ii, w))
        self.n = n
        self.ii = np.ascontiguousarray(ii[order], dtype=np.int64)
        self.jj = np.ascontiguousarray(jj[order], dtype=np.int64)
        self.rank_of = np.empty(len(order), dtype=np.int64)
        self.rank_of[order] = np.arange(len(order))
        self.used = np.zeros(len(order), dtype=np.uint8)

    def exclude(self, edges) -> None:
        e = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
        if len(e):
            self.used[self.rank_of[_pair_index(self.n, e[:, 0], e[:, 1])]] = 1

    def spanning_tree(self) -> np.ndarray:
        acc, parent = kernels.kruskal_pass(self.ii, self.jj, self.n, self.used)
        if len(acc) < self.n - 1:
            roots = np.asarray(parent)
            stranded = np.flatnonzero(roots != roots[0])
            comp = stranded[roots[stranded] == roots[stranded[0]]]
            shown = ", ".join(str(v + 1) for v in comp[:10])
            more = "" if len(comp) <= 10 else f", ... ({len(comp)} nodes)"
            raise GraphError(
                f"graph is disconnected after exclusion; stranded component: {{{shown}{more}}}"
            )
        return np.column_stack([self.ii[acc], self.jj[acc]])


def build_mst(dist: DistanceMatrix, excluded=()) -> SimilarityGraph:
    """Minimum spanning tree avoiding ``excluded`` pairs (0-based).

    Equal weights are broken toward the lexicographically smaller pair, so the
    tree is unique and depends only on the ranks of the distances.
    """
    pairs = _SortedPairs(dist)
    pairs.exclude(list(excluded))
    return SimilarityGraph(dist.n, pairs.spanning_tree(), kind="mst", k=1)


def build_kmst(dist: DistanceMatrix, k: int = 5) -> SimilarityGraph:
    """Union of ``k`` greedily built, pairwise edge-disjoint spanning trees."""
    n = dist.n
    if k < 1:
        raise GraphError("k must be a positive integer")
    if k * (n - 1) > n * (n - 1) // 2:
        raise GraphError(
            f"{k}-MST needs {k * (n - 1)} edges but only {n * (n - 1) // 2} pairs exist for n={n}"
        )
    pairs = _SortedPairs(dist)
    trees = [pairs.spanning_tree() for _ in range(k)]
    return SimilarityGraph(n, np.concatenate(trees), kind="kmst" if k > 1 else "mst", k=k)


def graph_from_edges(n: int, edges_one_based) -> SimilarityGraph:
    """Graph from 1-based node pairs."""
    e = np.asarray(edges_one_based, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 1 or e.max() > n):
        raise GraphError(f"edge endpoint out of range [1, {n}]")
    return SimilarityGraph(n, e - 1)


@dataclass(frozen=True)
class GraphStats:
    """Degree and hub statistics entering the asymptotic graph conditions."""

    n: int
    edge_count: int
    sum_sq_degrees: int
    max_degree: int
    sum_AeBe: int
    sum_Ae_sq: int
    condition_ratios: dict

    def warnings(self) -> list[str]:
        """Human-readable flags for conditions that look violated."""
        r = self.condition_ratios
        out = []
        if not 1.0 <= r["alpha"] < 1.5:
            out.append(f"edge growth exponent alpha={r['alpha']:.3f} outside [1, 1.5)")
        if r["hub_AB"] > 1.0:
            out.append(f"hub ratio sum|A_e||B_e|/n^(1.5 alpha)={r['hub_AB']:.3f} exceeds 1")
        if r["hub_AA"] > 1.0:
            out.append(f"hub ratio sum|A_e|^2/n^(alpha+0.5)={r['hub_AA']:.3f} exceeds 1")
        if r["diff"] < 0.05:
            out.append(
                f"degree spread ratio {r['diff']:.3g} is near 0; Z_diff is poorly defined"
            )
        return out


def graph_diagnostics(g: SimilarityGraph) -> GraphStats:
    """Exact degree/hub statistics of ``g``.

    ``A_e`` is the set of edges touching either endpoint of ``e``; ``B_e`` the
    set of edges touching any edge of ``A_e``.
    """
    n, m = g.n, g.edge_count
    deg = g.degrees.astype(np.int64)
    sum_sq = int(np.sum(deg**2))
    if m == 0:
        ratios = {"alpha": float("nan"), "hub_AB": 0.0, "hub_AA": 0.0, "diff": 0.0}
        return GraphStats(n, 0, 0, 0, 0, 0, ratios)
    indptr, indices = g.csr
    u, v = g.edges[:, 0], g.edges[:, 1]
    a_size = deg[u] + deg[v] - 1

    b_size = np.empty(m, dtype=np.int64)
    mark = np.zeros(n, dtype=bool)
    for idx in range(m):
        a, b = u[idx], v[idx]
        nodes = np.unique(np.concatenate([indices[indptr[a]:indptr[a + 1]],
                                          indices[indptr[b]:indptr[b + 1]]]))
        mark[nodes] = True
        # edges incident to the node set, each inner edge seen from both ends
        nbrs = np.concatenate([indices[indptr[s]:indptr[s + 1]] for s in nodes])
        inner = int(mark[nbrs].sum()) // 2
        b_size[idx] = int(deg[nodes].sum()) - inner
        mark[nodes] = False

    sum_ab = int(np.sum(a_size * b_size))
    sum_aa = int(np.sum(a_size**2))
    alpha = math.log(m) / math.log(n) if m > 1 else 1.0
    ratios = {
        "alpha": alpha,
        "hub_AB": sum_ab / n ** (1.5 * alpha),
        "hub_AA": sum_aa / n ** (alpha + 0.5),
        "diff": (sum_sq - 4.0 * m * m / n) / sum_sq,
    }
    return GraphStats(n, m, sum_sq, int(deg.max()), sum_ab, sum_aa, ratios)


def warn_conditions(stats: GraphStats) -> list[str]:
    msgs = stats.warnings()
    for msg in msgs:
        warnings.warn(msg, stacklevel=2)
    return msgs
