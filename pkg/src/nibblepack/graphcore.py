"""Graph substrate: compressed-row graphs, geometric graphs and test-bed generators."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from . import _kernels
from .domains import PointCloud
from .errors import NibblepackError

BRUTE_FORCE_SPHERE_LIMIT = 100_000


@dataclass(frozen=True)
class DegreeProfile:
    max_degree: int
    max_codegree: int
    histogram: dict[int, int]


class Graph:
    """Undirected simple graph stored as sorted compressed rows.

    ``indices[indptr[v]:indptr[v+1]]`` is the sorted neighbour list of ``v``.
    Instances are treated as immutable; derived quantities are cached.
    ``labels`` optionally carries an external id per vertex (a point index,
    or the vertex id in a parent graph).
    """

    def __init__(self, indptr, indices, labels=None, meta: Optional[dict] = None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        self.meta = dict(meta or {})
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False

    # -- construction --------------------------------------------------------

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int32))

    @classmethod
    def from_edges(cls, n: int, edges, labels=None) -> "Graph":
        """Build from an iterable/array of vertex pairs; duplicates collapse, loops are rejected."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        lo, hi = np.minimum(e[:, 0], e[:, 1]), np.maximum(e[:, 0], e[:, 1])
        keys = np.unique(lo * n + hi) if n else np.zeros(0, dtype=np.int64)
        lo, hi = keys // max(n, 1), keys % max(n, 1)
        return cls._from_directed(n, np.concatenate([lo, hi]), np.concatenate([hi, lo]), labels)

    @classmethod
    def _from_directed(cls, n, src, dst, labels=None, meta=None) -> "Graph":
        key = np.sort(np.asarray(src, dtype=np.int64) * max(n, 1) + dst)
        src, dst = key // max(n, 1), key % max(n, 1)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(indptr, dst, labels, meta)

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, deg: np.ndarray, labels=None, meta=None) -> "Graph":
        """From a padded table whose row ``v`` holds ``deg[v]`` neighbours in any order."""
        n = deg.shape[0]
        src = np.repeat(np.arange(n, dtype=np.int64), deg)
        mask = np.arange(adj.shape[1])[None, :] < deg[:, None]
        return cls._from_directed(n, src, adj[mask].astype(np.int64), labels, meta)

    # -- basic queries -------------------------------------------------------

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1

    def __len__(self) -> int:
        return self.n

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.diff(self.indptr)
        d.flags.writeable = False
        return d

    @property
    def num_edges(self) -> int:
        return int(self.indices.shape[0] // 2)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        k = np.searchsorted(row, v)
        return bool(k < row.shape[0] and row[k] == v)

    def edges(self) -> np.ndarray:
        """All edges as an (m, 2) array with u < v, sorted lexicographically."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep].astype(np.int64)], axis=1)

    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @cached_property
    def vertex_codegrees(self) -> np.ndarray:
        """For each vertex, its largest codegree with any other vertex."""
        alive = np.ones(self.n, dtype=np.bool_)
        return _kernels.vertex_max_codegree(self.indptr, self.indices, alive)

    def max_codegree(self) -> int:
        return int(self.vertex_codegrees.max()) if self.n else 0

    def profile(self) -> DegreeProfile:
        return degree_profile(self)

    def induced_subgraph(self, vertices) -> "Graph":
        """Subgraph on ``vertices`` (sorted, relabelled 0..k-1); ``labels`` map back to ids here."""
        keep = np.zeros(self.n, dtype=bool)
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        keep[vertices] = True
        new_id = np.full(self.n, -1, dtype=np.int64)
        new_id[vertices] = np.arange(vertices.shape[0])
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = keep[src] & keep[self.indices]
        rows, cols = new_id[src[mask]], new_id[self.indices[mask]]
        indptr = np.zeros(vertices.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=vertices.shape[0]), out=indptr[1:])
        labels = vertices if self.labels is None else self.labels[vertices]
        return Graph(indptr, cols, labels)

    def edges_within(self, vertices) -> int:
        """Number of edges of the subgraph induced on ``vertices``."""
        mask = np.zeros(self.n, dtype=bool)
        mask[np.asarray(vertices, dtype=np.int64)] = True
        src = np.repeat(np.arange(self.n), self.degrees)
        return int(np.count_nonzero(mask[src] & mask[self.indices]) // 2)

    def padded(self, width: int) -> tuple[np.ndarray, np.ndarray]:
        """Padded adjacency table of the given row width plus a degree vector."""
        deg = self.degrees.astype(np.int64)
        if self.n and deg.max() > width:
            raise ValueError("row width smaller than the maximum degree")
        adj = np.full((self.n, max(width, 1)), -1, dtype=np.int64)
        cols = np.arange(self.indices.shape[0]) - np.repeat(self.indptr[:-1], deg)
        adj[np.repeat(np.arange(self.n), deg), cols] = self.indices
        return adj, deg.copy()

    # -- comparison and serialisation ----------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return np.array_equal(self.indptr, other.indptr) and np.array_equal(self.indices, other.indices)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.num_edges})"

    def to_json(self) -> dict:
        return {"n": self.n, "edges": self.edges().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Graph":
        return cls.from_edges(int(obj["n"]), obj["edges"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    def write(self, path: Union[str, Path], binary: bool = False) -> None:
        path = Path(path)
        if binary:
            e = self.edges()
            header = np.array([self.n, e.shape[0]], dtype="<u4")
            path.write_bytes(header.tobytes() + e.astype("<u4").tobytes())
        else:
            path.write_text(self.dumps() + "\n")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "Graph":
        """Read JSON, or the binary layout: u32 ``n``, u32 ``m``, then ``m`` u32 pairs (little-endian)."""
        raw = Path(path).read_bytes()
        if raw[:1] == b"{":
            return cls.from_json(json.loads(raw))
        head = np.frombuffer(raw[:8], dtype="<u4")
        e = np.frombuffer(raw[8:], dtype="<u4").reshape(-1, 2)
        if e.shape[0] != head[1]:
            raise ValueError("binary graph is truncated")
        return cls.from_edges(int(head[0]), e.astype(np.int64))


# -- degree statistics ---------------------------------------------------------


def degree_profile(G: Graph) -> DegreeProfile:
    """Exact maximum degree, maximum codegree and degree histogram."""
    if G.n == 0:
        return DegreeProfile(0, 0, {})
    values, counts = np.unique(G.degrees, return_counts=True)
    return DegreeProfile(G.max_degree(), G.max_codegree(), {int(v): int(c) for v, c in zip(values, counts)})


def dist_at_least(G: Graph, u: int, v: int, k: int) -> bool:
    """True iff no path of length < k joins ``u`` and ``v``."""
    if u == v:
        raise ValueError("u and v must differ")
    if k <= 1:
        return True
    return not _kernels.bfs_within(G.indptr, G.indices, int(u), int(v), int(k) - 1)


def disjoint_copies(G: Graph, k: int) -> Graph:
    """``k`` vertex-disjoint copies of ``G``; copy ``c`` occupies ids ``c*n .. c*n+n-1``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return G
    n, m2 = G.n, G.indices.shape[0]
    indptr = np.concatenate([[0], (G.indptr[1:][None, :] + m2 * np.arange(k)[:, None]).ravel()])
    indices = (G.indices[None, :].astype(np.int64) + n * np.arange(k)[:, None]).ravel()
    return Graph(indptr, indices, np.tile(np.arange(n), k))


# -- geometric graphs ----------------------------------------------------------


def _pair_close(cloud: PointCloud, i: np.ndarray, j: np.ndarray, threshold: float) -> np.ndarray:
    """The closed edge condition for candidate pairs; shared by every construction path."""
    P = cloud.points
    if cloud.domain.euclidean:
        diff = cloud.domain.displacement(P[i], P[j])
        return np.einsum("ij,ij->i", diff, diff) <= threshold * threshold
    return np.einsum("ij,ij->i", P[i], P[j]) >= math.cos(threshold)


def _brute_pairs(cloud: PointCloud, threshold: float, block: int = 512) -> np.ndarray:
    n = len(cloud)
    found = []
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        i = np.repeat(rows, n - rows - 1)
        # for each row r, columns r+1 .. n-1
        offsets = np.arange(i.shape[0]) - np.repeat(np.cumsum(n - rows - 1) - (n - rows - 1), n - rows - 1)
        j = i + 1 + offsets
        keep = _pair_close(cloud, i, j, threshold)
        found.append(np.stack([i[keep], j[keep]], axis=1))
    return np.concatenate(found) if found else np.zeros((0, 2), dtype=np.int64)


def _cell_pairs(cloud: PointCloud, threshold: float) -> Optional[np.ndarray]:
    """Candidate search on a uniform grid of cells with side >= threshold.

    Returns ``None`` when the grid would not help (fewer than three cells per
    axis, or a 3^d stencil larger than the cloud).
    """
    dom, P = cloud.domain, cloud.points
    n, d = P.shape
    if dom.kind == "box":
        extent, origin, wrap = dom.param, 0.0, True
    else:
        extent, origin, wrap = 2.0 * dom.param, -dom.param, False
    m = int(extent // threshold) if threshold > 0 else 0
    if m < 3 or 3 ** d > max(2 * n, 27):
        return None
    if m ** d > 2 ** 62:
        return None
    side = extent / m
    cells = np.clip(np.floor((P - origin) / side).astype(np.int64), 0, m - 1)
    weights = m ** np.arange(d, dtype=np.int64)
    keys = cells @ weights
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    found = []
    for off in itertools.product((-1, 0, 1), repeat=d):
        nb = cells + np.asarray(off, dtype=np.int64)
        if wrap:
            nb %= m
            valid = np.ones(n, dtype=bool)
        else:
            valid = np.all((nb >= 0) & (nb < m), axis=1)
        src = np.nonzero(valid)[0]
        nkeys = nb[src] @ weights
        lo = np.searchsorted(sorted_keys, nkeys, "left")
        hi = np.searchsorted(sorted_keys, nkeys, "right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            continue
        i = np.repeat(src, counts)
        pos = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts) + np.repeat(lo, counts)
        j = order[pos]
        keep = i < j
        i, j = i[keep], j[keep]
        close = _pair_close(cloud, i, j, threshold)
        found.append(np.stack([i[close], j[close]], axis=1))
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate(found)
    return np.unique(pairs, axis=0)


def build_geometric_graph(cloud: PointCloud, threshold: float, method: str = "auto") -> Graph:
    """Threshold graph of a point cloud.

    Euclidean domains join points at (minimum-image) distance ``<= threshold``;
    the sphere joins points with inner product ``>= cos(threshold)``.  The
    cell grid and the all-pairs scan share the same edge predicate, so their
    outputs are identical.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    n = len(cloud)
    pairs = None
    if method not in ("auto", "cells", "brute"):
        raise ValueError(f"unknown method {method!r}")
    if method != "brute" and cloud.domain.euclidean and n > 1:
        pairs = _cell_pairs(cloud, threshold)
        if pairs is None and method == "cells":
            raise ValueError("cell grid unavailable for this cloud/threshold")
    if pairs is None:
        pairs = _brute_pairs(cloud, threshold) if n > 1 else np.zeros((0, 2), dtype=np.int64)
    return Graph.from_edges(n, pairs)


# -- generators ----------------------------------------------------------------


class GenerationFailed(NibblepackError):
    pass


def _pair_stubs(n: int, k: int, rng: np.random.Generator, group: Optional[np.ndarray] = None,
                stall_limit: int = 100) -> Optional[np.ndarray]:
    """One pairing-model attempt for a k-regular simple graph on n vertices.

    Stubs are shuffled and paired; pairs that would form a loop, a repeated
    edge, or (when ``group`` is given) an edge inside a group are returned to
    the pool and re-paired.  Returns ``None`` if the pool stops shrinking.
    """
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64)
    stubs = np.repeat(np.arange(n, dtype=np.int64), k)
    accepted = np.zeros(0, dtype=np.int64)
    stalls = 0
    while stubs.size:
        rng.shuffle(stubs)
        u, v = stubs[0::2], stubs[1::2]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keys = lo * n + hi
        ok = lo != hi
        if group is not None:
            ok &= group[lo] != group[hi]
        pos = np.searchsorted(accepted, keys)
        ok &= accepted[np.minimum(pos, accepted.shape[0] - 1)] != keys if accepted.size else True
        # among the batch keep the first copy of each new key
        cand = np.nonzero(ok)[0]
        _, first = np.unique(keys[cand], return_index=True)
        good = np.zeros(keys.shape[0], dtype=bool)
        good[cand[first]] = True
        if not good.any():
            stalls += 1
            if stalls > stall_limit:
                return None
        else:
            stalls = 0
            accepted = np.sort(np.concatenate([accepted, keys[good]]))
        stubs = np.concatenate([u[~good], v[~good]])
    return np.stack([accepted // n, accepted % n], axis=1)


def random_regular(n: int, k: int, rng: np.random.Generator, max_tries: int = 100) -> Graph:
    if (n * k) % 2 or not 0 <= k < max(n, 1):
        raise ValueError("need n*k even and 0 <= k < n")
    for _ in range(max_tries):
        edges = _pair_stubs(n, k, rng)
        if edges is not None:
            return Graph.from_edges(n, edges)
    raise GenerationFailed(f"no simple {k}-regular graph on {n} vertices after {max_tries} tries")


def random_regular_capped(n: int, delta: int, codegree_cap: int, rng: np.random.Generator,
                          max_attempts: int = 20) -> Graph:
    """A ``delta``-regular simple graph resampled until its maximum codegree is ``<= codegree_cap``.

    The number of whole-graph samples used is stored in ``G.meta["attempts"]``.
    """
    if (n * delta) % 2:
        raise ValueError("n * delta must be even")
    for attempt in range(1, max_attempts + 1):
        G = random_regular(n, delta, rng)
        if G.max_codegree() <= codegree_cap:
            G.meta.update(attempts=attempt, max_codegree=G.max_codegree())
            return G
    raise GenerationFailed(
        f"codegree cap {codegree_cap} not met in {max_attempts} samples (n={n}, delta={delta})")


def _integral(x: float, what: str) -> int:
    r = round(x)
    if abs(x - r) > 1e-9:
        raise ValueError(f"{what} must be an integer, got {x}")
    return int(r)


def sharpness_construction(n: int, delta: int, eta: float, rng: np.random.Generator,
                           max_retries: int = 100) -> Graph:
    """Disjoint cliques of size ``eta*delta`` plus a random ``(1-eta)*delta``-regular overlay.

    Overlay pairs that would repeat a clique edge are re-paired, so every vertex
    has degree exactly ``delta - 1``.  The realised maximum codegree is stored
    in ``G.meta["max_codegree"]``.
    """
    size = _integral(eta * delta, "eta*delta")
    cliques = _integral(n / size, "n/(eta*delta)") if size else 0
    if size < 1:
        raise ValueError("eta*delta must be at least 1")
    over = _integral((1 - eta) * delta, "(1-eta)*delta")
    if (over * n) % 2:
        raise ValueError("(1-eta)*delta*n must be even")
    group = np.arange(n) // size
    a, b = np.triu_indices(size, 1)
    base = np.arange(cliques)[:, None] * size
    clique_edges = np.stack([(base + a).ravel(), (base + b).ravel()], axis=1)
    for attempt in range(1, max_retries + 1):
        overlay = _pair_stubs(n, over, rng, group=group)
        if overlay is None:
            continue
        G = Graph.from_edges(n, np.concatenate([clique_edges, overlay]))
        G.meta.update(attempts=attempt, clique_size=size, overlay_degree=over,
                      max_codegree=G.max_codegree())
        return G
    raise GenerationFailed(f"overlay could not be realised simple in {max_retries} retries")


def gnp(n: int, p: float, rng: np.random.Generator) -> Graph:
    i, j = np.triu_indices(n, 1)
    keep = rng.random(i.shape[0]) < p
    return Graph.from_edges(n, np.stack([i[keep], j[keep]], axis=1))


def complete_graph(n: int) -> Graph:
    i, j = np.triu_indices(n, 1)
    return Graph.from_edges(n, np.stack([i, j], axis=1))


def cycle_graph(n: int) -> Graph:
    v = np.arange(n)
    return Graph.from_edges(n, np.stack([v, (v + 1) % n], axis=1))


def path_graph(n: int) -> Graph:
    v = np.arange(n - 1)
    return Graph.from_edges(n, np.stack([v, v + 1], axis=1))


def complete_bipartite(a: int, b: int) -> Graph:
    i, j = np.meshgrid(np.arange(a), a + np.arange(b), indexing="ij")
    return Graph.from_edges(a + b, np.stack([i.ravel(), j.ravel()], axis=1))


class CayleyGraph:
    """Implicit Cayley graph on Z_m with a symmetric generator set.

    Vertices are never materialised; the object offers the read-only neighbour
    interface used by the local samplers in :mod:`nibblepack.analysis`.
    Every vertex looks the same, so degree and codegree follow from the
    generator set alone.
    """

    def __init__(self, m: int, generators: Iterable[int]):
        gens = np.unique(np.asarray(list(generators), dtype=np.int64) % m)
        if np.any(gens == 0):
            raise ValueError("0 cannot be a generator")
        if not np.array_equal(gens, np.unique((-gens) % m)):
            raise ValueError("generator set must be closed under negation")
        self.m = int(m)
        self.generators = gens

    @classmethod
    def random(cls, m: int, degree: int, rng: np.random.Generator) -> "CayleyGraph":
        if degree % 2:
            raise ValueError("degree must be even")
        half = set()
        while len(half) < degree // 2:
            g = int(rng.integers(1, m))
            if 2 * g % m and g not in half and (m - g) not in half:
                half.add(g)
        half = np.fromiter(half, dtype=np.int64)
        return cls(m, np.concatenate([half, m - half]))

    @property
    def n(self) -> int:
        return self.m

    def neighbors(self, v: int) -> np.ndarray:
        return np.sort((v + self.generators) % self.m)

    def degree(self, v: int) -> int:
        return int(self.generators.shape[0])

    def max_degree(self) -> int:
        return int(self.generators.shape[0])

    @cached_property
    def _sum_counts(self) -> tuple[np.ndarray, np.ndarray]:
        s = ((self.generators[:, None] + self.generators[None, :]) % self.m).ravel()
        return np.unique(s, return_counts=True)

    def codegree(self, u: int, v: int) -> int:
        g = (v - u) % self.m
        values, counts = self._sum_counts
        k = np.searchsorted(values, g)
        return int(counts[k]) if k < values.shape[0] and values[k] == g else 0

    def max_codegree(self) -> int:
        values, counts = self._sum_counts
        counts = counts[values != 0]
        return int(counts.max()) if counts.size else 0

