"""Exact and greedy independent sets, and empirical checks of concentration bounds."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from . import _kernels
from .errors import PreconditionViolated, SizeCapExceeded
from .graphcore import CayleyGraph, Graph
from .nibble import verify_independent

BRUTE_FORCE_LIMIT = 60
ENUMERATION_LIMIT = 24

# -- maximum independent sets -------------------------------------------------------


def _bitmasks(G: Graph) -> list[int]:
    masks = []
    for v in range(G.n):
        m = 0
        for u in G.neighbors(v):
            m |= 1 << int(u)
        masks.append(m)
    return masks


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def _clique_cover_size(P: int, nbr: list[int]) -> int:
    """Number of cliques in a greedy clique cover of ``P``; an upper bound on its independence number."""
    count = 0
    while P:
        v = (P & -P).bit_length() - 1
        clique = 1 << v
        cand = P & nbr[v]
        while cand:
            u = (cand & -cand).bit_length() - 1
            clique |= 1 << u
            cand &= nbr[u]
        P &= ~clique
        count += 1
    return count


def brute_force_mis(G: Graph, limit: int = BRUTE_FORCE_LIMIT) -> tuple[int, np.ndarray]:
    """Exact independence number and a witness, by branch and bound on bitsets.

    Vertices of degree at most one are taken greedily (always safe); otherwise
    branch on a maximum-degree vertex.  Subtrees are cut with a greedy
    clique-cover bound, starting from a min-degree greedy solution.
    """
    n = G.n
    if n > limit:
        raise SizeCapExceeded(f"exact search is limited to {limit} vertices, got {n}")
    nbr = _bitmasks(G)
    start = greedy_mis(G, "min-degree")
    best = [len(start), sum(1 << int(v) for v in start)]

    def search(P: int, chosen: int, size: int) -> None:
        while True:
            pick = -1
            for v in _bits(P):
                if bin(P & nbr[v]).count("1") <= 1:
                    pick = v
                    break
            if pick < 0:
                break
            chosen |= 1 << pick
            size += 1
            P &= ~(nbr[pick] | (1 << pick))
        if not P:
            if size > best[0]:
                best[0], best[1] = size, chosen
            return
        if size + _clique_cover_size(P, nbr) <= best[0]:
            return
        v = max(_bits(P), key=lambda x: bin(P & nbr[x]).count("1"))
        search(P & ~(nbr[v] | (1 << v)), chosen | (1 << v), size + 1)
        search(P & ~(1 << v), chosen, size)

    search((1 << n) - 1, 0, 0)
    witness = np.array(sorted(_bits(best[1])), dtype=np.int64)
    if not verify_independent(G, witness):
        raise AssertionError("exact search produced a dependent set")
    return best[0], witness


def enumerate_mis(G: Graph, limit: int = ENUMERATION_LIMIT) -> int:
    """Independence number by checking all ``2^n`` subsets (vectorised)."""
    n = G.n
    if n > limit:
        raise SizeCapExceeded(f"enumeration is limited to {limit} vertices, got {n}")
    if n == 0:
        return 0
    subsets = np.arange(1 << n, dtype=np.uint32)
    ok = np.ones(subsets.shape[0], dtype=bool)
    for u, v in G.edges():
        ok &= ((subsets >> np.uint32(u)) & (subsets >> np.uint32(v)) & np.uint32(1)) == 0
    sizes = np.bitwise_count(subsets) if hasattr(np, "bitwise_count") else np.array([bin(s).count("1") for s in subsets])
    return int(sizes[ok].max())


def greedy_mis(G: Graph, order: str = "index", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Sequential greedy independent set.

    ``order`` is ``"index"`` (ascending id), ``"random"`` (needs ``rng``) or
    ``"min-degree"`` (repeatedly take a vertex of least remaining degree,
    lowest id on ties).
    """
    n = G.n
    if order == "index":
        seq = np.arange(n, dtype=np.int64)
        chosen = _kernels.greedy_by_order(G.indptr, G.indices, seq)
    elif order == "random":
        if rng is None:
            raise ValueError("random order needs an rng")
        chosen = _kernels.greedy_by_order(G.indptr, G.indices, rng.permutation(n).astype(np.int64))
    elif order == "min-degree":
        chosen = _min_degree_greedy(G)
    else:
        raise ValueError(f"unknown order {order!r}")
    I = np.nonzero(chosen)[0]
    if not verify_independent(G, I):
        raise AssertionError("greedy produced a dependent set")
    if n and I.shape[0] * (G.max_degree() + 1) < n:
        raise AssertionError("greedy fell below n/(Delta+1)")
    return I


def _min_degree_greedy(G: Graph) -> np.ndarray:
    deg = G.degrees.astype(np.int64).copy()
    gone = np.zeros(G.n, dtype=bool)
    chosen = np.zeros(G.n, dtype=bool)
    heap = [(int(d), v) for v, d in enumerate(deg)]
    heapq.heapify(heap)
    while heap:
        d, v = heapq.heappop(heap)
        if gone[v] or d != deg[v]:
            continue
        chosen[v] = True
        gone[v] = True
        for w in G.neighbors(v):
            if gone[w]:
                continue
            gone[w] = True
            for x in G.neighbors(w):
                if not gone[x]:
                    deg[x] -= 1
                    heapq.heappush(heap, (int(deg[x]), int(x)))
    return chosen


# -- concentration of surviving degrees ---------------------------------------------------


@dataclass
class TailReport:
    """Empirical upper tail against ``exp(-alpha^2 / (32 gamma eta))``.

    ``mean`` is the average surviving degree (or codegree) and ``mean_bound``
    the corresponding ``(1 - gamma + gamma^2) d`` average.  ``by_class`` splits
    the tail by the starting degree (or codegree) ``d``.
    """

    kind: str
    gamma: float
    alpha: float
    eta: float
    delta: int
    trials: int
    exceedance: float
    stderr: float
    bound: float
    mean: float
    mean_stderr: float
    mean_bound: float
    by_class: dict = field(default_factory=dict)

    @property
    def respected(self) -> bool:
        return self.exceedance <= self.bound

    @property
    def mean_respected(self) -> bool:
        return self.mean <= self.mean_bound + 3.0 * self.mean_stderr


def concentration_bound(gamma: float, alpha: float, eta: float) -> float:
    return math.exp(-alpha * alpha / (32.0 * gamma * eta))


def check_concentration_parameters(gamma: float, alpha: float, eta: float, delta: int) -> None:
    problems = []
    if not 0 < gamma <= 0.5:
        problems.append("gamma must lie in (0, 1/2]")
    if eta < delta ** -0.5 * (1 - 1e-12) or eta > gamma * gamma / 8.0 * (1 + 1e-12):
        problems.append(f"eta={eta} outside [Delta^-1/2, gamma^2/8]=[{delta ** -0.5:.4g}, {gamma * gamma / 8:.4g}]")
    if not 2.0 * gamma * gamma * (1 - 1e-12) <= alpha <= gamma:
        problems.append(f"alpha={alpha} outside [2 gamma^2, gamma]")
    if problems:
        raise PreconditionViolated("; ".join(problems))


def _neighbour_sets(G: Union[Graph, CayleyGraph], vertices) -> dict:
    return {int(v): np.asarray(G.neighbors(int(v)), dtype=np.int64) for v in vertices}


def _exposure(G, protected: np.ndarray, watched: np.ndarray):
    """Candidates for ``A`` that can kill a watched vertex, with the watched vertices each one kills.

    ``A`` is conditioned to avoid ``protected``; a watched vertex dies when
    one of its neighbours outside ``protected`` lands in ``A``.  Returns the
    number of such candidates and a CSR map candidate -> watched positions.
    """
    prot = set(int(x) for x in protected)
    cand, owner = [], []
    for k, w in enumerate(watched):
        nb = np.asarray(G.neighbors(int(w)), dtype=np.int64)
        nb = nb[~np.isin(nb, protected)] if prot else nb
        cand.append(nb)
        owner.append(np.full(nb.shape[0], k, dtype=np.int64))
    cand = np.concatenate(cand) if cand else np.zeros(0, dtype=np.int64)
    owner = np.concatenate(owner) if owner else np.zeros(0, dtype=np.int64)
    ids, inverse = np.unique(cand, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    ptr = np.zeros(ids.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(inverse, minlength=ids.shape[0]), out=ptr[1:])
    return ids.shape[0], ptr, owner[order]


@njit(cache=True)
def _survivors(ptr, kills, positions, row_len, n_watched):
    """For each trial row, the number of watched vertices not hit by the sampled candidates."""
    trials = positions.shape[0]
    out = np.empty(trials, dtype=np.int64)
    stamp = np.full(n_watched, -1, dtype=np.int64)
    for t in range(trials):
        dead = 0
        for j in range(row_len[t]):
            c = positions[t, j]
            for k in range(ptr[c], ptr[c + 1]):
                w = kills[k]
                if stamp[w] != t:
                    stamp[w] = t
                    dead += 1
        out[t] = n_watched - dead
    return out


def _simulate_survivors(M, ptr, kills, n_watched, p, trials, rng, batch=4096) -> np.ndarray:
    """Surviving watched counts over ``trials`` p-random subsets of the ``M`` candidates."""
    out = np.empty(trials, dtype=np.int64)
    if M == 0 or p == 0:
        out[:] = n_watched
        return out
    width = int(M * p + 10.0 * math.sqrt(M * p) + 20)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        gaps = rng.geometric(p, size=(b, width))
        pos = np.cumsum(gaps, axis=1) - 1
        short = pos[:, -1] < M
        while np.any(short):  # rows whose window ran out before the end of the range
            extra = np.cumsum(rng.geometric(p, size=(b, width)), axis=1) + pos[:, -1:]
            pos = np.concatenate([pos, extra], axis=1)
            short = pos[:, -1] < M
        row_len = (pos < M).sum(axis=1)
        out[done:done + b] = _survivors(ptr, kills, pos, row_len, n_watched)
        done += b
    return out


def concentration_tail(
    G: Union[Graph, CayleyGraph],
    gamma: float,
    alpha: float,
    trials: int,
    rng: np.random.Generator,
    eta: Optional[float] = None,
    centres: int = 8,
    pairs: int = 64,
) -> tuple[TailReport, TailReport]:
    """Empirical tails of surviving degrees and codegrees after one nibble.

    With ``A`` p-random (``p = gamma/Delta``) and ``G' = G - (A + N(A))``,
    estimates ``P(d_G'(v) >= (1-gamma+alpha) d_G(v) | v in G')`` and
    ``P(d_G'(u,v) >= (1-gamma+alpha) eta Delta | u,v in G')``.  Conditioning
    on survival means ``A`` is p-random outside ``N[v]`` (or ``N[u] + N[v]``),
    so each trial samples exactly that law around one of ``centres`` random
    vertices (resp. ``pairs`` random two-hop pairs); ``trials`` are split
    evenly among them.  ``eta`` defaults to ``gamma^2/8``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    delta = G.max_degree()
    if delta < 1:
        raise PreconditionViolated("graph has no edges")
    if eta is None:
        eta = gamma * gamma / 8.0
    check_concentration_parameters(gamma, alpha, eta, delta)
    n = G.n
    deg_of = G.degree
    codeg = G.max_codegree()
    if codeg > eta * delta:
        raise PreconditionViolated(f"codegree {codeg} exceeds eta*Delta={eta * delta:.4g}")
    p = gamma / delta
    keep = 1.0 - gamma + alpha
    bound = concentration_bound(gamma, alpha, eta)

    centre_ids = rng.choice(n, size=min(centres, n), replace=False)
    for v in centre_ids:
        if deg_of(int(v)) not in (delta - 1, delta):
            raise PreconditionViolated(f"vertex {v} has degree {deg_of(int(v))}, expected Delta-1 or Delta")
    deg_samples, deg_classes, deg_ratio = [], [], []
    share = _split(trials, len(centre_ids))
    for v, t in zip(centre_ids, share):
        N = np.asarray(G.neighbors(int(v)), dtype=np.int64)
        protected = np.append(N, v)
        M, ptr, kills = _exposure(G, protected, N)
        surv = _simulate_survivors(M, ptr, kills, N.shape[0], p, t, rng)
        deg_samples.append(surv >= keep * N.shape[0])
        deg_classes.append(np.full(t, N.shape[0]))
        deg_ratio.append(surv.astype(float))
    deg_report = _report("degree", gamma, alpha, eta, delta, deg_samples, deg_classes, deg_ratio, bound, gamma)

    pair_list = _two_hop_pairs(G, pairs, rng)
    cod_samples, cod_classes, cod_values = [], [], []
    share = _split(trials, max(len(pair_list), 1))
    for (u, v), t in zip(pair_list, share):
        Nu = np.asarray(G.neighbors(u), dtype=np.int64)
        Nv = np.asarray(G.neighbors(v), dtype=np.int64)
        W = np.intersect1d(Nu, Nv)
        protected = np.unique(np.concatenate([Nu, Nv, [u, v]]))
        M, ptr, kills = _exposure(G, protected, W)
        surv = _simulate_survivors(M, ptr, kills, W.shape[0], p, t, rng)
        cod_samples.append(surv >= keep * eta * delta)
        cod_classes.append(np.full(t, W.shape[0]))
        cod_values.append(surv.astype(float))
    cod_report = _report("codegree", gamma, alpha, eta, delta, cod_samples, cod_classes, cod_values, bound, gamma)
    return deg_report, cod_report


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def _two_hop_pairs(G, count: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random pairs ``(u, v)`` at distance two, found by short random walks."""
    out, seen = [], set()
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        u = int(rng.integers(G.n))
        Nu = np.asarray(G.neighbors(u))
        if Nu.size == 0:
            continue
        w = int(Nu[rng.integers(Nu.size)])
        Nw = np.asarray(G.neighbors(w))
        v = int(Nw[rng.integers(Nw.size)])
        if v == u or (u, v) in seen:
            continue
        seen.add((u, v))
        out.append((u, v))
    return out


def _report(kind, gamma, alpha, eta, delta, hits, classes, values, bound, g) -> TailReport:
    hits = np.concatenate(hits) if hits else np.zeros(0, dtype=bool)
    classes = np.concatenate(classes) if classes else np.zeros(0, dtype=np.int64)
    values = np.concatenate(values) if values else np.zeros(0)
    m = hits.shape[0]
    freq = float(hits.mean()) if m else 0.0
    se = math.sqrt(freq * (1 - freq) / m) if m else 0.0
    shrink = 1.0 - g + g * g
    by_class = {}
    for c in np.unique(classes):
        sel = classes == c
        by_class[int(c)] = {"trials": int(sel.sum()), "exceedance": float(hits[sel].mean()),
                            "mean": float(values[sel].mean()), "mean_bound": shrink * float(c)}
    return TailReport(
        kind=kind, gamma=gamma, alpha=alpha, eta=eta, delta=int(delta), trials=m,
        exceedance=freq, stderr=se, bound=bound,
        mean=float(values.mean()) if m else 0.0,
        mean_stderr=float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0,
        mean_bound=shrink * float(classes.mean()) if m else 0.0,
        by_class=by_class,
    )


# -- martingale and abstract-lemma bounds ------------------------------------------------


@dataclass(frozen=True)
class MartingaleBound:
    """``exp(-r^2 / (2 b))`` with ``b = sum(sigma_i^2 + R_i^2)``."""

    R: tuple
    sigma2: tuple
    r: float

    def __post_init__(self):
        if len(self.R) != len(self.sigma2):
            raise ValueError("R and sigma2 must have the same length")
        if any(x <= 0 for x in self.R):
            raise ValueError("increment caps must be positive")
        if any(s < 0 for s in self.sigma2):
            raise ValueError("variance caps must be non-negative")
        if self.r < 0:
            raise ValueError("r must be non-negative")

    @property
    def b(self) -> float:
        return float(np.sum(np.asarray(self.sigma2) + np.asarray(self.R) ** 2))

    @property
    def bound(self) -> float:
        return math.exp(-self.r * self.r / (2.0 * self.b))


def chung_lu_bound(R: Sequence[float], sigma2: Sequence[float], r: float) -> float:
    """Upper-tail bound for a martingale with increments ``<= R_i`` and conditional variances ``<= sigma_i^2``."""
    return MartingaleBound(tuple(R), tuple(sigma2), r).bound


def abstract_lemma_bound(p: float, edges: int, ell: int, x_size: int, r: float) -> float:
    """``exp(-r^2 / (4 p (e(X,Y) + ell |X|^2)))``."""
    return math.exp(-r * r / (4.0 * p * (edges + ell * x_size * x_size)))


def random_bipartite(x_size: int, y_size: int, degree: int, ell: int, rng: np.random.Generator,
                     max_tries: int = 1000) -> np.ndarray:
    """Boolean ``|X| x |Y|`` incidence with row sums ``degree`` and pairwise row overlaps ``<= ell``."""
    H = np.zeros((x_size, y_size), dtype=bool)
    for i in range(x_size):
        for _ in range(max_tries):
            row = np.zeros(y_size, dtype=bool)
            row[rng.choice(y_size, size=degree, replace=False)] = True
            if i == 0 or (H[:i] & row).sum(axis=1).max() <= ell:
                H[i] = row
                break
        else:
            raise RuntimeError("could not place a row within the overlap limit")
    return H


def abstract_lemma_tail(H: np.ndarray, p: float, radii: Sequence[float], samples: int,
                        rng: np.random.Generator, batch: int = 20_000) -> dict:
    """Empirical ``P(S - E S >= r)`` for ``S = |X - N_H(A)|``, ``A`` p-random in ``Y``.

    ``E S = sum_x (1-p)^{d(x)}`` exactly.  Returns per-radius frequency, its
    standard error and the bound.
    """
    x_size = H.shape[0]
    overlap = H.astype(np.int64) @ H.T.astype(np.int64)
    np.fill_diagonal(overlap, 0)
    ell = int(overlap.max()) if x_size > 1 else 0
    edges = int(H.sum())
    expected = float(np.sum((1.0 - p) ** H.sum(axis=1)))
    Hf = H.T.astype(np.float32)
    S = np.empty(samples)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        A = (rng.random((b, H.shape[1])) < p).astype(np.float32)
        S[done:done + b] = np.count_nonzero((A @ Hf) == 0, axis=1)
        done += b
    out = {"expected": expected, "ell": ell, "edges": edges, "mean": float(S.mean()), "tails": {}}
    for r in radii:
        f = float(np.mean(S - expected >= r))
        out["tails"][float(r)] = {
            "frequency": f,
            "stderr": math.sqrt(f * (1 - f) / samples),
            "bound": abstract_lemma_bound(p, edges, ell, x_size, r),
        }
    return out


def poisson_tail_frequency(mean: float, t: float, samples: int, rng: np.random.Generator) -> float:
    """Empirical ``P(Y >= (1+t) mean)`` for ``Y ~ Po(mean)``."""
    Y = rng.poisson(mean, size=samples)
    return float(np.mean(Y >= (1.0 + t) * mean))
