"""Semi-random independent-set extraction: nibble steps, regularization, schedules.

One round takes a graph whose degrees are ``Delta - 1`` or ``Delta``, samples a
sparse random set ``A``, deletes ``A`` with its neighbourhood, and discards
vertices whose surviving degree or codegree did not shrink enough.  The
vertices of ``A`` without an internal edge go into the independent set; the
clean remainder ``C`` is re-regularized and processed again.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import __version__, _kernels
from .errors import (
    InternalExhaustion,
    PreconditionViolated,
    RetriesExhausted,
    ScheduleInfeasible,
    SizeCapExceeded,
)
from .graphcore import Graph, disjoint_copies

MODES = ("paper", "custom")
CONDITIONS = ("A_size", "A_edges", "C_size", "C_degree", "C_codegree")
BLOWUP_VERTEX_LIMIT = 20_000_000


@dataclass(frozen=True)
class NibbleParams:
    """Step parameters shared by every round.

    ``eta`` fixes the codegree ratio assumed of the input; ``None`` uses
    ``max(Delta_2, 2 sqrt(Delta)) / Delta`` for whatever graph is at hand.
    """

    gamma: float
    alpha: float
    max_retries: int = 64
    eta: Optional[float] = None
    mode: str = "custom"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 < self.gamma <= 0.5:
            raise ValueError("gamma must lie in (0, 1/2]")
        if self.alpha <= 0 or self.alpha > self.gamma:
            raise ValueError("alpha must lie in (0, gamma]")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    def check(self, gamma: float, alpha: float, delta: int) -> list[str]:
        """Raise in paper mode, return the warnings in custom mode."""
        problems = parameter_warnings(gamma, alpha, delta)
        if problems and self.mode == "paper":
            raise PreconditionViolated("; ".join(problems))
        return problems


def parameter_warnings(gamma: float, alpha: float, delta: int) -> list[str]:
    """Deviations from the regime in which the nibble step is guaranteed to work."""
    out = []
    if delta < 2 ** 11:
        out.append(f"Delta={delta} below 2^11")
    if delta > 0 and gamma < 8.0 * delta ** (-1.0 / 8.0):
        out.append(f"gamma={gamma} below 8 Delta^(-1/8)={8.0 * delta ** (-1.0 / 8.0):.4g}")
    if alpha < 2.0 * gamma ** 2 * (1 - 1e-12):
        out.append(f"alpha={alpha} below 2 gamma^2={2.0 * gamma ** 2:.4g}")
    return out


def paper_round_count(delta: float) -> float:
    """``(log Delta)^2 (log Delta - 32 (log log Delta + 2))``: rounds at ``gamma = (log Delta)^-2``."""
    L = math.log(delta)
    return L * L * (L - 32.0 * (math.log(L) + 2.0))


def paper_log_delta_threshold() -> float:
    """Smallest ``log Delta`` for which the paper schedule has a positive round count."""
    return brentq(lambda L: L - 32.0 * (math.log(L) + 2.0), 10.0, 1e4)


@dataclass(frozen=True)
class Schedule:
    """Per-round targets ``Delta_i = ceil(q^i (Delta_0 + 1))`` and ``Delta'_i = q^i Delta_2(G_0)``."""

    delta0: int
    delta2_0: int
    gamma: float
    alpha: float
    rounds: int
    mode: str = "custom"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.q > 1.0:
            raise ValueError("need alpha <= gamma/2 so that the degree targets do not grow")

    @property
    def q(self) -> float:
        return 1.0 - self.gamma + 2.0 * self.alpha

    def delta(self, i: int) -> int:
        return int(math.ceil(self.q ** i * (self.delta0 + 1) - 1e-9))

    def delta2(self, i: int) -> float:
        return self.q ** i * self.delta2_0

    def blowup_size(self) -> float:
        """``2 (Delta + 1)^4 (q - 3 alpha)^(-T)``: vertex count needed for the regularization steps."""
        base = self.q - 3.0 * self.alpha
        return 2.0 * (self.delta0 + 1) ** 4 * base ** (-self.rounds)

    @classmethod
    def paper(cls, delta0: int, delta2_0: int) -> "Schedule":
        """``gamma = (log Delta)^-2``, ``alpha = 2 gamma^2``, rounds from the paper's formula."""
        need = paper_log_delta_threshold()
        L = math.log(delta0) if delta0 > 1 else 0.0
        T = paper_round_count(delta0) if delta0 > 1 else -1.0
        if T <= 0:
            raise ScheduleInfeasible(
                f"paper schedule has no rounds at Delta={delta0}; "
                f"it needs log Delta > {need:.4g}, i.e. Delta > {math.exp(need):.3e}",
                need,
            )
        gamma = L ** -2
        return cls(delta0, delta2_0, gamma, 2.0 * gamma * gamma, int(math.floor(T)), "paper")

    @classmethod
    def custom(cls, delta0: int, delta2_0: int, gamma: float, alpha: float, rounds: int) -> "Schedule":
        return cls(delta0, delta2_0, gamma, alpha, rounds, "custom")


# -- nibble step ---------------------------------------------------------------------


@dataclass
class NibbleStep:
    A: np.ndarray
    C: np.ndarray
    retries: int
    failures: dict
    warnings: list = field(default_factory=list)
    edges_in_A: int = 0


def _count_in(G: Graph, mask: np.ndarray) -> np.ndarray:
    """Per-vertex number of neighbours inside ``mask``."""
    return _kernels.count_in_mask(G.indptr, G.indices, mask)


def _closed_neighbourhood(G: Graph, mask: np.ndarray) -> np.ndarray:
    hit = mask.copy()
    src = np.repeat(np.arange(G.n), G.degrees)
    hit[G.indices[mask[src]]] = True
    return hit


def nibble_step(
    G: Graph,
    delta: int,
    gamma: float,
    alpha: float,
    eta: Optional[float],
    rng: np.random.Generator,
    max_retries: int = 64,
    strict: bool = False,
    delta2: Optional[int] = None,
) -> NibbleStep:
    """Sample ``A`` at rate ``gamma/delta`` until the clean remainder ``C`` meets all five targets.

    The targets are ``|A| >= (1-alpha) gamma n/delta``, ``e(G[A]) <= gamma^2 n/delta``,
    ``|C| >= (1-gamma-alpha) n``, ``Delta(G[C]) <= (1-gamma+alpha) delta`` and
    ``Delta_2(G[C]) <= (1-gamma+alpha) max(Delta_2(G), 2 sqrt(delta))``.  ``C`` is
    what survives of ``V - (A + N(A))`` after removing vertices whose surviving
    degree or some surviving codegree reaches those bounds.

    Input requirements (degrees in ``{delta-1, delta}``, ``Delta_2(G) <= eta delta``)
    raise ``PreconditionViolated`` when ``strict`` and are reported as
    warnings otherwise.  ``delta2`` may supply the known maximum codegree of ``G``.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    n = G.n
    warnings = []
    deg = G.degrees
    if n and (deg.min() < delta - 1 or deg.max() > delta):
        warnings.append(f"degrees span [{deg.min()}, {deg.max()}], expected within [{delta - 1}, {delta}]")
    if delta2 is None:
        delta2 = G.max_codegree()
    if eta is not None and delta2 > eta * delta:
        warnings.append(f"codegree {delta2} exceeds eta*Delta={eta * delta:.4g}")
    if warnings and strict:
        raise PreconditionViolated("; ".join(warnings))

    p = gamma / delta
    keep_frac = 1.0 - gamma + alpha
    codegree_scale = max(delta2, 2.0 * math.sqrt(delta))
    deg_limit = keep_frac * delta
    codeg_limit = keep_frac * codegree_scale
    min_A = (1.0 - alpha) * gamma * n / delta
    max_eA = gamma * gamma * n / delta
    min_C = (1.0 - gamma - alpha) * n
    # codegrees only shrink on subgraphs, so a small input codegree settles condition five
    codegree_trivial = delta2 < codeg_limit

    failures = {k: 0 for k in CONDITIONS}
    for attempt in range(max_retries):
        A = rng.random(n) < p
        a_size = int(A.sum())
        e_A, alive, surv_deg = _kernels.nibble_survivors(G.indptr, G.indices, A)
        removed = ~alive
        C = alive & (surv_deg < deg_limit)
        ok = True
        if a_size < min_A:
            failures["A_size"] += 1
            ok = False
        if e_A > max_eA:
            failures["A_edges"] += 1
            ok = False
        if C.sum() < min_C:
            failures["C_size"] += 1
            ok = False
        if not ok:
            continue
        if not codegree_trivial:
            codeg = _kernels.vertex_max_codegree(G.indptr, G.indices, alive)
            C &= codeg < codeg_limit
            if C.sum() < min_C:
                failures["C_size"] += 1
                continue
        # final verification on the returned pair
        c_deg = _count_in(G, C)[C]
        if c_deg.size and c_deg.max() > deg_limit:
            failures["C_degree"] += 1
            continue
        if not codegree_trivial:
            c_codeg = _kernels.vertex_max_codegree(G.indptr, G.indices, C)[C]
            if c_codeg.size and c_codeg.max() > codeg_limit:
                failures["C_codegree"] += 1
                continue
        if np.any(C & removed):
            raise AssertionError("C meets A or its neighbourhood")
        return NibbleStep(np.nonzero(A)[0], np.nonzero(C)[0], attempt, failures, warnings, e_A)
    raise RetriesExhausted(f"no admissible nibble in {max_retries} attempts", failures)


# -- regularization -----------------------------------------------------------------


def regularize(G: Graph, delta: int, best_effort: bool = False, verify: bool = True) -> Graph:
    """Add edges between vertices at distance >= 4 until every degree is ``delta`` or ``delta+1``.

    Needs ``Delta(G) <= delta`` and ``n >= 2 delta^4``.  With ``best_effort``
    the size requirement is waived: the result's ``meta["complete"]`` is
    False if some vertex could not be saturated, and ``meta["best_effort"]``
    records that the size requirement was not met.  Edges joining vertices at
    distance >= 4 create codegree at most 1, so ``Delta_2`` never rises above
    ``max(Delta_2(G), 1)``.
    """
    n = G.n
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if n and G.max_degree() > delta:
        raise PreconditionViolated(f"maximum degree {G.max_degree()} exceeds target {delta}")
    undersized = n < 2 * delta ** 4
    if undersized and not best_effort:
        raise PreconditionViolated(f"n={n} is below 2*Delta^4={2 * delta ** 4}")
    meta = {"added_phase1": 0, "added_phase2": 0, "complete": True, "best_effort": bool(undersized)}
    if n == 0 or G.degrees.min() >= delta:
        H = Graph(G.indptr, G.indices, G.labels, meta)
        # same edge set, so cached statistics carry over
        H.__dict__.update({k: v for k, v in G.__dict__.items() if k in ("degrees", "vertex_codegrees")})
        return H
    adj, deg = G.padded(delta + 1)
    status, added1, added2, stuck = _kernels.regularize_kernel(adj, deg, delta)
    meta.update(added_phase1=int(added1), added_phase2=int(added2))
    if status != 0:
        if not best_effort:
            raise InternalExhaustion(f"vertex {stuck} has no admissible partner")
        meta["complete"] = False
        meta["stuck_vertex"] = int(stuck)
    H = Graph.from_adjacency(adj, deg, G.labels, meta)
    if verify:
        _verify_regularized(G, H, delta)
    return H


def _verify_regularized(G: Graph, H: Graph, delta: int) -> None:
    old, new = G.edges(), H.edges()
    keys_old = old[:, 0] * G.n + old[:, 1]
    keys_new = new[:, 0] * G.n + new[:, 1]
    if not np.all(np.isin(keys_old, keys_new, assume_unique=True)):
        raise AssertionError("regularization dropped an edge")
    if H.n and H.degrees.max() > delta + 1:
        raise AssertionError("regularization overshot the degree target")
    if H.meta["complete"] and H.n and H.degrees.min() < delta:
        raise AssertionError("regularization left a deficient vertex")
    if H.num_edges > G.num_edges and H.max_codegree() > max(G.max_codegree(), 1):
        raise AssertionError("regularization raised the codegree")


# -- schedule ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    i: int
    n_i: int
    delta_i: int
    delta2_i: int
    A_i: int
    eGA_i: int
    I_i: int
    retries: int
    ms: float
    target_delta: int = 0
    regularized_delta2: int = 0
    added_edges: int = 0
    flags: list = field(default_factory=list)


CSV_COLUMNS = ("i", "n_i", "delta_i", "delta2_i", "A_i", "eGA_i", "I_i", "retries", "ms")


@dataclass
class NibbleTrace:
    rounds: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self, timing: bool = False) -> str:
        """One row per round; ``ms`` is written as 0 unless ``timing`` so reruns are byte-identical."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rounds:
            row = [getattr(r, c) for c in CSV_COLUMNS]
            row[-1] = round(r.ms, 3) if timing else 0
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"rounds": [asdict(r) for r in self.rounds], "meta": self.meta}


def verify_independent(G: Graph, I) -> bool:
    """True iff no edge of ``G`` has both endpoints in ``I``."""
    I = np.asarray(I, dtype=np.int64)
    if I.size == 0:
        return True
    if I.min() < 0 or I.max() >= G.n:
        raise ValueError("vertex id out of range")
    mask = np.zeros(G.n, dtype=bool)
    mask[I] = True
    starts, stops = G.indptr[I], G.indptr[I + 1]
    lengths = stops - starts
    pos = np.repeat(starts - np.cumsum(lengths) + lengths, lengths) + np.arange(int(lengths.sum()))
    return not bool(np.any(mask[G.indices[pos]]))


def _run_rounds(G: Graph, params: NibbleParams, schedule: Schedule, rng: np.random.Generator,
                trace: NibbleTrace) -> np.ndarray:
    strict = schedule.mode == "paper"
    chosen = []
    Gi = Graph(G.indptr, G.indices, np.arange(G.n))
    Gi.__dict__.update({k: v for k, v in G.__dict__.items() if k in ("degrees", "vertex_codegrees")})
    for i in range(schedule.rounds):
        if Gi.n == 0:
            break
        if Gi.num_edges == 0:
            chosen.append(Gi.labels)
            trace.meta.setdefault("flags", []).append(f"round {i}: remainder edgeless, taken whole")
            Gi = Graph.empty(0)
            break
        t0 = time.perf_counter()
        flags = []
        target = schedule.delta(i)
        real_delta = Gi.max_degree()
        if real_delta > target - 1:
            if strict:
                raise PreconditionViolated(f"round {i}: degree {real_delta} above target {target - 1}")
            flags.append(f"target raised from {target} to {real_delta + 1}")
            target = real_delta + 1
        problems = params.check(schedule.gamma, schedule.alpha, target)
        if problems and i == 0:
            trace.meta["parameter_warnings"] = problems
        real_delta2 = Gi.max_codegree()
        Gbar = regularize(Gi, target - 1, best_effort=not strict)
        if Gbar.meta["best_effort"]:
            flags.append("regularized below the size requirement")
        if not Gbar.meta["complete"]:
            flags.append("regularization incomplete")
        delta2_bar = Gbar.max_codegree()
        eta = params.eta
        if eta is None:
            eta = max(schedule.delta2(i), 2.0 * math.sqrt(target)) / target
        try:
            step = nibble_step(Gbar, target, schedule.gamma, schedule.alpha, eta, rng,
                               params.max_retries, strict=strict, delta2=delta2_bar)
        except RetriesExhausted as exc:
            raise RetriesExhausted(exc.args[0], exc.failures, round_index=i) from None
        flags.extend(step.warnings)
        A = step.A
        A_mask = np.zeros(Gi.n, dtype=bool)
        A_mask[A] = True
        inner = _count_in(Gi, A_mask)
        e_A = int(inner[A_mask].sum() // 2)
        I_local = A[inner[A] == 0]
        if I_local.shape[0] < A.shape[0] - 2 * e_A:
            raise AssertionError("extraction removed more than two vertices per edge")
        floor = (1.0 - schedule.alpha) * schedule.gamma * Gi.n / target - 2.0 * schedule.gamma ** 2 * Gi.n / target
        if I_local.shape[0] < floor - 1e-9:
            raise AssertionError("round yield fell below its guaranteed floor")
        C_mask = np.zeros(Gi.n, dtype=bool)
        C_mask[step.C] = True
        if np.any(C_mask & _closed_neighbourhood(Gi, A_mask)):
            raise AssertionError("later rounds would touch A or its neighbours")
        chosen.append(Gi.labels[I_local])
        trace.rounds.append(RoundRecord(
            i=i, n_i=Gi.n, delta_i=real_delta, delta2_i=int(real_delta2), A_i=int(A.shape[0]),
            eGA_i=e_A, I_i=int(I_local.shape[0]), retries=step.retries,
            ms=1000.0 * (time.perf_counter() - t0), target_delta=target,
            regularized_delta2=int(delta2_bar),
            added_edges=Gbar.meta["added_phase1"] + Gbar.meta["added_phase2"], flags=flags,
        ))
        Gi = Gi.induced_subgraph(step.C)
    if Gi.n:
        # vertices left without edges touch no earlier A_j, so they can be kept
        lonely = Gi.labels[Gi.degrees == 0]
        if lonely.size:
            chosen.append(lonely)
    trace.meta["remaining"] = int(Gi.n)
    return np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)


def run_schedule(
    G: Graph,
    params: NibbleParams,
    schedule: Schedule,
    rng: np.random.Generator,
    auto_blowup: bool = False,
    max_vertices: int = BLOWUP_VERTEX_LIMIT,
) -> tuple[np.ndarray, NibbleTrace]:
    """Alternate regularization and nibble steps; return the independent set and a trace.

    Each round regularizes ``G_i`` to degree ``Delta_i - 1``, nibbles with
    ``Delta_i``, keeps the vertices of ``A_i`` with no edge inside ``A_i``,
    and continues on ``G_i[C_i]`` (original edges only).  With
    ``auto_blowup`` a graph smaller than the regularization size bound is
    replaced by enough disjoint copies; the largest per-copy set is returned.
    """
    trace = NibbleTrace(meta={"mode": schedule.mode, "gamma": schedule.gamma, "alpha": schedule.alpha,
                              "rounds": schedule.rounds, "q": schedule.q})
    work, copies = G, 1
    if auto_blowup and G.n:
        need = schedule.blowup_size()
        if G.n < need:
            copies = int(math.ceil(need / G.n))
            if copies * G.n > max_vertices:
                raise SizeCapExceeded(f"blow-up needs {copies} copies ({copies * G.n:.3g} vertices)")
            work = disjoint_copies(G, copies)
    trace.meta["copies"] = copies
    I = _run_rounds(work, params, schedule, rng, trace)
    if copies > 1:
        which = I // G.n
        sizes = np.bincount(which, minlength=copies)
        best = int(np.argmax(sizes))
        trace.meta["per_copy_density"] = (sizes / G.n).tolist()
        I = np.sort(I[which == best] - best * G.n)
    if not verify_independent(G, I):
        raise AssertionError("returned set is not independent")
    return I, trace


def result_json(I: np.ndarray, verified: bool, seed: Optional[int], params: dict) -> dict:
    return {
        "independent_set": [int(v) for v in I],
        "size": int(len(I)),
        "verified": bool(verified),
        "seed": seed,
        "params": params,
        "version": f"nibblepack {__version__}",
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=False) + "\n"
