"""Poisson point processes, bad-point pruning and Poisson sanity checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .domains import Domain, PointCloud
from .errors import CapacityError
from .geometry import ball_volume, cap_area, cap_intersection_exponent, unit_ball_radius
from .graphcore import Graph, build_geometric_graph

__all__ = [
    "Domain",
    "PointCloud",
    "PruneSpec",
    "DEFAULT_MAX_POINTS",
    "sample_poisson",
    "prune",
    "poisson_tail_bound",
    "mecke_check",
    "isolated",
    "always",
    "never",
    "cloud_to_json",
    "cloud_from_json",
    "write_cloud",
    "read_cloud",
]

DEFAULT_MAX_POINTS = 5_000_000


@dataclass(frozen=True)
class PruneSpec:
    """Thresholds for removing crowded points.

    ``interaction`` is the edge threshold of the geometric graph: a distance
    ``2r`` on Euclidean domains, an angle ``theta`` on the sphere.  A point is
    removed when its graph degree reaches ``degree_cap`` or when it shares at
    least ``codegree_cap`` neighbours with some other point.
    """

    interaction: float
    degree_cap: float
    codegree_cap: float

    def __post_init__(self):
        if not self.interaction >= 0:
            raise ValueError("interaction threshold must be non-negative")
        if self.degree_cap < 0 or self.codegree_cap < 0:
            raise ValueError("caps must be non-negative")

    @staticmethod
    def euclidean_caps(d: int, expected_degree: float) -> tuple[float, float]:
        """``(mu(1 + mu^-1/3), mu e^{-(log d)^2/8})`` for expected degree ``mu``."""
        mu = expected_degree
        deg = mu * (1.0 + mu ** (-1.0 / 3.0)) if mu > 0 else 0.0
        return deg, mu * math.exp(-math.log(d) ** 2 / 8.0)

    @staticmethod
    def spherical_caps(d: int, theta: float, expected_degree: float) -> tuple[float, float]:
        """``(mu(1 + mu^-1/3), 2 mu e^{-c(theta)(log d)^2})``."""
        mu = expected_degree
        deg = mu * (1.0 + mu ** (-1.0 / 3.0)) if mu > 0 else 0.0
        return deg, 2.0 * mu * math.exp(-cap_intersection_exponent(theta) * math.log(d) ** 2)

    @classmethod
    def for_intensity(cls, domain: Domain, intensity: float, interaction: float) -> "PruneSpec":
        """Caps from the expected degree of a Poisson process at ``intensity``."""
        d = domain.dim
        if domain.euclidean:
            mu = intensity * ball_volume(d, interaction) if interaction > 0 else 0.0
            return cls(interaction, *cls.euclidean_caps(d, mu))
        mu = intensity * cap_area(d, interaction)
        return cls(interaction, *cls.spherical_caps(d, interaction, mu))


def paper_euclidean_preset(d: int) -> tuple[float, PruneSpec]:
    """Intensity ``(sqrt(d)/(8 log d))^d`` and caps around ``Delta = (sqrt(d)/(4 log d))^d``."""
    if d < 2:
        raise ValueError("preset needs d >= 2")
    delta = (math.sqrt(d) / (4.0 * math.log(d))) ** d
    intensity = 2.0 ** (-d) * delta
    return intensity, PruneSpec(2.0 * unit_ball_radius(d), *PruneSpec.euclidean_caps(d, delta))


def paper_spherical_preset(d: int, theta: float) -> tuple[float, PruneSpec]:
    """Intensity ``(sqrt(d)/(2 log d))^d`` on the sphere and caps around ``Delta = s_d(theta) lambda``."""
    if d < 2:
        raise ValueError("preset needs d >= 2")
    intensity = (math.sqrt(d) / (2.0 * math.log(d))) ** d
    delta = cap_area(d, theta) * intensity
    return intensity, PruneSpec(theta, *PruneSpec.spherical_caps(d, theta, delta))


def _as_rng(rng) -> tuple[np.random.Generator, Optional[int]]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), (None if rng is None else int(rng))


def sample_poisson(
    domain: Domain,
    intensity: float,
    rng: Union[np.random.Generator, int, None],
    max_points: int = DEFAULT_MAX_POINTS,
) -> PointCloud:
    """Poisson process of the given intensity on ``domain``.

    ``rng`` may be a Generator or an integer seed; a seed is recorded on the
    returned cloud.  The count is Poisson with mean ``intensity * measure``
    and the points are i.i.d. uniform given the count.
    """
    if not intensity >= 0:
        raise ValueError("intensity must be non-negative")
    gen, seed = _as_rng(rng)
    mean = intensity * domain.measure()
    if not math.isfinite(mean) or mean > max_points:
        raise CapacityError(f"expected {mean:.3g} points exceeds the budget of {max_points}")
    count = int(gen.poisson(mean)) if mean > 0 else 0
    if count > max_points:
        raise CapacityError(f"sampled {count} points, budget is {max_points}")
    return PointCloud(domain, domain.uniform(count, gen), seed)


def prune(cloud: PointCloud, spec: PruneSpec, graph: Optional[Graph] = None) -> tuple[PointCloud, int, int]:
    """Drop degree-bad and codegree-bad points, judged on the original cloud in one pass.

    Returns ``(kept, removed_degree, removed_codegree)``; a point failing both
    tests is counted under degree only.  ``graph`` may pass in a prebuilt
    geometric graph of ``cloud`` at ``spec.interaction``.  The kept cloud's
    ``meta["index"]`` maps back to the input positions.
    """
    n = len(cloud)
    G = graph if graph is not None else build_geometric_graph(cloud, spec.interaction)
    if G.n != n:
        raise ValueError("graph does not match the cloud")
    bad_degree = G.degrees >= spec.degree_cap
    threshold = math.ceil(spec.codegree_cap)
    if threshold <= 0:
        bad_codegree = np.full(n, n > 1)
    else:
        bad_codegree = _kernels.pairs_with_codegree_at_least(G.indptr, G.indices, threshold)
    keep = ~(bad_degree | bad_codegree)
    index = np.nonzero(keep)[0]
    kept = cloud.subset(index)
    kept.meta = {"index": index}
    sub = G.induced_subgraph(index)
    if sub.n:
        if sub.max_degree() >= spec.degree_cap:
            raise AssertionError("pruned graph still exceeds the degree cap")
        if sub.max_codegree() >= max(spec.codegree_cap, 1):
            raise AssertionError("pruned graph still exceeds the codegree cap")
    return kept, int(bad_degree.sum()), int((bad_codegree & ~bad_degree).sum())


def poisson_tail_bound(mean: float, t: float) -> float:
    """``exp(-min(t, t^2) mean / 3)``, bounding ``P(Y >= (1+t) mean)`` for ``Y ~ Po(mean)``."""
    if mean <= 0 or t <= 0:
        raise ValueError("need mean > 0 and t > 0")
    return math.exp(-min(t, t * t) * mean / 3.0)


# -- Mecke-equation check ---------------------------------------------------------
#
# A predicate maps a cloud to a boolean mask over its points: mask[i] says
# whether point i has the property relative to the whole cloud.

Predicate = Callable[[PointCloud], np.ndarray]


def always(cloud: PointCloud) -> np.ndarray:
    return np.ones(len(cloud), dtype=bool)


def never(cloud: PointCloud) -> np.ndarray:
    return np.zeros(len(cloud), dtype=bool)


def isolated(radius: float) -> Predicate:
    """Predicate: no other point within ``radius`` (distance, or angle on the sphere)."""

    def pred(cloud: PointCloud) -> np.ndarray:
        n = len(cloud)
        if n > 400:
            return build_geometric_graph(cloud, radius).degrees == 0
        # small clouds: a dense pairwise test is much cheaper than a graph build
        P = cloud.points
        if cloud.domain.euclidean:
            diff = cloud.domain.displacement(P[:, None, :], P[None, :, :])
            close = np.einsum("ijk,ijk->ij", diff, diff) <= radius * radius
        else:
            close = P @ P.T >= math.cos(radius)
        np.fill_diagonal(close, False)
        return ~close.any(axis=1)

    return pred


def mecke_check(
    domain: Domain,
    intensity: float,
    predicate: Predicate,
    integrand_samples: int,
    process_samples: int,
    rng: np.random.Generator,
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Estimate both sides of ``E sum_{x in X} f(x, X) = lambda int E f(x, X + x) dx``.

    Returns ``((lhs, se), (rhs, se))``.  The left side averages the number of
    points satisfying ``predicate`` over process draws; the right side adds one
    uniform point to an independent draw and records whether it qualifies.
    """
    if integrand_samples < 2 or process_samples < 2:
        raise ValueError("need at least two samples on each side")
    counts = np.empty(process_samples)
    for k in range(process_samples):
        cloud = sample_poisson(domain, intensity, rng)
        counts[k] = np.count_nonzero(predicate(cloud)) if len(cloud) else 0
    hits = np.empty(integrand_samples)
    for k in range(integrand_samples):
        cloud = sample_poisson(domain, intensity, rng)
        extra = domain.uniform(1, rng)
        augmented = PointCloud(domain, np.vstack([cloud.points, extra]))
        hits[k] = bool(predicate(augmented)[-1])
    scale = intensity * domain.measure()
    lhs = (float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(process_samples)))
    rhs = (scale * float(hits.mean()), scale * float(hits.std(ddof=1) / math.sqrt(integrand_samples)))
    return lhs, rhs


# -- JSON I/O -------------------------------------------------------------------


def cloud_to_json(cloud: PointCloud, meta: Optional[dict] = None) -> dict:
    """Canonical dict: dim, domain, seed, points (sorted lexicographically), then optional meta."""
    pts = cloud.points
    if len(pts):
        pts = pts[np.lexsort(pts.T[::-1])]
    obj = {
        "dim": cloud.dim,
        "domain": cloud.domain.to_json(),
        "seed": cloud.seed,
        "points": pts.tolist(),
    }
    if meta:
        obj["meta"] = meta
    return obj


def cloud_from_json(obj: dict) -> PointCloud:
    dim = int(obj["dim"])
    pts = np.asarray(obj["points"], dtype=float).reshape(-1, dim)
    return PointCloud(Domain.from_json(obj["domain"], dim), pts, obj.get("seed"))


def write_cloud(cloud: PointCloud, path: Union[str, Path], meta: Optional[dict] = None) -> None:
    Path(path).write_text(json.dumps(cloud_to_json(cloud, meta)) + "\n")


def read_cloud(path: Union[str, Path]) -> PointCloud:
    return cloud_from_json(json.loads(Path(path).read_text()))
