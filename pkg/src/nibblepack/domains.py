"""Sampling domains and point clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ball_volume

KINDS = ("box", "ball", "sphere")


@dataclass(frozen=True)
class Domain:
    """A periodic box ``[0, L)^d``, a ball ``B_0(R)``, or the unit sphere ``S^{d-1}``.

    ``param`` is the side ``L`` for a box, the radius ``R`` for a ball and
    unused (``None``) for the sphere.
    """

    kind: str
    dim: int
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.kind == "sphere":
            if self.dim < 2:
                raise ValueError("the sphere domain needs dim >= 2")
        elif self.param is None or not self.param > 0:
            raise ValueError(f"{self.kind} domain needs a positive size parameter")

    @classmethod
    def box(cls, dim: int, side: float) -> "Domain":
        return cls("box", dim, float(side))

    @classmethod
    def ball(cls, dim: int, radius: float) -> "Domain":
        return cls("ball", dim, float(radius))

    @classmethod
    def sphere(cls, dim: int) -> "Domain":
        return cls("sphere", dim, None)

    @classmethod
    def parse(cls, text: str, dim: int) -> "Domain":
        """Parse ``box:L``, ``ball:R`` or ``sphere``."""
        kind, _, value = text.partition(":")
        if kind == "sphere":
            return cls.sphere(dim)
        if not value:
            raise ValueError(f"domain {text!r} needs a size, e.g. {kind}:10")
        return cls(kind, dim, float(value))

    @property
    def euclidean(self) -> bool:
        return self.kind != "sphere"

    def measure(self) -> float:
        """Lebesgue volume for box/ball, normalised area 1 for the sphere."""
        if self.kind == "box":
            return float(self.param) ** self.dim
        if self.kind == "ball":
            return ball_volume(self.dim, self.param)
        return 1.0

    def uniform(self, count: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dim
        if self.kind == "box":
            pts = rng.random((count, d)) * self.param
            return np.minimum(pts, np.nextafter(self.param, 0.0))
        g = rng.standard_normal((count, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        if self.kind == "sphere":
            return g
        radii = self.param * rng.random(count) ** (1.0 / d)
        return g * radii[:, None]

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == "box":
            return np.all((points >= 0) & (points < self.param), axis=1)
        norms = np.linalg.norm(points, axis=1)
        if self.kind == "ball":
            return norms <= self.param
        return np.abs(norms - 1.0) <= 1e-12

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``a - b``, folded to the minimum image on the torus."""
        diff = a - b
        if self.kind == "box":
            diff -= self.param * np.round(diff / self.param)
        return diff

    def to_json(self) -> dict:
        return {"kind": self.kind, "param": self.param}

    @classmethod
    def from_json(cls, obj: dict, dim: int) -> "Domain":
        return cls(obj["kind"], dim, obj.get("param"))


@dataclass
class PointCloud:
    domain: Domain
    points: np.ndarray
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.domain.dim)
        if pts.ndim != 2 or pts.shape[1] != self.domain.dim:
            raise ValueError(f"points must have shape (n, {self.domain.dim})")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.domain.dim

    def subset(self, index) -> "PointCloud":
        return PointCloud(self.domain, self.points[index], self.seed)

    def validate(self) -> None:
        if not np.all(self.domain.contains(self.points)):
            raise ValueError("point cloud has points outside its domain")

    def min_pairwise(self) -> float:
        """Smallest pairwise distance (Euclidean domains) or angle (sphere); inf if < 2 points."""
        n = len(self)
        if n < 2:
            return math.inf
        best = math.inf
        for i in range(n - 1):
            rest = self.points[i + 1:]
            if self.domain.euclidean:
                diff = self.domain.displacement(self.points[i], rest)
                best = min(best, float(np.sqrt(np.min(np.einsum("ij,ij->i", diff, diff)))))
            else:
                dots = np.clip(rest @ self.points[i], -1.0, 1.0)
                best = min(best, float(np.arccos(np.max(dots))))
        return best
