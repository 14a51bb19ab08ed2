"""High-dimensional ball, lens and spherical-cap measures.

Everything is evaluated in log-space through ``gammaln`` so that dimensions in
the hundreds neither overflow nor underflow before the final exponentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import betainc, gammaln

_GL_NODES, _GL_WEIGHTS = leggauss(20)
_GL_NODES_LO, _GL_WEIGHTS_LO = leggauss(10)


def _check_dim(d: int, low: int = 1) -> int:
    if int(d) != d or d < low:
        raise ValueError(f"dimension must be an integer >= {low}, got {d!r}")
    return int(d)


@dataclass(frozen=True)
class CapSpec:
    """Spherical cap of angular radius ``theta``, optionally anchored at ``axis``."""

    theta: float
    axis: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 < self.theta <= math.pi:
            raise ValueError(f"theta must lie in (0, pi], got {self.theta}")
        if self.axis is not None:
            norm = float(np.linalg.norm(self.axis))
            if abs(norm - 1.0) > 1e-12:
                raise ValueError(f"cap axis must be a unit vector (norm {norm})")

    def area(self, d: int) -> float:
        return cap_area(d, self.theta)


def log_ball_volume(d: int, t: float) -> float:
    d = _check_dim(d)
    if t < 0:
        raise ValueError("radius must be non-negative")
    if t == 0:
        return -math.inf
    return 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0) + d * math.log(t)


def ball_volume(d: int, t: float) -> float:
    """Lebesgue volume of a d-ball of radius ``t``."""
    return math.exp(log_ball_volume(d, t))


def unit_ball_radius(d: int) -> float:
    """Radius ``r_d`` of the d-dimensional ball of volume 1."""
    d = _check_dim(d)
    return math.exp(gammaln(0.5 * d + 1.0) / d) / math.sqrt(math.pi)


def ball_volume_sandwich(d: int, t: float) -> tuple[float, float]:
    """Stirling-type bounds ``((pi e t^2/d)^(d/2), (2 pi e t^2/d)^(d/2))``; valid for d >= 4."""
    lo = 0.5 * d * math.log(math.pi * math.e * t * t / d)
    hi = 0.5 * d * math.log(2.0 * math.pi * math.e * t * t / d)
    return math.exp(lo), math.exp(hi)


def lens_volume(d: int, R: float, t: float) -> float:
    """Volume of ``B_x(R) ∩ B_y(R)`` for centres at distance ``t``.

    The lens is two congruent caps of height ``R - t/2``; their combined volume
    is ``Vol(B(R)) * I_{1 - t^2/(4R^2)}((d+1)/2, 1/2)``.
    """
    d = _check_dim(d)
    if R <= 0:
        raise ValueError("R must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t >= 2.0 * R:
        return 0.0
    if t == 0:
        return ball_volume(d, R)
    x = 1.0 - t * t / (4.0 * R * R)
    frac = betainc(0.5 * (d + 1), 0.5, x)
    if frac <= 0.0:
        return 0.0
    return math.exp(log_ball_volume(d, R) + math.log(frac))


def lens_upper_bound(d: int, t: float) -> float:
    """``2^d exp(-t^2/4)``: bound on the lens of two radius-``2 r_d`` balls at distance >= t (d >= 4)."""
    d = _check_dim(d)
    if t < 0:
        raise ValueError("t must be non-negative")
    return math.exp(d * math.log(2.0) - 0.25 * t * t)


def _adaptive_gauss_legendre(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float,
    breakpoints: Optional[list[float]] = None,
    max_panels: int = 20000,
) -> float:
    """Integrate ``f`` on [a, b] by panel bisection, comparing 10- and 20-point rules."""
    edges = [a] + sorted(p for p in (breakpoints or []) if a < p < b) + [b]
    stack = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    total = 0.0
    panels = 0
    while stack:
        lo, hi = stack.pop()
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        fine = half * float(np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))
        coarse = half * float(np.dot(_GL_WEIGHTS_LO, f(mid + half * _GL_NODES_LO)))
        panels += 1
        width_share = (hi - lo) / (b - a)
        if abs(fine - coarse) <= max(tol * width_share, 1e-15 * abs(fine)) or panels > max_panels:
            total += fine
        else:
            stack.append((lo, mid))
            stack.append((mid, hi))
    return total


def cap_area(d: int, theta: float, tol: float = 1e-12) -> float:
    """Normalised surface area ``s_d(theta)`` of a cap of angular radius ``theta`` on S^{d-1}.

    Evaluates ``Γ(d/2)/(√π Γ((d-1)/2)) ∫_0^θ sin^{d-2}x dx`` by adaptive
    Gauss-Legendre quadrature, with the integrand rescaled by its maximum so
    that the sum stays in floating range.
    """
    d = _check_dim(d, 2)
    if not 0.0 < theta <= math.pi:
        raise ValueError(f"theta must lie in (0, pi], got {theta}")
    if theta > 0.5 * math.pi:
        return 1.0 - cap_area(d, math.pi - theta, tol) if theta < math.pi else 1.0
    log_norm = gammaln(0.5 * d) - gammaln(0.5 * (d - 1)) - 0.5 * math.log(math.pi)
    if d == 2:
        return math.exp(log_norm) * theta
    k = d - 2
    log_peak = k * math.log(math.sin(theta))
    log_scale = log_norm + log_peak
    # absolute tolerance on s translates to a tolerance relative to the peak
    inner_tol = 0.1 * tol * math.exp(-log_scale) if log_scale > -700 else math.inf

    def integrand(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(k * np.log(np.sin(x)) - log_peak)

    # the integrand is concentrated in a window of width ~ 1/sqrt(k) below theta
    width = min(theta, 4.0 / math.sqrt(k))
    breaks = [theta - width * f for f in (1.0, 0.5, 0.25)]
    integral = _adaptive_gauss_legendre(integrand, 0.0, theta, inner_tol, breaks)
    return min(1.0, math.exp(log_scale + math.log(integral)))


def cap_area_asymptotic(d: int, theta: float) -> float:
    """Large-d approximation ``sin^{d-1}θ / (cos θ sqrt(2π d))`` for θ < π/2."""
    return math.exp((d - 1) * math.log(math.sin(theta)) - 0.5 * math.log(2 * math.pi * d)) / math.cos(theta)


def cap_intersection_exponent(theta: float) -> float:
    """``c(θ) = cot²θ / 16``."""
    return 1.0 / (16.0 * math.tan(theta) ** 2)


def cap_intersection_bound(d: int, theta: float, tau: float) -> float:
    """``s_d(θ) exp(-c(θ) τ² d)``, the asymptotic bound on two caps whose axes are ``τ`` apart."""
    if not 0.0 < tau < 2.0 * theta < math.pi:
        raise ValueError("need 0 < tau < 2*theta < pi")
    return cap_area(d, theta) * math.exp(-cap_intersection_exponent(theta) * tau * tau * d)


def cap_intersection_area_mc(
    d: int,
    theta: float,
    tau: float,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 1 << 18,
) -> tuple[float, float]:
    """Hit-count estimate of ``s(C_θ(x) ∩ C_θ(y))`` with ``<x, y> = cos τ``.

    Only the first two coordinates of a uniform point on S^{d-1} matter, so the
    squared norm of the remaining ``d-2`` Gaussian coordinates is drawn as a
    single chi-square variate.  Returns ``(mean, standard error)``.
    """
    d = _check_dim(d, 2)
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    cos_t = math.cos(theta)
    ct, st = math.cos(tau), math.sin(tau)
    hits = 0
    left = samples
    while left:
        m = min(chunk, left)
        g = rng.standard_normal((m, 2))
        rest = rng.chisquare(d - 2, m) if d > 2 else np.zeros(m)
        norm = np.sqrt(g[:, 0] ** 2 + g[:, 1] ** 2 + rest)
        z1, z2 = g[:, 0] / norm, g[:, 1] / norm
        hits += int(np.count_nonzero((z1 >= cos_t) & (ct * z1 + st * z2 >= cos_t)))
        left -= m
    mean = hits / samples
    return mean, math.sqrt(max(mean * (1.0 - mean), 0.0) / samples)
