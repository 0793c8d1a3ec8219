"""Sphere-vessel intersection volumes around the nano-router.

Coordinate frame: the nano-router sits at the origin on the vessel wall,
the vessel is a cylinder of diameter D whose axis is parallel to z (flow
direction) with cross-section x^2 + (y + D/2)^2 <= (D/2)^2, and the
communication sphere of radius r is centered at the origin.

The triple integrals collapse to 2-D integrals over (x, y) of a closed
form z-thickness, evaluated with adaptive quadrature. A Monte-Carlo
rejection-sampling oracle provides an independent verification path.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .params import NetworkParams, ValidationError, VolumeSet

_DEFAULT_TOL = 1e-6


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class VolumeEstimate(NamedTuple):
    value: float  # m^3
    error: float  # estimated absolute error, m^3


@dataclass(frozen=True)
class RegionSpec:
    """One of the three router-neighborhood regions.

    kind is "coverage", "transmission" or "collision"; shift is the axial
    offset v*t_f (ignored for coverage).
    """

    r: float
    D: float
    shift: float = 0.0
    kind: str = "coverage"

    def __post_init__(self):
        if self.r <= 0 or self.D <= 0:
            raise ValidationError("r and D must be strictly positive")
        if self.shift < 0:
            raise ValidationError("shift must be >= 0")
        if self.kind not in ("coverage", "transmission", "collision"):
            raise ValidationError(f"unknown region kind: {self.kind!r}")


def _cyl_y_bounds(x: float, D: float):
    # vessel cross-section at abscissa x: y in [(-D - g)/2, (-D + g)/2]
    g = math.sqrt(max(D * D - 4.0 * x * x, 0.0))
    return (-D - g) / 2.0, (-D + g) / 2.0


def _x_halfwidth(rho: float, D: float) -> float:
    # widest |x| of the overlap between the disk x^2 + y^2 <= rho^2 and the
    # vessel cross-section; branch threshold rho^2 vs D^2/2 (ties: first branch)
    if rho * rho >= D * D / 2.0:
        return D / 2.0
    return rho * math.sqrt(1.0 - rho * rho / (D * D))


def _integrate_thickness(thickness, rho: float, D: float, tol: float) -> VolumeEstimate:
    """Integrate a z-thickness over the overlap of a radius-rho disk and the vessel."""
    if rho <= 0.0:
        return VolumeEstimate(0.0, 0.0)
    xm = _x_halfwidth(rho, D)
    if xm <= 0.0:
        return VolumeEstimate(0.0, 0.0)

    def y_lo(x):
        lo, _ = _cyl_y_bounds(x, D)
        return max(lo, -math.sqrt(max(rho * rho - x * x, 0.0)))

    def y_hi(x):
        _, hi = _cyl_y_bounds(x, D)
        return hi

    # scale guards epsabs for mm-sized inputs where volumes are ~1e-9 m^3
    scale = rho * rho * rho
    with warnings.catch_warnings():
        # tolerance failures surface through the error estimate below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.dblquad(
            thickness, -xm, xm, y_lo, y_hi,
            epsabs=tol * scale, epsrel=tol,
        )
    if value < 0.0:
        value = 0.0
    # quadpack's stacked 2-D error bounds overstate the true error by orders
    # of magnitude on kinked thickness profiles; fail only on gross excess
    if err > tol * max(abs(value), scale) * 1e3:
        raise QuadratureError(
            f"quadrature error {err:.3e} exceeds tolerance {tol:.1e} (value {value:.6e})"
        )
    return VolumeEstimate(value, err)


def coverage_volume(r: float, D: float, tol: float = _DEFAULT_TOL) -> VolumeEstimate:
    """Volume of the communication sphere inside the vessel."""
    if r == 0.0:
        return VolumeEstimate(0.0, 0.0)  # empty intersection limit
    if r < 0 or D <= 0 or tol <= 0:
        raise ValidationError("r >= 0, D > 0 and tol > 0 required")
    r2 = r * r

    def thickness(y, x):
        s2 = r2 - x * x - y * y
        return 2.0 * math.sqrt(s2) if s2 > 0.0 else 0.0

    return _integrate_thickness(thickness, r, D, tol)


def transmission_volume(r: float, D: float, v: float, t_f: float,
                        tol: float = _DEFAULT_TOL) -> VolumeEstimate:
    """Volume where a whole frame of duration t_f stays inside the sphere.

    Points whose forward-shifted copy (z + v*t_f) is still inside the
    sphere, intersected with the vessel. Empty when v*t_f >= 2r.
    """
    if r == 0.0:
        return VolumeEstimate(0.0, 0.0)
    if r < 0 or D <= 0 or v < 0 or t_f < 0 or tol <= 0:
        raise ValidationError("invalid region parameters")
    shift = v * t_f
    if shift == 0.0:
        return coverage_volume(r, D, tol)
    if shift >= 2.0 * r:
        return VolumeEstimate(0.0, 0.0)  # shifted sphere disjoint from original
    r2 = r * r
    # support of positive thickness: x^2 + y^2 < r^2 - (shift/2)^2
    rho = math.sqrt(r2 - (shift / 2.0) ** 2)

    def thickness(y, x):
        s2 = r2 - x * x - y * y
        if s2 <= 0.0:
            return 0.0
        t = 2.0 * math.sqrt(s2) - shift
        return t if t > 0.0 else 0.0  # degenerate thickness contributes 0

    return _integrate_thickness(thickness, rho, D, tol)


def collision_volume(r: float, D: float, v: float, t_f: float,
                     tol: float = _DEFAULT_TOL) -> VolumeEstimate:
    """Volume whose transmissions can reach the router during a frame time.

    Union of the sphere with its backward-shifted copy, inside the vessel:
    the z-extent grows by v*t_f below each covered point.
    """
    if r == 0.0:
        return VolumeEstimate(0.0, 0.0)
    if r < 0 or D <= 0 or v < 0 or t_f < 0 or tol <= 0:
        raise ValidationError("invalid region parameters")
    shift = v * t_f
    r2 = r * r

    def thickness(y, x):
        s2 = r2 - x * x - y * y
        return 2.0 * math.sqrt(s2) + shift if s2 > 0.0 else 0.0

    return _integrate_thickness(thickness, r, D, tol)


def region_volume(region: RegionSpec, tol: float = _DEFAULT_TOL) -> VolumeEstimate:
    """Quadrature volume of an arbitrary RegionSpec."""
    if region.kind == "coverage":
        return coverage_volume(region.r, region.D, tol)
    if region.kind == "transmission":
        return transmission_volume(region.r, region.D, 1.0, region.shift, tol)
    return collision_volume(region.r, region.D, 1.0, region.shift, tol)


def volume_set(params: NetworkParams, tol: float = _DEFAULT_TOL) -> VolumeSet:
    """All three region volumes for one parameter point."""
    cv = coverage_volume(params.r, params.D, tol)
    tx = transmission_volume(params.r, params.D, params.v, params.t_f, tol)
    cx = collision_volume(params.r, params.D, params.v, params.t_f, tol)
    return VolumeSet(v_cv=cv.value, v_tx=tx.value, v_cx=cx.value,
                     err_cv=cv.error, err_tx=tx.error, err_cx=cx.error)


def _membership_counts(region: RegionSpec, pts: np.ndarray) -> np.ndarray:
    """Boolean membership of sample points (N, 3) in the region."""
    r2 = region.r * region.r
    half = region.D / 2.0
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    in_cyl = x * x + (y + half) ** 2 <= half * half
    in_sphere = x * x + y * y + z * z <= r2
    if region.kind == "coverage":
        return in_cyl & in_sphere
    if region.kind == "transmission":
        shifted = x * x + y * y + (z + region.shift) ** 2 <= r2
        return in_cyl & in_sphere & shifted
    # collision: swept z-interval [-s - shift, s], not just the endpoint
    # spheres; clamp z onto the sweep segment before the radius test
    zc = z - np.clip(z, -region.shift, 0.0)
    return in_cyl & (x * x + y * y + zc * zc <= r2)


def mc_volume_oracle(region: RegionSpec, samples: int = 10**6,
                     seed: int = 0) -> VolumeEstimate:
    """Monte-Carlo rejection-sampling volume estimate with standard error.

    Samples uniformly in the bounding box
    [-r, r] x ([-D, 0] cap [-r, r]) x [-r - shift, r] and reports
    box_volume * sqrt(p (1-p) / samples) as the standard error.
    Deterministic for a given seed. Independent of the quadrature path.
    """
    if samples < 10**4:
        raise ValidationError("samples must be >= 1e4")
    r, D = region.r, region.D
    shift = 0.0 if region.kind == "coverage" else region.shift
    lo = np.array([-r, max(-D, -r), -r - shift])
    hi = np.array([r, 0.0, r])
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    chunk = 2**20
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        pts = rng.uniform(lo, hi, size=(m, 3))
        hits += int(_membership_counts(region, pts).sum())
        done += m
    p = hits / samples
    return VolumeEstimate(box * p, box * math.sqrt(p * (1.0 - p) / samples))


def support_area(r: float, D: float, tol: float = _DEFAULT_TOL) -> float:
    """Area of the (x, y) overlap between the radius-r disk and the vessel."""
    if r <= 0.0:
        return 0.0
    est = _integrate_thickness(lambda y, x: 1.0, r, D, tol)
    return est.value
