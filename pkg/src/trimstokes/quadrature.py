"""Gauss rules on interior and cut elements, and on boundary arcs.

Cut-cell volume rules slice the element vertically: the x-range is split at
curve corners, vertical tangency abscissae, and crossings of the trimming
curves with the element's horizontal edges, so the kept y-intervals depend
smoothly on x within each slab. Slabs ending at a circle tangency use the
substitution x = x_t -+ u^2, which removes the square-root derivative blowup
and restores spectral Gauss accuracy there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BCTag,
    BoundaryArc,
    Disk,
    GeometryFault,
    TrimmedDomain,
)

__all__ = [
    "VolumeRule",
    "BoundaryRule",
    "gauss_legendre",
    "cut_volume_rule",
    "boundary_rule_for_arc",
    "cut_boundary_rule",
    "tensor_rule_on_box",
]

MAX_GAUSS = 30


@dataclass(frozen=True)
class VolumeRule:
    """Quadrature points (physical) with weights carrying the physical
    measure of the element's intersection with the domain."""

    points: np.ndarray
    weights: np.ndarray
    element: tuple | None = None

    @property
    def total(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class BoundaryRule:
    """Arc-length quadrature on one boundary piece."""

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    h_elem: float
    bc: BCTag
    element: tuple | None = None

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def gauss_legendre(n: int):
    """Abscissae and weights on [-1, 1], exact through degree 2n-1."""
    if not (1 <= n <= MAX_GAUSS):
        raise ValueError(f"gauss_legendre order must be in [1, {MAX_GAUSS}]")
    return np.polynomial.legendre.leggauss(n)


def _gauss_on(a: float, b: float, n: int):
    x, w = gauss_legendre(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def tensor_rule_on_box(box, n: int, element=None) -> VolumeRule:
    box = np.asarray(box, dtype=float)
    xs, wx = _gauss_on(box[0, 0], box[0, 1], n)
    ys, wy = _gauss_on(box[1, 0], box[1, 1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(wx, wy)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return VolumeRule(points=pts, weights=W.ravel(), element=element)


def _kept_y_intervals(domain: TrimmedDomain, x: float, ylo: float, yhi: float):
    kept = [(ylo, yhi)]
    for prim in domain.primitives:
        removed = prim.removed_y_interval(x, ylo, yhi)
        if removed is None:
            continue
        rlo, rhi = removed
        new = []
        for lo, hi in kept:
            if rhi <= lo or rlo >= hi:
                new.append((lo, hi))
                continue
            if rlo > lo:
                new.append((lo, rlo))
            if rhi < hi:
                new.append((rhi, hi))
        kept = new
    kept = [(lo, hi) for lo, hi in kept if hi - lo > 1e-15]
    if len(kept) > 4:
        raise GeometryFault(
            f"more than 4 kept y-intervals at x={x}: geometry too wild"
        )
    return kept


def cut_volume_rule(box, domain: TrimmedDomain, n: int, element=None, cut=True) -> VolumeRule:
    """High-order rule on (element box) intersected with the domain.

    For untrimmed elements this is the tensor Gauss rule; otherwise the
    sliced construction described in the module docstring.
    """
    box = np.asarray(box, dtype=float)
    if not cut or not domain.primitives:
        return tensor_rule_on_box(box, n, element)

    x0, x1 = box[0]
    y0, y1 = box[1]
    breaks = {x0, x1}
    disks = [p for p in domain.primitives if isinstance(p, Disk)]
    for prim in domain.primitives:
        for xb in prim.x_breaks(box):
            if x0 + 1e-14 < xb < x1 - 1e-14:
                breaks.add(float(xb))
    xs = sorted(breaks)
    merged = [xs[0]]
    for v in xs[1:]:
        if v - merged[-1] > 1e-14 * max(1.0, abs(v)):
            merged.append(v)
        else:
            merged[-1] = max(merged[-1], v)
    pts_out = []
    w_out = []
    gl_x, gl_w = gauss_legendre(n)
    for a, b in zip(merged[:-1], merged[1:]):
        # Inside a disk's x-extent the kept y-bounds involve
        # sqrt(r^2 - (x-cx)^2); the angle substitution x = cx + r sin(phi)
        # makes the slab integrand analytic through the tangency.
        sub = None
        for d in disks:
            lo, hi = d.center[0] - d.radius, d.center[0] + d.radius
            if lo - 1e-13 <= a and b <= hi + 1e-13:
                sub = d if sub is None else False
        if sub:
            cx, r = sub.center[0], sub.radius
            pa = math.asin(min(1.0, max(-1.0, (a - cx) / r)))
            pb = math.asin(min(1.0, max(-1.0, (b - cx) / r)))
            phi = 0.5 * (pa + pb) + 0.5 * (pb - pa) * gl_x
            xq = cx + r * np.sin(phi)
            wq = 0.5 * (pb - pa) * gl_w * r * np.cos(phi)
        else:
            xq, wq = _gauss_on(a, b, n)
        for xg, wg in zip(xq, wq):
            for lo, hi in _kept_y_intervals(domain, xg, y0, y1):
                yq, wy = _gauss_on(lo, hi, n)
                for yg, wyg in zip(yq, wy):
                    pts_out.append((xg, yg))
                    w_out.append(wg * wyg)
    if not pts_out:
        return VolumeRule(
            points=np.zeros((0, 2)), weights=np.zeros(0), element=element
        )
    return VolumeRule(
        points=np.asarray(pts_out), weights=np.asarray(w_out), element=element
    )


def boundary_rule_for_arc(arc: BoundaryArc, n: int, h_elem: float) -> BoundaryRule:
    """n-point Gauss rule along one boundary arc with arc-length weights."""
    t, w = gauss_legendre(n)
    t01 = 0.5 * (t + 1.0)
    pts, nrm = arc.points_normals(t01)
    weights = 0.5 * w * arc.length
    return BoundaryRule(
        points=pts,
        weights=weights,
        normals=nrm,
        h_elem=h_elem,
        bc=arc.bc,
        element=arc.element,
    )


def cut_boundary_rule(arcs, n: int, h_elem: float):
    """Rules for each arc of an element (see boundary_arcs_in_element)."""
    return [boundary_rule_for_arc(a, n, h_elem) for a in arcs]
