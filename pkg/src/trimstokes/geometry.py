"""Geometry maps, trimming primitives, and boundary extraction.

The computational domain is an axis-aligned patch, image of (0,1)^2 under the
geometry map, minus a set of removed regions given in physical coordinates
(half-planes, disks, convex polygons). Removed regions are open sets whose
closure is cut away; trimmed runs are restricted to identity/affine maps so
every element image is an axis-aligned box and all curve/box intersections
are closed-form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryFault",
    "GeometryMap",
    "identity_map",
    "affine_map",
    "spline_map",
    "map_eval",
    "piola_transform",
    "HalfPlane",
    "Disk",
    "ConvexPolygon",
    "BCTag",
    "Region",
    "TrimmedDomain",
    "BoundaryArc",
    "region_inside",
    "boundary_arcs_in_element",
    "clip_segment_to_domain",
]

BOUNDARY_TOL = 1e-14
GRAZE_TOL = 1e-12


class GeometryFault(RuntimeError):
    """Raised on singular Jacobians and other geometric inconsistencies."""


# ---------------------------------------------------------------------------
# Geometry map


@dataclass(frozen=True)
class GeometryMap:
    """Map from the parametric square (0,1)^2 to the physical patch.

    kind is one of "identity", "affine" (per-axis scale + offset) or "spline"
    (control net over a TensorSplineSpace).
    """

    kind: str
    scale: np.ndarray | None = None
    offset: np.ndarray | None = None
    space: object | None = None
    control: np.ndarray | None = None

    @property
    def is_affine(self) -> bool:
        return self.kind in ("identity", "affine")

    def forward(self, zeta: np.ndarray) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        if self.kind == "identity":
            return zeta.copy()
        if self.kind == "affine":
            return self.offset + self.scale * zeta
        return _spline_forward(self, np.atleast_2d(zeta)).reshape(zeta.shape)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "affine":
            return (x - self.offset) / self.scale
        raise GeometryFault("inverse map is only available for identity/affine maps")

    def jacobian_const(self) -> np.ndarray:
        """Constant Jacobian of an identity/affine map."""
        if self.kind == "identity":
            return np.eye(2)
        if self.kind == "affine":
            return np.diag(self.scale)
        raise GeometryFault("spline maps have no constant Jacobian")

    def physical_box(self) -> np.ndarray:
        """Bounding box [[x0,x1],[y0,y1]] of the patch (identity/affine)."""
        if self.kind == "identity":
            return np.array([[0.0, 1.0], [0.0, 1.0]])
        if self.kind == "affine":
            lo = self.offset
            hi = self.offset + self.scale
            return np.stack([np.minimum(lo, hi), np.maximum(lo, hi)], axis=1)
        raise GeometryFault("spline maps have no axis-aligned physical box")


def identity_map() -> GeometryMap:
    return GeometryMap(kind="identity")


def affine_map(scale, offset=(0.0, 0.0)) -> GeometryMap:
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise GeometryFault("affine map scales must be positive")
    return GeometryMap(kind="affine", scale=scale, offset=np.asarray(offset, dtype=float))


def spline_map(space, control) -> GeometryMap:
    """Spline geometry map from a control net of shape (n1, n2, 2).

    The map is validated to be orientation preserving by sampling 3x3 Gauss
    points per element of the control space.
    """
    control = np.asarray(control, dtype=float)
    if control.shape != (space.kv1.dim, space.kv2.dim, 2):
        raise GeometryFault("control net shape must be (n1, n2, 2)")
    m = GeometryMap(kind="spline", space=space, control=control)
    gl = np.polynomial.legendre.leggauss(3)[0]
    for j1 in range(space.kv1.n_elements):
        for j2 in range(space.kv2.n_elements):
            box = space.element_box(j1, j2)
            xs = 0.5 * (box[0, 0] + box[0, 1]) + 0.5 * (box[0, 1] - box[0, 0]) * gl
            ys = 0.5 * (box[1, 0] + box[1, 1]) + 0.5 * (box[1, 1] - box[1, 0]) * gl
            pts = np.array([(a, b) for a in xs for b in ys])
            _, DF, _ = _spline_eval(m, pts, 1)
            det = DF[:, 0, 0] * DF[:, 1, 1] - DF[:, 0, 1] * DF[:, 1, 0]
            if np.any(det <= 1e-14):
                raise GeometryFault(
                    f"spline map is singular on element ({j1},{j2}): min det {det.min():.3e}"
                )
    return m


def _spline_eval(m: GeometryMap, pts: np.ndarray, nderiv: int):
    """Value, Jacobian, and (for nderiv=2) Hessians of a spline map at
    parametric points; Hessian has shape (m, 2, 2, 2) indexed [pt, comp, i, j]."""
    dofs, table = m.space.eval_scattered(pts, nderiv)
    cflat = m.control.reshape(-1, 2)
    coef = cflat[dofs]  # (m, nloc, 2)
    x = np.einsum("pa,pac->pc", table[:, :, 0, 0], coef)
    DF = None
    H = None
    if nderiv >= 1:
        DF = np.empty((pts.shape[0], 2, 2))
        DF[:, :, 0] = np.einsum("pa,pac->pc", table[:, :, 1, 0], coef)
        DF[:, :, 1] = np.einsum("pa,pac->pc", table[:, :, 0, 1], coef)
    if nderiv >= 2:
        H = np.empty((pts.shape[0], 2, 2, 2))
        H[:, :, 0, 0] = np.einsum("pa,pac->pc", table[:, :, 2, 0], coef)
        H[:, :, 1, 1] = np.einsum("pa,pac->pc", table[:, :, 0, 2], coef)
        H[:, :, 0, 1] = np.einsum("pa,pac->pc", table[:, :, 1, 1], coef)
        H[:, :, 1, 0] = H[:, :, 0, 1]
    return x, DF, H


def _spline_forward(m: GeometryMap, pts: np.ndarray) -> np.ndarray:
    return _spline_eval(m, pts, 0)[0]


def map_eval(m: GeometryMap, zeta, nderiv: int = 0):
    """Evaluate the map at a parametric point, optionally with its Jacobian.

    Returns x for nderiv=0 and (x, DF) for nderiv=1. Raises GeometryFault for
    a singular Jacobian.
    """
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < -1e-12) or np.any(zeta > 1 + 1e-12):
        raise GeometryFault("parametric point outside the closed unit square")
    if m.is_affine:
        x = m.forward(zeta)
        if nderiv == 0:
            return x
        DF = m.jacobian_const()
        return x, DF
    x, DF, _ = _spline_eval(m, np.atleast_2d(zeta), 1 if nderiv else 0)
    if nderiv == 0:
        return x[0]
    det = DF[0, 0, 0] * DF[0, 1, 1] - DF[0, 0, 1] * DF[0, 1, 0]
    if det <= 1e-14:
        raise GeometryFault(f"singular Jacobian (det={det:.3e}) at zeta={zeta}")
    return x[0], DF[0]


def map_data_at(m: GeometryMap, pts: np.ndarray, need_hessian: bool = False):
    """Jacobian, determinant and optional Hessian at many parametric points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[0]
    if m.is_affine:
        DF = np.broadcast_to(m.jacobian_const(), (n, 2, 2)).copy()
        det = np.full(n, DF[0, 0, 0] * DF[0, 1, 1])
        H = np.zeros((n, 2, 2, 2)) if need_hessian else None
        return DF, det, H
    _, DF, H = _spline_eval(m, pts, 2 if need_hessian else 1)
    det = DF[:, 0, 0] * DF[:, 1, 1] - DF[:, 0, 1] * DF[:, 1, 0]
    if np.any(det <= 1e-14):
        raise GeometryFault("singular Jacobian in map_data_at")
    return DF, det, H


def piola_transform(DF, detDF, vhat, grad_vhat, hess=None):
    """Map a parametric vector value and gradient to physical space.

    v = DF vhat / detDF and Dv by the chain rule. For non-affine maps the
    second-derivative correction requires ``hess``, the map Hessian with
    shape (2,2,2) indexed [comp, i, j].
    """
    DF = np.asarray(DF, dtype=float)
    vhat = np.asarray(vhat, dtype=float)
    grad_vhat = np.asarray(grad_vhat, dtype=float)
    if detDF <= 0:
        raise GeometryFault(f"non-positive Jacobian determinant: {detDF}")
    DFinv = np.linalg.inv(DF)
    v = DF @ vhat / detDF
    Dv = DF @ grad_vhat @ DFinv / detDF
    if hess is not None:
        H = np.asarray(hess, dtype=float)
        # d/dzeta_l of detDF from the 2x2 cofactor expansion
        dJ = np.array(
            [
                H[0, 0, l] * DF[1, 1] + DF[0, 0] * H[1, 1, l]
                - H[0, 1, l] * DF[1, 0] - DF[0, 1] * H[1, 0, l]
                for l in range(2)
            ]
        )
        # (d/dzeta_l)(DF vhat)_i = sum_m H[i,m,l] vhat_m
        corr = np.einsum("iml,m->il", H, vhat)
        corr = corr - np.outer(DF @ vhat, dJ) / detDF
        Dv = Dv + corr @ DFinv / detDF
    return v, Dv


# ---------------------------------------------------------------------------
# Trimming primitives. Each removed region is open; removed_signed(x) is
# positive strictly inside, negative strictly outside, zero on the boundary.


@dataclass(frozen=True)
class HalfPlane:
    """Removed region { x : normal . x < offset }."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-14:
            raise GeometryFault("half-plane normal must have unit length")
        object.__setattr__(self, "normal", n)

    def removed_signed(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self.offset - pts @ self.normal

    def removed_y_interval(self, x: float, ylo: float, yhi: float):
        nx, ny = self.normal
        c = self.offset
        if abs(ny) < 1e-300:
            return (ylo, yhi) if nx * x < c else None
        t = (c - nx * x) / ny
        if ny > 0:  # removed: y < t
            return (ylo, min(t, yhi)) if t > ylo else None
        return (max(t, ylo), yhi) if t < yhi else None  # removed: y > t

    def x_breaks(self, box: np.ndarray):
        nx, ny = self.normal
        c = self.offset
        out = []
        if abs(ny) < 1e-300:
            out.append(c / nx)
        else:
            for y in box[1]:
                if abs(nx) > 1e-300:
                    out.append((c - ny * y) / nx)
        return out

    def boundary_segments(self, box=None):
        """The boundary line as a segment with the outward-of-domain normal
        (pointing into the removed region). Anchored near ``box`` so clipped
        endpoints stay at full precision."""
        t = np.array([-self.normal[1], self.normal[0]])
        if box is None:
            p = self.normal * self.offset
            L = 1e6
        else:
            box = np.asarray(box, dtype=float)
            ctr = 0.5 * (box[:, 0] + box[:, 1])
            p = ctr - (ctr @ self.normal - self.offset) * self.normal
            L = 2.0 * float(np.hypot(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0]))
        return [(p - L * t, p + L * t, -self.normal)]


@dataclass(frozen=True)
class Disk:
    """Removed region { x : |x - center| < radius }."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise GeometryFault("disk radius must be positive")

    def removed_signed(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self.radius - np.linalg.norm(pts - self.center, axis=-1)

    def removed_y_interval(self, x: float, ylo: float, yhi: float):
        dx = x - self.center[0]
        disc = self.radius**2 - dx * dx
        if disc <= GRAZE_TOL * self.radius**2:
            return None
        s = math.sqrt(disc)
        lo, hi = self.center[1] - s, self.center[1] + s
        lo, hi = max(lo, ylo), min(hi, yhi)
        return (lo, hi) if hi > lo else None

    def x_breaks(self, box: np.ndarray):
        cx, cy, r = self.center[0], self.center[1], self.radius
        out = []
        if box[1, 0] - GRAZE_TOL < cy < box[1, 1] + GRAZE_TOL:
            out.extend([cx - r, cx + r])  # vertical tangency abscissae
        for y in box[1]:
            disc = r * r - (y - cy) ** 2
            if disc > GRAZE_TOL * r * r:
                s = math.sqrt(disc)
                out.extend([cx - s, cx + s])
        return out

    def tangency_abscissae(self):
        return (self.center[0] - self.radius, self.center[0] + self.radius)


@dataclass(frozen=True)
class ConvexPolygon:
    """Removed open convex polygon; vertices are normalized to CCW order."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise GeometryFault("polygon needs at least 3 vertices of dim 2")
        area2 = 0.0
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            area2 += a[0] * b[1] - b[0] * a[1]
        if area2 < 0:
            v = v[::-1].copy()
        crosses = []
        for i in range(len(v)):
            a, b, c = v[i], v[(i + 1) % len(v)], v[(i + 2) % len(v)]
            e1, e2 = b - a, c - b
            crosses.append(e1[0] * e2[1] - e1[1] * e2[0])
        if min(crosses) <= 0:
            raise GeometryFault("polygon must be strictly convex and CCW-orderable")
        object.__setattr__(self, "vertices", v)

    def edges(self):
        v = self.vertices
        for i in range(len(v)):
            yield v[i], v[(i + 1) % len(v)]

    def removed_signed(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.full(pts.shape[0], np.inf)
        for a, b in self.edges():
            e = b - a
            ln = np.linalg.norm(e)
            d = ((pts[:, 0] - a[0]) * e[1] - (pts[:, 1] - a[1]) * e[0]) / ln
            out = np.minimum(out, -d)  # interior is left of each CCW edge
        return out

    def removed_y_interval(self, x: float, ylo: float, yhi: float):
        lo, hi = -np.inf, np.inf
        for a, b in self.edges():
            e = b - a
            # interior: e_x*(y-a_y) - e_y*(x-a_x) > 0
            cx = e[1] * (x - a[0])
            if abs(e[0]) < 1e-300:
                if -cx <= 0:  # y-independent constraint fails: nothing removed
                    return None
                continue
            t = a[1] + cx / e[0]
            if e[0] > 0:
                lo = max(lo, t)
            else:
                hi = min(hi, t)
        lo, hi = max(lo, ylo), min(hi, yhi)
        return (lo, hi) if hi > lo else None

    def x_breaks(self, box: np.ndarray):
        out = [v[0] for v in self.vertices]
        for a, b in self.edges():
            for y in box[1]:
                dy = b[1] - a[1]
                if abs(dy) > 1e-300:
                    t = (y - a[1]) / dy
                    if -GRAZE_TOL < t < 1 + GRAZE_TOL:
                        out.append(a[0] + t * (b[0] - a[0]))
        return out

    def boundary_segments(self, box=None):
        segs = []
        for a, b in self.edges():
            e = b - a
            ln = np.linalg.norm(e)
            inward = np.array([-e[1], e[0]]) / ln  # into the polygon
            segs.append((a, b, inward))
        return segs


# ---------------------------------------------------------------------------
# Trimmed domain


class BCTag(enum.Enum):
    DIRICHLET_STRONG = "dirichlet_strong"
    DIRICHLET_WEAK = "dirichlet_weak"
    NEUMANN = "neumann"


class Region(enum.Enum):
    INSIDE = "inside"
    REMOVED = "removed"
    OUTSIDE = "outside"


FACES = ("xmin", "xmax", "ymin", "ymax")
_FACE_NORMALS = {
    "xmin": np.array([-1.0, 0.0]),
    "xmax": np.array([1.0, 0.0]),
    "ymin": np.array([0.0, -1.0]),
    "ymax": np.array([0.0, 1.0]),
}


@dataclass(frozen=True)
class TrimmedDomain:
    """Physical patch minus removed regions, with per-face boundary tags.

    Trimming curves always carry weak Dirichlet conditions; face tags apply
    to the four faces of the untrimmed patch.
    """

    geo_map: GeometryMap
    primitives: tuple = ()
    face_bc: dict = field(default_factory=dict)

    def __post_init__(self):
        prims = tuple(self.primitives)
        object.__setattr__(self, "primitives", prims)
        bc = {f: BCTag(self.face_bc.get(f, BCTag.DIRICHLET_WEAK)) for f in FACES}
        object.__setattr__(self, "face_bc", bc)
        if prims and not self.geo_map.is_affine:
            raise GeometryFault("trimmed domains require an identity/affine map")
        if not prims and all(tag == BCTag.NEUMANN for tag in bc.values()):
            raise GeometryFault("Dirichlet boundary must be nonempty")
        for f in FACES:
            if bc[f] == BCTag.DIRICHLET_STRONG and self._face_is_trimmed(f):
                raise GeometryFault(
                    f"face {f} is crossed by a removed region and cannot be strong"
                )

    def _face_points(self, face: str, n: int = 33) -> np.ndarray:
        box = self.geo_map.physical_box()
        t = np.linspace(0.0, 1.0, n)
        if face == "xmin":
            return np.stack([np.full(n, box[0, 0]), box[1, 0] + t * (box[1, 1] - box[1, 0])], 1)
        if face == "xmax":
            return np.stack([np.full(n, box[0, 1]), box[1, 0] + t * (box[1, 1] - box[1, 0])], 1)
        if face == "ymin":
            return np.stack([box[0, 0] + t * (box[0, 1] - box[0, 0]), np.full(n, box[1, 0])], 1)
        return np.stack([box[0, 0] + t * (box[0, 1] - box[0, 0]), np.full(n, box[1, 1])], 1)

    def _face_is_trimmed(self, face: str) -> bool:
        if not self.primitives:
            return False
        pts = self._face_points(face)
        for prim in self.primitives:
            if np.any(prim.removed_signed(pts) > GRAZE_TOL):
                return True
        return False

    @property
    def has_neumann(self) -> bool:
        return any(tag == BCTag.NEUMANN for tag in self.face_bc.values())

    def removed_signed(self, pts: np.ndarray) -> np.ndarray:
        """max over primitives of the removed-region signed distance."""
        pts = np.atleast_2d(pts)
        out = np.full(pts.shape[0], -np.inf)
        for prim in self.primitives:
            out = np.maximum(out, prim.removed_signed(pts))
        return out

    def is_removed(self, pts: np.ndarray) -> np.ndarray:
        if not self.primitives:
            return np.zeros(np.atleast_2d(pts).shape[0], dtype=bool)
        return self.removed_signed(pts) > -BOUNDARY_TOL


def region_inside(domain: TrimmedDomain, x) -> Region:
    """Classify a physical point: inside the domain, removed, or outside the
    untrimmed patch. Points within 1e-14 of a removed region's boundary count
    as removed (the closure is cut away)."""
    x = np.asarray(x, dtype=float)
    box = domain.geo_map.physical_box()
    if (
        x[0] < box[0, 0] - BOUNDARY_TOL
        or x[0] > box[0, 1] + BOUNDARY_TOL
        or x[1] < box[1, 0] - BOUNDARY_TOL
        or x[1] > box[1, 1] + BOUNDARY_TOL
    ):
        return Region.OUTSIDE
    if domain.primitives and domain.is_removed(x[None, :])[0]:
        return Region.REMOVED
    return Region.INSIDE


# ---------------------------------------------------------------------------
# Boundary arcs


@dataclass(frozen=True)
class BoundaryArc:
    """One piece of the domain boundary inside a single element.

    kind "segment": straight piece p0 -> p1 with constant outward normal.
    kind "arc": circular piece of radius r about center, angles th0 < th1;
    normal_sign +1 means the outward normal points toward the center.
    """

    kind: str
    bc: BCTag
    element: tuple | None = None
    p0: np.ndarray | None = None
    p1: np.ndarray | None = None
    normal: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0
    th0: float = 0.0
    th1: float = 0.0
    normal_sign: float = 1.0

    @property
    def length(self) -> float:
        if self.kind == "segment":
            return float(np.linalg.norm(self.p1 - self.p0))
        return self.radius * (self.th1 - self.th0)

    def points_normals(self, t: np.ndarray):
        """Points and unit outward normals at parameters t in [0,1]."""
        t = np.asarray(t, dtype=float)
        if self.kind == "segment":
            pts = self.p0[None, :] + t[:, None] * (self.p1 - self.p0)[None, :]
            nrm = np.broadcast_to(self.normal, pts.shape).copy()
            return pts, nrm
        th = self.th0 + t * (self.th1 - self.th0)
        raddir = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = self.center[None, :] + self.radius * raddir
        return pts, -self.normal_sign * raddir


def _clip_segment_to_box(p0, p1, box):
    """Liang-Barsky clip; returns (t0, t1) in [0,1] or None."""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for dim in range(2):
        for sign, bound in ((-1.0, box[dim, 0]), (1.0, box[dim, 1])):
            num = sign * (bound - p0[dim])
            den = sign * d[dim]
            if abs(den) < 1e-300:
                if num < 0:
                    return None
                continue
            t = num / den
            if den > 0:
                t1 = min(t1, t)
            else:
                t0 = max(t0, t)
    return (t0, t1) if t1 > t0 + 1e-15 else None


def _owned_by_box(midpoint, normal, box, h, arc_len):
    """An arc belongs to the element on its domain side: step a little
    against the outward normal and require the point to stay in the box.
    The step scales with the arc length so that epsilon-thin sliver pieces
    keep their boundary arcs."""
    delta = min(1e-7 * h, 0.1 * arc_len)
    p = midpoint - delta * normal
    return (
        box[0, 0] - 1e-15 <= p[0] <= box[0, 1] + 1e-15
        and box[1, 0] - 1e-15 <= p[1] <= box[1, 1] + 1e-15
    )


def _circle_box_angles(center, r, box):
    """Angular intervals of the circle lying inside the closed box."""
    cx, cy = center
    cand = []
    for x in box[0]:
        disc = r * r - (x - cx) ** 2
        if disc > GRAZE_TOL * r * r:
            s = math.sqrt(disc)
            for y in (cy - s, cy + s):
                if box[1, 0] - 1e-13 <= y <= box[1, 1] + 1e-13:
                    cand.append(math.atan2(y - cy, x - cx))
    for y in box[1]:
        disc = r * r - (y - cy) ** 2
        if disc > GRAZE_TOL * r * r:
            s = math.sqrt(disc)
            for x in (cx - s, cx + s):
                if box[0, 0] - 1e-13 <= x <= box[0, 1] + 1e-13:
                    cand.append(math.atan2(y - cy, x - cx))
    if not cand:
        mid = np.array([cx + r, cy])
        if (
            box[0, 0] <= mid[0] <= box[0, 1]
            and box[1, 0] <= mid[1] <= box[1, 1]
        ):
            return [(0.0, 2 * math.pi)]
        return []
    ang = np.sort(np.mod(cand, 2 * math.pi))
    ang = np.concatenate([ang, [ang[0] + 2 * math.pi]])
    out = []
    for i in range(len(ang) - 1):
        a, b = ang[i], ang[i + 1]
        if b - a < 1e-13:
            continue
        t = 0.5 * (a + b)
        p = np.array([cx + r * math.cos(t), cy + r * math.sin(t)])
        if (
            box[0, 0] - 1e-13 <= p[0] <= box[0, 1] + 1e-13
            and box[1, 0] - 1e-13 <= p[1] <= box[1, 1] + 1e-13
        ):
            out.append((a, b))
    return out


def boundary_arcs_in_element(domain: TrimmedDomain, box, element=None, include_faces=True):
    """Exact pieces of the domain boundary inside an axis-aligned element box.

    Returns trimming-curve pieces (weak Dirichlet) and, when the box touches
    a face of the untrimmed patch and include_faces is set, the face pieces
    clipped to the domain with the face's boundary tag. Arcs lying on the box
    boundary are kept only if the domain lies on this element's side.
    """
    box = np.asarray(box, dtype=float)
    h = float(max(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0]))
    arcs: list[BoundaryArc] = []

    for prim in domain.primitives:
        if isinstance(prim, Disk):
            for th0, th1 in _circle_box_angles(prim.center, prim.radius, box):
                tm = 0.5 * (th0 + th1)
                mid = prim.center + prim.radius * np.array([math.cos(tm), math.sin(tm)])
                nrm = (prim.center - mid) / prim.radius
                if _owned_by_box(mid, nrm, box, h, prim.radius * (th1 - th0)):
                    arcs.append(
                        BoundaryArc(
                            kind="arc",
                            bc=BCTag.DIRICHLET_WEAK,
                            element=element,
                            center=prim.center.copy(),
                            radius=prim.radius,
                            th0=th0,
                            th1=th1,
                            normal_sign=1.0,
                        )
                    )
        else:
            for a, b, outward in prim.boundary_segments(box):
                clip = _clip_segment_to_box(a, b, box)
                if clip is None:
                    continue
                q0 = a + clip[0] * (b - a)
                q1 = a + clip[1] * (b - a)
                if np.linalg.norm(q1 - q0) < 1e-13 * max(h, 1.0):
                    continue
                mid = 0.5 * (q0 + q1)
                if _owned_by_box(mid, outward, box, h, float(np.linalg.norm(q1 - q0))):
                    arcs.append(
                        BoundaryArc(
                            kind="segment",
                            bc=BCTag.DIRICHLET_WEAK,
                            element=element,
                            p0=q0,
                            p1=q1,
                            normal=np.asarray(outward, dtype=float),
                        )
                    )

    if include_faces:
        patch = domain.geo_map.physical_box()
        for face in FACES:
            dim = 0 if face.startswith("x") else 1
            side = 0 if face.endswith("min") else 1
            if abs(box[dim, side] - patch[dim, side]) > 1e-12 * max(
                1.0, abs(patch[dim, side])
            ):
                continue
            odim = 1 - dim
            p0 = np.empty(2)
            p1 = np.empty(2)
            p0[dim] = p1[dim] = patch[dim, side]
            p0[odim], p1[odim] = box[odim, 0], box[odim, 1]
            for t0, t1 in clip_segment_to_domain(p0, p1, domain):
                q0 = p0 + t0 * (p1 - p0)
                q1 = p0 + t1 * (p1 - p0)
                if np.linalg.norm(q1 - q0) < 1e-15:
                    continue
                arcs.append(
                    BoundaryArc(
                        kind="segment",
                        bc=domain.face_bc[face],
                        element=element,
                        p0=q0,
                        p1=q1,
                        normal=_FACE_NORMALS[face].copy(),
                    )
                )
    return arcs


def clip_segment_to_domain(p0, p1, domain: TrimmedDomain):
    """Parameter intervals (t0,t1) of the segment p0->p1 outside all removed
    regions (the kept, inside-domain parts)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    kept = [(0.0, 1.0)]
    for prim in domain.primitives:
        removed = _segment_removed_intervals(p0, p1, prim)
        for rlo, rhi in removed:
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
    return [(lo, hi) for lo, hi in kept if hi - lo > 1e-14]


def _segment_removed_intervals(p0, p1, prim):
    """t-intervals of the segment inside the closed removed region."""
    d = p1 - p0
    if isinstance(prim, HalfPlane):
        # removed where n.(p0 + t d) < c, i.e. t*den < num
        den = d @ prim.normal
        num = prim.offset - p0 @ prim.normal
        if abs(den) < 1e-300:
            return [(0.0, 1.0)] if num > -BOUNDARY_TOL else []
        t = num / den
        if den > 0:
            lo, hi = 0.0, min(t, 1.0)
        else:
            lo, hi = max(t, 0.0), 1.0
        return [(lo, hi)] if hi > lo else []
    if isinstance(prim, Disk):
        f = p0 - prim.center
        A = d @ d
        B = 2 * f @ d
        C = f @ f - prim.radius**2
        if A < 1e-300:
            return [(0.0, 1.0)] if C < 0 else []
        disc = B * B - 4 * A * C
        if disc <= GRAZE_TOL * prim.radius**2 * A:
            return []
        s = math.sqrt(disc)
        lo, hi = (-B - s) / (2 * A), (-B + s) / (2 * A)
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        return [(lo, hi)] if hi > lo else []
    if isinstance(prim, ConvexPolygon):
        lo, hi = 0.0, 1.0
        for a, b in prim.edges():
            e = b - a
            # inside: cross(e, x - a) > 0
            den = e[0] * d[1] - e[1] * d[0]
            num = e[0] * (p0[1] - a[1]) - e[1] * (p0[0] - a[0])
            if abs(den) < 1e-300:
                if num < -BOUNDARY_TOL:
                    return []
                continue
            t = -num / den
            if den > 0:
                lo = max(lo, t)
            else:
                hi = min(hi, t)
        return [(lo, hi)] if hi > lo else []
    raise TypeError(f"unknown primitive {type(prim)!r}")
