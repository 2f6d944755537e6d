"""Univariate and tensor-product B-spline spaces on [0,1].

Open knot vectors with uniform internal regularity, Cox-de Boor basis
evaluation with derivatives, dyadic refinement, and the 2D tensor-product
space whose breakpoint grid doubles as the element mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "KnotVector",
    "TensorSplineSpace",
    "make_open_knot_vector",
    "eval_basis",
    "eval_basis_array",
    "uniform_refine",
]


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector of degree ``degree`` with constant internal regularity.

    ``knots`` is ascending in [0,1], the first and last knot repeated
    ``degree+1`` times, internal knots repeated ``degree - regularity`` times.
    """

    degree: int
    regularity: int
    knots: np.ndarray

    def __post_init__(self):
        k = self.degree
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        if k < 1:
            raise ValueError(f"degree must be >= 1, got {k}")
        if not (0 <= self.regularity <= k - 1):
            raise ValueError(
                f"regularity must satisfy 0 <= alpha <= degree-1, got {self.regularity}"
            )
        if knots.ndim != 1 or knots.size < 2 * (k + 1):
            raise ValueError("knot vector too short for an open degree-%d basis" % k)
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ValueError("knot vector must span [0, 1]")
        if np.any(knots[: k + 1] != 0.0) or np.any(knots[-(k + 1):] != 1.0):
            raise ValueError("boundary knots must be repeated degree+1 times")
        if knots[k + 1] <= 0.0 or knots[-(k + 2)] >= 1.0:
            raise ValueError("boundary knots repeated more than degree+1 times")
        if self.dim < k + 1:
            raise ValueError("dimension must be at least degree+1")

    @property
    def dim(self) -> int:
        """Number of basis functions n = len(knots) - degree - 1."""
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots, including 0 and 1."""
        return np.unique(self.knots)

    @property
    def n_elements(self) -> int:
        return self.breakpoints.size - 1

    def span_of_element(self, j: int) -> int:
        """Knot-span index of breakpoint interval j; the nonzero basis
        functions there are span-degree .. span."""
        z = self.breakpoints
        return int(np.searchsorted(self.knots, z[j], side="right") - 1)

    def first_dof_of_element(self, j: int) -> int:
        return self.span_of_element(j) - self.degree

    def greville(self) -> np.ndarray:
        """Greville abscissae (knot averages), one per basis function."""
        k = self.degree
        return np.array(
            [self.knots[i + 1 : i + k + 1].mean() for i in range(self.dim)]
        )


def make_open_knot_vector(k: int, alpha: int, breakpoints) -> KnotVector:
    """Build the open knot vector of degree k, internal regularity alpha,
    over the given strictly increasing breakpoints ``0 = z_1 < ... < z_M = 1``.
    """
    z = np.asarray(breakpoints, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("need at least the two boundary breakpoints")
    if z[0] != 0.0 or z[-1] != 1.0:
        raise ValueError("breakpoints must start at 0 and end at 1")
    if np.any(np.diff(z) <= 0):
        raise ValueError("breakpoints must be strictly increasing")
    if not (0 <= alpha <= k - 1):
        raise ValueError(f"alpha out of range [0, {k - 1}]: {alpha}")
    mult = k - alpha
    knots = np.concatenate(
        [np.zeros(k + 1), np.repeat(z[1:-1], mult), np.ones(k + 1)]
    )
    return KnotVector(degree=k, regularity=alpha, knots=knots)


def uniform_refine(kv: KnotVector, levels: int) -> KnotVector:
    """Bisect every breakpoint interval ``levels`` times, preserving degree
    and regularity."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    z = kv.breakpoints
    for _ in range(levels):
        z = np.sort(np.concatenate([z, 0.5 * (z[:-1] + z[1:])]))
    return make_open_knot_vector(kv.degree, kv.regularity, z)


def _find_spans(kv: KnotVector, x: np.ndarray) -> np.ndarray:
    spans = np.searchsorted(kv.knots, x, side="right") - 1
    return np.clip(spans, kv.degree, kv.dim - 1)


def eval_basis_array(kv: KnotVector, x, nderiv: int = 0, spans=None):
    """Evaluate the degree+1 nonzero B-splines and derivatives at each x.

    Returns ``(spans, table)`` where spans has shape (m,) and table has shape
    (m, degree+1, nderiv+1); table[p, j, d] is the d-th derivative of basis
    function ``spans[p] - degree + j`` at ``x[p]``. Values sum to 1 at every
    point. Passing ``spans`` pins the knot span (same result for points
    interior to that span; on span boundaries it selects which element's
    basis ordering is used).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    k = kv.degree
    if not (0 <= nderiv <= k):
        raise ValueError(f"nderiv must be in [0, {k}]")
    m = x.size
    if spans is None:
        spans = _find_spans(kv, x)
    else:
        spans = np.broadcast_to(np.asarray(spans, dtype=int), (m,)).copy()
    U = kv.knots

    # Knot differences seen from each span, as in the classic recurrence.
    left = np.empty((m, k + 1))
    right = np.empty((m, k + 1))
    ndu = np.zeros((m, k + 1, k + 1))
    ndu[:, 0, 0] = 1.0
    for j in range(1, k + 1):
        left[:, j] = x - U[spans + 1 - j]
        right[:, j] = U[spans + j] - x
        saved = np.zeros(m)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            ndu[:, j, r] = denom
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(denom != 0.0, ndu[:, r, j - 1] / denom, 0.0)
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    table = np.zeros((m, k + 1, nderiv + 1))
    table[:, :, 0] = ndu[:, :, k]
    if nderiv == 0:
        return spans, table

    # Derivatives by differencing lower-degree columns of the triangle.
    a = np.zeros((m, 2, k + 1))
    for r in range(k + 1):
        a[:, :, :] = 0.0
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for d in range(1, nderiv + 1):
            deriv = np.zeros(m)
            rk = r - d
            pk = k - d
            if r >= d:
                with np.errstate(divide="ignore", invalid="ignore"):
                    a[:, s2, 0] = np.where(
                        ndu[:, pk + 1, rk] != 0.0,
                        a[:, s1, 0] / ndu[:, pk + 1, rk],
                        0.0,
                    )
                deriv += a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = d - 1 if r - 1 <= pk else k - r
            for j in range(j1, j2 + 1):
                with np.errstate(divide="ignore", invalid="ignore"):
                    a[:, s2, j] = np.where(
                        ndu[:, pk + 1, rk + j] != 0.0,
                        (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j],
                        0.0,
                    )
                deriv += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                with np.errstate(divide="ignore", invalid="ignore"):
                    a[:, s2, d] = np.where(
                        ndu[:, pk + 1, r] != 0.0,
                        -a[:, s1, d - 1] / ndu[:, pk + 1, r],
                        0.0,
                    )
                deriv += a[:, s2, d] * ndu[:, r, pk]
            table[:, r, d] = deriv
            s1, s2 = s2, s1

    # Scale derivative rows by k!/(k-d)!.
    fac = 1.0
    for d in range(1, nderiv + 1):
        fac *= k - d + 1
        table[:, :, d] *= fac
    return spans, table


def eval_basis(kv: KnotVector, x: float, nderiv: int = 0):
    """Single-point variant of :func:`eval_basis_array`.

    Returns ``(span, table)`` with table of shape (degree+1, nderiv+1).
    """
    spans, table = eval_basis_array(kv, [x], nderiv)
    return int(spans[0]), table[0]


@dataclass(frozen=True)
class TensorSplineSpace:
    """Tensor product of two univariate spline spaces over (0,1)^2."""

    kv1: KnotVector
    kv2: KnotVector
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for j1 in range(self.kv1.n_elements):
            for j2 in range(self.kv2.n_elements):
                e1 = self.kv1.breakpoints[j1 + 1] - self.kv1.breakpoints[j1]
                e2 = self.kv2.breakpoints[j2 + 1] - self.kv2.breakpoints[j2]
                if e1 <= 0 or e2 <= 0:
                    raise ValueError("degenerate element in tensor grid")
                ratio = min(e1, e2) / float(np.hypot(e1, e2))
                if ratio < 0.1:
                    raise ValueError(
                        f"element ({j1},{j2}) violates shape regularity: ratio {ratio:.3g}"
                    )

    @property
    def dims(self) -> tuple[int, int]:
        return (self.kv1.dim, self.kv2.dim)

    @property
    def dim(self) -> int:
        return self.kv1.dim * self.kv2.dim

    @property
    def n_elements(self) -> tuple[int, int]:
        return (self.kv1.n_elements, self.kv2.n_elements)

    def element_box(self, j1: int, j2: int) -> np.ndarray:
        """Parametric box [[x0,x1],[y0,y1]] of breakpoint cell (j1,j2)."""
        z1, z2 = self.kv1.breakpoints, self.kv2.breakpoints
        return np.array([[z1[j1], z1[j1 + 1]], [z2[j2], z2[j2 + 1]]])

    def flat_index(self, i1, i2):
        """Row-major global index of univariate pair (i1, i2)."""
        return np.asarray(i1) * self.kv2.dim + np.asarray(i2)

    def element_dofs(self, j1: int, j2: int) -> np.ndarray:
        """Global indices of the (d1+1)(d2+1) functions supported on cell
        (j1,j2), row-major."""
        key = (j1, j2)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        f1 = self.kv1.first_dof_of_element(j1)
        f2 = self.kv2.first_dof_of_element(j2)
        i1 = np.arange(f1, f1 + self.kv1.degree + 1)
        i2 = np.arange(f2, f2 + self.kv2.degree + 1)
        out = (i1[:, None] * self.kv2.dim + i2[None, :]).ravel()
        self._cache[key] = out
        return out

    def support_elements(self, i1: int, i2: int):
        """Ranges (inclusive) of element indices where function (i1,i2) is
        nonzero."""
        lo1, hi1 = _support_element_range(self.kv1, i1)
        lo2, hi2 = _support_element_range(self.kv2, i2)
        return (lo1, hi1), (lo2, hi2)

    def eval_scattered(self, pts: np.ndarray, nderiv: int = 0):
        """Basis values/derivatives at scattered parametric points.

        Returns ``(dofs, table)``: dofs (m, nloc) global indices and table of
        shape (m, nloc, nderiv+1, nderiv+1), table[p, a, dx, dy] the mixed
        (dx, dy) parametric derivative of function dofs[p, a] at pts[p].
        """
        pts = np.asarray(pts, dtype=float)
        s1, t1 = eval_basis_array(self.kv1, pts[:, 0], nderiv)
        s2, t2 = eval_basis_array(self.kv2, pts[:, 1], nderiv)
        d1, d2 = self.kv1.degree, self.kv2.degree
        i1 = s1[:, None] - d1 + np.arange(d1 + 1)[None, :]
        i2 = s2[:, None] - d2 + np.arange(d2 + 1)[None, :]
        dofs = (i1[:, :, None] * self.kv2.dim + i2[:, None, :]).reshape(
            pts.shape[0], -1
        )
        table = np.einsum("pad,pbe->pabde", t1, t2).reshape(
            pts.shape[0], -1, nderiv + 1, nderiv + 1
        )
        return dofs, table


def _support_element_range(kv: KnotVector, i: int) -> tuple[int, int]:
    lo = kv.knots[i]
    hi = kv.knots[i + kv.degree + 1]
    z = kv.breakpoints
    jlo = int(np.searchsorted(z, lo, side="right") - 1)
    jhi = int(np.searchsorted(z, hi, side="left") - 1)
    return max(jlo, 0), min(jhi, kv.n_elements - 1)


@lru_cache(maxsize=None)
def dyadic_breakpoints(level: int) -> tuple[float, ...]:
    """2^level + 1 uniform breakpoints on [0,1] (exact dyadic floats)."""
    return tuple(np.linspace(0.0, 1.0, 2**level + 1))
