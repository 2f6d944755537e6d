"""Discrete velocity/pressure pairs on the trimmed mesh.

Three velocity families over a common Bezier grid (divergence-conforming
pairs mapped by the Piola transform, and the equal-regularity pair mapped by
composition), the matching pressure space, active-DOF bookkeeping with
pressure pruning for the stabilized space, and strong boundary constraint
sets from face-wise L2 projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bspline import TensorSplineSpace, eval_basis_array, make_open_knot_vector
from .geometry import BCTag, FACES, TrimmedDomain, map_data_at
from .mesh import ElementStatus, TrimmedMesh
from .quadrature import gauss_legendre

__all__ = ["ElementKind", "StokesSpaces", "build_spaces", "strong_bc_sets"]

KINDS = ("RT", "N", "TH")


@dataclass(frozen=True)
class ElementKind:
    """Velocity family, base degree, and internal regularity alpha
    (defaults to the smoothest choice k-1)."""

    kind: str
    k: int
    alpha: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.k < 1:
            raise ValueError("base degree k must be >= 1")
        a = self.k - 1 if self.alpha is None else self.alpha
        if not (0 <= a <= self.k - 1):
            raise ValueError(f"alpha must be in [0, {self.k - 1}]")
        object.__setattr__(self, "alpha", a)

    def component_signature(self):
        """(degree, regularity) per direction for the two velocity
        components."""
        k, a = self.k, self.alpha
        if self.kind == "RT":
            return (
                ((k + 1, a + 1), (k, a)),
                ((k, a), (k + 1, a + 1)),
            )
        if self.kind == "N":
            return (
                ((k + 1, a + 1), (k + 1, a)),
                ((k + 1, a), (k + 1, a + 1)),
            )
        return (
            ((k + 1, a), (k + 1, a)),
            ((k + 1, a), (k + 1, a)),
        )

    @property
    def uses_piola(self) -> bool:
        return self.kind in ("RT", "N")


@dataclass
class StokesSpaces:
    """Velocity and pressure spaces with active-DOF numbering.

    Velocity DOFs are numbered row-major within each component, component 0
    first. Pressure carries two selections: all active DOFs, and the pruned
    set whose basis functions keep a fully good element inside their support
    (the kernel of the stabilization map is exactly the complement).
    """

    kind: ElementKind
    mesh: TrimmedMesh
    comp_spaces: tuple
    p_space: TensorSplineSpace
    act_vel: tuple          # per component: global flat ids of active DOFs
    g2a_vel: tuple          # per component: global -> active (-1 inactive)
    vel_offset: tuple
    n_vel: int
    act_p: np.ndarray
    g2a_p: np.ndarray
    act_p_pruned: np.ndarray
    g2a_p_pruned: np.ndarray
    _eldof_cache: dict = field(default_factory=dict, repr=False)

    def n_pressure(self, stabilized: bool) -> int:
        return self.act_p_pruned.size if stabilized else self.act_p.size

    def pressure_map(self, stabilized: bool) -> np.ndarray:
        return self.g2a_p_pruned if stabilized else self.g2a_p

    def element_vel_dofs(self, e):
        """Active velocity ids (both components) supported on element e."""
        key = ("v", e)
        hit = self._eldof_cache.get(key)
        if hit is not None:
            return hit
        parts = []
        for c in (0, 1):
            glob = self.comp_spaces[c].element_dofs(*e)
            act = self.g2a_vel[c][glob]
            if np.any(act < 0):
                raise RuntimeError(f"inactive velocity DOF on active element {e}")
            parts.append(act + self.vel_offset[c])
        out = (np.concatenate(parts), (parts[0].size, parts[1].size))
        self._eldof_cache[key] = out
        return out

    def element_p_dofs(self, e) -> np.ndarray:
        """Global flat pressure ids supported on element e."""
        key = ("p", e)
        hit = self._eldof_cache.get(key)
        if hit is None:
            hit = self.p_space.element_dofs(*e)
            self._eldof_cache[key] = hit
        return hit

    # -- basis evaluation -------------------------------------------------

    def _comp_tables(self, c, e, pts, nderiv):
        sp = self.comp_spaces[c]
        s1 = sp.kv1.span_of_element(e[0])
        s2 = sp.kv2.span_of_element(e[1])
        _, t1 = eval_basis_array(sp.kv1, pts[:, 0], nderiv, spans=s1)
        _, t2 = eval_basis_array(sp.kv2, pts[:, 1], nderiv, spans=s2)
        return t1, t2

    def velocity_basis_eval(self, e, param_pts):
        """Physical values and gradients of the element's velocity basis.

        Returns (values, grads) with shapes (nloc, m, 2) and (nloc, m, 2, 2),
        ordered component 0 then component 1, matching element_vel_dofs.
        """
        pts = np.atleast_2d(np.asarray(param_pts, dtype=float))
        m = pts.shape[0]
        geo = self.mesh.domain.geo_map
        DF, det, H = map_data_at(geo, pts, need_hessian=not geo.is_affine)
        vals = []
        grads = []
        for c in (0, 1):
            t1, t2 = self._comp_tables(c, e, pts, 1)
            B = np.einsum("pa,pb->pab", t1[:, :, 0], t2[:, :, 0]).reshape(m, -1)
            Gx = np.einsum("pa,pb->pab", t1[:, :, 1], t2[:, :, 0]).reshape(m, -1)
            Gy = np.einsum("pa,pb->pab", t1[:, :, 0], t2[:, :, 1]).reshape(m, -1)
            nloc = B.shape[1]
            v = np.zeros((nloc, m, 2))
            g = np.zeros((nloc, m, 2, 2))
            if self.kind.uses_piola:
                # v = DF vhat / det, Dv via chain rule (+Hessian term when
                # the map is not affine)
                DFc = DF[:, :, c]  # column c, shape (m, 2)
                v[:, :, 0] = (B * (DFc[:, 0] / det)[:, None]).T
                v[:, :, 1] = (B * (DFc[:, 1] / det)[:, None]).T
                DFinv = np.linalg.inv(DF)
                # parametric gradient of vhat (component c): rows (Gx, Gy)
                for i in range(2):
                    for jj in range(2):
                        g[:, :, i, jj] = (
                            (
                                Gx * DFinv[:, 0, jj][:, None]
                                + Gy * DFinv[:, 1, jj][:, None]
                            )
                            * (DFc[:, i] / det)[:, None]
                        ).T
                if H is not None and not geo.is_affine:
                    dJ = np.empty((m, 2))
                    for l in range(2):
                        dJ[:, l] = (
                            H[:, 0, 0, l] * DF[:, 1, 1]
                            + DF[:, 0, 0] * H[:, 1, 1, l]
                            - H[:, 0, 1, l] * DF[:, 1, 0]
                            - DF[:, 0, 1] * H[:, 1, 0, l]
                        )
                    for i in range(2):
                        corr_l = np.empty((m, 2, B.shape[1]))
                        for l in range(2):
                            fac = (H[:, i, c, l] - DFc[:, i] * dJ[:, l] / det) / det
                            corr_l[:, l, :] = fac[:, None] * B
                        for jj in range(2):
                            extra = (
                                corr_l[:, 0, :] * DFinv[:, 0, jj][:, None]
                                + corr_l[:, 1, :] * DFinv[:, 1, jj][:, None]
                            )
                            g[:, :, i, jj] += extra.T
            else:
                v[:, :, c] = B.T
                DFinv = np.linalg.inv(DF)
                for jj in range(2):
                    g[:, :, c, jj] = (
                        Gx * DFinv[:, 0, jj][:, None] + Gy * DFinv[:, 1, jj][:, None]
                    ).T
            vals.append(v)
            grads.append(g)
        return np.concatenate(vals, axis=0), np.concatenate(grads, axis=0)

    def pressure_basis_eval(self, e, param_pts, nderiv: int = 0):
        """Values (and optional parametric-to-physical gradients) of the
        element's pressure basis: shape (nloc, m) (+ (nloc, m, 2))."""
        pts = np.atleast_2d(np.asarray(param_pts, dtype=float))
        m = pts.shape[0]
        sp = self.p_space
        s1 = sp.kv1.span_of_element(e[0])
        s2 = sp.kv2.span_of_element(e[1])
        _, t1 = eval_basis_array(sp.kv1, pts[:, 0], nderiv, spans=s1)
        _, t2 = eval_basis_array(sp.kv2, pts[:, 1], nderiv, spans=s2)
        B = np.einsum("pa,pb->pab", t1[:, :, 0], t2[:, :, 0]).reshape(m, -1).T
        if nderiv == 0:
            return B
        geo = self.mesh.domain.geo_map
        DF, det, _ = map_data_at(geo, pts)
        DFinv = np.linalg.inv(DF)
        Gx = np.einsum("pa,pb->pab", t1[:, :, 1], t2[:, :, 0]).reshape(m, -1)
        Gy = np.einsum("pa,pb->pab", t1[:, :, 0], t2[:, :, 1]).reshape(m, -1)
        G = np.empty((B.shape[0], m, 2))
        for jj in range(2):
            G[:, :, jj] = (
                Gx * DFinv[:, 0, jj][:, None] + Gy * DFinv[:, 1, jj][:, None]
            ).T
        return B, G


def _active_dof_mask(space: TensorSplineSpace, elem_mask: np.ndarray) -> np.ndarray:
    """Boolean per-DOF mask: support contains at least one flagged element."""
    n1, n2 = space.dims
    out = np.zeros((n1, n2), dtype=bool)
    # column-wise prefix sums of the element mask for O(1) box queries
    sat = np.zeros((elem_mask.shape[0] + 1, elem_mask.shape[1] + 1), dtype=int)
    sat[1:, 1:] = np.cumsum(np.cumsum(elem_mask.astype(int), axis=0), axis=1)
    for i1 in range(n1):
        for i2 in range(n2):
            (lo1, hi1), (lo2, hi2) = space.support_elements(i1, i2)
            s = (
                sat[hi1 + 1, hi2 + 1]
                - sat[lo1, hi2 + 1]
                - sat[hi1 + 1, lo2]
                + sat[lo1, lo2]
            )
            out[i1, i2] = s > 0
    return out


def build_spaces(kind: ElementKind, mesh: TrimmedMesh, domain: TrimmedDomain | None = None) -> StokesSpaces:
    """Construct the velocity/pressure spaces on the mesh's Bezier grid and
    compute active and pruned DOF selections. Requires a classified mesh."""
    if mesh.good is None:
        raise ValueError("mesh must be classified (classify_good_bad) first")
    z1 = mesh.space.kv1.breakpoints
    z2 = mesh.space.kv2.breakpoints
    sigs = kind.component_signature()
    comp_spaces = tuple(
        TensorSplineSpace(
            make_open_knot_vector(s[0][0], s[0][1], z1),
            make_open_knot_vector(s[1][0], s[1][1], z2),
        )
        for s in sigs
    )
    p_space = TensorSplineSpace(
        make_open_knot_vector(kind.k, kind.alpha, z1),
        make_open_knot_vector(kind.k, kind.alpha, z2),
    )

    status = mesh.status
    active_el = np.vectorize(lambda s: s != ElementStatus.EXTERIOR)(status)
    good_el = active_el & mesh.good

    act_vel = []
    g2a_vel = []
    for sp in comp_spaces:
        mask = _active_dof_mask(sp, active_el).ravel()
        ids = np.flatnonzero(mask)
        g2a = np.full(sp.dim, -1, dtype=int)
        g2a[ids] = np.arange(ids.size)
        act_vel.append(ids)
        g2a_vel.append(g2a)
    vel_offset = (0, act_vel[0].size)
    n_vel = act_vel[0].size + act_vel[1].size

    p_mask = _active_dof_mask(p_space, active_el).ravel()
    act_p = np.flatnonzero(p_mask)
    g2a_p = np.full(p_space.dim, -1, dtype=int)
    g2a_p[act_p] = np.arange(act_p.size)

    pr_mask = _active_dof_mask(p_space, good_el).ravel()
    act_pr = np.flatnonzero(pr_mask)
    g2a_pr = np.full(p_space.dim, -1, dtype=int)
    g2a_pr[act_pr] = np.arange(act_pr.size)

    return StokesSpaces(
        kind=kind,
        mesh=mesh,
        comp_spaces=comp_spaces,
        p_space=p_space,
        act_vel=tuple(act_vel),
        g2a_vel=tuple(g2a_vel),
        vel_offset=vel_offset,
        n_vel=n_vel,
        act_p=act_p,
        g2a_p=g2a_p,
        act_p_pruned=act_pr,
        g2a_p_pruned=g2a_pr,
    )


def _face_param_info(face: str):
    """(normal_dim, side) for a face name."""
    dim = 0 if face.startswith("x") else 1
    side = 0 if face.endswith("min") else 1
    return dim, side


def _project_on_trace(kv, g, n_quad):
    """L2 projection coefficients of callable g(t) onto the univariate
    spline space, integrating exactly per breakpoint interval."""
    n = kv.dim
    M = np.zeros((n, n))
    b = np.zeros(n)
    gl_x, gl_w = gauss_legendre(n_quad)
    for j in range(kv.n_elements):
        z0, z1 = kv.breakpoints[j], kv.breakpoints[j + 1]
        t = 0.5 * (z0 + z1) + 0.5 * (z1 - z0) * gl_x
        w = 0.5 * (z1 - z0) * gl_w
        span = kv.span_of_element(j)
        _, table = eval_basis_array(kv, t, 0, spans=span)
        idx = np.arange(span - kv.degree, span + 1)
        vals = table[:, :, 0]
        M[np.ix_(idx, idx)] += np.einsum("p,pa,pb->ab", w, vals, vals)
        b[idx] += np.einsum("p,pa,p->a", w, vals, g(t))
    return np.linalg.solve(M, b)


def strong_bc_sets(spaces: StokesSpaces, domain: TrimmedDomain, u_D):
    """Constrained active velocity DOF ids and values for strong faces.

    Traces are constrained for the composition-mapped family; only the
    normal component for the Piola-mapped families (tangential parts stay in
    the weak formulation). Values come from face-wise L2 projection of u_D
    over the whole parametric face; DOFs that are not active are skipped.
    """
    geo = domain.geo_map
    constraints: dict[int, float] = {}
    kind = spaces.kind
    n_quad = kind.k + 5
    for face in FACES:
        if domain.face_bc[face] != BCTag.DIRICHLET_STRONG:
            continue
        dim, side = _face_param_info(face)
        comps = (0, 1) if kind.kind == "TH" else (dim,)
        for c in comps:
            sp = spaces.comp_spaces[c]
            kv_n = (sp.kv1, sp.kv2)[dim]
            kv_t = (sp.kv1, sp.kv2)[1 - dim]
            row = 0 if side == 0 else kv_n.dim - 1

            if kind.uses_piola:
                S = geo.jacobian_const()
                pull = S[0, 0] * S[1, 1] / S[dim, dim]
            else:
                pull = 1.0

            def g(t, c=c, dim=dim, side=side, pull=pull):
                zeta = np.zeros((t.size, 2))
                zeta[:, dim] = float(side)
                zeta[:, 1 - dim] = t
                vals = np.array([u_D(geo.forward(z)) for z in zeta])
                return pull * vals[:, c]

            coef = _project_on_trace(kv_t, g, n_quad)
            for j in range(kv_t.dim):
                i1, i2 = (row, j) if dim == 0 else (j, row)
                flat = i1 * sp.kv2.dim + i2
                act = spaces.g2a_vel[c][flat]
                if act >= 0:
                    constraints[int(act + spaces.vel_offset[c])] = float(coef[j])
    idx = np.array(sorted(constraints), dtype=int)
    vals = np.array([constraints[i] for i in idx])
    return idx, vals
