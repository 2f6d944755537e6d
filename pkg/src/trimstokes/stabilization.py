"""Polynomial extension stabilization for badly cut elements.

Each bad element borrows its pressure values (everywhere) and its velocity
normal-derivative values (in boundary terms) from the L2 projection of the
neighbor's restriction onto a local polynomial space, extended as a global
polynomial. Projections are computed in a tensor Legendre basis scaled to
the neighbor's parametric box, where the mass matrix is diagonal; for the
identity/affine maps used on trimmed domains this parametric construction
coincides with the physical one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline import eval_basis_array
from .geometry import map_data_at
from .mesh import TrimmedMesh
from .quadrature import gauss_legendre
from .spaces import StokesSpaces

__all__ = ["LocalProjector", "build_projector", "build_all_projectors",
           "stabilized_pressure_values", "rv_gradients"]


def _legendre_tensor(nbox, degs, pts, nderiv=0):
    """Tensor Legendre values (n_leg, m) and parametric gradients
    (n_leg, m, 2) on the frame scaled to the given parametric box.

    Points may lie outside the box; the polynomials extend globally.
    """
    pts = np.atleast_2d(pts)
    vals_d = []
    ders_d = []
    for d in range(2):
        a, b = nbox[d]
        t = (2.0 * pts[:, d] - a - b) / (b - a)
        V = np.polynomial.legendre.legvander(t, degs[d])  # (m, deg+1)
        vals_d.append(V)
        if nderiv:
            D = np.zeros_like(V)
            for i in range(degs[d] + 1):
                c = np.zeros(i + 1)
                c[i] = 1.0
                dc = np.polynomial.legendre.legder(c)
                D[:, i] = np.polynomial.legendre.legval(t, dc) * 2.0 / (b - a)
            ders_d.append(D)
    m = pts.shape[0]
    V = np.einsum("pa,pb->pab", vals_d[0], vals_d[1]).reshape(m, -1).T
    if not nderiv:
        return V
    G = np.empty((V.shape[0], m, 2))
    G[:, :, 0] = np.einsum("pa,pb->pab", ders_d[0], vals_d[1]).reshape(m, -1).T
    G[:, :, 1] = np.einsum("pa,pb->pab", vals_d[0], ders_d[1]).reshape(m, -1).T
    return V, G


def _legendre_mass_diag(nbox, degs):
    out = np.ones((degs[0] + 1, degs[1] + 1))
    for d in range(2):
        a, b = nbox[d]
        w = (b - a) / (2.0 * np.arange(degs[d] + 1) + 1.0)
        out = out * (w[:, None] if d == 0 else w[None, :])
    return out.ravel()


@dataclass(frozen=True)
class LocalProjector:
    """Projection-and-extension data from one good neighbor.

    Coefficient matrices map spline DOF coefficients (DOFs supported on the
    neighbor) to tensor-Legendre coefficients of the local L2 projection;
    evaluating those polynomials on the bad element is the extension.
    """

    element: tuple
    neighbor: tuple
    nbox: np.ndarray
    p_dofs: np.ndarray
    p_coef: np.ndarray
    p_degs: tuple
    v_dofs: np.ndarray
    v_coef: tuple
    v_degs: tuple
    v_split: tuple


def build_projector(spaces: StokesSpaces, mesh: TrimmedMesh, e) -> LocalProjector:
    """Build the pressure and velocity projectors of a bad element from its
    good neighbor (full tensor Gauss integration on the untrimmed
    neighbor)."""
    nb = mesh.neighbors[e]
    nbox = mesh.parametric_box(nb)
    kq = spaces.kind.k + 3
    gx, gw = gauss_legendre(kq)

    def tensor_pts(box):
        xs = 0.5 * (box[0, 0] + box[0, 1]) + 0.5 * (box[0, 1] - box[0, 0]) * gx
        ys = 0.5 * (box[1, 0] + box[1, 1]) + 0.5 * (box[1, 1] - box[1, 0]) * gx
        wx = 0.5 * (box[0, 1] - box[0, 0]) * gw
        wy = 0.5 * (box[1, 1] - box[1, 0]) * gw
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        W = np.outer(wx, wy).ravel()
        return np.stack([X.ravel(), Y.ravel()], axis=1), W

    pts, w = tensor_pts(nbox)

    # pressure: project onto the tensor polynomials of the pressure degree
    p_degs = (spaces.kind.k, spaces.kind.k)
    Lp = _legendre_tensor(nbox, p_degs, pts)
    mdiag = _legendre_mass_diag(nbox, p_degs)
    pvals = _param_pressure_values(spaces, nb, pts)
    Gp = np.einsum("p,lp,ap->la", w, Lp, pvals)
    p_coef = Gp / mdiag[:, None]
    p_dofs = spaces.element_p_dofs(nb)

    # velocity: per-component projection of the parametric pullback
    sigs = spaces.kind.component_signature()
    v_coef = []
    v_degs = []
    nloc = []
    for c in (0, 1):
        degs = (sigs[c][0][0], sigs[c][1][0])
        Lv = _legendre_tensor(nbox, degs, pts)
        md = _legendre_mass_diag(nbox, degs)
        bvals = _param_component_values(spaces, c, nb, pts)
        Gv = np.einsum("p,lp,ap->la", w, Lv, bvals)
        v_coef.append(Gv / md[:, None])
        v_degs.append(degs)
        nloc.append(bvals.shape[0])
    v_dofs, _ = spaces.element_vel_dofs(nb)

    return LocalProjector(
        element=e,
        neighbor=nb,
        nbox=nbox,
        p_dofs=p_dofs,
        p_coef=p_coef,
        p_degs=p_degs,
        v_dofs=v_dofs,
        v_coef=tuple(v_coef),
        v_degs=tuple(v_degs),
        v_split=tuple(nloc),
    )


def build_all_projectors(spaces: StokesSpaces, mesh: TrimmedMesh) -> dict:
    return {e: build_projector(spaces, mesh, e) for e in sorted(mesh.neighbors)}


def _param_pressure_values(spaces, e, pts):
    """Parametric pressure basis values on element e (nloc, m)."""
    sp = spaces.p_space
    s1 = sp.kv1.span_of_element(e[0])
    s2 = sp.kv2.span_of_element(e[1])
    _, t1 = eval_basis_array(sp.kv1, pts[:, 0], 0, spans=s1)
    _, t2 = eval_basis_array(sp.kv2, pts[:, 1], 0, spans=s2)
    m = pts.shape[0]
    return np.einsum("pa,pb->pab", t1[:, :, 0], t2[:, :, 0]).reshape(m, -1).T


def _param_component_values(spaces, c, e, pts):
    sp = spaces.comp_spaces[c]
    s1 = sp.kv1.span_of_element(e[0])
    s2 = sp.kv2.span_of_element(e[1])
    _, t1 = eval_basis_array(sp.kv1, pts[:, 0], 0, spans=s1)
    _, t2 = eval_basis_array(sp.kv2, pts[:, 1], 0, spans=s2)
    m = pts.shape[0]
    return np.einsum("pa,pb->pab", t1[:, :, 0], t2[:, :, 0]).reshape(m, -1).T


def stabilized_pressure_values(spaces: StokesSpaces, proj: LocalProjector, param_pts):
    """Values of the neighbor-extended pressure polynomials at parametric
    points of the bad element: (global p_dofs of the neighbor, values)."""
    L = _legendre_tensor(proj.nbox, proj.p_degs, param_pts)
    return proj.p_dofs, proj.p_coef.T @ L


def rv_gradients(spaces: StokesSpaces, proj: LocalProjector, param_pts):
    """Physical gradients of the extended velocity polynomials at parametric
    points of the bad element: (active velocity ids, grads (ndof, m, 2, 2)).

    Velocity DOFs not supported on the neighbor do not influence the
    extension; callers treat their rows as zero.
    """
    pts = np.atleast_2d(param_pts)
    m = pts.shape[0]
    geo = spaces.mesh.domain.geo_map
    S = geo.jacobian_const()
    det = S[0, 0] * S[1, 1]
    Sinv = np.linalg.inv(S)
    n0, n1 = proj.v_split
    grads = np.zeros((n0 + n1, m, 2, 2))
    for c, (off, n) in zip((0, 1), ((0, n0), (n0, n1))):
        _, G = _legendre_tensor(proj.nbox, proj.v_degs[c], pts, nderiv=1)
        gpar = np.einsum("la,lpd->apd", proj.v_coef[c], G)  # (ndof, m, 2)
        if spaces.kind.uses_piola:
            # vhat = B e_c: Dv = S (e_c gpar^T) S^-1 / det
            for i in range(2):
                for jj in range(2):
                    grads[off : off + n, :, i, jj] = (
                        S[i, c] * (gpar[:, :, 0] * Sinv[0, jj] + gpar[:, :, 1] * Sinv[1, jj]) / det
                    )
        else:
            for jj in range(2):
                grads[off : off + n, :, c, jj] = (
                    gpar[:, :, 0] * Sinv[0, jj] + gpar[:, :, 1] * Sinv[1, jj]
                )
    return proj.v_dofs, grads
