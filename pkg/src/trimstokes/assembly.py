"""Assembly of the (stabilized) Nitsche saddle-point system and the
mesh-dependent norm matrices.

Velocity-velocity terms: viscous volume term, Nitsche consistency terms
(with the projected normal derivative on bad elements when stabilization is
on), and the unmodified trace penalty. Velocity-pressure terms: the volume
divergence coupling plus, for the symmetric variant, the boundary pressure
term. Pressure values on bad elements come from the neighbor extension in
every integral that touches them. Strong constraints are eliminated by
substitution; for domains with no Neumann boundary one pressure DOF is
pinned to fix the structurally free constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .geometry import BCTag, FACES, BoundaryArc, TrimmedDomain, map_data_at
from .mesh import ElementStatus, TrimmedMesh
from .quadrature import boundary_rule_for_arc, cut_volume_rule, gauss_legendre
from .spaces import StokesSpaces
from .stabilization import rv_gradients, stabilized_pressure_values

__all__ = ["AssemblyParams", "ProblemData", "AssembledSystem", "assemble",
           "assemble_norm_matrices", "jacobi_scale"]


@dataclass(frozen=True)
class AssemblyParams:
    mu: float = 1.0
    gamma: float = 10.0
    m: int = 0
    stabilized: bool = True
    quad_order: int | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.m not in (0, 1):
            raise ValueError("m must be 0 or 1")
        if self.mu <= 0:
            raise ValueError("mu must be positive")


def _zero_vec(x):
    return np.zeros(2)


def _zero_scal(x):
    return 0.0


@dataclass(frozen=True)
class ProblemData:
    """Body force, divergence data, Dirichlet datum, and Neumann traction
    sigma_N(x, n)."""

    f: object = _zero_vec
    g: object = _zero_scal
    u_D: object = _zero_vec
    sigma_N: object = None


class _Coo:
    def __init__(self):
        self.i = []
        self.j = []
        self.v = []

    def add(self, rows, cols, block):
        block = np.asarray(block)
        self.i.append(np.repeat(rows, len(cols)))
        self.j.append(np.tile(cols, len(rows)))
        self.v.append(block.ravel())

    def build(self, shape):
        if not self.v:
            return sps.csr_matrix(shape)
        i = np.concatenate(self.i)
        j = np.concatenate(self.j)
        v = np.concatenate(self.v)
        return sps.coo_matrix((v, (i, j)), shape=shape).tocsr()


@dataclass
class AssembledSystem:
    spaces: StokesSpaces
    params: AssemblyParams
    A: sps.csr_matrix
    B1: sps.csr_matrix
    Bm: sps.csr_matrix
    rhs_F: np.ndarray
    rhs_G: np.ndarray
    N_v: sps.csr_matrix
    M_p: sps.csr_matrix
    constrained_idx: np.ndarray
    constrained_val: np.ndarray
    pressure_pin: int | None

    @property
    def n_vel(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.B1.shape[0]

    def free_masks(self):
        vfree = np.ones(self.n_vel, dtype=bool)
        vfree[self.constrained_idx] = False
        pfree = np.ones(self.n_p, dtype=bool)
        if self.pressure_pin is not None:
            pfree[self.pressure_pin] = False
        return vfree, pfree

    def reduced(self):
        """Eliminated saddle system (matrix, rhs) plus a recovery closure
        mapping the reduced solution back to full (u, p) coefficient
        vectors."""
        vfree, pfree = self.free_masks()
        g = np.zeros(self.n_vel)
        g[self.constrained_idx] = self.constrained_val
        A_ff = self.A[vfree, :][:, vfree]
        B1_f = self.B1[pfree, :][:, vfree]
        Bm_f = self.Bm[pfree, :][:, vfree]
        ru = self.rhs_F[vfree] - self.A[vfree, :] @ g
        rp = self.rhs_G[pfree] - self.Bm[pfree, :] @ g
        K = sps.bmat([[A_ff, B1_f.T], [Bm_f, None]], format="csr")
        nv_f = int(vfree.sum())
        rhs = np.concatenate([ru, rp])

        def recover(x):
            u = g.copy()
            u[vfree] = x[:nv_f]
            p = np.zeros(self.n_p)
            p[pfree] = x[nv_f:]
            return u, p

        return K, rhs, recover


def jacobi_scale(K: sps.csr_matrix, rhs: np.ndarray):
    """Symmetric diagonal scaling D^-1/2 K D^-1/2; zero-diagonal rows (the
    pressure block) keep unit scale. Returns the scaled system and the
    descaling vector applied to solutions."""
    d = np.abs(K.diagonal())
    d = np.where(d > 1e-300, d, 1.0)
    dinv = 1.0 / np.sqrt(d)
    D = sps.diags(dinv)
    return (D @ K @ D).tocsr(), dinv * rhs, dinv


def _volume_rule(mesh: TrimmedMesh, e, n):
    """(param points, physical points, weights) for one active element."""
    geo = mesh.domain.geo_map
    if geo.is_affine:
        rule = cut_volume_rule(
            mesh.physical_box(e),
            mesh.domain,
            n,
            element=e,
            cut=mesh.status[e] == ElementStatus.CUT,
        )
        param = geo.inverse(rule.points) if rule.points.size else rule.points
        return param, rule.points, rule.weights
    # untrimmed spline map: parametric tensor Gauss scaled by |det DF|
    box = mesh.parametric_box(e)
    gx, gw = gauss_legendre(n)
    xs = 0.5 * (box[0, 0] + box[0, 1]) + 0.5 * (box[0, 1] - box[0, 0]) * gx
    ys = 0.5 * (box[1, 0] + box[1, 1]) + 0.5 * (box[1, 1] - box[1, 0]) * gx
    wx = 0.5 * (box[0, 1] - box[0, 0]) * gw
    wy = 0.5 * (box[1, 1] - box[1, 0]) * gw
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    param = np.stack([X.ravel(), Y.ravel()], axis=1)
    w = np.outer(wx, wy).ravel()
    _, det, _ = map_data_at(geo, param)
    phys = np.array([geo.forward(z) for z in param])
    return param, phys, w * det


def _element_boundary_rules(mesh: TrimmedMesh, e, n):
    """Boundary rules (trimming pieces + fitted-face pieces) owned by e."""
    geo = mesh.domain.geo_map
    h = float(mesh.h_elem[e])
    if geo.is_affine:
        from .geometry import boundary_arcs_in_element

        arcs = boundary_arcs_in_element(
            mesh.domain, mesh.physical_box(e), element=e, include_faces=True
        )
        return [boundary_rule_for_arc(a, n, h) for a in arcs]
    # spline map, untrimmed: fitted faces only, built parametrically
    rules = []
    box = mesh.parametric_box(e)
    ne1, ne2 = mesh.shape
    gx, gw = gauss_legendre(n)
    for face in FACES:
        dim = 0 if face.startswith("x") else 1
        side = 0 if face.endswith("min") else 1
        at_edge = (e[dim] == 0 and side == 0) or (
            e[dim] == (ne1, ne2)[dim] - 1 and side == 1
        )
        if not at_edge:
            continue
        odim = 1 - dim
        t0, t1 = box[odim]
        t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx
        param = np.zeros((n, 2))
        param[:, dim] = float(side)
        param[:, odim] = t
        DF, det, _ = map_data_at(geo, param)
        tau = DF[:, :, odim]  # d(phys)/dt along the face
        jac = np.linalg.norm(tau, axis=1) * 0.5 * (t1 - t0)
        nrm = np.stack([tau[:, 1], -tau[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        out_par = np.zeros(2)
        out_par[dim] = -1.0 if side == 0 else 1.0
        sign = np.sign(np.einsum("pc,pc->p", nrm, DF @ out_par))
        nrm *= sign[:, None]
        phys = np.array([geo.forward(z) for z in param])
        rules.append(
            _SplineFaceRule(
                points=phys,
                param=param,
                weights=gw * jac,
                normals=nrm,
                h_elem=float(mesh.h_elem[e]),
                bc=mesh.domain.face_bc[face],
                element=e,
            )
        )
    return rules


@dataclass(frozen=True)
class _SplineFaceRule:
    points: np.ndarray
    param: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    h_elem: float
    bc: BCTag
    element: tuple


def assemble(
    domain: TrimmedDomain,
    mesh: TrimmedMesh,
    spaces: StokesSpaces,
    projectors: dict,
    params: AssemblyParams,
    data: ProblemData,
    constrained=None,
) -> AssembledSystem:
    """Assemble forms, right-hand sides, and norm matrices.

    ``constrained`` is the (indices, values) pair from strong_bc_sets; pass
    None for no strong constraints. A missing projector for a bad element is
    an error when stabilization is on.
    """
    mu, gamma, m_flag = params.mu, params.gamma, params.m
    stab = params.stabilized
    n_q = params.quad_order or spaces.kind.k + 3
    n_p_sel = spaces.n_pressure(stab)
    pmap = spaces.pressure_map(stab)
    nv = spaces.n_vel

    A = _Coo()
    B1 = _Coo()
    Bm = _Coo()
    Nv = _Coo()
    Mp = _Coo()
    rhs_F = np.zeros(nv)
    rhs_G = np.zeros(n_p_sel)

    geo = domain.geo_map

    for e in mesh.active_elements():
        is_bad = stab and mesh.is_bad(e)
        if is_bad and e not in projectors:
            raise ValueError(f"missing projector for bad element {e}")
        param_pts, phys_pts, w = _volume_rule(mesh, e, n_q)
        if w.size == 0:
            continue
        vdofs, _ = spaces.element_vel_dofs(e)
        vals, grads = spaces.velocity_basis_eval(e, param_pts)
        # viscous block, shared by the form and the velocity norm
        A_el = mu * np.einsum("p,apij,bpij->ab", w, grads, grads)
        A.add(vdofs, vdofs, A_el)
        Nv.add(vdofs, vdofs, A_el)

        if is_bad:
            pg, pvals = stabilized_pressure_values(
                spaces, projectors[e], param_pts
            )
        else:
            pg = spaces.element_p_dofs(e)
            pvals = spaces.pressure_basis_eval(e, param_pts)
        psel = pmap[pg]
        div = np.einsum("apii->ap", grads)
        B_el = -np.einsum("p,bp,ap->ba", w, pvals, div)
        B1.add(psel, vdofs, B_el)
        Bm.add(psel, vdofs, B_el)
        Mp.add(psel, psel, np.einsum("p,ap,bp->ab", w, pvals, pvals) / mu)

        fv = np.array([data.f(x) for x in phys_pts])
        rhs_F[vdofs] += np.einsum("p,apc,pc->a", w, vals, fv)
        gv = np.array([data.g(x) for x in phys_pts])
        np.add.at(rhs_G, psel, -np.einsum("p,ap,p->a", w, pvals, gv))

        for rule in _element_boundary_rules(mesh, e, n_q):
            if rule.weights.size == 0:
                continue
            bw = rule.weights
            nrm = rule.normals
            h_k = rule.h_elem
            bpar = (
                rule.param
                if hasattr(rule, "param")
                else geo.inverse(rule.points)
            )
            bvals, bgrads = spaces.velocity_basis_eval(e, bpar)

            if rule.bc == BCTag.NEUMANN:
                if data.sigma_N is not None:
                    tr = np.array(
                        [data.sigma_N(x, n) for x, n in zip(rule.points, nrm)]
                    )
                    rhs_F[vdofs] += np.einsum("p,apc,pc->a", bw, bvals, tr)
                continue

            # Dirichlet piece (weak or strong face)
            strong_face = rule.bc == BCTag.DIRICHLET_STRONG

            # norm matrices integrate over the whole Dirichlet boundary
            Nv.add(
                vdofs,
                vdofs,
                (mu / h_k) * np.einsum("p,apc,bpc->ab", bw, bvals, bvals),
            )
            if is_bad:
                bpg, bpvals = stabilized_pressure_values(
                    spaces, projectors[e], bpar
                )
            else:
                bpg = spaces.element_p_dofs(e)
                bpvals = spaces.pressure_basis_eval(e, bpar)
            bpsel = pmap[bpg]
            Mp.add(
                bpsel,
                bpsel,
                (h_k / mu) * np.einsum("p,ap,bp->ab", bw, bpvals, bpvals),
            )

            uD = np.array([data.u_D(x) for x in rule.points])

            # boundary pressure coupling: always present in the first
            # equation's form, and in the second one for the symmetric variant
            vn = np.einsum("apc,pc->ap", bvals, nrm)
            Bbnd = np.einsum("p,bp,ap->ba", bw, bpvals, vn)
            B1.add(bpsel, vdofs, Bbnd)
            if m_flag == 1:
                Bm.add(bpsel, vdofs, Bbnd)
                np.add.at(
                    rhs_G,
                    bpsel,
                    np.einsum("p,ap,p->a", bw, bpvals, np.einsum("pc,pc->p", uD, nrm)),
                )

            if strong_face and not spaces.kind.uses_piola:
                continue  # full trace constrained: no Nitsche terms here

            # tangential projection on strong-normal faces
            if strong_face:
                tvals = bvals - np.einsum("apc,pc,pd->apd", bvals, nrm, nrm)
                uDt = uD - np.einsum("pc,pc,pd->pd", uD, nrm, nrm)
            else:
                tvals = bvals
                uDt = uD

            if is_bad:
                gdofs, ggrads = rv_gradients(spaces, projectors[e], bpar)
            else:
                gdofs, ggrads = vdofs, bgrads
            Dn = np.einsum("apij,pj->api", ggrads, nrm)

            cons = mu * np.einsum("p,api,bpi->ab", bw, Dn, tvals)
            A.add(vdofs, gdofs, -cons.T)  # rows: test trace, cols: trial grad
            A.add(gdofs, vdofs, -cons)    # rows: test grad, cols: trial trace
            pen = (gamma / h_k) * np.einsum("p,apc,bpc->ab", bw, tvals, tvals)
            A.add(vdofs, vdofs, pen)

            rhs_F[gdofs] -= mu * np.einsum("p,api,pi->a", bw, Dn, uDt)
            rhs_F[vdofs] += (gamma / h_k) * np.einsum("p,apc,pc->a", bw, tvals, uDt)

    if constrained is None:
        cidx = np.zeros(0, dtype=int)
        cval = np.zeros(0)
    else:
        cidx, cval = constrained
    pin = n_p_sel - 1 if not domain.has_neumann else None

    return AssembledSystem(
        spaces=spaces,
        params=params,
        A=A.build((nv, nv)),
        B1=B1.build((n_p_sel, nv)),
        Bm=Bm.build((n_p_sel, nv)),
        rhs_F=rhs_F,
        rhs_G=rhs_G,
        N_v=Nv.build((nv, nv)),
        M_p=Mp.build((n_p_sel, n_p_sel)),
        constrained_idx=cidx,
        constrained_val=cval,
        pressure_pin=pin,
    )


def assemble_norm_matrices(
    domain: TrimmedDomain,
    mesh: TrimmedMesh,
    spaces: StokesSpaces,
    projectors: dict,
    mu: float,
    stabilized: bool = True,
    quad_order: int | None = None,
):
    """The velocity (grad + weighted Dirichlet trace) and pressure norm
    matrices alone."""
    params = AssemblyParams(
        mu=mu, gamma=1.0, m=0, stabilized=stabilized, quad_order=quad_order
    )
    sysm = assemble(domain, mesh, spaces, projectors, params, ProblemData())
    return sysm.N_v, sysm.M_p
