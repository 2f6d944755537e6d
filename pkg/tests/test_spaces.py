"""Tests for the discrete Stokes spaces, DOF bookkeeping, and strong BCs."""

import numpy as np
import pytest

from trimstokes.bspline import TensorSplineSpace, dyadic_breakpoints, make_open_knot_vector
from trimstokes.geometry import BCTag, HalfPlane, TrimmedDomain, identity_map, affine_map
from trimstokes.mesh import ElementStatus, build_mesh, classify_good_bad
from trimstokes.spaces import ElementKind, build_spaces, strong_bc_sets

from test_geometry import pentagon_domain


def make_setup(dom, level, kind):
    kv = make_open_knot_vector(1, 0, dyadic_breakpoints(level))
    mesh = classify_good_bad(build_mesh(dom, TensorSplineSpace(kv, kv)), 1.0)
    return build_spaces(kind, mesh, dom)


class TestDims:
    def test_th_counts(self):
        dom = TrimmedDomain(identity_map(), (), {})
        sp = make_setup(dom, 2, ElementKind("TH", 1, 0))
        # velocity components are degree-2, regularity-0 over 5 breakpoints:
        # 9 per direction
        assert sp.comp_spaces[0].dim == 81
        assert sp.n_vel == 162
        assert sp.act_p.size == 25

    def test_rt_counts(self):
        dom = TrimmedDomain(identity_map(), (), {})
        sp = make_setup(dom, 2, ElementKind("RT", 1, 0))
        assert sp.comp_spaces[0].dims == (6, 5)
        assert sp.comp_spaces[1].dims == (5, 6)
        assert sp.n_vel == 60
        assert sp.act_p.size == 25

    def test_n_counts(self):
        dom = TrimmedDomain(identity_map(), (), {})
        sp = make_setup(dom, 2, ElementKind("N", 1, 0))
        assert sp.comp_spaces[0].dims == (6, 9)
        assert sp.comp_spaces[1].dims == (9, 6)

    def test_exterior_row_dofs_dropped(self):
        # removed {y > 0.5} exactly on a mesh line: top rows exterior, DOFs
        # supported only there are dropped
        dom = TrimmedDomain(identity_map(), (HalfPlane((0.0, -1.0), -0.5),), {})
        sp = make_setup(dom, 2, ElementKind("TH", 1, 0))
        full = sp.comp_spaces[0].dim
        # degree-2 regularity-0 in y over 5 breakpoints: 9 functions; rows
        # j=0..4 supported on elements 0..1 (y < 0.5); functions 5..8 are
        # supported only on exterior elements
        assert sp.act_vel[0].size == 9 * 5
        assert sp.act_vel[0].size < full

    def test_alpha_default(self):
        kind = ElementKind("RT", 3)
        assert kind.alpha == 2


class TestPruning:
    def test_untrimmed_prune_is_noop(self):
        dom = TrimmedDomain(identity_map(), (), {})
        sp = make_setup(dom, 3, ElementKind("RT", 2, 1))
        np.testing.assert_array_equal(sp.act_p, sp.act_p_pruned)

    def test_pentagon_prunes_bad_support_dofs(self):
        sp = make_setup(pentagon_domain(), 3, ElementKind("RT", 2, 1))
        assert sp.act_p_pruned.size < sp.act_p.size
        # pruned DOFs never lose support on an interior element
        mesh = sp.mesh
        interior = np.vectorize(lambda s: s == ElementStatus.INTERIOR)(mesh.status)
        dropped = sorted(set(sp.act_p) - set(sp.act_p_pruned))
        n2 = sp.p_space.kv2.dim
        for flat in dropped:
            i1, i2 = divmod(flat, n2)
            (lo1, hi1), (lo2, hi2) = sp.p_space.support_elements(i1, i2)
            assert not interior[lo1 : hi1 + 1, lo2 : hi2 + 1].any()


class TestBasisEval:
    def test_th_identity_values_are_tensor_products(self):
        dom = TrimmedDomain(identity_map(), (), {})
        sp = make_setup(dom, 2, ElementKind("TH", 1, 0))
        pts = np.array([[0.1, 0.2], [0.6, 0.9]])
        vals, grads = sp.velocity_basis_eval((0, 0), pts[:1])
        n0 = sp.comp_spaces[0].element_dofs(0, 0).size
        # component-0 functions have zero second component and vice versa
        assert np.allclose(vals[:n0, :, 1], 0)
        assert np.allclose(vals[n0:, :, 0], 0)
        # partition of unity per component
        assert np.sum(vals[:n0, :, 0], axis=0) == pytest.approx(1.0)

    def test_rt_affine_piola_scaling(self):
        dom = TrimmedDomain(affine_map((2.0, 2.0)), (), {})
        spA = make_setup(dom, 2, ElementKind("RT", 1, 0))
        dom1 = TrimmedDomain(identity_map(), (), {})
        spI = make_setup(dom1, 2, ElementKind("RT", 1, 0))
        pts = np.array([[0.3, 0.4]])
        vA, gA = spA.velocity_basis_eval((1, 1), pts)
        vI, gI = spI.velocity_basis_eval((1, 1), pts)
        # v = S vhat / det S with S = 2I: v = vhat/2; Dv = Dvhat S^-1 /2
        np.testing.assert_allclose(vA, vI / 2.0, atol=1e-14)
        np.testing.assert_allclose(gA, gI / 4.0, atol=1e-14)

    def test_gradients_match_finite_differences(self):
        dom = TrimmedDomain(identity_map(), (), {})
        for kind in [ElementKind("RT", 2, 1), ElementKind("N", 2, 1), ElementKind("TH", 2, 1)]:
            sp = make_setup(dom, 2, kind)
            p = np.array([[0.312, 0.407]])
            h = 1e-6
            _, grads = sp.velocity_basis_eval((1, 1), p)
            for d in range(2):
                e = np.zeros((1, 2))
                e[0, d] = h
                vp, _ = sp.velocity_basis_eval((1, 1), p + e)
                vm, _ = sp.velocity_basis_eval((1, 1), p - e)
                fd = (vp - vm) / (2 * h)
                np.testing.assert_allclose(grads[:, :, :, d], fd, rtol=1e-5, atol=1e-5)

    def test_gradients_on_spline_map(self):
        # physical gradients (with the second-derivative correction for the
        # Piola families) against finite differences in physical coordinates
        from trimstokes.bspline import TensorSplineSpace as TSS
        from trimstokes.geometry import spline_map, map_data_at

        kvg = make_open_knot_vector(2, 1, [0.0, 0.5, 1.0])
        gsp = TSS(kvg, kvg)
        g1 = kvg.greville()
        ctrl = np.empty((kvg.dim, kvg.dim, 2))
        for i, gx in enumerate(g1):
            for j, gy in enumerate(g1):
                ctrl[i, j] = (gx + 0.08 * gx * gy, gy - 0.06 * gx * gx)
        geo = spline_map(gsp, ctrl)
        dom = TrimmedDomain(geo, (), {})
        kv = make_open_knot_vector(1, 0, dyadic_breakpoints(1))
        mesh = classify_good_bad(build_mesh(dom, TensorSplineSpace(kv, kv)), 1.0)
        for kind in [ElementKind("RT", 1, 0), ElementKind("TH", 1, 0)]:
            sp = build_spaces(kind, mesh, dom)
            z = np.array([[0.3, 0.35]])
            _, grads = sp.velocity_basis_eval((0, 0), z)
            DF, det, _ = map_data_at(geo, z)
            h = 1e-6
            for d in range(2):
                dz = np.linalg.solve(DF[0], np.eye(2)[d])[None, :] * h
                vp, _ = sp.velocity_basis_eval((0, 0), z + dz)
                vm, _ = sp.velocity_basis_eval((0, 0), z - dz)
                xp = geo.forward((z + dz)[0])
                xm = geo.forward((z - dz)[0])
                fd = (vp - vm) / (xp[d] - xm[d])
                np.testing.assert_allclose(grads[:, :, :, d], fd, rtol=2e-4, atol=2e-4)

    def test_rt_div_lies_in_pressure_space(self):
        # project div(v_h) onto the pressure space and check zero residual
        dom = TrimmedDomain(identity_map(), (), {})
        sp = make_setup(dom, 2, ElementKind("RT", 2, 1))
        rng = np.random.default_rng(4)
        coefs = rng.standard_normal(sp.n_vel)

        from trimstokes.quadrature import tensor_rule_on_box

        M = np.zeros((sp.p_space.dim, sp.p_space.dim))
        b = np.zeros(sp.p_space.dim)
        samples = []
        for e in sp.mesh.active_elements():
            rule = tensor_rule_on_box(sp.mesh.physical_box(e), 5)
            vdofs, _ = sp.element_vel_dofs(e)
            _, grads = sp.velocity_basis_eval(e, rule.points)
            div = np.einsum("a,apii->p", coefs[vdofs], grads)
            pvals = sp.pressure_basis_eval(e, rule.points)
            pdofs = sp.element_p_dofs(e)
            M[np.ix_(pdofs, pdofs)] += np.einsum("p,ap,bp->ab", rule.weights, pvals, pvals)
            b[pdofs] += np.einsum("p,ap,p->a", rule.weights, pvals, div)
            samples.append((e, rule.points[::7], div[::7]))
        q = np.linalg.solve(M, b)
        for e, pts, div_vals in samples:
            pvals = sp.pressure_basis_eval(e, pts)
            proj = q[sp.element_p_dofs(e)] @ pvals
            np.testing.assert_allclose(proj, div_vals, atol=1e-12)

    def test_space_inclusions_identity_map(self):
        # every RT basis function is representable in N, and every N
        # function in TH (identity map, 3x3 mesh, k=1): least squares fit
        # residual below 1e-11
        kv = make_open_knot_vector(1, 0, np.linspace(0, 1, 4))
        dom = TrimmedDomain(identity_map(), (), {})
        mesh = classify_good_bad(build_mesh(dom, TensorSplineSpace(kv, kv)), 1.0)
        rt = build_spaces(ElementKind("RT", 1, 0), mesh, dom)
        nd = build_spaces(ElementKind("N", 1, 0), mesh, dom)
        th = build_spaces(ElementKind("TH", 1, 0), mesh, dom)
        rng = np.random.default_rng(0)
        pts = rng.random((400, 2))

        def sample_matrix(sp):
            cols = np.zeros((2 * pts.shape[0], sp.n_vel))
            for e in sp.mesh.active_elements():
                box = sp.mesh.parametric_box(e)
                sel = (
                    (pts[:, 0] >= box[0, 0]) & (pts[:, 0] < box[0, 1])
                    & (pts[:, 1] >= box[1, 0]) & (pts[:, 1] < box[1, 1])
                )
                if not sel.any():
                    continue
                vdofs, _ = sp.element_vel_dofs(e)
                vals, _ = sp.velocity_basis_eval(e, pts[sel])
                rows = np.flatnonzero(sel)
                for a, dof in enumerate(vdofs):
                    cols[rows, dof] += vals[a, :, 0]
                    cols[rows + pts.shape[0], dof] += vals[a, :, 1]
            return cols

        A_rt, A_n, A_th = sample_matrix(rt), sample_matrix(nd), sample_matrix(th)
        for src, dst in [(A_rt, A_n), (A_n, A_th)]:
            coef, res, *_ = np.linalg.lstsq(dst, src, rcond=None)
            resid = dst @ coef - src
            assert np.abs(resid).max() < 1e-11


class TestStrongBC:
    def test_polynomial_reproduction_th(self):
        dom = TrimmedDomain(
            identity_map(),
            (),
            {f: BCTag.DIRICHLET_STRONG for f in ("xmin", "xmax", "ymin", "ymax")},
        )
        sp = make_setup(dom, 2, ElementKind("TH", 2, 1))

        def u_D(x):
            return np.array([x[0] + 2 * x[1] ** 2, x[0] ** 3 - x[1]])

        idx, vals = strong_bc_sets(sp, dom, u_D)
        coefs = np.zeros(sp.n_vel)
        coefs[idx] = vals
        # on the face x=0 the trace must reproduce u_D
        ts = np.linspace(0, 1, 9)
        pts = np.stack([np.zeros(9), ts], axis=1)
        for e in [(0, j) for j in range(4)]:
            box = sp.mesh.parametric_box(e)
            sel = (pts[:, 1] >= box[1, 0] - 1e-12) & (pts[:, 1] <= box[1, 1] + 1e-12)
            vdofs, _ = sp.element_vel_dofs(e)
            vals_b, _ = sp.velocity_basis_eval(e, pts[sel])
            u_h = np.einsum("a,apc->pc", coefs[vdofs], vals_b)
            exact = np.array([u_D(p) for p in pts[sel]])
            np.testing.assert_allclose(u_h, exact, atol=1e-12)

    def test_zero_data(self):
        dom = TrimmedDomain(
            identity_map(), (), {"xmin": BCTag.DIRICHLET_STRONG}
        )
        sp = make_setup(dom, 2, ElementKind("RT", 2, 1))
        idx, vals = strong_bc_sets(sp, dom, lambda x: np.zeros(2))
        assert idx.size > 0
        np.testing.assert_allclose(vals, 0.0)

    def test_rt_constrains_only_normal_component(self):
        dom = TrimmedDomain(
            identity_map(), (), {"xmin": BCTag.DIRICHLET_STRONG}
        )
        sp = make_setup(dom, 2, ElementKind("RT", 1, 0))
        idx, _ = strong_bc_sets(sp, dom, lambda x: np.array([x[1], x[0]]))
        # all constrained DOFs belong to component 0 (x-normal face)
        assert np.all(idx < sp.vel_offset[1])
        assert idx.size == sp.comp_spaces[0].kv2.dim

    def test_pentagon_face_tags(self):
        dom = pentagon_domain()
        sp = make_setup(dom, 2, ElementKind("TH", 2, 1))
        idx, vals = strong_bc_sets(sp, dom, lambda x: np.zeros(2))
        assert idx.size > 0

    def test_rt_normal_trace_affine(self):
        # normal trace of the constrained interpolant matches u_D . n on a
        # scaled patch
        dom = TrimmedDomain(
            affine_map((2.0, 2.0)), (), {"xmin": BCTag.DIRICHLET_STRONG}
        )
        sp = make_setup(dom, 2, ElementKind("RT", 2, 1))

        def u_D(x):
            return np.array([1.5 + 0.5 * x[1], 7.0])

        idx, vals = strong_bc_sets(sp, dom, u_D)
        coefs = np.zeros(sp.n_vel)
        coefs[idx] = vals
        pts = np.stack([np.zeros(5), np.linspace(0.1, 0.9, 5)], axis=1)
        for e in [(0, j) for j in range(4)]:
            box = sp.mesh.parametric_box(e)
            sel = (pts[:, 1] >= box[1, 0]) & (pts[:, 1] < box[1, 1])
            if not sel.any():
                continue
            vdofs, _ = sp.element_vel_dofs(e)
            vb, _ = sp.velocity_basis_eval(e, pts[sel])
            u_h = np.einsum("a,apc->pc", coefs[vdofs], vb)
            for p_param, uh in zip(pts[sel], u_h):
                x = dom.geo_map.forward(p_param)
                assert uh[0] == pytest.approx(u_D(x)[0], abs=1e-12)
