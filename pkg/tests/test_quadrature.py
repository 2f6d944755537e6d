"""Tests for Gauss rules and cut-cell volume/boundary quadrature."""

import math

import numpy as np
import pytest
from scipy.stats import qmc

from trimstokes.geometry import (
    BCTag,
    ConvexPolygon,
    Disk,
    HalfPlane,
    TrimmedDomain,
    affine_map,
    boundary_arcs_in_element,
    clip_segment_to_domain,
    identity_map,
)
from trimstokes.quadrature import (
    boundary_rule_for_arc,
    cut_volume_rule,
    gauss_legendre,
    tensor_rule_on_box,
)

from test_geometry import pentagon_domain, quarter_disk_domain


class TestGaussLegendre:
    def test_n1(self):
        x, w = gauss_legendre(1)
        np.testing.assert_allclose(x, [0.0])
        np.testing.assert_allclose(w, [2.0])

    def test_n2(self):
        x, w = gauss_legendre(2)
        np.testing.assert_allclose(np.abs(x), 1 / math.sqrt(3))
        np.testing.assert_allclose(w, [1.0, 1.0])

    def test_x8_moment(self):
        x, w = gauss_legendre(5)
        assert np.sum(w * x**8) == pytest.approx(2.0 / 9.0, abs=1e-14)

    def test_range(self):
        with pytest.raises(ValueError):
            gauss_legendre(0)
        with pytest.raises(ValueError):
            gauss_legendre(31)


class TestCutVolume:
    def test_interior_tensor(self):
        dom = TrimmedDomain(identity_map(), (), {})
        rule = cut_volume_rule([[0.0, 0.25], [0.0, 0.25]], dom, 3, cut=False)
        assert rule.total == pytest.approx(0.0625, abs=1e-16)

    def test_halfplane_rectangle_exact(self):
        # removed {y > 0.8}: K=(0.75,1)^2 keeps a 0.25 x 0.05 strip
        hp = HalfPlane((0.0, -1.0), -0.8)
        dom = TrimmedDomain(identity_map(), (hp,), {})
        rule = cut_volume_rule([[0.75, 1.0], [0.75, 1.0]], dom, 4)
        assert rule.total == pytest.approx(0.25 * 0.05, abs=1e-16)
        assert np.all(rule.weights > 0)

    def test_quarter_disk_total_area(self):
        dom = quarter_disk_domain()
        n_el = 8
        edges = np.linspace(0, 2, n_el + 1)
        total = 0.0
        for i in range(n_el):
            for j in range(n_el):
                box = np.array(
                    [[edges[i], edges[i + 1]], [edges[j], edges[j + 1]]]
                )
                total += cut_volume_rule(box, dom, 6).total
        exact = 4.0 - math.pi * 0.52**2 / 4.0
        assert total == pytest.approx(exact, abs=1e-10)

    def test_pentagon_triangle_area(self):
        eps = 1e-13
        dom = pentagon_domain(eps)
        n_el = 4
        edges = np.linspace(0, 1, n_el + 1)
        total = 0.0
        for i in range(n_el):
            for j in range(n_el):
                box = np.array(
                    [[edges[i], edges[i + 1]], [edges[j], edges[j + 1]]]
                )
                total += cut_volume_rule(box, dom, 5).total
        exact = 1.0 - (0.75 - eps) ** 2 / 2
        assert total == pytest.approx(exact, rel=1e-12)

    def test_moments_on_disk_cut_element(self):
        # moments up to 2n-2 on a disk-cut element: the kept region is
        # {(x,y) in K : y > sqrt(r^2-x^2)}, so each moment reduces to a 1D
        # integral handled by adaptive quadrature (independent oracle); a
        # quasi Monte Carlo sample cross-checks at its own (boundary-limited)
        # accuracy.
        from scipy.integrate import quad

        dom = quarter_disk_domain()
        box = np.array([[0.25, 0.5], [0.25, 0.5]])
        r = 0.52
        rule = cut_volume_rule(box, dom, 6)

        sampler = qmc.Halton(d=2, scramble=False)
        raw = sampler.random(2**20)
        pts = box[:, 0] + raw * (box[:, 1] - box[:, 0])
        area_box = (box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0])
        inside = ~dom.is_removed(pts)

        for a, b in [(0, 0), (1, 0), (0, 1), (2, 1), (3, 3), (5, 5)]:

            def inner(x, a=a, b=b):
                s2 = r * r - x * x
                ylo = math.sqrt(s2) if s2 > 0 else box[1, 0]
                ylo = max(ylo, box[1, 0])
                return x**a * (box[1, 1] ** (b + 1) - ylo ** (b + 1)) / (b + 1)

            xc = math.sqrt(r * r - box[1, 0] ** 2)  # kink: circle exits below
            oracle, err = quad(
                inner, box[0, 0], box[0, 1], epsabs=1e-13, limit=200, points=[xc]
            )
            assert err < 1e-10
            mine = np.sum(
                rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b
            )
            assert mine == pytest.approx(oracle, rel=1e-8)
            qmc_est = area_box * np.mean(
                np.where(inside, pts[:, 0] ** a * pts[:, 1] ** b, 0.0)
            )
            assert mine == pytest.approx(qmc_est, rel=1e-4)

    def test_determinism(self):
        dom = quarter_disk_domain()
        box = np.array([[0.25, 0.5], [0.25, 0.5]])
        r1 = cut_volume_rule(box, dom, 5)
        r2 = cut_volume_rule(box, dom, 5)
        assert np.array_equal(r1.points, r2.points)
        assert np.array_equal(r1.weights, r2.weights)

    def test_divergence_theorem_per_cut_element(self):
        # int div w over K cap Omega vs the boundary flux over the full
        # boundary of the cut region, w = (x, y)/2
        dom = quarter_disk_domain()
        n_el = 8
        edges = np.linspace(0, 2, n_el + 1)
        checked = 0
        for i in range(n_el):
            for j in range(n_el):
                box = np.array(
                    [[edges[i], edges[i + 1]], [edges[j], edges[j + 1]]]
                )
                arcs = boundary_arcs_in_element(dom, box, include_faces=False)
                if not arcs:
                    continue
                vol = cut_volume_rule(box, dom, 8).total  # div w = 1
                flux = 0.0
                for a in arcs:
                    br = boundary_rule_for_arc(a, 8, 0.25)
                    flux += np.sum(
                        br.weights * 0.5 * np.einsum("pc,pc->p", br.points, br.normals)
                    )
                # internal facets: the four box edges clipped to the domain,
                # outward normals of the box
                corners = [
                    (box[:, 0], np.array([box[0, 1], box[1, 0]]), np.array([0.0, -1.0])),
                    (np.array([box[0, 0], box[1, 1]]), box[:, 1], np.array([0.0, 1.0])),
                    (box[:, 0], np.array([box[0, 0], box[1, 1]]), np.array([-1.0, 0.0])),
                    (np.array([box[0, 1], box[1, 0]]), box[:, 1], np.array([1.0, 0.0])),
                ]
                for p0, p1, nrm in corners:
                    for t0, t1 in clip_segment_to_domain(p0, p1, dom):
                        q0 = p0 + t0 * (p1 - p0)
                        q1 = p0 + t1 * (p1 - p0)
                        xq, wq = np.polynomial.legendre.leggauss(8)
                        mid = 0.5 * (q0 + q1)
                        half = 0.5 * (q1 - q0)
                        pts = mid[None, :] + xq[:, None] * half[None, :]
                        w = wq * np.linalg.norm(half)
                        flux += np.sum(w * 0.5 * (pts @ nrm))
                assert flux == pytest.approx(vol, abs=1e-9)
                checked += 1
        assert checked == 5  # elements crossed by the quarter circle at h=0.25


class TestBoundaryRules:
    def test_segment_length(self):
        hp = HalfPlane((0.0, -1.0), -0.8)
        dom = TrimmedDomain(identity_map(), (hp,), {})
        box = np.array([[0.75, 1.0], [0.75, 1.0]])
        (arc,) = boundary_arcs_in_element(dom, box, include_faces=False)
        rule = boundary_rule_for_arc(arc, 4, 0.25)
        assert rule.total == pytest.approx(0.25, abs=1e-14)

    def test_quarter_circle_length(self):
        dom = quarter_disk_domain()
        n_el = 8
        edges = np.linspace(0, 2, n_el + 1)
        total = 0.0
        for i in range(n_el):
            for j in range(n_el):
                box = np.array(
                    [[edges[i], edges[i + 1]], [edges[j], edges[j + 1]]]
                )
                for a in boundary_arcs_in_element(dom, box, include_faces=False):
                    rule = boundary_rule_for_arc(a, 6, 0.25)
                    assert np.allclose(np.linalg.norm(rule.normals, axis=1), 1.0)
                    total += rule.total
        assert total == pytest.approx(math.pi * 0.52 / 2, abs=1e-12)

    def test_disk_normals_point_to_center(self):
        dom = quarter_disk_domain()
        box = np.array([[0.25, 0.5], [0.25, 0.5]])
        (arc,) = boundary_arcs_in_element(dom, box, include_faces=False)
        rule = boundary_rule_for_arc(arc, 5, 0.25)
        toward = -rule.points / np.linalg.norm(rule.points, axis=1, keepdims=True)
        np.testing.assert_allclose(rule.normals, toward, atol=1e-13)
