"""Manufactured cases, the solve pipeline, error norms, and the experiment
drivers: convergence studies, inf-sup tables, the boundary-continuity
eigenvalue sweep, and the channel-flow demo.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import AssemblyParams, ProblemData, assemble, jacobi_scale
from .bspline import TensorSplineSpace, make_open_knot_vector
from .geometry import (
    BCTag,
    ConvexPolygon,
    Disk,
    HalfPlane,
    TrimmedDomain,
    affine_map,
    identity_map,
)
from .linalg import SolverFault, factor, gen_eig_max, infsup_constant, smallest_singular_estimate
from .mesh import ElementStatus, build_mesh, classify_good_bad
from .quadrature import boundary_rule_for_arc, gauss_legendre
from .spaces import ElementKind, build_spaces, strong_bc_sets
from .stabilization import build_all_projectors, stabilized_pressure_values

__all__ = [
    "ManufacturedCase",
    "pentagon_domain",
    "pentagon_case",
    "circle_domain",
    "circle_case",
    "rectangle_domain",
    "polynomial_case",
    "SolveResult",
    "solve_case",
    "error_norms",
    "ConvergenceTable",
    "convergence_study",
    "infsup_table",
    "continuity_sweep",
    "cylinder_demo",
    "PAPER_BETA_TABLE",
]

NEAR_SINGULAR_COND = 1e12

# Reference inf-sup constants of the stabilized pentagon runs (k=2,
# eps=1e-13, theta=1) at h = 2^-1..2^-4, used by the diagnostics harness.
PAPER_BETA_TABLE = {
    ("RT", 0): (0.4103, 0.1740, 0.2032, 0.1850),
    ("RT", 1): (0.3923, 0.2088, 0.2397, 0.2440),
    ("N", 0): (0.4142, 0.2430, 0.2902, 0.2803),
    ("N", 1): (0.4118, 0.2564, 0.2979, 0.3089),
    ("TH", 0): (0.3374, 0.2836, 0.2853, 0.2853),
    ("TH", 1): (0.2994, 0.2755, 0.2789, 0.2802),
}


# ---------------------------------------------------------------------------
# Domains and manufactured cases


def pentagon_domain(eps: float = 1e-13) -> TrimmedDomain:
    """Unit square with a near-degenerate triangle removed from the upper
    left; fitted faces strong, the trimmed remnant of the top face weak."""
    tri = ConvexPolygon([(0.0, 0.25 + eps), (0.0, 1.0), (0.75 - eps, 1.0)])
    return TrimmedDomain(
        identity_map(),
        (tri,),
        {
            "xmin": BCTag.DIRICHLET_STRONG,
            "xmax": BCTag.DIRICHLET_STRONG,
            "ymin": BCTag.DIRICHLET_STRONG,
            "ymax": BCTag.DIRICHLET_WEAK,
        },
    )


def circle_domain(radius: float = 0.52) -> TrimmedDomain:
    """(0,2)^2 with a quarter disk removed at the origin; natural conditions
    on the two trimmed straight sides, strong Dirichlet on the others, weak
    on the circular arc."""
    return TrimmedDomain(
        affine_map((2.0, 2.0)),
        (Disk((0.0, 0.0), radius),),
        {
            "xmin": BCTag.NEUMANN,
            "ymin": BCTag.NEUMANN,
            "xmax": BCTag.DIRICHLET_STRONG,
            "ymax": BCTag.DIRICHLET_STRONG,
        },
    )


def rectangle_domain(eps: float) -> TrimmedDomain:
    """Unit square with the strip {y > 0.75 + eps} removed; all conditions
    weak (the lateral faces are crossed by the strip)."""
    return TrimmedDomain(
        identity_map(),
        (HalfPlane((0.0, -1.0), -(0.75 + eps)),),
        {},
    )


def cylinder_channel_domain(
    length: float = 2.2,
    height: float = 0.41,
    center=(0.2, 0.2),
    radius: float = 0.05,
) -> TrimmedDomain:
    return TrimmedDomain(
        affine_map((length, height)),
        (Disk(center, radius),),
        {
            "xmin": BCTag.DIRICHLET_STRONG,
            "xmax": BCTag.NEUMANN,
            "ymin": BCTag.DIRICHLET_STRONG,
            "ymax": BCTag.DIRICHLET_STRONG,
        },
    )


@dataclass
class ManufacturedCase:
    """Exact velocity/pressure pair with analytically derived data."""

    name: str
    domain: TrimmedDomain
    mu: float
    u: object
    grad_u: object
    p_fun: object
    f: object
    g: object
    zero_mean_pressure: bool = False
    _p_mean: float | None = field(default=None, repr=False)

    def u_D(self, x):
        return self.u(x)

    def sigma_N(self, x, n):
        return (self.mu * self.grad_u(x) - self.p_fun(x) * np.eye(2)) @ n

    @property
    def p_mean(self) -> float:
        """Mean of p_fun over the domain, by cut quadrature on a fixed
        16x16 grid (only used when the case fixes pressure up to a
        constant)."""
        if self._p_mean is None:
            if not self.zero_mean_pressure:
                self._p_mean = 0.0
            else:
                kv = make_open_knot_vector(1, 0, np.linspace(0.0, 1.0, 17))
                mesh = build_mesh(self.domain, TensorSplineSpace(kv, kv), quad_order=8)
                vol = 0.0
                ip = 0.0
                from .quadrature import cut_volume_rule

                for e in mesh.active_elements():
                    rule = cut_volume_rule(
                        mesh.physical_box(e),
                        self.domain,
                        8,
                        cut=mesh.status[e] == ElementStatus.CUT,
                    )
                    vol += rule.total
                    ip += float(
                        np.sum(rule.weights * np.array([self.p_fun(x) for x in rule.points]))
                    )
                self._p_mean = ip / vol
        return self._p_mean

    def p_exact(self, x) -> float:
        return self.p_fun(x) - self.p_mean

    def data(self) -> ProblemData:
        return ProblemData(f=self.f, g=self.g, u_D=self.u_D, sigma_N=self.sigma_N)


def pentagon_case(eps: float = 1e-13, mu: float = 1.0) -> ManufacturedCase:
    def u(x):
        return np.array([x[0] * x[1] ** 3, x[0] ** 4 - x[1] ** 4 / 4])

    def grad_u(x):
        return np.array(
            [[x[1] ** 3, 3 * x[0] * x[1] ** 2], [4 * x[0] ** 3, -(x[1] ** 3)]]
        )

    def p_fun(x):
        return x[0] ** 3 * math.cos(x[0]) + x[1] ** 2 * math.sin(x[0])

    def f(x):
        lap = np.array([6 * x[0] * x[1], 12 * x[0] ** 2 - 3 * x[1] ** 2])
        gp = np.array(
            [
                3 * x[0] ** 2 * math.cos(x[0])
                - x[0] ** 3 * math.sin(x[0])
                + x[1] ** 2 * math.cos(x[0]),
                2 * x[1] * math.sin(x[0]),
            ]
        )
        return -mu * lap + gp

    return ManufacturedCase(
        name="pentagon",
        domain=pentagon_domain(eps),
        mu=mu,
        u=u,
        grad_u=grad_u,
        p_fun=p_fun,
        f=f,
        g=lambda x: 0.0,
        zero_mean_pressure=True,
    )


def circle_case(mu: float = 1.0, radius: float = 0.52) -> ManufacturedCase:
    sin, cos = math.sin, math.cos

    def u(x):
        a, b = x
        return np.array(
            [2 * b**3 * sin(a), a**3 * sin(a) - b**4 * cos(a) / 2 - 3 * a**2 * cos(a)]
        )

    def grad_u(x):
        a, b = x
        return np.array(
            [
                [2 * b**3 * cos(a), 6 * b**2 * sin(a)],
                [
                    6 * a**2 * sin(a) + a**3 * cos(a) + b**4 * sin(a) / 2 - 6 * a * cos(a),
                    -2 * b**3 * cos(a),
                ],
            ]
        )

    def p_fun(x):
        a, b = x
        return a**3 * b**2 / 2 + b**3 / 2

    def f(x):
        a, b = x
        lap1 = (12 * b - 2 * b**3) * sin(a)
        lap2 = (
            18 * a * sin(a)
            + 9 * a**2 * cos(a)
            - a**3 * sin(a)
            + b**4 * cos(a) / 2
            - 6 * cos(a)
            - 6 * b**2 * cos(a)
        )
        gp = np.array([1.5 * a**2 * b**2, a**3 * b + 1.5 * b**2])
        return -mu * np.array([lap1, lap2]) + gp

    return ManufacturedCase(
        name="circle_square",
        domain=circle_domain(radius),
        mu=mu,
        u=u,
        grad_u=grad_u,
        p_fun=p_fun,
        f=f,
        g=lambda x: 0.0,
        zero_mean_pressure=False,
    )


def _poly_eval(c, x, y):
    out = 0.0
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            if c[i, j]:
                out += c[i, j] * x**i * y**j
    return out


def _poly_dx(c):
    if c.shape[0] == 1:
        return np.zeros((1, c.shape[1]))
    return c[1:, :] * np.arange(1, c.shape[0])[:, None]


def _poly_dy(c):
    if c.shape[1] == 1:
        return np.zeros((c.shape[0], 1))
    return c[:, 1:] * np.arange(1, c.shape[1])[None, :]


def polynomial_case(domain: TrimmedDomain, cu1, cu2, cp, mu: float = 1.0,
                    name: str = "custom") -> ManufacturedCase:
    """Case from coefficient matrices c[i, j] x^i y^j for u1, u2, p."""
    cu1 = np.asarray(cu1, dtype=float)
    cu2 = np.asarray(cu2, dtype=float)
    cp = np.asarray(cp, dtype=float)
    d1x, d1y = _poly_dx(cu1), _poly_dy(cu1)
    d2x, d2y = _poly_dx(cu2), _poly_dy(cu2)
    lap1 = (_poly_dx(d1x), _poly_dy(d1y))
    lap2 = (_poly_dx(d2x), _poly_dy(d2y))
    px, py = _poly_dx(cp), _poly_dy(cp)

    def u(x):
        return np.array([_poly_eval(cu1, *x), _poly_eval(cu2, *x)])

    def grad_u(x):
        return np.array(
            [
                [_poly_eval(d1x, *x), _poly_eval(d1y, *x)],
                [_poly_eval(d2x, *x), _poly_eval(d2y, *x)],
            ]
        )

    def p_fun(x):
        return _poly_eval(cp, *x)

    def f(x):
        l1 = _poly_eval(lap1[0], *x) + _poly_eval(lap1[1], *x)
        l2 = _poly_eval(lap2[0], *x) + _poly_eval(lap2[1], *x)
        return np.array(
            [-mu * l1 + _poly_eval(px, *x), -mu * l2 + _poly_eval(py, *x)]
        )

    def g(x):
        return _poly_eval(d1x, *x) + _poly_eval(d2y, *x)

    return ManufacturedCase(
        name=name,
        domain=domain,
        mu=mu,
        u=u,
        grad_u=grad_u,
        p_fun=p_fun,
        f=f,
        g=g,
        zero_mean_pressure=not domain.has_neumann,
    )


# ---------------------------------------------------------------------------
# Solve pipeline


@dataclass
class SolveResult:
    u: np.ndarray
    p: np.ndarray
    spaces: object
    mesh: object
    projectors: dict
    system: object
    meta: dict


def _grid_space(domain: TrimmedDomain, resolution) -> TensorSplineSpace:
    if np.isscalar(resolution):
        resolution = (int(resolution), int(resolution))
    kv1 = make_open_knot_vector(1, 0, np.linspace(0.0, 1.0, resolution[0] + 1))
    kv2 = make_open_knot_vector(1, 0, np.linspace(0.0, 1.0, resolution[1] + 1))
    return TensorSplineSpace(kv1, kv2)


def solve_case(
    domain: TrimmedDomain,
    kind: ElementKind,
    resolution,
    params: AssemblyParams,
    data: ProblemData,
    theta: float = 1.0,
) -> SolveResult:
    """Mesh, classify, build spaces and projectors, assemble, scale, solve.

    Raises SolverFault on exact singularity or non-finite solutions; flags
    (rather than hides) near-singular systems in the metadata.
    """
    t0 = time.perf_counter()
    mesh = classify_good_bad(
        build_mesh(domain, _grid_space(domain, resolution),
                   quad_order=params.quad_order or kind.k + 3),
        theta,
    )
    spaces = build_spaces(kind, mesh, domain)
    projectors = (
        build_all_projectors(spaces, mesh) if params.stabilized else {}
    )
    constrained = strong_bc_sets(spaces, domain, data.u_D)
    system = assemble(domain, mesh, spaces, projectors, params, data, constrained)
    K, rhs, recover = system.reduced()
    Ks, rs, dinv = jacobi_scale(K, rhs)
    fac = factor(Ks)
    x = fac.solve(rs)
    if not np.all(np.isfinite(x)):
        raise SolverFault("non-finite entries in the solution")
    u, p = recover(dinv * x)
    resid = float(np.linalg.norm(Ks @ x - rs))
    resid_rel = resid / (
        float(np.abs(Ks.data).max()) * float(np.linalg.norm(x)) + float(np.linalg.norm(rs)) + 1e-300
    )
    sig_min = smallest_singular_estimate(fac)
    cond_est = 1.0 / max(sig_min, 1e-300)
    meta = {
        "kind": kind.kind,
        "k": kind.k,
        "alpha": kind.alpha,
        "theta": theta,
        "stabilized": params.stabilized,
        "m": params.m,
        "gamma": params.gamma,
        "mu": params.mu,
        "quad_order": params.quad_order or kind.k + 3,
        "n_velocity_dofs": spaces.n_vel,
        "n_pressure_dofs": int(spaces.n_pressure(params.stabilized)),
        "n_constrained": int(system.constrained_idx.size),
        "n_bad_elements": mesh.n_bad,
        "pressure_pinned": system.pressure_pin is not None,
        "residual_rel": resid_rel,
        "cond_estimate": cond_est,
        "near_singular": bool(cond_est > NEAR_SINGULAR_COND),
        "wall_time_s": time.perf_counter() - t0,
    }
    if kind.kind == "TH" and domain.geo_map.kind != "identity":
        meta["th_nonidentity_map"] = "empirically supported, not covered by theory"
    return SolveResult(
        u=u, p=p, spaces=spaces, mesh=mesh, projectors=projectors,
        system=system, meta=meta,
    )


# ---------------------------------------------------------------------------
# Field evaluation and error norms


def _eval_fields(res: SolveResult, e, param_pts):
    """(u_h, grad u_h, div u_h, p_h) at parametric points of element e."""
    spaces = res.spaces
    vdofs, _ = spaces.element_vel_dofs(e)
    vals, grads = spaces.velocity_basis_eval(e, param_pts)
    uc = res.u[vdofs]
    u_h = np.einsum("a,apc->pc", uc, vals)
    gu_h = np.einsum("a,apij->pij", uc, grads)
    stab = res.system.params.stabilized
    if stab and res.mesh.is_bad(e):
        pg, pvals = stabilized_pressure_values(spaces, res.projectors[e], param_pts)
    else:
        pg = spaces.element_p_dofs(e)
        pvals = spaces.pressure_basis_eval(e, param_pts)
    psel = spaces.pressure_map(stab)[pg]
    p_h = res.p[psel] @ pvals
    return u_h, gu_h, np.einsum("pii->p", gu_h), p_h


def error_norms(res: SolveResult, case: ManufacturedCase, quad_order: int | None = None):
    """(velocity error in the mesh norm, pressure error in the weighted L2
    norm, L2 divergence mismatch); the pressure difference is mean-shifted
    when the case only fixes pressure up to a constant."""
    n_q = quad_order or res.spaces.kind.k + 4
    mu = case.mu
    mesh = res.mesh
    geo = mesh.domain.geo_map
    from .assembly import _element_boundary_rules, _volume_rule

    vol_terms = []
    e1_vol = 0.0
    ediv = 0.0
    area = 0.0
    pdiff_int = 0.0
    for e in mesh.active_elements():
        param, phys, w = _volume_rule(mesh, e, n_q)
        if w.size == 0:
            continue
        u_h, gu_h, div_h, p_h = _eval_fields(res, e, param)
        ge = np.array([case.grad_u(x) for x in phys])
        e1_vol += mu * float(np.einsum("p,pij->", w, (gu_h - ge) ** 2))
        gv = np.array([case.g(x) for x in phys])
        ediv += float(np.sum(w * (div_h - gv) ** 2))
        pe = np.array([case.p_exact(x) for x in phys])
        d = pe - p_h
        vol_terms.append((w, d))
        pdiff_int += float(np.sum(w * d))
        area += float(np.sum(w))

    shift = pdiff_int / area if case.zero_mean_pressure else 0.0
    e0_vol = sum(float(np.sum(w * (d - shift) ** 2)) for w, d in vol_terms) / mu

    e1_bnd = 0.0
    e0_bnd = 0.0
    for e in mesh.active_elements():
        for rule in _element_boundary_rules(mesh, e, n_q):
            if rule.bc == BCTag.NEUMANN or rule.weights.size == 0:
                continue
            bpar = rule.param if hasattr(rule, "param") else geo.inverse(rule.points)
            u_h, _, _, p_h = _eval_fields(res, e, bpar)
            ue = np.array([case.u(x) for x in rule.points])
            pe = np.array([case.p_exact(x) for x in rule.points])
            e1_bnd += (mu / rule.h_elem) * float(
                np.sum(rule.weights * np.sum((u_h - ue) ** 2, axis=1))
            )
            e0_bnd += (rule.h_elem / mu) * float(
                np.sum(rule.weights * (pe - p_h - shift) ** 2)
            )
    return (
        math.sqrt(e1_vol + e1_bnd),
        math.sqrt(e0_vol + e0_bnd),
        math.sqrt(ediv),
    )


# ---------------------------------------------------------------------------
# Studies


@dataclass
class ConvergenceTable:
    levels: list
    h: list
    e1h: list
    e0h: list
    ediv: list
    meta: list

    def slope(self, values, last: int = 3) -> float:
        hs = np.log(self.h[-last:])
        es = np.log(np.asarray(values[-last:], dtype=float))
        return float(np.polyfit(hs, es, 1)[0])

    @property
    def combined_slope(self) -> float:
        comb = [a + b for a, b in zip(self.e1h, self.e0h)]
        return self.slope(comb)


def convergence_study(
    case: ManufacturedCase,
    kind: ElementKind,
    levels,
    params: AssemblyParams,
    theta: float = 1.0,
) -> ConvergenceTable:
    """Solve the case at dyadic levels and collect errors; aborts with the
    partial table if a level fails to solve."""
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("need at least 2 levels")
    table = ConvergenceTable([], [], [], [], [], [])
    for lv in levels:
        try:
            res = solve_case(case.domain, kind, 2**lv, params, case.data(), theta)
        except SolverFault as exc:
            table.meta.append({"level": lv, "failed": str(exc)})
            break
        e1, e0, ed = error_norms(res, case)
        table.levels.append(lv)
        table.h.append(res.mesh.h_max)
        table.e1h.append(e1)
        table.e0h.append(e0)
        table.ediv.append(ed)
        table.meta.append(res.meta)
    return table


def _free_matrices(domain, kind, resolution, theta, stabilized, mu=1.0,
                   quad_order=None, apply_strong=False):
    """Assemble B (both variants), N_v, M_p restricted to free DOFs for the
    eigenvalue diagnostics, plus the constant-pressure coefficient vector.

    The stability diagnostics default to the base formulation with weak
    conditions everywhere; ``apply_strong`` eliminates the strong-face DOFs
    instead.
    """
    mesh = classify_good_bad(
        build_mesh(domain, _grid_space(domain, resolution),
                   quad_order=quad_order or kind.k + 3),
        theta,
    )
    spaces = build_spaces(kind, mesh, domain)
    projectors = build_all_projectors(spaces, mesh) if stabilized else {}
    constrained = (
        strong_bc_sets(spaces, domain, lambda x: np.zeros(2))
        if apply_strong
        else None
    )
    params = AssemblyParams(
        mu=mu, gamma=1.0, m=0, stabilized=stabilized, quad_order=quad_order
    )
    sysm = assemble(domain, mesh, spaces, projectors, params, ProblemData(), constrained)
    vfree = np.ones(sysm.n_vel, dtype=bool)
    vfree[sysm.constrained_idx] = False
    B1 = sysm.B1[:, vfree]
    B0 = sysm.Bm[:, vfree]  # m=0 assembly: the volume-only variant
    Nv = sysm.N_v[vfree, :][:, vfree]
    ones = np.ones(sysm.n_p)
    return mesh, spaces, sysm, B0, B1, Nv, sysm.M_p, ones


def infsup_table(
    domain: TrimmedDomain,
    kind: ElementKind,
    levels,
    theta: float = 1.0,
    stabilized: bool = True,
    quad_order: int | None = None,
):
    """Rows (h, beta0, beta1) per dyadic level. The structural constant
    pressure mode (pure Dirichlet domains, symmetric variant) is deflated;
    eigen non-convergence at a level is recorded and the sweep continues."""
    rows = []
    for lv in levels:
        mesh, spaces, sysm, B0, B1, Nv, Mp, ones = _free_matrices(
            domain, kind, 2**lv, theta, stabilized, quad_order=quad_order
        )
        h = mesh.h_max
        row = {"level": lv, "h": h, "n_bad": mesh.n_bad}
        try:
            row["beta0"] = infsup_constant(B0, Nv, Mp)
            deflate = ones if not domain.has_neumann else None
            row["beta1"] = infsup_constant(B1, Nv, Mp, deflate=deflate)
        except SolverFault as exc:
            row["failed"] = str(exc)
        rows.append(row)
    return rows


def continuity_sweep(
    domain_factory,
    kind: ElementKind,
    eps_list,
    level: int,
    gamma: float = 1.0,
    include_stabilized: bool = True,
):
    """Largest eigenvalue of the velocity form against the velocity norm
    for each trim parameter, on a fixed mesh; optionally also for the
    stabilized form."""
    rows = []
    for eps in eps_list:
        domain = domain_factory(eps)
        row = {"eps": eps}
        for stab in ([False, True] if include_stabilized else [False]):
            mesh = classify_good_bad(
                build_mesh(domain, _grid_space(domain, 2**level),
                           quad_order=kind.k + 3),
                1.0,
            )
            spaces = build_spaces(kind, mesh, domain)
            projectors = build_all_projectors(spaces, mesh) if stab else {}
            params = AssemblyParams(mu=1.0, gamma=gamma, m=0, stabilized=stab)
            sysm = assemble(domain, mesh, spaces, projectors, params, ProblemData())
            row["h"] = mesh.h_max
            try:
                lam = gen_eig_max(sysm.A, sysm.N_v)
            except SolverFault as exc:
                row["failed" if not stab else "failed_stab"] = str(exc)
                continue
            row["lambda_max_stab" if stab else "lambda_max"] = lam
        rows.append(row)
    return rows


def cylinder_demo(
    k: int = 3,
    resolution=(64, 16),
    gamma: float | None = None,
    u_max: float = 0.3,
    raster=(221, 42),
    m: int = 0,
):
    """Channel flow past a circular obstacle with the degree-(k+1)
    equal-degree divergence-compatible family; parabolic inflow, no-slip
    walls and obstacle, traction-free outflow. Returns field rasters and
    mass-flux diagnostics."""
    L, H = 2.2, 0.41
    domain = cylinder_channel_domain(L, H)
    kind = ElementKind("N", k)
    gamma = gamma if gamma is not None else 10.0 * (k + 1) ** 2

    def u_in(x):
        if x[0] < 1e-12:
            return np.array([4.0 * u_max * x[1] * (H - x[1]) / H**2, 0.0])
        return np.zeros(2)

    data = ProblemData(u_D=u_in)
    params = AssemblyParams(mu=1.0, gamma=gamma, m=m, stabilized=True, quad_order=k + 3)
    res = solve_case(domain, kind, resolution, params, data)

    # rasters of |u| and p on a uniform grid (points in the obstacle:
    # not-a-number markers)
    nx, ny = raster
    xs = np.linspace(0.0, L, nx)
    ys = np.linspace(0.0, H, ny)
    umag = np.full((nx, ny), np.nan)
    pr = np.full((nx, ny), np.nan)
    geo = domain.geo_map
    z1 = res.mesh.space.kv1.breakpoints
    z2 = res.mesh.space.kv2.breakpoints
    for ix, xv in enumerate(xs):
        for iy, yv in enumerate(ys):
            x = np.array([xv, yv])
            if domain.is_removed(x[None, :])[0]:
                continue
            zeta = geo.inverse(x)
            i = min(np.searchsorted(z1, zeta[0], side="right") - 1, len(z1) - 2)
            j = min(np.searchsorted(z2, zeta[1], side="right") - 1, len(z2) - 2)
            e = (int(max(i, 0)), int(max(j, 0)))
            if res.mesh.status[e] == ElementStatus.EXTERIOR:
                continue
            u_h, _, _, p_h = _eval_fields(res, e, zeta[None, :])
            umag[ix, iy] = float(np.linalg.norm(u_h[0]))
            pr[ix, iy] = float(p_h[0])
    finite = umag[np.isfinite(umag)]
    if not np.all(np.isfinite(res.u)) or finite.size == 0:
        raise SolverFault("non-finite velocity field in the demo")

    # mass flux through inflow and outflow faces
    flux = {}
    gx, gw = gauss_legendre(k + 3)
    for face, col, nrm in (
        ("in", 0, np.array([-1.0, 0.0])),
        ("out", res.mesh.shape[0] - 1, np.array([1.0, 0.0])),
    ):
        total = 0.0
        for j in range(res.mesh.shape[1]):
            e = (col, j)
            box = res.mesh.parametric_box(e)
            t = 0.5 * (box[1, 0] + box[1, 1]) + 0.5 * (box[1, 1] - box[1, 0]) * gx
            w = 0.5 * (box[1, 1] - box[1, 0]) * gw * H
            param = np.stack([np.full(t.size, 0.0 if face == "in" else 1.0), t], axis=1)
            u_h, _, _, _ = _eval_fields(res, e, param)
            total += float(np.sum(w * (u_h @ nrm)))
        flux[face] = total
    imbalance = abs(flux["in"] + flux["out"])
    meta = dict(res.meta)
    meta.update(
        {
            "umag_min": float(finite.min()),
            "umag_max": float(finite.max()),
            "p_min": float(np.nanmin(pr)),
            "p_max": float(np.nanmax(pr)),
            "flux_in": flux["in"],
            "flux_out": flux["out"],
            "flux_imbalance": imbalance,
            "flux_imbalance_rel": imbalance / abs(flux["in"]),
        }
    )
    return {"xs": xs, "ys": ys, "umag": umag, "p": pr, "meta": meta, "result": res}
