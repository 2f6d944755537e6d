"""Sparse solves and the eigenvalue iterations behind the stability
diagnostics.

Factorization is SuperLU with partial pivoting on a reverse-Cuthill-McKee
pre-ordered matrix. The largest generalized eigenvalue uses shifted power
iteration; the inf-sup constant comes from inverse iteration on the pencil
(B N_v^-1 B^T, M_p), with the dense Schur matrix formed column by column
through triangular solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

__all__ = [
    "SolverFault",
    "Factorization",
    "factor",
    "solve",
    "gen_eig_max",
    "infsup_constant",
    "dense_gen_eigvals",
    "write_matrix",
    "read_matrix",
]

PIVOT_REL_TOL = 1e-14
EIG_TOL = 1e-8
EIG_MAXITER = 5000
DENSE_EIG_LIMIT = 6000
SPD_FLOOR_REL = 1e-130


class SolverFault(RuntimeError):
    pass


@dataclass
class Factorization:
    """LU factors of a pre-ordered sparse matrix."""

    lu: object
    perm: np.ndarray
    iperm: np.ndarray
    n: int
    max_abs: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return self.lu.solve(b[self.perm])[self.iperm]
        return self.lu.solve(b[self.perm, :])[self.iperm, :]

    def solve_transposed(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return self.lu.solve(b[self.perm], trans="T")[self.iperm]
        return self.lu.solve(b[self.perm, :], trans="T")[self.iperm, :]

    @property
    def min_pivot(self) -> float:
        return float(np.abs(self.lu.U.diagonal()).min())

    def worst_pivot_dof(self) -> int:
        """Original index of the row with the smallest pivot (diagnostic)."""
        i = int(np.argmin(np.abs(self.lu.U.diagonal())))
        return int(self.perm[self.lu.perm_c[i]])


def factor(A, pivot_guard: bool = True) -> Factorization:
    """LU-factor a square sparse matrix with partial pivoting after a
    bandwidth-reducing reverse-Cuthill-McKee pre-ordering. The pivot guard
    rejects numerically singular matrices, naming the offending DOF."""
    A = sps.csc_matrix(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise SolverFault("matrix must be square")
    max_abs = float(np.abs(A.data).max()) if A.nnz else 0.0
    if max_abs == 0.0:
        raise SolverFault("matrix is identically zero")
    row_has = np.diff(sps.csr_matrix(A).indptr) > 0
    col_has = np.diff(A.indptr) > 0
    for name, has in (("row", row_has), ("column", col_has)):
        if not has.all():
            raise SolverFault(
                f"structurally singular: empty {name} at DOF {int(np.argmin(has))}"
            )
    sym_pattern = (A + A.T).tocsr()
    perm = np.asarray(csgraph.reverse_cuthill_mckee(sym_pattern, symmetric_mode=True))
    iperm = np.empty_like(perm)
    iperm[perm] = np.arange(n)
    Ap = A[perm, :][:, perm].tocsc()
    try:
        lu = spla.splu(Ap, permc_spec="NATURAL")
    except RuntimeError as exc:
        raise SolverFault(f"factorization failed: {exc}") from exc
    fac = Factorization(lu=lu, perm=perm, iperm=iperm, n=n, max_abs=max_abs)
    if pivot_guard and fac.min_pivot <= PIVOT_REL_TOL * max_abs:
        raise SolverFault(
            f"zero pivot at DOF {fac.worst_pivot_dof()} "
            f"(|U_ii| = {fac.min_pivot:.3e} vs max |A| = {max_abs:.3e})"
        )
    return fac


def solve(fac: Factorization, b: np.ndarray) -> np.ndarray:
    return fac.solve(b)


def smallest_singular_estimate(fac: Factorization, iters: int = 8) -> float:
    """Inverse-iteration estimate of sigma_min, for condition reporting."""
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(fac.n)
    x /= np.linalg.norm(x)
    for _ in range(iters):
        y = fac.solve(x)
        z = fac.solve_transposed(y)
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz == 0:
            return 0.0
        x = z / nz
    y = fac.solve(x)
    return 1.0 / max(np.linalg.norm(y), 1e-300)


def _factor_floored_spd(M, floor_rel: float = SPD_FLOOR_REL) -> Factorization:
    """Factor an SPD matrix whose diagonal may carry vanishing entries from
    basis functions alive only on measure-epsilon slivers: a representable
    diagonal floor keeps the factorization regular without disturbing any
    physically meaningful direction."""
    M = sps.csr_matrix(M)
    d = M.diagonal()
    shift = floor_rel * float(np.abs(d).max())
    return factor(
        M + shift * sps.identity(M.shape[0], format="csr"), pivot_guard=False
    )


def _whitened_basis(M, floor_rel: float = 1e-16, drop: bool = False):
    """Columns Y with Y^T M Y = I for a graded SPD matrix.

    Basis functions alive only on measure-epsilon slivers grade the diagonal
    over dozens of decades; a Jacobi pre-scaling (an exact congruence)
    removes the grading before the dense eigendecomposition. Eigenvalues of
    the scaled matrix below the roundoff floor are numerically
    indistinguishable from zero: with ``drop`` their directions are removed
    (maximization side, where amplified noise would inflate results),
    otherwise they are clipped and kept (minimization side, where dropping
    would hide genuine near-kernel modes).
    """
    Md = sps.csr_matrix(M).toarray()
    d = Md.diagonal().copy()
    dmax = max(float(d.max()), 1e-300)
    d = np.sqrt(np.maximum(d, 1e-200 * dmax))
    Ms = Md / d[:, None] / d[None, :]
    lam, V = scipy.linalg.eigh(0.5 * (Ms + Ms.T))
    floor = floor_rel * max(float(lam.max()), 1e-300)
    if drop:
        keep = lam > floor
        lam, V = lam[keep], V[:, keep]
    else:
        lam = np.maximum(lam, floor)
    return (V / np.sqrt(lam)[None, :]) / d[:, None]


def gen_eig_max(A, M, tol: float = EIG_TOL, maxiter: int = EIG_MAXITER) -> float:
    """Largest eigenvalue of A x = lambda M x for symmetric A and SPD M.

    Moderate dimensions go through an M-whitened dense eigensolve, which
    stays faithful when M carries near-vanishing sliver directions; larger
    problems use power iteration on M^-1 A with a positive spectral shift to
    isolate the algebraically largest eigenvalue.
    """
    A = sps.csr_matrix(A)
    M = sps.csr_matrix(M)
    if A.shape[0] <= DENSE_EIG_LIMIT:
        Y = _whitened_basis(M, drop=True)
        Aw = Y.T @ (A @ Y)
        lam = float(scipy.linalg.eigh(0.5 * (Aw + Aw.T), eigvals_only=True)[-1])
        # single-basis-function Rayleigh quotients are computed from
        # products of like-sized numbers at full relative precision, so they
        # certify blowups far below the dense solver's absolute resolution
        da = A.diagonal()
        dm = M.diagonal()
        ok = dm > 0
        if ok.any():
            lam = max(lam, float((da[ok] / dm[ok]).max()))
        return lam
    fac = _factor_floored_spd(M)
    rng = np.random.default_rng(7)

    def dominant(shift):
        x = rng.standard_normal(A.shape[0])
        x /= np.linalg.norm(x)
        rq = None
        hits = 0
        for it in range(maxiter):
            y = fac.solve(A @ x) + shift * x
            ny = np.linalg.norm(y)
            if ny == 0:
                return 0.0
            x = y / ny
            rq_new = float(x @ (A @ x)) / float(x @ (M @ x))
            if rq is not None and abs(rq_new - rq) <= tol * max(abs(rq_new), 1e-300):
                hits += 1
                if hits >= 3:
                    return rq_new
            else:
                hits = 0
            rq = rq_new
        raise SolverFault(
            f"power iteration did not converge in {maxiter} iterations "
            f"(last value {rq:.6e})"
        )

    lam1 = dominant(0.0)
    if lam1 >= 0:
        return lam1
    return dominant(1.01 * abs(lam1))


def infsup_constant(
    B,
    N_v,
    M_p,
    deflate: np.ndarray | None = None,
    tol: float = EIG_TOL,
    maxiter: int = EIG_MAXITER,
) -> float:
    """Inf-sup constant sqrt(lambda_min) of B N_v^-1 B^T q = lambda M_p q.

    The Schur matrix is formed via triangular solves with N_v's
    factorization; inverse iteration with shift 0 runs on (S + sigma M_p)
    with a tiny sigma so exactly singular pencils stay factorable. Passing
    ``deflate`` removes one structural kernel vector (M_p-orthogonalized
    out) without filtering any other near-zero eigenvalue. Negative
    round-off eigenvalues clamp to 0.
    """
    B = sps.csr_matrix(B)
    M_p = sps.csr_matrix(M_p)
    n_p, n_v = B.shape
    if n_p == 0:
        raise SolverFault("no pressure DOFs")

    if n_v <= DENSE_EIG_LIMIT:
        # whiten both pencil sides (graded-safe); degenerate sliver
        # directions are kept at a representable floor so genuine near-zero
        # eigenvalues remain visible instead of being filtered
        Yv = _whitened_basis(N_v, drop=True)
        D = B @ Yv
        S = D @ D.T
        Yp = _whitened_basis(M_p)
        Sw = Yp.T @ S @ Yp
        Sw = 0.5 * (Sw + Sw.T)
        if deflate is not None:
            cw = Yp.T @ (sps.csr_matrix(M_p) @ np.asarray(deflate, dtype=float))
            ncw = np.linalg.norm(cw)
            if ncw > 0:
                # restrict to the orthogonal complement via a Householder
                # reflector mapping cw -> e_1
                v = cw / ncw
                v = v.copy()
                v[0] += np.sign(v[0]) if v[0] != 0 else 1.0
                v /= np.linalg.norm(v)
                Hm = np.eye(n_p) - 2.0 * np.outer(v, v)
                Z = Hm[:, 1:]
                Sw = Z.T @ Sw @ Z
        lam = scipy.linalg.eigvalsh(Sw)
        return float(np.sqrt(max(float(lam[0]), 0.0)))

    fac = _factor_floored_spd(N_v)
    S = B @ fac.solve(B.T.toarray())
    S = 0.5 * (S + S.T)
    Md = M_p.toarray()
    sigma = 1e-20 * (np.trace(S) / n_p if np.trace(S) > 0 else 1.0)
    try:
        lu = scipy.linalg.lu_factor(S + sigma * Md)
    except scipy.linalg.LinAlgError as exc:
        raise SolverFault(f"inf-sup shift factorization failed: {exc}") from exc

    c = None
    if deflate is not None:
        c = np.asarray(deflate, dtype=float)
        c = c / np.linalg.norm(c)
        Mc = Md @ c
        cMc = float(c @ Mc)

    def project(x):
        if c is None:
            return x
        return x - c * (float(Mc @ x) / cMc)

    rng = np.random.default_rng(3)
    x = project(rng.standard_normal(n_p))
    x /= np.linalg.norm(x)
    lam = None
    hits = 0
    scale = max(np.trace(S) / n_p, 1e-300)
    for it in range(maxiter):
        y = scipy.linalg.lu_solve(lu, Md @ x)
        y = project(y)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        lam_new = float(x @ (S @ x)) / float(x @ (Md @ x))
        if lam is not None and abs(lam_new - lam) <= tol * max(
            abs(lam_new), tol * scale
        ):
            hits += 1
            if hits >= 3:
                lam = lam_new
                break
        else:
            hits = 0
        lam = lam_new
    else:
        raise SolverFault(
            f"inverse iteration did not converge in {maxiter} iterations "
            f"(last value {lam:.6e})"
        )
    return float(np.sqrt(max(lam, 0.0)))


def dense_gen_eigvals(A, M) -> np.ndarray:
    """Dense generalized symmetric eigenvalues (oracle/fallback, dim <= 600)."""
    A = sps.csr_matrix(A).toarray()
    M = sps.csr_matrix(M).toarray()
    if A.shape[0] > 600:
        raise SolverFault("dense oracle limited to dimension 600")
    return scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (M + M.T), eigvals_only=True)


def write_matrix(path, A):
    scipy.io.mmwrite(str(path), sps.coo_matrix(A))


def read_matrix(path):
    return sps.csr_matrix(scipy.io.mmread(str(path)))
