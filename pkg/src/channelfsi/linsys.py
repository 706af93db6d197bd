"""Sparse assembly and linear solves for the saddle-point systems.

Thin contracts around scipy.sparse: COO triplets are summed into sorted CSR,
direct solves use SuperLU, the iterative path is ILU-preconditioned GMRES.
Every report recomputes the residual from scratch.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SingularMatrix",
    "MaxIterations",
    "LinearSolveReport",
    "assemble",
    "solve_direct",
    "factorize",
    "solve_iterative",
    "BorderedFactorization",
    "residual_norm",
    "dump_matrix_market",
]


class SingularMatrix(ArithmeticError):
    """LU factorization broke down; ``pivot`` is the failing column if known."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class MaxIterations(RuntimeError):
    """Krylov solve stopped before the tolerance; ``x`` is the best iterate."""

    def __init__(self, message, x, report):
        super().__init__(message)
        self.x = x
        self.report = report


@dataclass
class LinearSolveReport:
    method: str
    residual: float
    converged: bool = True
    iterations: int = 0
    stats: dict = field(default_factory=dict)


def assemble(rows, cols, vals, shape) -> sp.csr_matrix:
    """CSR matrix from triplets; duplicates summed, column indices sorted."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    n, m = shape
    if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise IndexError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def residual_norm(A, x, b) -> float:
    return float(np.linalg.norm(A @ x - b))


def _parse_pivot(msg: str):
    digits = [int(tok) for tok in msg.replace("(", " ").replace(")", " ").split() if tok.isdigit()]
    return digits[-1] if digits else None


def factorize(A):
    """SuperLU factorization object (reusable for several right-hand sides)."""
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularMatrix(f"LU factorization failed: {exc}", _parse_pivot(str(exc))) from exc


def solve_direct(A, b, lu=None):
    """x with A x = b by sparse LU (partial pivoting); returns (x, report)."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    lu = factorize(A) if lu is None else lu
    x = lu.solve(np.asarray(b, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("non-finite solution (numerically singular matrix)")
    res = residual_norm(A, x, b)
    return x, LinearSolveReport("splu", res, True, 0, {"nnz_L": lu.L.nnz, "nnz_U": lu.U.nnz})


class BorderedFactorization:
    """Direct solver for the bordered system [[A, c], [d^T, 0]] z = b.

    A may be singular with a one-dimensional null space (the pressure
    constant of an enclosed flow).  Index ``k`` must be a position where that
    null vector is nonzero; then A + sigma e_k e_k^T is nonsingular, has the
    sparsity of A, and keeps the dense border out of the LU factors.  The
    exact bordered solution is recovered from two extra solves and a 2x2
    system in the unknowns (multiplier, x_k).
    """

    def __init__(self, M, k: int):
        M = sp.csr_matrix(M)
        n = M.shape[0] - 1
        self.M = M
        self.n = n
        self.k = k
        A = M[:n, :n]
        self.c = M[:n, n].toarray().ravel()
        self.d = M[n, :n].toarray().ravel()
        self.sigma = float(abs(A).max()) or 1.0
        shift = sp.csr_matrix(([self.sigma], ([k], [k])), shape=(n, n))
        self.lu = factorize(A + shift)
        self.yc = self.lu.solve(self.c)
        ek = np.zeros(n)
        ek[k] = self.sigma
        self.ye = self.lu.solve(ek)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        n, k = self.n, self.k
        y0 = self.lu.solve(b[:n])
        # x = y0 - l*yc + s*ye with s = x_k and d.x = b_n
        S = np.array([[-self.yc[k], self.ye[k] - 1.0], [-(self.d @ self.yc), self.d @ self.ye]])
        rhs = np.array([-y0[k], b[n] - self.d @ y0])
        try:
            l, s_ = np.linalg.solve(S, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix("bordered system is singular") from exc
        x = np.empty(n + 1)
        x[:n] = y0 - l * self.yc + s_ * self.ye
        x[n] = l
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("non-finite solution (numerically singular matrix)")
        return x


def solve_iterative(A, b, tol: float = 1e-10, max_it: int = 500, restart: int = 50, drop_tol: float = 1e-5, fill_factor: float = 20.0):
    """ILU-preconditioned restarted GMRES; relative residual target ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    try:
        ilu = spla.spilu(A, drop_tol=drop_tol, fill_factor=fill_factor)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        M = None
    best = {"x": np.zeros_like(b), "r": float(np.linalg.norm(b))}
    count = [0]

    def cb(xk):
        count[0] += 1

    x, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=restart, maxiter=max_it, M=M, callback=cb, callback_type="legacy")
    res = residual_norm(A, x, b)
    if res < best["r"]:
        best = {"x": x, "r": res}
    bn = float(np.linalg.norm(b))
    converged = bool(res <= tol * max(bn, 1e-300)) or bn == 0.0
    report = LinearSolveReport("gmres+ilu", best["r"], converged, count[0], {"info": int(info)})
    if not converged:
        raise MaxIterations(f"GMRES stopped at residual {best['r']:.3e}", best["x"], report)
    return best["x"], report


def dump_matrix_market(A) -> str:
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(A))
    return buf.getvalue().decode()
