"""
Direct saddle-point solves and a shift-invert Lanczos eigensolver.

The eigensolver works on the symmetric pencil ``(A', B')`` produced by
:func:`ipmaxwell.assembly.assemble_pencil`. Lanczos runs on
``T = (A' - sigma B')^{-1} B'``, which is self-adjoint in the
``B'``-semi-inner product, with full reorthogonalisation and thick restarts.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_pencil, assemble_system
from .fem import DiscreteField

log = logging.getLogger(__name__)

BACKWARD_TOL = 1e-10


class SingularMatrixError(RuntimeError):
    """The matrix could not be factorised; ``dof`` is the offending column when known."""

    def __init__(self, message, dof=None):
        super().__init__(message)
        self.dof = dof


class EigenConvergenceError(RuntimeError):
    """Lanczos ran out of restarts; ``partial`` holds the pairs that did converge."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def backward_error(matrix, x, b):
    r = matrix @ x - b
    denom = sp.linalg.norm(matrix, np.inf) * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
    return float(np.abs(r).max(initial=0.0) / denom) if denom > 0 else 0.0


def _locate_zero_pivot(matrix):
    csc = sp.csc_matrix(matrix)
    empty_cols = np.flatnonzero(np.diff(csc.indptr) == 0)
    if empty_cols.size:
        return int(empty_cols[0])
    empty_rows = np.flatnonzero(np.diff(sp.csr_matrix(matrix).indptr) == 0)
    if empty_rows.size:
        return int(empty_rows[0])
    if matrix.shape[0] <= 4000:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, _ = sla.lu_factor(csc.toarray(), check_finite=False)
        diag = np.abs(np.diag(lu))
        return int(np.argmin(diag))
    return None


class Factorization:
    """Sparse LU with partial pivoting (SuperLU) and iterative refinement."""

    def __init__(self, matrix):
        self.matrix = sp.csc_matrix(matrix)
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {self.matrix.shape}")
        try:
            self._lu = spla.splu(self.matrix, permc_spec="COLAMD")
        except RuntimeError as exc:
            dof = _locate_zero_pivot(self.matrix)
            where = f" (zero pivot at dof {dof})" if dof is not None else ""
            raise SingularMatrixError(f"matrix is singular{where}: {exc}", dof) from None
        diag = np.abs(self._lu.U.diagonal())
        if diag.size and diag.min() <= np.finfo(float).eps * diag.max():
            col = int(self._lu.perm_c[np.argmin(diag)])
            raise SingularMatrixError(f"matrix is numerically singular (zero pivot at dof {col})", col)

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs, refine=3):
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        for _ in range(refine):
            if rhs.ndim > 1 or backward_error(self.matrix, x, rhs) <= BACKWARD_TOL:
                break
            x = x + self._lu.solve(rhs - self.matrix @ x)
        return x


def factorize(matrix):
    return Factorization(matrix)


def solve_linear(fact, rhs):
    return fact.solve(rhs)


def solve_bvp(fe, coeffs, params, g=None, g_t=None):
    """Solve the discrete boundary value problem.

    The returned field carries the relative backward error of the solve in
    ``field.residual``.
    """
    system = assemble_system(fe, coeffs, params, g, g_t)
    if not np.any(system.rhs):
        out = DiscreteField.zeros(fe)
        out.residual = 0.0
        return out
    fact = factorize(system.matrix)
    x = fact.solve(system.rhs)
    out = DiscreteField.from_vector(fe, x)
    out.residual = backward_error(system.matrix, x, system.rhs)
    return out


@dataclass
class EigenResult:
    """Eigenvalues in ascending order with B'-orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: list
    residual_norms: np.ndarray
    iterations: int
    vectors: np.ndarray = field(default=None, repr=False)


def pencil_residuals(A, B, lam, X):
    """Normwise backward errors ``|A x - lam B x| / ((|A| + |lam| |B|) |x|)``.

    Recomputed from the pencil itself, in the 1-norm for the matrices and
    the 2-norm for vectors.
    """
    na = sp.linalg.norm(A, 1)
    nb = sp.linalg.norm(B, 1)
    out = np.empty(len(lam))
    for i, (l, x) in enumerate(zip(lam, X.T)):
        r = A @ x - l * (B @ x)
        out[i] = np.linalg.norm(r) / ((na + abs(l) * nb) * np.linalg.norm(x))
    return out


def _b_orthogonalize(V, w, B, passes=2):
    coeffs = np.zeros(V.shape[1])
    for _ in range(passes):
        h = V.T @ (B @ w)
        w = w - V @ h
        coeffs += h
    return w, coeffs


def _lanczos(A, B, k, sigma, tol, v0, m, max_restarts, rng, solver, locked):
    n = A.shape[0]

    def project(w):
        if locked is not None:
            w, _ = _b_orthogonalize(locked, w, B)
        return w

    def op(x):
        return project(solver.solve(B @ x))

    v = project(rng.standard_normal(n) if v0 is None else np.asarray(v0, dtype=float).copy())
    bnorm = np.sqrt(v @ (B @ v))
    if not bnorm > 0:
        raise ValueError("start vector has zero B-norm")
    V = np.zeros((n, m + 1))
    H = np.zeros((m, m))
    V[:, 0] = v / bnorm
    p = 0
    iterations = 0
    scale = None
    ritz_tol = tol
    for restart in range(max_restarts + 1):
        for j in range(p, m):
            w = op(V[:, j])
            iterations += 1
            w, h = _b_orthogonalize(V[:, : j + 1], w, B)
            H[: j + 1, j] = h
            H[j, : j + 1] = h
            beta = np.sqrt(max(w @ (B @ w), 0.0))
            scale = max(scale or 0.0, np.abs(h).max())
            if beta <= 1e-14 * scale:
                # invariant subspace: continue from a fresh direction
                w, _ = _b_orthogonalize(V[:, : j + 1], project(rng.standard_normal(n)), B)
                beta_next = np.sqrt(max(w @ (B @ w), 0.0))
                V[:, j + 1] = w / beta_next
                beta = 0.0
            else:
                V[:, j + 1] = w / beta
            if j + 1 < m:
                H[j + 1, j] = H[j, j + 1] = beta
        theta, S = np.linalg.eigh(H)
        order = np.argsort(theta)[::-1]
        theta, S = theta[order], S[:, order]
        resid = np.abs(beta * S[m - 1, :])
        positive = theta > 0
        wanted = np.flatnonzero(positive)[:k]
        done = (
            len(wanted) == k
            and np.all(resid[wanted] <= ritz_tol * np.abs(theta[wanted]))
        )
        log.debug("restart %d: %d/%d converged", restart,
                  int(np.sum(resid[wanted] <= ritz_tol * np.abs(theta[wanted]))), k)
        if done or m == n:
            X = V[:, :m] @ S[:, wanted]
            lam = sigma + 1.0 / theta[wanted]
            if m == n or np.all(pencil_residuals(A, B, lam, X) <= tol) or ritz_tol < 1e-15:
                return lam, X, iterations
            ritz_tol *= 0.1
        p = min(m - 1, k + (m - k) // 2)
        keep = np.arange(p)
        V[:, :p] = V[:, :m] @ S[:, keep]
        V[:, p] = V[:, m]
        H[:] = 0.0
        H[keep, keep] = theta[keep]
        H[p, :p] = H[:p, p] = beta * S[m - 1, keep]
    conv = np.flatnonzero(positive & (resid <= ritz_tol * np.abs(theta)))[:k]
    X = V[:, :m] @ S[:, conv]
    partial = (sigma + 1.0 / theta[conv], X)
    raise EigenConvergenceError(f"Lanczos did not converge after {max_restarts} restarts", partial)


def shift_invert_lanczos(A, B, k, sigma=0.0, tol=1e-8, v0=None, ncv=None, max_restarts=200,
                         rng=None, solver=None):
    """Eigenpairs of ``A x = lam B x`` with the ``k`` smallest ``lam > sigma``.

    ``B`` must be symmetric positive semidefinite and ``A - sigma B``
    nonsingular. The transformed eigenvalues ``mu = 1/(lam - sigma)`` of
    ``T = (A - sigma B)^{-1} B`` are computed by Lanczos in the ``B``
    product; the ``k`` largest positive ``mu`` are returned as ``lam``.

    Converged pairs must also satisfy ``pencil_residuals <= tol``; the Ritz
    tolerance is tightened until they do.

    A single Krylov sequence sees only one direction of a repeated
    eigenvalue, so after convergence the search is repeated B-orthogonally
    to the accepted vectors; any eigenvalue it finds below the current
    ``k``-th one is merged in, until none is left.

    Returns ``(lam, X, iterations)`` with ``X`` B-orthonormal.
    """
    n = A.shape[0]
    rng = np.random.default_rng(0) if rng is None else rng
    if k < 1 or k >= n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    m = min(n, ncv or max(2 * k + 1, 30))
    if solver is None:
        solver = factorize(A - sigma * B if sigma else A)
    lam, X, iterations = _lanczos(A, B, k, sigma, tol, v0, m, max_restarts, rng, solver, None)
    while m < n and X.shape[1] < n - 1:
        try:
            extra, Y, its = _lanczos(A, B, 1, sigma, tol, None, min(n - X.shape[1], 30),
                                     max_restarts, rng, solver, X)
        except EigenConvergenceError:
            break
        iterations += its
        if extra[0] >= lam.max() - 1e-10 * abs(lam.max()):
            break
        log.debug("deflation found a missed eigenvalue %.10g", extra[0])
        lam = np.concatenate([lam, extra])
        X = np.hstack([X, Y])
        order = np.argsort(lam)[:k]
        lam, X = lam[order], X[:, order]
    order = np.argsort(lam)
    return lam[order], X[:, order], iterations


def solve_eigs(fe, coeffs, params, k=10, tol=1e-8, sigma=0.0, v0=None, ncv=None, backend="lanczos"):
    """Approximate the ``k`` smallest Maxwell eigenvalues on ``fe``.

    ``backend="arpack"`` delegates to SciPy's ARPACK shift-invert mode on
    the same pencil; it exists as a cross-check.
    """
    A, B = assemble_pencil(fe, coeffs, params)
    if backend == "lanczos":
        lam, X, its = shift_invert_lanczos(A, B, k, sigma=sigma, tol=tol, v0=v0, ncv=ncv)
    elif backend == "arpack":
        lam, X, its = _arpack(A, B, k, sigma, tol, v0)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    res = pencil_residuals(A, B, lam, X)
    fields = [DiscreteField.from_vector(fe, x) for x in X.T]
    return EigenResult(lam, fields, res, its, X)


def _arpack(A, B, k, sigma, tol, v0):
    fact = factorize(A - sigma * B if sigma else A)
    n = A.shape[0]
    opinv = spla.LinearOperator((n, n), matvec=fact.solve, dtype=float)
    # the pure-gradient eigenvalue sits below sigma; ask for extra pairs and filter
    nev = min(n - 2, 2 * k + 2)
    mu, X = spla.eigsh(A, k=nev, M=B, sigma=sigma, which="LA", OPinv=opinv, tol=tol, v0=v0)
    lam = mu
    keep = np.flatnonzero(lam > sigma)
    keep = keep[np.argsort(lam[keep])][:k]
    return lam[keep], X[:, keep], 0


def dense_generalized_eigs(A, B):
    """Finite real eigenvalues of a (small) pencil by the QZ algorithm, ascending."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    B = B.toarray() if sp.issparse(B) else np.asarray(B)
    alpha, beta = sla.eig(A, B, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * np.abs(alpha).max()
    lam = (alpha[finite] / beta[finite])
    lam = lam[np.abs(lam.imag) <= 1e-8 * np.abs(lam)].real
    return np.sort(lam)
