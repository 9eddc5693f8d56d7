"""Dense linear-algebra primitives shared by the rest of the package.

Matrices are plain ``float64`` numpy arrays. The heavy lifting (eigh, svd,
Levinson recursion) is delegated to numpy/scipy; this module adds the
tolerances and failure modes the factorization code relies on, plus a
preconditioned conjugate-gradient Toeplitz solver that runs in
O(n log n) per iteration.
"""

import numpy as np
import scipy.linalg

from mfdp.errors import ContractViolation, NotPSDError, ToeplitzSolveError

SYMMETRY_TOL = 1e-10
NEG_EIG_TOL = 1e-10
PINV_RCOND = 1e-12
TOEPLITZ_RTOL = 1e-8


def as_matrix(M, name="matrix"):
    """Returns `M` as a finite 2-D float64 array, raising on NaN/Inf."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    return arr


def _check_symmetric(M):
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if M.shape[0] != M.shape[1]:
        raise ContractViolation(f"expected a square matrix, got {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ContractViolation("matrix is not symmetric")


def sym_eigh(M):
    """Eigendecomposition of a symmetric matrix (ascending eigenvalues)."""
    M = as_matrix(M)
    _check_symmetric(M)
    return np.linalg.eigh(0.5 * (M + M.T))


def psd_sqrt(M):
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues in [-1e-10, 0) are treated as roundoff and clamped to zero;
    anything more negative raises `NotPSDError`.
    """
    w, Q = sym_eigh(M)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if w.size and w[0] < -NEG_EIG_TOL * scale:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} is negative")
    w = np.clip(w, 0.0, None)
    S = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (S + S.T)


def psd_inv_sqrt(M):
    """Inverse principal square root of a symmetric positive-definite matrix."""
    w, Q = sym_eigh(M)
    if w.size and w[0] <= 0:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} is not positive")
    S = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (S + S.T)


def pinv(M):
    """Moore-Penrose pseudoinverse.

    Singular values below ``max(rows, cols) * sigma_max * 1e-12`` count as
    zero when deciding numerical rank.
    """
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = max(M.shape) * (s[0] if s.size else 0.0) * PINV_RCOND
    keep = s > cutoff
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def left_pinv(M):
    """Pseudoinverse of a full-column-rank matrix via (M^T M)^{-1} M^T.

    Much cheaper than an SVD for tall encoders.  Falls back to `pinv` when
    the Gram matrix is not numerically positive definite.
    """
    M = as_matrix(M)
    G = M.T @ M
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return pinv(M)
    if np.min(np.diag(L)) ** 2 <= PINV_RCOND * max(M.shape) * np.max(np.diag(G)):
        return pinv(M)
    return scipy.linalg.cho_solve((L, True), M.T)


def spectral_norm(M):
    """Largest singular value of `M`."""
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def toeplitz_matvec(first_col, first_row, x):
    """Computes T @ x for a Toeplitz T in O(n log n) via circulant embedding."""
    c = np.asarray(first_col, dtype=np.float64)
    r = np.asarray(first_row, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = c.size
    if n == 1:
        return c[0] * x
    # Circulant of size 2n whose leading n x n block is T.
    emb = np.concatenate([c, [0.0], r[:0:-1]])
    m = emb.size
    y = np.fft.irfft(np.fft.rfft(emb) * np.fft.rfft(x, m), m)
    return y[:n]


def _chan_preconditioner_eigs(t):
    """Eigenvalues of T. Chan's optimal circulant approximation to toeplitz(t)."""
    n = t.size
    j = np.arange(n)
    wrapped = np.concatenate([[t[0]], t[:0:-1]])
    c = ((n - j) * t + j * wrapped) / n
    return np.fft.fft(c).real


def _pcg_symmetric_toeplitz(t, rhs, rtol, maxiter):
    """Preconditioned CG for a symmetric positive-definite Toeplitz system.

    Returns None if the preconditioner is not positive definite or CG
    breaks down; the caller then falls back to a direct method.
    """
    pe = _chan_preconditioner_eigs(t)
    if np.min(pe) <= 0:
        return None
    rhs_norm = np.linalg.norm(rhs)
    x = np.zeros_like(rhs)
    if rhs_norm == 0:
        return x
    r = rhs.copy()
    z = np.fft.ifft(np.fft.fft(r) / pe).real
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Ap = toeplitz_matvec(t, t, p)
        pAp = p @ Ap
        if pAp <= 0:
            return None
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * rhs_norm:
            return x
        z = np.fft.ifft(np.fft.fft(r) / pe).real
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return None


def toeplitz_solve(first_col, first_row, rhs, rtol=TOEPLITZ_RTOL):
    """Solves T x = rhs for a square Toeplitz matrix T.

    Symmetric systems are first attempted with circulant-preconditioned
    conjugate gradients (each iteration is two FFT products); if that does
    not converge, or the system is not symmetric, Levinson recursion is used.
    The result is always checked against the relative residual `rtol`.

    Args:
      first_col: first column of T, length n.
      first_row: first row of T, length n; ``first_row[0]`` must equal
        ``first_col[0]``.
      rhs: right-hand side, length n.
      rtol: acceptable relative residual ||T x - rhs|| / ||rhs||.

    Returns:
      The solution vector x.

    Raises:
      ContractViolation: on mismatched lengths or corner entries.
      ToeplitzSolveError: if the residual exceeds `rtol`.
    """
    c = np.asarray(first_col, dtype=np.float64).ravel()
    r = np.asarray(first_row, dtype=np.float64).ravel()
    b = np.asarray(rhs, dtype=np.float64).ravel()
    if not (c.size == r.size == b.size) or c.size == 0:
        raise ContractViolation("first_col, first_row and rhs must share a length")
    if c[0] != r[0]:
        raise ContractViolation("first_col[0] must equal first_row[0]")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(r)) and np.all(np.isfinite(b))):
        raise ContractViolation("Toeplitz data must be finite")

    x = None
    if np.array_equal(c, r) and c.size > 1:
        x = _pcg_symmetric_toeplitz(c, b, rtol * 1e-2, maxiter=max(50, 4 * c.size))
    if x is None:
        try:
            x = scipy.linalg.solve_toeplitz((c, r), b)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise ToeplitzSolveError(f"Toeplitz solve failed: {e}") from e
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(toeplitz_matvec(c, r, x) - b)
    if not np.all(np.isfinite(x)) or res > rtol * max(bnorm, np.finfo(float).tiny):
        if bnorm == 0 and res == 0:
            return x
        raise ToeplitzSolveError(
            f"relative residual {res / max(bnorm, 1e-300):.3e} exceeds {rtol:.1e}")
    return x
