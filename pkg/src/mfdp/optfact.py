"""Optimal factorizations under a participation schema via the Lagrangian dual.

The primal problem, over symmetric positive-definite X = C^T C, is

    minimize tr(A^T A X^{-1})  subject to  u^T X u <= 1 for every corner u,

optionally with X[i, j] >= 0 on a set of index pairs.  Attaching multipliers
v_u >= 0 to the corner constraints and W[i, j] >= 0 to the nonnegativity
constraints gives U = sum_u v_u u u^T - W and the closed-form minimizer

    X(v, W) = U^{-1/2} (U^{1/2} A^T A U^{1/2})^{1/2} U^{-1/2},

with dual value g = 2 tr((U^{1/2} A^T A U^{1/2})^{1/2}) - sum(v).  The dual is
concave; we maximize it by spectral projected gradient ascent and certify
the result with a primal feasible point built from the current X.
"""

import dataclasses
import logging

import numpy as np

from mfdp import matcore, participation
from mfdp.errors import (ContractViolation, ConvergenceError, NotPSDError,
                         RankError, TooLargeError)

log = logging.getLogger(__name__)

MODES = ("full_corners", "pairwise_nonneg", "elementwise_nonneg")
RANK_TOL = 1e-10
MAX_FULL_CORNERS = 1 << 20


@dataclasses.dataclass
class SolverOptions:
    """Knobs for `solve`.

    Attributes:
      gap_tol: target relative duality gap (primal - dual) / primal.
      max_iter: iteration cap.
      stall_iter: stop early if the best gap has not improved for this many
        iterations (the dual value is only accurate to roundoff, so the
        ascent can plateau above a very tight tolerance).
      check_weak_duality: assert dual <= primal at every iterate.
      polish_max_vars: run the projected Newton refinement only when the
        number of multipliers is at most this.
      method: ``spg`` (projected gradient ascent), ``fixed_point`` (full
        corners only) or ``auto``, which uses the fixed point for large
        single-participation problems and SPG otherwise.
    """

    gap_tol: float = 1e-6
    max_iter: int = 50_000
    stall_iter: int = 3_000
    check_weak_duality: bool = True
    polish_max_vars: int = 2_000
    method: str = "auto"


@dataclasses.dataclass
class DualState:
    """Current multipliers and the quantities derived from them.

    Attributes:
      v: corner multipliers, one per row of ``corners``.
      W: symmetric (n, n) nonnegativity multipliers, zero off the constrained
        pairs (all zero in full-corner mode).
      U: sum_u v_u u u^T - W.
      X: the certified primal point: X(v, W) with constrained negatives
        clamped to zero, scaled so that max_u u^T X u = 1.
      dual_value: g(v, W).
      primal_value: objective of the repaired, normalized primal point.
      gap: relative duality gap.
      iterations: ascent iterations performed.
      corners: (num_corners, n) array of corner vectors.
      mode: constraint mode.
    """

    v: np.ndarray
    W: np.ndarray
    U: np.ndarray
    X: np.ndarray
    dual_value: float
    primal_value: float = np.inf
    gap: float = np.inf
    iterations: int = 0
    corners: np.ndarray = None
    mode: str = "full_corners"


@dataclasses.dataclass
class Factorization:
    """A factorization A = B C with its sensitivity.

    Attributes:
      B: decoder, shape (rows of A, rows of C).
      C: encoder, shape (m, n).
      sens: sensitivity of C under `schema`.
      schema: the participation schema used.
      sens_method: ``brute``, ``nonneg`` or ``upper``.
    """

    B: np.ndarray
    C: np.ndarray
    sens: float
    schema: participation.ParticipationSchema
    sens_method: str

    def loss(self):
        return float(self.sens ** 2 * np.sum(self.B ** 2))

    def recompute_sens(self):
        return participation.sensitivity(self.C, self.schema, self.sens_method).value


@dataclasses.dataclass(frozen=True)
class DualGradient:
    """Partial derivatives of the dual function.

    Attributes:
      dv: d g / d v_u = u^T X u - 1, one per corner.
      dW: d g / d W[i, j] = -X[i, j] on constrained entries, zero elsewhere.
    """

    dv: np.ndarray
    dW: np.ndarray


def _quad(D, X):
    """Row-wise quadratic forms d_i^T X d_i."""
    return np.sum((D @ X) * D, axis=1)


def _corner_array(corners, n=None):
    if isinstance(corners, participation.CornerSet):
        D = corners.vectors
    else:
        D = np.atleast_2d(np.asarray(corners, dtype=np.float64))
    if n is not None and D.shape[1] != n:
        raise ContractViolation(f"corners have dimension {D.shape[1]}, expected {n}")
    return D


def _build_u(v, W, D):
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != D.shape[0]:
        raise ContractViolation(f"v has {v.size} entries for {D.shape[0]} corners")
    if np.any(v < 0):
        raise ContractViolation("v must be nonnegative")
    U = (D.T * v) @ D
    if W is not None:
        W = matcore.as_matrix(W, "W")
        if W.shape != U.shape:
            raise ContractViolation(f"W has shape {W.shape}, expected {U.shape}")
        if np.any(W < 0):
            raise ContractViolation("W must be nonnegative")
        U = U - 0.5 * (W + W.T)
    return U


def _x_parts(U, T, regularize=False):
    """Returns (X, M) with M = (U^{1/2} T U^{1/2})^{1/2}, or raises RankError."""
    lam, Q = np.linalg.eigh(0.5 * (U + U.T))
    scale = max(1.0, float(np.max(np.abs(lam))))
    if lam[0] <= RANK_TOL * scale:
        if not regularize:
            raise RankError(f"U is numerically singular (min eigenvalue {lam[0]:.3e})")
        eps = 1e-9 * np.trace(U) / U.shape[0]
        log.info("regularizing singular U with eps=%.3e", eps)
        lam = lam + eps
        if lam[0] <= 0:
            raise RankError("U is indefinite; regularization cannot recover it")
    sq = np.sqrt(lam)
    Uh = (Q * sq) @ Q.T
    Uih = (Q / sq) @ Q.T
    M = matcore.psd_sqrt(0.5 * ((Uh @ T @ Uh) + (Uh @ T @ Uh).T))
    X = Uih @ M @ Uih
    return 0.5 * (X + X.T), M


def x_from_duals(v, W, A, corners, regularize=False):
    """Lagrangian minimizer X(v, W).

    Args:
      v: nonnegative corner multipliers.
      W: symmetric nonnegative (n, n) multipliers, or None.
      A: workload matrix.
      corners: `CornerSet` or (num_corners, n) array.
      regularize: if True, a singular U is shifted by 1e-9 * tr(U) / n
        instead of raising.

    Returns:
      The positive-definite X solving X U X = A^T A.
    """
    A = matcore.as_matrix(A, "A")
    D = _corner_array(corners, A.shape[1])
    X, _ = _x_parts(_build_u(v, W, D), A.T @ A, regularize)
    return X


def dual_value(v, W, A, corners, regularize=False):
    """g(v, W) = 2 tr((U^{1/2} A^T A U^{1/2})^{1/2}) - sum(v)."""
    A = matcore.as_matrix(A, "A")
    D = _corner_array(corners, A.shape[1])
    _, M = _x_parts(_build_u(v, W, D), A.T @ A, regularize)
    return float(2.0 * np.trace(M) - np.sum(v))


def dual_gradient(v, W, A, corners, regularize=False, pairs=None):
    """Gradient of g with respect to v and the constrained entries of W.

    Args:
      pairs: (rows, cols) of the constrained entries, e.g. from
        `constraint_pairs`; both (i, j) and (j, i) are filled.  Defaults to
        the nonzero entries of W.
    """
    A = matcore.as_matrix(A, "A")
    D = _corner_array(corners, A.shape[1])
    X, _ = _x_parts(_build_u(v, W, D), A.T @ A, regularize)
    dv = _quad(D, X) - 1.0
    dW = np.zeros_like(X)
    if pairs is not None:
        pi, qi = pairs
        dW[pi, qi] = -X[pi, qi]
        dW[qi, pi] = -X[qi, pi]
    elif W is not None:
        mask = np.asarray(W) != 0
        dW[mask] = -X[mask]
    return DualGradient(dv=dv, dW=dW)


def fixed_point_residual(v, A, corners):
    """max | v - diagpart((H_v^T A^T A H_v)^{1/2}) | with H_v = D^T diag(v)^{1/2}."""
    A = matcore.as_matrix(A, "A")
    D = _corner_array(corners, A.shape[1])
    H = D.T * np.sqrt(np.asarray(v, dtype=np.float64))
    R = matcore.psd_sqrt(H.T @ (A.T @ A) @ H)
    return float(np.max(np.abs(np.diag(R) - v)))


def constraint_pairs(schema, mode):
    """Index pairs (i < j) carrying X[i, j] >= 0 constraints in `mode`."""
    if mode == "full_corners":
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    if mode == "pairwise_nonneg":
        mask = np.triu(schema.pair_mask(), 1)
    elif mode == "elementwise_nonneg":
        mask = np.triu(np.ones((schema.n, schema.n), dtype=bool), 1)
    else:
        raise ContractViolation(f"unknown mode {mode!r}; expected one of {MODES}")
    return np.nonzero(mask)


class _Problem:
    """Flat-vector view of the dual used by the ascent loop.

    The variable is z = (v, w) with one w per constrained pair; W[i, j] =
    W[j, i] = w / 2, so d g / d w = -X[i, j].
    """

    def __init__(self, A, schema, mode):
        self.A = A
        self.T = A.T @ A
        self.n = A.shape[1]
        self.schema = schema
        self.mode = mode
        cs = participation.corners(schema, restricted_nonneg=(mode != "full_corners"))
        self.D = cs.vectors
        self.nv = self.D.shape[0]
        self.pi, self.qi = constraint_pairs(schema, mode)
        self.npair = self.pi.size

    def W_matrix(self, w):
        W = np.zeros((self.n, self.n))
        W[self.pi, self.qi] = w / 2
        W[self.qi, self.pi] = w / 2
        return W

    def U(self, z):
        U = (self.D.T * z[:self.nv]) @ self.D
        if self.npair:
            w = z[self.nv:]
            U[self.pi, self.qi] -= w / 2
            U[self.qi, self.pi] -= w / 2
        return U

    def evaluate(self, z):
        """Returns (g, grad, X, U) or None if U is not positive definite."""
        U = self.U(z)
        try:
            X, M = _x_parts(U, self.T)
        except (RankError, NotPSDError):
            return None
        g = 2.0 * np.trace(M) - np.sum(z[:self.nv])
        gv = _quad(self.D, X) - 1.0
        gw = -X[self.pi, self.qi]
        return g, np.concatenate([gv, gw]), X, U

    def jacobian(self, z, active):
        """d grad[active] / d z[active], by implicit differentiation of X U X = T.

        With S = U^{-1/2} Q_M (Q_M the eigenvectors of M, eigenvalues lam),
        XU = S diag(lam) S^{-1}, so the Lyapunov equation for dX decouples:
        dX = S Y S^T with Y_kl = (S^{-1} (-X dU X) S^{-T})_kl / (lam_k + lam_l).
        """
        U = self.U(z)
        lu, Qu = np.linalg.eigh(U)
        Uh = (Qu * np.sqrt(lu)) @ Qu.T
        Uih = (Qu / np.sqrt(lu)) @ Qu.T
        K = Uh @ self.T @ Uh
        mu, Qm = np.linalg.eigh(0.5 * (K + K.T))
        lam = np.sqrt(np.clip(mu, 0.0, None))
        M = (Qm * lam) @ Qm.T
        X = Uih @ M @ Uih
        S = Uih @ Qm
        S_inv = Qm.T @ Uh
        denom = lam[:, None] + lam[None, :]
        denom = np.where(denom > 0, denom, np.inf)

        idx = np.flatnonzero(active)
        SX = S_inv @ X
        cols = []
        for j in idx:
            if j < self.nv:
                c = SX @ self.D[j]
                R = -np.outer(c, c)
            else:
                p, q = self.pi[j - self.nv], self.qi[j - self.nv]
                R = 0.5 * (np.outer(SX[:, p], SX[:, q]) + np.outer(SX[:, q], SX[:, p]))
            cols.append(R / denom)
        Y = np.stack(cols)
        J = np.empty((idx.size, idx.size))
        for r, i in enumerate(idx):
            if i < self.nv:
                a = S.T @ self.D[i]
                J[r] = np.einsum("k,jkl,l->j", a, Y, a)
            else:
                p, q = self.pi[i - self.nv], self.qi[i - self.nv]
                J[r] = -np.einsum("k,jkl,l->j", S[p], Y, S[q])
        return 0.5 * (J + J.T)

    def initial_point(self):
        """Multipliers making U a multiple of the identity, scaled optimally.

        In full-corner mode each pattern carries 2**(k-1) sign corners whose
        outer products sum to 2**(k-1) times the pattern's diagonal; in the
        nonneg modes the all-ones corner's off-diagonal mass is cancelled by
        w = 2 on the pattern's own pairs.  With U = c I the dual is
        2 sqrt(c) tr(T^{1/2}) - c sum(base), maximized in closed form.
        """
        if self.mode == "full_corners":
            base = np.full(self.nv, 2.0 ** -(self.schema.k - 1))
        else:
            base = np.ones(self.nv)
        w0 = np.zeros(self.npair)
        if self.npair:
            same = (self.pi % self.schema.b) == (self.qi % self.schema.b)
            w0 = 2.0 * same.astype(float)
        c = (np.trace(matcore.psd_sqrt(self.T)) / base.sum()) ** 2
        return c * np.concatenate([base, w0])

    def primal(self, X):
        """Feasible primal point from X: clamp constrained negatives, then rescale.

        Returns (objective, normalized X) or (inf, None) if the repaired
        matrix is not positive definite.
        """
        Xr = X.copy()
        if self.npair:
            neg = Xr[self.pi, self.qi] < 0
            Xr[self.pi[neg], self.qi[neg]] = 0.0
            Xr[self.qi[neg], self.pi[neg]] = 0.0
        s = float(np.max(_quad(self.D, Xr)))
        try:
            L = np.linalg.cholesky(Xr)
        except np.linalg.LinAlgError:
            return np.inf, None
        Li = np.linalg.solve(L, self.A.T)
        # tr(T X^{-1}) = ||L^{-1} A^T||_F^2.
        return s * float(np.sum(Li ** 2)), Xr / s


def solve(A, schema, mode="full_corners", opts=None):
    """Computes an optimal factorization of A under `schema`.

    Args:
      A: full-rank workload matrix with n columns.
      schema: `ParticipationSchema` over n steps.
      mode: ``full_corners``, ``pairwise_nonneg`` or ``elementwise_nonneg``.
      opts: `SolverOptions`.

    Returns:
      (Factorization, DualState).  The factorization has unit sensitivity.

    Raises:
      ConvergenceError: gap_tol not reached; carries the best state found.
    """
    opts = opts or SolverOptions()
    A = matcore.as_matrix(A, "A")
    if A.shape[1] != schema.n:
        raise ContractViolation(f"A has {A.shape[1]} columns, schema has n={schema.n}")
    if mode not in MODES:
        raise ContractViolation(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "full_corners" and schema.b * 2 ** (schema.k - 1) > MAX_FULL_CORNERS:
        raise TooLargeError("full corner enumeration exceeds 2**20 constraints")
    if np.linalg.matrix_rank(A) < schema.n:
        raise RankError("A must have full column rank")

    prob = _Problem(A, schema, mode)
    method = opts.method
    if method == "auto":
        method = "fixed_point" if (mode == "full_corners" and schema.k == 1
                                   and schema.n > 64) else "spg"
    if method == "fixed_point":
        if mode != "full_corners":
            raise ContractViolation("the fixed-point method needs mode='full_corners'")
        best, it = _fixed_point(prob, opts)
    elif method == "spg":
        best, it = _spg(prob, opts)
    else:
        raise ContractViolation(f"unknown method {opts.method!r}")

    gap, primal, g, zb, Xb, Ub, Xn = best
    state = DualState(v=zb[:prob.nv].copy(), W=prob.W_matrix(zb[prob.nv:]), U=Ub,
                      X=Xn if Xn is not None else Xb, dual_value=float(g),
                      primal_value=float(primal), gap=float(gap), iterations=it,
                      corners=prob.D, mode=mode)
    if Xn is None or gap > opts.gap_tol:
        raise ConvergenceError(
            f"relative gap {gap:.3e} above {opts.gap_tol:.1e} after {it} iterations",
            state=state,
            factorization=None if Xn is None else extract_factorization(Xn, A, schema, mode))
    log.info("solve(%s): gap %.3e after %d iterations", mode, gap, it)
    return extract_factorization(Xn, A, schema, mode), state


def _check_iterate(opts, g, primal):
    if opts.check_weak_duality and np.isfinite(primal) and g > primal * (1 + 1e-9):
        raise ConvergenceError(
            f"weak duality violated: dual {g:.12g} > primal {primal:.12g}")


def _spg(prob, opts):
    """Spectral projected gradient ascent with periodic Newton polishing.

    Returns (best, iterations) where best is (gap, primal, g, z, X, U, Xn).
    """
    z = prob.initial_point()
    ev = prob.evaluate(z)
    if ev is None:
        raise RankError("initial multipliers give a singular U")
    g, grad, X, U = ev
    alpha = 1.0 / max(np.max(np.abs(grad)), 1e-300)
    history = [g]
    can_polish = prob.nv + prob.npair <= opts.polish_max_vars
    best = None
    best_it = 0
    it = 0
    for it in range(opts.max_iter + 1):
        primal, Xn = prob.primal(X)
        gap = (primal - g) / primal if np.isfinite(primal) else np.inf
        _check_iterate(opts, g, primal)
        if best is None or gap < best[0]:
            best = (gap, primal, g, z.copy(), X, U, Xn)
            best_it = it
        if gap <= opts.gap_tol:
            break
        if it > 0 and it % 50 == 0 and gap < 1e-2 and can_polish:
            cand = _polished_candidate(prob, z)
            if cand is not None and cand[0] < best[0]:
                best = cand
                if cand[0] <= opts.gap_tol * 1e-3:
                    break
        if it == opts.max_iter or it - best_it > opts.stall_iter:
            break

        # Nonmonotone Armijo backtracking along the projected BB step.
        ref = max(history[-10:])
        step = alpha
        while True:
            z_new = np.maximum(z + step * grad, 0.0)
            ev = prob.evaluate(z_new)
            if ev is not None and ev[0] >= ref + 1e-4 * (grad @ (z_new - z)):
                break
            step *= 0.5
            if step < 1e-30:
                ev = None
                break
        if ev is None:
            break
        g_new, grad_new, X_new, U_new = ev
        s_vec = z_new - z
        sy = s_vec @ (grad - grad_new)
        alpha = (s_vec @ s_vec) / sy if sy > 0 else 1e3 * alpha
        alpha = min(max(alpha, 1e-12), 1e12)
        z, g, grad, X, U = z_new, g_new, grad_new, X_new, U_new
        history.append(g)

    if best[0] > opts.gap_tol * 1e-3 and can_polish:
        cand = _polished_candidate(prob, best[3])
        if cand is not None and cand[0] < best[0]:
            best = cand
    return best, it


def _fixed_point(prob, opts):
    """Iterates v <- diagpart((H_v^T A^T A H_v)^{1/2}) with H_v = D^T diag(v)^{1/2}.

    The dual maximizer is a fixed point of this map.  With single
    participation the corners are the standard basis, U = diag(v) and each
    step costs one symmetric eigendecomposition.
    """
    T = prob.T
    single = prob.schema.k == 1
    z = prob.initial_point()
    best = None
    best_it = 0
    it = 0
    for it in range(opts.max_iter + 1):
        v = z[:prob.nv]
        H = prob.D.T * np.sqrt(v)
        K = H.T @ T @ H
        lam, Q = np.linalg.eigh(0.5 * (K + K.T))
        root = np.sqrt(np.clip(lam, 0.0, None))
        if single:
            # D is the identity in pattern order, so U = diag(v) and M = K^{1/2}.
            M = (Q * root) @ Q.T
            sv = np.sqrt(v)
            X = M / sv[:, None] / sv[None, :]
            X = 0.5 * (X + X.T)
            g = 2.0 * np.sum(root) - np.sum(v)
            U = np.diag(v)
        else:
            ev = prob.evaluate(z)
            if ev is None:
                raise RankError("fixed-point iterate gave a singular U")
            g, _, X, U = ev
        primal, Xn = prob.primal(X)
        gap = (primal - g) / primal if np.isfinite(primal) else np.inf
        _check_iterate(opts, g, primal)
        if best is None or gap < best[0]:
            best = (gap, primal, g, z.copy(), X, U, Xn)
            best_it = it
        if gap <= opts.gap_tol or it == opts.max_iter or it - best_it > opts.stall_iter:
            break
        z = np.einsum("ij,j,ij->i", Q, root, Q)
        if np.min(z) <= 0:
            raise RankError("fixed-point iterate has a nonpositive multiplier")
    return best, it


def _projected_grad(z, grad):
    return np.where(z > 0, grad, np.maximum(grad, 0.0))


def _polish(prob, z, max_iter=30, tol=1e-13):
    """Projected Newton refinement of the dual on its active set.

    Gradient ascent stalls once the dual value is resolved only to roundoff;
    the gradient itself stays accurate, so Newton steps on grad = 0 over the
    positive multipliers sharpen the complementary-slackness residuals.
    Returns (g, grad, X, U, z) or None if no improvement was found.
    """
    ev = prob.evaluate(z)
    if ev is None:
        return None
    g, grad, X, U = ev
    pg = np.max(np.abs(_projected_grad(z, grad)))
    start_pg = pg
    for _ in range(max_iter):
        if pg <= tol:
            break
        active = z > 0
        if not active.any():
            break
        try:
            J = prob.jacobian(z, active)
        except np.linalg.LinAlgError:
            break
        delta = np.linalg.lstsq(J, -grad[active], rcond=None)[0]
        step = 1.0
        accepted = False
        while step > 1e-8:
            z_new = z.copy()
            z_new[active] = np.maximum(z[active] + step * delta, 0.0)
            ev = prob.evaluate(z_new)
            if ev is not None:
                pg_new = np.max(np.abs(_projected_grad(z_new, ev[1])))
                if pg_new < pg:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        z, pg = z_new, pg_new
        g, grad, X, U = ev
    if pg >= start_pg:
        return None
    return g, grad, X, U, z


def _polished_candidate(prob, z):
    """Polishes z and returns a `best`-style tuple, or None."""
    polished = _polish(prob, z)
    if polished is None:
        return None
    g_p, _, X_p, U_p, z_p = polished
    primal_p, Xn_p = prob.primal(X_p)
    if not np.isfinite(primal_p):
        return None
    return ((primal_p - g_p) / primal_p, primal_p, g_p, z_p, X_p, U_p, Xn_p)


def kkt_residual(state, active_tol=1e-3):
    """max |u^T X u - 1| over corners whose multiplier is active.

    A corner counts as active when v_u exceeds `active_tol` times the
    largest multiplier.
    """
    D = state.corners
    q = _quad(D, state.X)
    active = state.v > active_tol * np.max(state.v)
    return float(np.max(np.abs(q[active] - 1.0)))


def min_constrained_entry(X, schema, mode):
    """Smallest X[i, j] over the pairs constrained by `mode` (inf if none)."""
    pi, qi = constraint_pairs(schema, mode)
    return float(np.min(X[pi, qi])) if pi.size else np.inf


def _lower_factor(X):
    """Lower-triangular C with C^T C = X (Cholesky of the index-reversed X)."""
    Xf = X[::-1, ::-1]
    L = np.linalg.cholesky(0.5 * (Xf + Xf.T))
    return L.T[::-1, ::-1].copy()


def extract_factorization(X, A, schema, mode=None, sens_method=None):
    """Builds (B, C) from a positive-definite X.

    C is the lower-triangular factor with C^T C = X, so the encoder is
    causal; B = A C^+ is the minimum-norm decoder.

    Args:
      X: symmetric positive-definite (n, n) matrix.
      A: workload with n columns.
      schema: participation schema for the sensitivity.
      mode: solver mode; the nonneg modes use the fast path.
      sens_method: overrides the sensitivity method.

    Raises:
      NotPSDError: X is not positive definite.
    """
    X = matcore.as_matrix(X, "X")
    A = matcore.as_matrix(A, "A")
    try:
        C = _lower_factor(X)
    except np.linalg.LinAlgError as e:
        raise NotPSDError("X is not positive definite") from e
    B = A @ matcore.pinv(C)
    if sens_method is None:
        if mode in ("pairwise_nonneg", "elementwise_nonneg"):
            sens_method = "nonneg"
        elif schema.k <= participation.MAX_BRUTE_K:
            sens_method = "brute"
        else:
            sens_method = "upper"
    sens = participation.sensitivity(C, schema, sens_method).value
    return Factorization(B=B, C=C, sens=sens, schema=schema, sens_method=sens_method)
