"""Participation schemas and the sensitivity of an encoder under them.

A (k, b)-participation schema over n = k * b steps lets an example
contribute at most k times, with consecutive contributions exactly b steps
apart.  Patterns are stored with 0-based step indices; ``pattern_labels``
gives the 1-based view used in reports.

Three ways of computing the sensitivity of an encoder C are provided:

* `sens_brute` enumerates every sign corner (exact, exponential in k),
* `sens_nonneg_fastpath` is exact when C^T C is nonnegative on the pairs
  of steps that can co-occur,
* `sens_upper` is the cheap spectral-norm upper bound.
"""

import dataclasses
import itertools

import numpy as np

from mfdp import matcore
from mfdp.errors import (ContractViolation, InvalidSchemaError,
                         NonnegativityViolated, TooLargeError)

NONNEG_TOL = 1e-12
MAX_BRUTE_K = 20
_BRUTE_CHUNK = 1 << 16

METHODS = ("brute", "nonneg", "upper")


@dataclasses.dataclass(frozen=True)
class ParticipationSchema:
    """A (k, b)-participation schema.

    Attributes:
      n: number of steps.
      k: maximum number of participations.
      b: separation between consecutive participations.
      patterns: tuple of index tuples (0-based), one per pattern.
    """

    n: int
    k: int
    b: int
    patterns: tuple

    def pattern_labels(self):
        """Patterns with 1-based step indices."""
        return [tuple(i + 1 for i in p) for p in self.patterns]

    def pair_mask(self):
        """Boolean (n, n) mask of distinct step pairs that share a pattern."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        for p in self.patterns:
            idx = np.asarray(p)
            mask[np.ix_(idx, idx)] = True
        np.fill_diagonal(mask, False)
        return mask


def make_schema(n, k, b):
    """Builds the (k, b)-participation schema; requires n == k * b."""
    if k < 1 or b < 1:
        raise InvalidSchemaError(f"k and b must be >= 1, got k={k}, b={b}")
    if n != k * b:
        raise InvalidSchemaError(f"n must equal k*b ({k}*{b}={k * b}), got n={n}")
    patterns = tuple(tuple(range(i, n, b)) for i in range(b))
    return ParticipationSchema(n=n, k=k, b=b, patterns=patterns)


def single_participation(n):
    return make_schema(n, 1, n)


def every_step(n):
    return make_schema(n, n, 1)


@dataclasses.dataclass(frozen=True)
class CornerSet:
    """Sign vectors whose convex hull is the set of neighbouring-stream deltas.

    Only one of each pair {u, -u} is kept: the first nonzero entry of every
    vector is +1.
    """

    vectors: np.ndarray
    restricted_nonneg: bool
    pattern_index: np.ndarray

    def __len__(self):
        return self.vectors.shape[0]


def _sign_block(k):
    """All sign vectors of length k whose first entry is +1, shape (2**(k-1), k)."""
    if k == 1:
        return np.ones((1, 1))
    rest = np.array(list(itertools.product((1.0, -1.0), repeat=k - 1)))
    return np.hstack([np.ones((rest.shape[0], 1)), rest])


def corners(schema, restricted_nonneg=False):
    """Enumerates the corner set of a schema.

    Args:
      schema: a `ParticipationSchema`.
      restricted_nonneg: if True keep only the all-ones vector of each
        pattern (b vectors); otherwise all b * 2**(k-1) sign classes.
    """
    if not restricted_nonneg and schema.k > MAX_BRUTE_K:
        raise TooLargeError(
            f"k={schema.k} exceeds the enumeration guard {MAX_BRUTE_K}")
    signs = np.ones((1, schema.k)) if restricted_nonneg else _sign_block(schema.k)
    vecs, owner = [], []
    for pi, p in enumerate(schema.patterns):
        block = np.zeros((signs.shape[0], schema.n))
        block[:, list(p)] = signs[:, :len(p)]
        vecs.append(block)
        owner.extend([pi] * signs.shape[0])
    return CornerSet(vectors=np.vstack(vecs), restricted_nonneg=restricted_nonneg,
                     pattern_index=np.asarray(owner))


def _check_cols(C, schema):
    C = matcore.as_matrix(C, "C")
    if C.shape[1] != schema.n:
        raise ContractViolation(
            f"C has {C.shape[1]} columns but the schema has n={schema.n}")
    return C


@dataclasses.dataclass(frozen=True)
class SensitivityResult:
    """A sensitivity value with the certificate of where it was attained.

    Attributes:
      value: the sensitivity (or its upper bound for ``method == 'upper'``).
      method: one of ``brute``, ``nonneg``, ``upper``.
      pattern: 0-based step indices of the maximizing pattern.
      corner: maximizing sign vector restricted to `pattern` (None for upper).
    """

    value: float
    method: str
    pattern: tuple
    corner: tuple = None


def sens_brute_detail(C, schema):
    """Exhaustive sensitivity with its maximizing pattern and sign vector."""
    C = _check_cols(C, schema)
    if schema.k > MAX_BRUTE_K:
        raise TooLargeError(
            f"k={schema.k} exceeds {MAX_BRUTE_K}; use sens_upper or the nonneg fast path")
    best, best_p, best_u = -1.0, None, None
    for p in schema.patterns:
        idx = list(p)
        G = C[:, idx].T @ C[:, idx]
        signs = _sign_block(len(idx))
        for start in range(0, signs.shape[0], _BRUTE_CHUNK):
            S = signs[start:start + _BRUTE_CHUNK]
            q = np.sum((S @ G) * S, axis=1)
            j = int(np.argmax(q))
            if q[j] > best:
                best, best_p, best_u = q[j], p, tuple(S[j])
    return SensitivityResult(float(np.sqrt(max(best, 0.0))), "brute", best_p, best_u)


def sens_brute(C, schema):
    """Exact sensitivity: max over sign corners u of ||C u||_2."""
    return sens_brute_detail(C, schema).value


def check_pairwise_nonneg(C, schema, tol=NONNEG_TOL):
    """True iff (C^T C)[i, j] >= -tol for every co-occurring pair i != j."""
    C = _check_cols(C, schema)
    X = C.T @ C
    mask = schema.pair_mask()
    if not mask.any():
        return True
    return bool(np.min(X[mask]) >= -tol)


def sens_nonneg_fastpath_detail(C, schema, tol=NONNEG_TOL):
    """Fast exact sensitivity when the touched Gram entries are nonnegative."""
    C = _check_cols(C, schema)
    X = C.T @ C
    mask = schema.pair_mask()
    if mask.any() and np.min(X[mask]) < -tol:
        raise NonnegativityViolated(
            f"min co-occurring Gram entry {np.min(X[mask]):.3e} < -{tol:g}; "
            "use sens_brute")
    X = np.where(mask & (X < 0), 0.0, X)
    best, best_p = -1.0, None
    for p in schema.patterns:
        idx = np.asarray(p)
        q = X[np.ix_(idx, idx)].sum()
        if q > best:
            best, best_p = q, p
    return SensitivityResult(float(np.sqrt(max(best, 0.0))), "nonneg", best_p,
                             tuple([1.0] * len(best_p)))


def sens_nonneg_fastpath(C, schema, tol=NONNEG_TOL):
    """max over patterns of sqrt(1^T X[pi, pi] 1) with X = C^T C."""
    return sens_nonneg_fastpath_detail(C, schema, tol).value


def sens_upper_detail(C, schema):
    C = _check_cols(C, schema)
    best, best_p = -1.0, None
    for p in schema.patterns:
        lam = matcore.spectral_norm(C[:, list(p)])
        if lam > best:
            best, best_p = lam, p
    return SensitivityResult(float(best * np.sqrt(schema.k)), "upper", best_p)


def sens_upper(C, schema):
    """Spectral bound: sqrt(k) * max over patterns of ||C[:, pi]||_2."""
    return sens_upper_detail(C, schema).value


def sensitivity(C, schema, method="brute"):
    """Dispatches to one of the three sensitivity routines.

    Returns:
      A `SensitivityResult`.
    """
    if method == "brute":
        return sens_brute_detail(C, schema)
    if method == "nonneg":
        return sens_nonneg_fastpath_detail(C, schema)
    if method == "upper":
        return sens_upper_detail(C, schema)
    raise ContractViolation(f"unknown sensitivity method {method!r}")


def auto_sensitivity(C, schema):
    """Picks the cheapest exact method available, else the upper bound."""
    if check_pairwise_nonneg(C, schema):
        return sens_nonneg_fastpath_detail(C, schema)
    if schema.k <= MAX_BRUTE_K:
        return sens_brute_detail(C, schema)
    return sens_upper_detail(C, schema)


def vector_sens_check(C, G):
    """Frobenius norm ||C G||_F for a contribution matrix G with rows of norm <= 1.

    Used to probe whether vector-valued contributions can exceed the scalar
    sensitivity.
    """
    C = matcore.as_matrix(C, "C")
    G = matcore.as_matrix(G, "G")
    if G.shape[0] != C.shape[1]:
        raise ContractViolation(f"G has {G.shape[0]} rows, C has {C.shape[1]} columns")
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms > 1.0 + 1e-12):
        raise ContractViolation(f"row norm {norms.max():.6g} of G exceeds 1")
    return float(np.linalg.norm(C @ G))
