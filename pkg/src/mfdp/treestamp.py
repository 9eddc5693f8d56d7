"""Binary-tree mechanisms and encoder stamping.

Tree encoders have one row per node of a complete binary tree over
L = 2**ceil(log2 n) leaves.  Rows are ordered leaves first (left to right),
then each higher level bottom-up, so node (size, start) covers leaves
``start .. start + size - 1``.

Stamping repeats an encoder along a block diagonal, which lets an n-step
mechanism cover s * n steps.
"""

import dataclasses
import logging
import math

import numpy as np

from mfdp import fftmech, matcore, participation, workloads
from mfdp.errors import ContractViolation, RankError, UnsupportedWorkloadError

log = logging.getLogger(__name__)

FAMILIES = ("honaker_online", "honaker_optimal", "fft", "fft_optimal")


@dataclasses.dataclass(frozen=True)
class TreeEncoderSpec:
    """A complete binary-tree encoder.

    Attributes:
      n: requested number of steps.
      leaves: 2**ceil(log2 n).
      node_count: 2 * leaves - 1.
      encoder: (node_count, leaves) 0/1 matrix.
    """

    n: int
    leaves: int
    node_count: int
    encoder: np.ndarray

    def node_index(self, size, start):
        """Row of the node of the given subtree size whose first leaf is `start`."""
        offset = 0
        level_size = 1
        while level_size < size:
            offset += self.leaves // level_size
            level_size *= 2
        return offset + start // size


@dataclasses.dataclass(frozen=True)
class StampSpec:
    """Parameters of a stamped mechanism.

    Attributes:
      base_n: steps per stamp.
      s: number of stamps.
      decoder_kind: ``restart`` or ``optimal``.
    """

    base_n: int
    s: int
    decoder_kind: str = "optimal"

    def __post_init__(self):
        if self.s < 1 or self.base_n < 1:
            raise ContractViolation("base_n and s must be >= 1")
        if self.decoder_kind not in ("restart", "optimal"):
            raise ContractViolation(f"unknown decoder kind {self.decoder_kind!r}")

    @property
    def total_steps(self):
        return self.s * self.base_n


def _leaves(n):
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def tree_encoder(n):
    """Builds the tree encoder over 2**ceil(log2 n) leaves.

    Returns:
      (spec, E) where E is the (leaves, n) embedding selecting the first n
      leaves, so the encoder acting on an n-step stream is spec.encoder @ E.
    """
    L = _leaves(n)
    rows = []
    size = 1
    while size <= L:
        for start in range(0, L, size):
            r = np.zeros(L)
            r[start:start + size] = 1.0
            rows.append(r)
        size *= 2
    enc = np.array(rows)
    spec = TreeEncoderSpec(n=n, leaves=L, node_count=enc.shape[0], encoder=enc)
    return spec, np.eye(L)[:, :n]


def _subtree_estimate(spec, size, start):
    """Weights estimating the sum of a subtree from all nodes inside it.

    Level j below the subtree top (nodes of size size / 2**j) gets weight
    c_j proportional to 2**-j, normalized to sum to one; every node at that
    level is summed, so each level is an unbiased estimate.
    """
    row = np.zeros(spec.node_count)
    depth = size.bit_length()
    c = 2.0 ** -np.arange(depth)
    c /= c.sum()
    for j in range(depth):
        sz = size >> j
        first = spec.node_index(sz, start)
        row[first:first + size // sz] += c[j]
    return row


def _full_online_decoder(spec):
    """(leaves, node_count) online decoder over all leaves."""
    L = spec.leaves
    B = np.zeros((L, spec.node_count))
    for p in range(1, L + 1):
        start = 0
        for h in reversed(range(L.bit_length())):
            sz = 1 << h
            if p & sz:
                B[p - 1] += _subtree_estimate(spec, sz, start)
                start += sz
    return B


def online_honaker_decoder(n, completed=True):
    """Online variance-weighted tree decoder for n-step prefix sums.

    Step p is released as the sum of the subtree estimates given by the
    binary expansion of p.  With `completed` and n not a power of two, the
    last step instead reuses the release of step 2**ceil(log2 n), whose
    virtual steps carry zero input, and decoder columns of nodes that cover
    only virtual steps are zeroed.

    Returns:
      (n, node_count) decoder D with D @ C_tree @ E equal to the prefix matrix.
    """
    spec, E = tree_encoder(n)
    full = _full_online_decoder(spec)
    B = full[:n].copy()
    if completed and n != spec.leaves:
        B[-1] = full[spec.leaves - 1]
        virtual = ~np.any(spec.encoder @ E != 0, axis=1)
        B[:, virtual] = 0.0
    return B


def optimal_tree_decoder(n):
    """Minimum-norm decoder S (C_tree E)^+ for the tree encoder."""
    spec, E = tree_encoder(n)
    return workloads.prefix_workload(n) @ matcore.left_pinv(spec.encoder @ E)


def tree_factorization(n, decoder="online"):
    """(B, C) for the n-step tree mechanism with the requested decoder."""
    spec, E = tree_encoder(n)
    C = spec.encoder @ E
    if decoder == "online":
        B = online_honaker_decoder(n, completed=True)
    elif decoder == "online_uncompleted":
        B = online_honaker_decoder(n, completed=False)
    elif decoder == "optimal":
        B = optimal_tree_decoder(n)
    else:
        raise ContractViolation(f"unknown tree decoder {decoder!r}")
    return B, C


def stamp_encoder(C, s):
    """Block-diagonal I_s (x) C."""
    if s < 1:
        raise ContractViolation(f"s must be >= 1, got {s}")
    return np.kron(np.eye(s), matcore.as_matrix(C, "C"))


def _is_prefix_decoder(B, C):
    n = B.shape[0]
    return C.shape[1] == n and np.allclose(B @ C, np.tril(np.ones((n, n))), atol=1e-8)


def restart_decoder(base_B, s, base_C=None):
    """Prefix-sum decoder for an s-times stamped encoder.

    Diagonal blocks repeat `base_B`; each block below the diagonal repeats
    the final row of `base_B`, which carries the completed sum of an earlier
    stamp into every later step.

    Args:
      base_B: (n, m) decoder of the base mechanism.
      s: number of stamps.
      base_C: base encoder; when given, base_B @ base_C must be the prefix
        matrix.

    Raises:
      UnsupportedWorkloadError: base_B @ base_C is not a prefix-sum matrix.
    """
    base_B = matcore.as_matrix(base_B, "base_B")
    if s < 1:
        raise ContractViolation(f"s must be >= 1, got {s}")
    if base_C is not None and not _is_prefix_decoder(base_B, matcore.as_matrix(base_C)):
        raise UnsupportedWorkloadError("restart decoding only applies to prefix sums")
    n, m = base_B.shape
    out = np.zeros((n * s, m * s))
    for r in range(s):
        out[r * n:(r + 1) * n, r * m:(r + 1) * m] = base_B
        for c in range(r):
            out[r * n:(r + 1) * n, c * m:(c + 1) * m] = base_B[-1]
    return out


def optimal_stamp_decoder(A, stamped_C, s=None):
    """B = A (stamped_C)^+ for any workload A.

    Args:
      A: workload with as many columns as stamped_C.
      stamped_C: encoder, typically ``stamp_encoder(C, s)``.
      s: if given, stamped_C is taken to be I_s (x) C and only the block is
        pseudo-inverted (the pseudoinverse of a block-diagonal matrix is
        block-diagonal).

    Raises:
      RankError: stamped_C lacks full column rank.
    """
    A = matcore.as_matrix(A, "A")
    C = matcore.as_matrix(stamped_C, "stamped_C")
    if A.shape[1] != C.shape[1]:
        raise ContractViolation(f"A has {A.shape[1]} columns, C has {C.shape[1]}")
    if s is not None and s > 1:
        m, n = C.shape
        if m % s or n % s:
            raise ContractViolation(f"s={s} does not divide the encoder shape {C.shape}")
        block = C[:m // s, :n // s]
        Cp = np.kron(np.eye(s), matcore.left_pinv(block))
        if np.max(np.abs(Cp @ C - np.eye(n))) > 1e-8:
            raise RankError("stamped encoder is not of full column rank, or not I_s (x) C")
    else:
        Cp = matcore.left_pinv(C)
        if np.max(np.abs(Cp @ C - np.eye(C.shape[1]))) > 1e-8:
            raise RankError("stamped encoder is not of full column rank")
    return A @ Cp


def base_mechanism(family, n, with_decoder=True):
    """(B, C, sens_method) of an unstamped family member on n steps.

    With ``with_decoder=False`` B is None (callers that build their own
    stamped decoder skip the dense pseudoinverse).
    """
    if family in ("honaker_online", "honaker_optimal"):
        spec, E = tree_encoder(n)
        C = spec.encoder @ E
        B = None
        if with_decoder:
            B = (online_honaker_decoder(n) if family == "honaker_online"
                 else optimal_tree_decoder(n))
        return B, C, "nonneg"
    if family in ("fft", "fft_optimal"):
        C = fftmech.real_fft_encoder(n)
        B = None
        if with_decoder:
            B = (fftmech.real_fft_decoder(n) if family == "fft"
                 else fftmech.fft_optimal_decoder_dense(n))
        return B, C, "upper"
    raise ContractViolation(f"unknown family {family!r}; expected one of {FAMILIES}")


@dataclasses.dataclass(frozen=True)
class SweepRow:
    """One stamped mechanism in a sweep."""

    family: str
    s: int
    base_n: int
    decoder_kind: str
    sens: float
    sens_method: str
    loss: float


def stamped_mechanism(family, n_total, s, schema=None, base=None):
    """Builds the stamped (B, C) for one family and stamp count.

    Restarted families decode with `restart_decoder`; optimal families with
    the pseudoinverse of the stamped encoder.

    Args:
      base: optional precomputed (B, C, sens_method) for the base block.

    Returns:
      (B, C, decoder_kind, sens_method).
    """
    if n_total % s:
        raise ContractViolation(f"s={s} does not divide n={n_total}")
    n = n_total // s
    if base is None:
        base = base_mechanism(family, n, with_decoder=family in ("honaker_online", "fft"))
    Bb, Cb, sens_method = base
    C = stamp_encoder(Cb, s)
    if family in ("honaker_online", "fft"):
        B = restart_decoder(Bb, s)
        kind = "restart"
    else:
        B = optimal_stamp_decoder(workloads.prefix_workload(n_total), C, s)
        kind = "optimal"
    return B, C, kind, sens_method


def stamped_sensitivity(C, schema, sens_method):
    """Sensitivity of a stamped encoder under the full schema.

    The nonneg fast path falls back to brute force (or the spectral bound
    when k is too large) if the Gram matrix has negative co-occurring
    entries.
    """
    if sens_method == "nonneg" and not participation.check_pairwise_nonneg(C, schema):
        sens_method = "brute" if schema.k <= participation.MAX_BRUTE_K else "upper"
    return participation.sensitivity(C, schema, sens_method)


def sweep_stamps(family, n_total, schema, stamp_candidates=(1,)):
    """Loss of a mechanism family for each candidate stamp count.

    Sensitivity is always computed on the full stamped encoder under
    `schema`.  Candidates that do not divide n_total are skipped with a
    warning.

    Returns:
      (rows, best) where rows is a list of `SweepRow` and best the row of
      minimum loss.
    """
    if schema.n != n_total:
        raise ContractViolation(f"schema is over {schema.n} steps, expected {n_total}")
    candidates = list(stamp_candidates) or [1]
    rows = []
    for s in candidates:
        if s < 1 or n_total % s:
            log.warning("skipping stamp count %s: does not divide n=%d", s, n_total)
            continue
        B, C, kind, method = stamped_mechanism(family, n_total, s)
        sr = stamped_sensitivity(C, schema, method)
        rows.append(SweepRow(family=family, s=s, base_n=n_total // s, decoder_kind=kind,
                             sens=sr.value, sens_method=sr.method,
                             loss=float(sr.value ** 2 * np.sum(B ** 2))))
    if not rows:
        raise ContractViolation("no stamp candidate divides n_total")
    best = min(rows, key=lambda r: r.loss)
    return rows, best


def final_row_norm(n, completed=True):
    """Squared norm of the last decoder row (the variance of the final release)."""
    B = online_honaker_decoder(n, completed)
    return float(np.sum(B[-1] ** 2))


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def tree_depth(n):
    return int(math.log2(_leaves(n)))
