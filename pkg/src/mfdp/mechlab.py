"""Evaluating, normalizing and sampling from factorization mechanisms.

Also owns the interchange formats:

* MAT64: an ASCII header line ``MFDP1 <rows> <cols>`` followed by
  rows * cols little-endian float64 values in row-major order.
* Loss tables: CSV with columns `LOSS_COLUMNS`.
"""

import csv
import dataclasses
import io
import math
import os

import numpy as np

from mfdp import matcore, participation
from mfdp.errors import ContractViolation, DegenerateError

MAT64_MAGIC = b"MFDP1"
LOSS_COLUMNS = ("mechanism", "n", "k", "b", "stamps", "decoder", "sens", "sens_method",
                "loss", "root_loss")


def loss(B, C, schema, sens_method="brute"):
    """Total squared error sens(C)^2 * ||B||_F^2 at unit noise."""
    B = matcore.as_matrix(B, "B")
    C = matcore.as_matrix(C, "C")
    if B.shape[1] != C.shape[0]:
        raise ContractViolation(f"B has {B.shape[1]} columns but C has {C.shape[0]} rows")
    sens = participation.sensitivity(C, schema, sens_method).value
    return float(sens ** 2 * np.sum(B ** 2))


def variance_profile(B, sens):
    """Per-step noise variance sens^2 * ||B[i, :]||^2."""
    B = matcore.as_matrix(B, "B")
    return sens ** 2 * np.sum(B ** 2, axis=1)


def normalize(f):
    """Rescales a factorization to unit sensitivity: (B * sens, C / sens).

    Raises:
      DegenerateError: the sensitivity is zero.
    """
    if f.sens <= 0:
        raise DegenerateError("cannot normalize a factorization with zero sensitivity")
    return dataclasses.replace(f, B=f.B * f.sens, C=f.C / f.sens, sens=1.0)


def _column_generator(seed, col):
    """Counter-based generator keyed by (seed, column); the row is the counter."""
    return np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1), col]))


def sample_noise(B, d, sigma, seed=0):
    """Correlated noise B Z with Z having i.i.d. N(0, sigma^2) entries.

    Column j of Z comes from its own generator keyed by (seed, j), so any
    subset of columns can be generated independently and in any order.

    Args:
      B: (n, m) decoder.
      d: number of independent noise columns (model dimension).
      sigma: noise standard deviation.
      seed: nonnegative integer seed.

    Returns:
      (n, d) noise matrix.
    """
    B = matcore.as_matrix(B, "B")
    if sigma < 0:
        raise ContractViolation(f"sigma must be >= 0, got {sigma}")
    if d < 1:
        raise ContractViolation(f"d must be >= 1, got {d}")
    if sigma == 0:
        return np.zeros((B.shape[0], d))
    Z = np.empty((B.shape[1], d))
    for j in range(d):
        Z[:, j] = _column_generator(seed, j).standard_normal(B.shape[1])
    return sigma * (B @ Z)


def zcdp(sens, sigma):
    """rho = sens^2 / (2 sigma^2) for the Gaussian mechanism."""
    if not sigma > 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    return sens ** 2 / (2.0 * sigma ** 2)


def sigma_for_zcdp(sens, rho):
    """Noise scale giving rho-zCDP at the given sensitivity."""
    if not rho > 0:
        raise ContractViolation(f"rho must be positive, got {rho}")
    return sens / math.sqrt(2.0 * rho)


def zcdp_to_epsilon(rho, delta):
    """Standard conversion eps = rho + 2 sqrt(rho ln(1/delta))."""
    if not rho > 0:
        raise ContractViolation(f"rho must be positive, got {rho}")
    if not 0 < delta < 1:
        raise ContractViolation(f"delta must be in (0, 1), got {delta}")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclasses.dataclass(frozen=True)
class MechanismReport:
    """Summary of a mechanism's utility and privacy.

    Attributes:
      mechanism_name: label.
      n, k, b: steps and participation parameters.
      loss: total squared error at unit noise.
      root_loss: sqrt(loss).
      sens: sensitivity of the encoder.
      sens_method: how `sens` was computed.
      per_iterate_variance: per-step variance, summing to `loss`.
      zcdp_rho: zCDP level at the report's noise scale.
      epsilon_at_delta: (epsilon, delta)-DP epsilon from `zcdp_rho`.
    """

    mechanism_name: str
    n: int
    k: int
    b: int
    loss: float
    root_loss: float
    sens: float
    sens_method: str
    per_iterate_variance: np.ndarray
    zcdp_rho: float
    epsilon_at_delta: float


def mechanism_report(name, B, C, schema, sens_method="brute", sigma=1.0, delta=1e-6):
    """Builds a `MechanismReport` for (B, C) with noise N(0, sigma^2) on C x."""
    sr = participation.sensitivity(C, schema, sens_method)
    prof = variance_profile(B, sr.value)
    total = float(np.sum(prof))
    rho = zcdp(sr.value, sigma)
    return MechanismReport(
        mechanism_name=name, n=schema.n, k=schema.k, b=schema.b, loss=total,
        root_loss=math.sqrt(total), sens=sr.value, sens_method=sr.method,
        per_iterate_variance=prof, zcdp_rho=rho,
        epsilon_at_delta=zcdp_to_epsilon(rho, delta))


def write_mat64(path_or_file, M):
    """Writes M in MAT64 format."""
    M = matcore.as_matrix(M)
    header = b"%s %d %d\n" % (MAT64_MAGIC, M.shape[0], M.shape[1])
    payload = np.ascontiguousarray(M, dtype="<f8").tobytes()
    if isinstance(path_or_file, (str, os.PathLike)):
        with open(path_or_file, "wb") as f:
            f.write(header + payload)
    else:
        path_or_file.write(header + payload)


def read_mat64(path_or_file):
    """Reads a MAT64 file.

    Raises:
      ContractViolation: malformed header or truncated payload.
    """
    if isinstance(path_or_file, (str, os.PathLike)):
        with open(path_or_file, "rb") as f:
            data = f.read()
    else:
        data = path_or_file.read()
    nl = data.find(b"\n")
    parts = data[:nl].split() if nl >= 0 else []
    if len(parts) != 3 or parts[0] != MAT64_MAGIC:
        raise ContractViolation("not a MAT64 file (bad header)")
    try:
        rows, cols = int(parts[1]), int(parts[2])
    except ValueError as e:
        raise ContractViolation("not a MAT64 file (bad dimensions)") from e
    body = data[nl + 1:]
    if rows < 0 or cols < 0 or len(body) != 8 * rows * cols:
        raise ContractViolation(
            f"MAT64 payload has {len(body)} bytes, expected {8 * rows * cols}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def matrix_to_csv(M):
    """CSV text of M with round-trip float formatting."""
    M = matcore.as_matrix(M)
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in M)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def write_loss_table(rows, path_or_file=None):
    """Writes loss-table rows (dicts keyed by `LOSS_COLUMNS`) as CSV.

    Returns:
      The CSV text.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOSS_COLUMNS)
    for r in rows:
        missing = [c for c in LOSS_COLUMNS if c not in r]
        if missing:
            raise ContractViolation(f"loss row missing columns {missing}")
        w.writerow([_fmt(r[c]) for c in LOSS_COLUMNS])
    text = buf.getvalue()
    if isinstance(path_or_file, (str, os.PathLike)):
        with open(path_or_file, "w", newline="") as f:
            f.write(text)
    elif path_or_file is not None:
        path_or_file.write(text)
    return text


def loss_row(mechanism, schema, stamps, decoder, sens, sens_method, loss_value):
    """A loss-table row dict."""
    return {"mechanism": mechanism, "n": schema.n, "k": schema.k, "b": schema.b,
            "stamps": stamps, "decoder": decoder, "sens": float(sens),
            "sens_method": sens_method, "loss": float(loss_value),
            "root_loss": math.sqrt(loss_value)}
