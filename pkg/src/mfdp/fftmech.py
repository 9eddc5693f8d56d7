"""Prefix sums through the circulant embedding and the DFT.

The n x n prefix-sum matrix is the leading block of the 2n x 2n circulant
generated by v = (1, ..., 1, 0, ..., 0).  That circulant is F* diag(v_DFT) F
with F the unitary DFT, so it factors as (F* Sigma^{1/2} F)(F* Sigma^{1/2} F).
Taking the principal square root keeps M = F* Sigma^{1/2} F real, which gives
a real encoder C_F = M[:, :n] and decoder B_F = M[:n, :].

Complex noise conventions: the "standard complex normal" used by
`fft_prefix_release` has independent real and imaginary parts, each of
variance 1.  That is the scaling under which the release is rho-zCDP and
under which its real part has the same law as the real mechanism
``B_F (C_F x + c z)`` with z ~ N(0, I).
"""

import dataclasses
import math

import numpy as np
import scipy.linalg

from mfdp import matcore, participation
from mfdp.errors import ContractViolation, InternalConsistencyError

IMAG_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class CirculantSpec:
    """The circulant embedding of the n-step prefix-sum matrix.

    Attributes:
      n: number of steps.
      v: length-2n generating vector (n ones then n zeros).
      sigma_eigs: length-2n DFT of v (the circulant's eigenvalues).
    """

    n: int
    v: np.ndarray
    sigma_eigs: np.ndarray

    @classmethod
    def build(cls, n):
        return cls(n=n, v=np.concatenate([np.ones(n), np.zeros(n)]), sigma_eigs=dft_eigs(n))

    def circulant(self):
        """The dense 2n x 2n circulant with first column v."""
        return scipy.linalg.circulant(self.v)


def _check_n(n):
    if int(n) != n or n < 1:
        raise ContractViolation(f"n must be a positive integer, got {n}")
    return int(n)


def dft_eigs(n):
    """DFT of v = (1_n, 0_n) in closed form.

    Index 0 is n, other even indices are 0, and odd index k is
    2 / (1 - exp(-i pi k / n)), whose magnitude is 1 / sin(pi k / (2n)).
    """
    n = _check_n(n)
    k = np.arange(2 * n)
    out = np.zeros(2 * n, dtype=np.complex128)
    out[0] = n
    odd = k % 2 == 1
    out[odd] = 2.0 / (1.0 - np.exp(-1j * np.pi * k[odd] / n))
    return out


def dft_l1_norm(n):
    """||v_DFT||_1 = n + sum_{a<n} 1 / sin(pi (2a + 1) / (2n))."""
    n = _check_n(n)
    a = np.arange(n)
    return float(n + np.sum(1.0 / np.sin(np.pi * (2 * a + 1) / (2 * n))))


def noise_scale(n, rho, kappa=1.0):
    """Per-part standard deviation sqrt(kappa^2 ||v_DFT||_1 / (4 n rho))."""
    if not rho > 0:
        raise ContractViolation(f"rho must be positive, got {rho}")
    if not kappa > 0:
        raise ContractViolation(f"kappa must be positive, got {kappa}")
    if math.isinf(rho):
        return 0.0
    return math.sqrt(kappa ** 2 * dft_l1_norm(n) / (4.0 * n * rho))


def _sqrt_eigs(n):
    return np.sqrt(dft_eigs(n))  # principal branch


def _complex_noise(n, rng):
    """F* Sigma^{1/2} w for complex w with unit-variance real and imaginary parts."""
    w = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    # F* y = sqrt(2n) * ifft(y) for the unitary DFT.
    return np.sqrt(2 * n) * np.fft.ifft(_sqrt_eigs(n) * w)


def fft_prefix_release(x, rho, kappa=1.0, seed=0):
    """Private prefix sums of a scalar stream via the FFT mechanism.

    Args:
      x: length-n stream with |x_i| <= kappa.
      rho: zCDP budget; ``float('inf')`` releases exact prefix sums.
      kappa: bound on each |x_i|.
      seed: integer seed of the noise generator.

    Returns:
      Length-n array of noisy prefix sums.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    n = _check_n(x.size)
    if np.any(np.abs(x) > kappa * (1 + 1e-12)):
        raise ContractViolation(f"entries of x exceed kappa={kappa}")
    scale = noise_scale(n, rho, kappa)
    s = np.cumsum(x)
    if scale == 0.0:
        return s
    z = _complex_noise(n, np.random.default_rng(seed))
    return s + scale * z.real[:n]


def noise_samples(n, rho, kappa=1.0, trials=1, seed=0, kind="real_part"):
    """Noise draws of the FFT mechanisms, one row per trial.

    Trial t uses its own generator keyed by (seed, t).

    Args:
      kind: ``real_part`` (real part of the complex release),
        ``complex`` (complex noise, first n coordinates) or ``real_mech``
        (the real translation B_F z at the same scale).
    """
    n = _check_n(n)
    scale = noise_scale(n, rho, kappa)
    dtype = np.complex128 if kind == "complex" else np.float64
    out = np.empty((trials, n), dtype=dtype)
    if kind == "real_mech":
        B = real_fft_decoder(n)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        if kind == "real_mech":
            out[t] = scale * (B @ rng.standard_normal(2 * n))
        elif kind in ("real_part", "complex"):
            z = scale * _complex_noise(n, rng)[:n]
            out[t] = z.real if kind == "real_part" else z
        else:
            raise ContractViolation(f"unknown noise kind {kind!r}")
    return out


def mse_monte_carlo(n, rho, kappa=1.0, trials=10_000, seed=0, kind="real_part"):
    """Monte-Carlo per-step MSE of the release noise.

    Returns:
      (mean, standard error) of the per-trial mean squared error.
    """
    z = noise_samples(n, rho, kappa, trials, seed, kind)
    per_trial = np.mean(np.abs(z) ** 2, axis=1)
    return float(per_trial.mean()), float(per_trial.std(ddof=1) / math.sqrt(trials))


def mse_analytic(n, rho, kappa=1.0):
    """Closed-form MSE bound (kappa^2 / (2 rho n^2)) * ||v_DFT||_1^2."""
    n = _check_n(n)
    if not rho > 0:
        raise ContractViolation(f"rho must be positive, got {rho}")
    return kappa ** 2 * dft_l1_norm(n) ** 2 / (2.0 * rho * n ** 2)


def mse_real_part_expected(n, rho, kappa=1.0):
    """Exact expected per-step MSE of the real part of the release.

    Each coordinate of Re(F* Sigma^{1/2} w) has variance ||v_DFT||_1 / (2n),
    so the MSE is kappa^2 ||v_DFT||_1^2 / (8 n^2 rho).
    """
    return mse_analytic(n, rho, kappa) / 4.0


def mse_lower_bound(n, rho, kappa=1.0):
    """Lower bound on the per-step MSE of any matrix-factorization mechanism.

    (kappa^2 / (2 rho pi^2)) (2 + ln((2n+1)/3) + ln(2n+1) / (2n))^2.
    """
    n = _check_n(n)
    if not rho > 0:
        raise ContractViolation(f"rho must be positive, got {rho}")
    t = 2.0 + math.log((2 * n + 1) / 3.0) + math.log(2 * n + 1) / (2 * n)
    return kappa ** 2 * t ** 2 / (2.0 * rho * math.pi ** 2)


def mse_table(ns, rho=1.0, kappa=1.0):
    """Rows (n, analytic_mse, lower_bound, ratio) for each n in `ns`."""
    rows = []
    for n in ns:
        a = mse_analytic(n, rho, kappa)
        lb = mse_lower_bound(n, rho, kappa)
        rows.append((int(n), a, lb, a / lb))
    return rows


def circulant_root(n):
    """Real 2n x 2n matrix M = F* Sigma^{1/2} F (principal square root).

    Raises:
      InternalConsistencyError: if the imaginary residual exceeds 1e-10.
    """
    n = _check_n(n)
    col = np.fft.ifft(_sqrt_eigs(n))
    if np.max(np.abs(col.imag)) > IMAG_TOL:
        raise InternalConsistencyError(
            f"circulant square root has imaginary part {np.max(np.abs(col.imag)):.3e}")
    return scipy.linalg.circulant(col.real)


def real_fft_encoder(n):
    """Real 2n x n encoder C_F = M E, with E embedding R^n into the first n slots."""
    return circulant_root(n)[:, :n].copy()


def real_fft_decoder(n):
    """Real n x 2n decoder B_F = P M, with P keeping the first n outputs."""
    return circulant_root(n)[:n, :].copy()


def gram_first_column(n):
    """First column of the symmetric Toeplitz matrix C_F^T C_F.

    C_F^T C_F is the leading n x n block of M^T M = F* |Sigma| F.
    """
    n = _check_n(n)
    return np.fft.ifft(np.abs(dft_eigs(n))).real[:n]


def fft_optimal_decode(y, n):
    """Applies the optimal decoder S C_F^+ to a length-2n vector.

    Uses C_F^+ = (C_F^T C_F)^{-1} C_F^T: the product with C_F^T is an FFT
    (M^T has eigenvalues conj(Sigma^{1/2})), the Gram solve is a symmetric
    Toeplitz solve, and S is a cumulative sum.
    """
    n = _check_n(n)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != 2 * n:
        raise ContractViolation(f"input has length {y.size}, expected {2 * n}")
    if not np.any(y):
        return np.zeros(n)
    rhs = np.fft.ifft(np.conj(_sqrt_eigs(n)) * np.fft.fft(y)).real[:n]
    t = gram_first_column(n)
    x = matcore.toeplitz_solve(t, t, rhs)
    return np.cumsum(x)


def fft_optimal_decoder_dense(n):
    """Dense optimal decoder S C_F^+ (n x 2n)."""
    n = _check_n(n)
    return np.tril(np.ones((n, n))) @ matcore.left_pinv(real_fft_encoder(n))


def fft_multi_epoch_sens(n, schema, method="auto"):
    """Sensitivity of C_F under a participation schema.

    Args:
      method: ``brute``, ``upper``, or ``auto`` (brute when the corner set
        has at most 2**16 elements, else the spectral bound).

    Returns:
      A `participation.SensitivityResult`.
    """
    n = _check_n(n)
    if schema.n != n:
        raise ContractViolation(f"schema is over {schema.n} steps, expected {n}")
    if method == "auto":
        small = schema.k <= participation.MAX_BRUTE_K and schema.b * 2 ** (schema.k - 1) <= 1 << 16
        method = "brute" if small else "upper"
    return participation.sensitivity(real_fft_encoder(n), schema, method)
