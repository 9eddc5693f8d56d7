"""Lower-triangular query matrices: prefix sums and SGD with momentum.

All constructors return dense ``(n, n)`` float64 arrays.  Rows index the
released quantity at step i, columns the per-step input at step j.
"""

import dataclasses
import math

import numpy as np

from mfdp.errors import ContractViolation

KINDS = ("prefix", "momentum", "momentum_cooldown")


@dataclasses.dataclass(frozen=True)
class WorkloadSpec:
    """Parameters of a workload matrix.

    Attributes:
      n: number of steps.
      kind: one of ``prefix``, ``momentum``, ``momentum_cooldown``.
      beta: momentum coefficient in [0, 1).
      cooldown_fraction: fraction of the final steps over which the learning
        rate decays linearly.
      cooldown_floor: learning-rate multiplier reached at the last step.
    """

    n: int
    kind: str = "prefix"
    beta: float = 0.0
    cooldown_fraction: float = 0.25
    cooldown_floor: float = 0.05

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation(f"n must be >= 1, got {self.n}")
        if self.kind not in KINDS:
            raise ContractViolation(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.beta < 1.0:
            raise ContractViolation(f"beta must be in [0, 1), got {self.beta}")
        if not 0.0 < self.cooldown_floor <= 1.0:
            raise ContractViolation(
                f"cooldown_floor must be in (0, 1], got {self.cooldown_floor}")
        if not 0.0 <= self.cooldown_fraction < 1.0:
            raise ContractViolation(
                f"cooldown_fraction must be in [0, 1), got {self.cooldown_fraction}")

    def build(self):
        """Materializes the workload matrix."""
        if self.kind == "prefix":
            return prefix_workload(self.n)
        if self.kind == "momentum":
            return momentum_workload(self.n, self.beta)
        return momentum_cooldown_workload(self)


def prefix_workload(n):
    """All-ones lower triangle."""
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    return np.tril(np.ones((n, n)))


def momentum_workload(n, beta):
    """Cumulative heavy-ball momentum.

    With ``m_t = beta * m_{t-1} + g_t`` and output ``sum_{s<=t} m_s``, the
    entry for ``j <= i`` is ``(1 - beta**(i-j+1)) / (1 - beta)``.
    """
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    if not 0.0 <= beta < 1.0:
        raise ContractViolation(f"beta must be in [0, 1), got {beta}")
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    if beta == 0.0:
        vals = np.ones((n, n))
    else:
        vals = (1.0 - beta ** (np.maximum(lag, 0) + 1)) / (1.0 - beta)
    return np.where(lag >= 0, vals, 0.0)


def cooldown_schedule(n, fraction, floor):
    """Per-step learning-rate multipliers eta_1..eta_n.

    Steps ``t <= t0 = ceil((1 - fraction) * n)`` use 1; afterwards the rate
    falls linearly, reaching `floor` at step n.
    """
    t = np.arange(1, n + 1, dtype=np.float64)
    t0 = math.ceil((1.0 - fraction) * n)
    eta = np.ones(n)
    if t0 < n:
        tail = t > t0
        eta[tail] = 1.0 - (1.0 - floor) * (t[tail] - t0) / (n - t0)
    return eta


def momentum_cooldown_workload(spec):
    """Momentum with a linear learning-rate cooldown over the final steps.

    ``A[i, j] = sum_{t=j..i} eta_t * beta**(t - j)`` with eta from
    `cooldown_schedule`.
    """
    n, beta = spec.n, spec.beta
    eta = cooldown_schedule(n, spec.cooldown_fraction, spec.cooldown_floor)
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    # Term for step t (row) and input j (col): eta_t * beta**(t - j), t >= j.
    terms = np.where(lag >= 0, eta[:, None] * beta ** np.maximum(lag, 0), 0.0)
    return np.cumsum(terms, axis=0)
