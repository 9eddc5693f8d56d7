"""Loss-table reproductions and the private mean-estimation demo."""

import dataclasses
import logging
import math

import numpy as np
import scipy.stats

from mfdp import mechlab, optfact, participation, treestamp, workloads
from mfdp.errors import ConfigurationError, ContractViolation

log = logging.getLogger(__name__)

TABLE1_FAMILY_NAMES = {
    "honaker_online": "online_honaker",
    "honaker_optimal": "optimal_decoder_honaker",
    "fft": "fft",
    "fft_optimal": "fft_optimal_decoder",
}

TABLE3_EXTRA_COLUMNS = ("workload", "mode", "dual_value", "gap", "min_x", "min_x_pairs",
                        "iterations")


def table1_rows(n=2000, k=20, b=100, stamps=(1, 2, 5, 10, 20), families=None,
                mf_stamps=(2, 4, 5, 10, 20), mf_gap_tol=1e-4):
    """Loss-table rows for stamped tree, FFT and single-participation MF mechanisms.

    Args:
      n, k, b: steps and participation; n must equal k * b.
      stamps: stamp counts for the tree and FFT families.
      families: subset of `treestamp.FAMILIES` (default all).
      mf_stamps: stamp counts for the stamped k=1 optimal factorization;
        empty to skip these rows.
      mf_gap_tol: duality-gap tolerance for the k=1 base factorizations.

    Returns:
      List of row dicts in `mechlab.LOSS_COLUMNS` order.
    """
    schema = participation.make_schema(n, k, b)
    rows = []
    for fam in families or treestamp.FAMILIES:
        if fam not in TABLE1_FAMILY_NAMES:
            raise ContractViolation(f"unknown mechanism family {fam!r}")
        sweep, _ = treestamp.sweep_stamps(fam, n, schema, stamps)
        for r in sweep:
            rows.append(mechlab.loss_row(TABLE1_FAMILY_NAMES[fam], schema, r.s,
                                         r.decoder_kind, r.sens, r.sens_method, r.loss))
    for s in mf_stamps or ():
        if n % s:
            log.warning("skipping MF stamp count %s: does not divide n=%d", s, n)
            continue
        rows.append(stamped_mf_row(n, s, schema, mf_gap_tol))
    return rows


def stamped_mf_row(n, s, schema, gap_tol=1e-4):
    """Row for the k=1 optimal factorization on n/s steps, stamped s times."""
    base_n = n // s
    A = workloads.prefix_workload(base_n)
    f, _ = optfact.solve(A, participation.make_schema(base_n, 1, base_n), "full_corners",
                         optfact.SolverOptions(gap_tol=gap_tol))
    C = treestamp.stamp_encoder(f.C, s)
    B = treestamp.optimal_stamp_decoder(workloads.prefix_workload(n), C, s)
    sr = treestamp.stamped_sensitivity(C, schema, "nonneg")
    return mechlab.loss_row("mf_k1", schema, s, "optimal", sr.value, sr.method,
                            float(sr.value ** 2 * np.sum(B ** 2)))


def table3_rows(n=6, k=3, b=2, beta=0.95, gap_tol=1e-9):
    """Optimal factorizations of the prefix and momentum workloads in all modes.

    Returns:
      Row dicts with the loss-table columns plus `TABLE3_EXTRA_COLUMNS`.
    """
    schema = participation.make_schema(n, k, b)
    rows = []
    for wname, A in (("prefix", workloads.prefix_workload(n)),
                     ("momentum", workloads.momentum_workload(n, beta))):
        for mode in optfact.MODES:
            f, st = optfact.solve(A, schema, mode, optfact.SolverOptions(gap_tol=gap_tol))
            X = f.C.T @ f.C
            row = mechlab.loss_row(f"mf_{wname}", schema, 1, "optimal", f.sens,
                                   f.sens_method, f.loss())
            row.update(workload=wname, mode=mode, dual_value=st.dual_value, gap=st.gap,
                       min_x=float(np.min(X)),
                       min_x_pairs=optfact.min_constrained_entry(X, schema, "pairwise_nonneg"),
                       iterations=st.iterations)
            rows.append(row)
    return rows


@dataclasses.dataclass(frozen=True)
class DemoConfig:
    """Synthetic private mean estimation with fixed-order multi-epoch batches.

    The dataset of m vectors is shuffled once and split into b minibatches;
    epoch e visits them in the same order, so every example participates k
    times exactly b steps apart.

    Attributes:
      m: number of examples (must be divisible by b).
      d: dimension.
      k: epochs.
      b: minibatches per epoch.
      rho: zCDP budget shared by every mechanism.
      clip_norm: per-example L2 clipping bound.
      data_seed: seed of the synthetic dataset and shuffle.
      mechanisms: names from `DEMO_MECHANISMS`.
    """

    m: int = 320
    d: int = 8
    k: int = 4
    b: int = 16
    rho: float = 1.0
    clip_norm: float = 1.0
    data_seed: int = 0
    mechanisms: tuple = ("optimal", "honaker", "independent")

    def __post_init__(self):
        if self.m < 1 or self.d < 1 or self.k < 1 or self.b < 1:
            raise ConfigurationError("m, d, k and b must be positive")
        if self.m % self.b:
            raise ConfigurationError(
                f"m={self.m} examples cannot be split into b={self.b} equal batches")
        if not self.rho > 0 or not self.clip_norm > 0:
            raise ConfigurationError("rho and clip_norm must be positive")
        bad = [x for x in self.mechanisms if x not in DEMO_MECHANISMS]
        if bad:
            raise ConfigurationError(f"unknown mechanisms {bad}")

    @property
    def n(self):
        return self.k * self.b


DEMO_MECHANISMS = ("optimal", "honaker", "independent")


def batch_schedule(cfg):
    """Example indices used at each step: step t uses batch t mod b."""
    perm = np.random.default_rng(cfg.data_seed).permutation(cfg.m)
    batches = np.split(perm, cfg.b)
    return [batches[t % cfg.b] for t in range(cfg.n)]


def check_schedule(schedule, k, b):
    """Verifies that each example participates at most k times, exactly b apart."""
    seen = {}
    for t, batch in enumerate(schedule):
        for i in batch:
            seen.setdefault(int(i), []).append(t)
    for i, steps in seen.items():
        if len(steps) > k or any(q - p != b for p, q in zip(steps, steps[1:])):
            raise ConfigurationError(f"example {i} violates ({k},{b})-participation")


def demo_mechanism(name, n, k, b):
    """(B, C, sens) for a demo mechanism on n = k * b prefix-sum steps."""
    schema = participation.make_schema(n, k, b)
    if name == "optimal":
        f, _ = optfact.solve(workloads.prefix_workload(n), schema, "pairwise_nonneg")
        return f.B, f.C, f.sens
    if name == "honaker":
        B, C = treestamp.tree_factorization(n, "online")
        return B, C, participation.sens_nonneg_fastpath(C, schema)
    if name == "independent":
        C = np.eye(n)
        return workloads.prefix_workload(n), C, participation.sens_nonneg_fastpath(C, schema)
    raise ConfigurationError(f"unknown mechanism {name!r}")


def _dataset(cfg):
    rng = np.random.default_rng(cfg.data_seed + 1)
    centre = rng.normal(size=cfg.d)
    centre *= 0.5 * cfg.clip_norm / np.linalg.norm(centre)
    return centre + 0.5 * cfg.clip_norm * rng.normal(size=(cfg.m, cfg.d)) / math.sqrt(cfg.d)


def demo_train(cfg, seed=0, mechanisms_cache=None, noiseless=False):
    """Private mean estimation by SGD for each configured mechanism.

    The model follows SGD with step size 1/(n * batch) on the linear loss
    -<theta, x>, whose per-example gradient is the clipped example itself.
    Iterate t is therefore the noisy prefix sum of clipped batch sums, scaled
    by 1/(n * batch), and the last iterate is the mean of the dataset.  Each
    mechanism adds ``B z`` to the prefix sums with z calibrated so that every
    mechanism is rho-zCDP.

    Args:
      cfg: `DemoConfig`.
      seed: noise seed.
      mechanisms_cache: optional dict reused across calls for (B, C, sens).
      noiseless: skip the noise (the trajectory is then exact).

    Returns:
      Dict with the exact trajectory and, per mechanism, the trajectory,
      per-step squared error, ``final_mse`` (mean over steps and dimensions)
      and ``last_step_mse``.
    """
    schedule = batch_schedule(cfg)
    check_schedule(schedule, cfg.k, cfg.b)
    data = _dataset(cfg)
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    clipped = data * np.minimum(1.0, cfg.clip_norm / np.maximum(norms, 1e-300))
    g = np.stack([clipped[idx].sum(axis=0) for idx in schedule])
    scale = 1.0 / (cfg.n * (cfg.m // cfg.b))
    exact_sums = np.cumsum(g, axis=0)
    exact = scale * exact_sums
    out = {"exact": exact, "dataset_mean": clipped.mean(axis=0), "mechanisms": {}}
    cache = mechanisms_cache if mechanisms_cache is not None else {}
    for name in cfg.mechanisms:
        if name not in cache:
            cache[name] = demo_mechanism(name, cfg.n, cfg.k, cfg.b)
        B, C, sens = cache[name]
        if noiseless:
            noise = np.zeros_like(exact_sums)
        else:
            sigma = mechlab.sigma_for_zcdp(cfg.clip_norm * sens, cfg.rho)
            noise = mechlab.sample_noise(B, cfg.d, sigma, seed=seed)
        est = scale * (exact_sums + noise)
        err = np.mean((est - exact) ** 2, axis=1)
        out["mechanisms"][name] = {"trajectory": est, "per_step_error": err,
                                   "final_mse": float(err.mean()),
                                   "last_step_mse": float(err[-1])}
    return out


def demo_compare(cfg, seeds=50, alpha=0.05):
    """Paired one-sided tests of the final-MSE ordering over many noise seeds.

    Returns:
      Dict with per-mechanism mean final MSE, the p-values of
      "optimal < honaker" and "honaker < independent", and whether both
      orderings are significant at `alpha`.
    """
    cache = {}
    res = {name: [] for name in cfg.mechanisms}
    for s in range(seeds):
        r = demo_train(cfg, seed=s, mechanisms_cache=cache)
        for name in cfg.mechanisms:
            res[name].append(r["mechanisms"][name]["final_mse"])
    res = {k: np.asarray(v) for k, v in res.items()}
    out = {"mean_final_mse": {k: float(v.mean()) for k, v in res.items()}, "seeds": seeds}
    pairs = [("optimal", "honaker"), ("honaker", "independent")]
    ok = True
    for lo, hi in pairs:
        if lo in res and hi in res:
            p = float(scipy.stats.ttest_rel(res[lo], res[hi], alternative="less").pvalue)
            out[f"p_{lo}_lt_{hi}"] = p
            ok = ok and p < alpha
    out["ordering_significant"] = ok
    return out
