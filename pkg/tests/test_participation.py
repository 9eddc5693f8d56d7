import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfdp import participation, treestamp, workloads
from mfdp.errors import (ContractViolation, InvalidSchemaError, NonnegativityViolated,
                         TooLargeError)

COUNTER_C = np.array([[2, 1, 1], [1, 2, -1], [1, -1, 2]]) / math.sqrt(24)
COUNTER_G = np.array([[2, 1], [2, -1], [1, 2]]) / math.sqrt(5)


def _oracle_sens(C, schema):
    """Independent brute force over every +-1 vector on every pattern."""
    best = 0.0
    for p in schema.patterns:
        for signs in itertools.product((1.0, -1.0), repeat=len(p)):
            u = np.zeros(schema.n)
            u[list(p)] = signs
            best = max(best, float(np.linalg.norm(C @ u)))
    return best


schemas = st.sampled_from([(n, k, n // k) for n in range(1, 13) for k in range(1, 5)
                           if n % k == 0])


def test_make_schema_patterns():
    assert participation.make_schema(6, 3, 2).pattern_labels() == [(1, 3, 5), (2, 4, 6)]
    assert participation.make_schema(4, 1, 4).pattern_labels() == [(1,), (2,), (3,), (4,)]
    assert participation.make_schema(3, 3, 1).pattern_labels() == [(1, 2, 3)]


@pytest.mark.parametrize("n,k,b", [(5, 2, 2), (4, 0, 4), (4, 2, 0)])
def test_make_schema_rejects(n, k, b):
    with pytest.raises(InvalidSchemaError):
        participation.make_schema(n, k, b)


def test_pair_mask():
    mask = participation.make_schema(6, 3, 2).pair_mask()
    assert mask[0, 2] and mask[0, 4] and mask[1, 5]
    assert not mask[0, 1] and not mask[0, 0]
    np.testing.assert_array_equal(mask, mask.T)


def test_corners_counts_and_first_sign():
    s = participation.make_schema(6, 3, 2)
    cs = participation.corners(s)
    assert len(cs) == 2 * 4
    first = [v[np.nonzero(v)[0][0]] for v in cs.vectors]
    assert all(x == 1.0 for x in first)
    assert len(participation.corners(s, restricted_nonneg=True)) == 2


def test_corners_guard():
    with pytest.raises(TooLargeError):
        participation.corners(participation.make_schema(21, 21, 1))


def test_sens_brute_examples():
    assert participation.sens_brute(np.eye(4), participation.make_schema(4, 2, 2)) == \
        pytest.approx(math.sqrt(2))
    r = participation.sens_brute_detail(workloads.prefix_workload(2),
                                        participation.make_schema(2, 2, 1))
    assert r.value == pytest.approx(math.sqrt(5))
    assert r.corner == (1.0, 1.0)


def test_sens_brute_single_participation_is_column_max():
    C = np.random.default_rng(0).normal(size=(7, 5))
    expected = np.max(np.linalg.norm(C, axis=0))
    assert participation.sens_brute(C, participation.single_participation(5)) == \
        pytest.approx(expected, rel=1e-12)


def test_sens_brute_guard():
    with pytest.raises(TooLargeError):
        participation.sens_brute(np.eye(21), participation.every_step(21))


def test_nonneg_fastpath_examples():
    s = participation.make_schema(6, 3, 2)
    assert participation.sens_nonneg_fastpath(np.eye(6), s) == pytest.approx(math.sqrt(3))
    C = np.random.default_rng(1).random((6, 6))
    assert participation.sens_nonneg_fastpath(C, s) == pytest.approx(
        participation.sens_brute(C, s), abs=1e-10)
    spec, E = treestamp.tree_encoder(8)
    C = spec.encoder @ E
    s = participation.make_schema(8, 2, 4)
    assert participation.sens_nonneg_fastpath(C, s) == pytest.approx(
        participation.sens_brute(C, s), abs=1e-12)


def test_nonneg_fastpath_refuses_negative():
    s = participation.make_schema(4, 2, 2)
    C = np.eye(4)
    C[0, 2] = -0.5  # X[0, 2] = -0.5 on a co-occurring pair
    assert not participation.check_pairwise_nonneg(C, s)
    with pytest.raises(NonnegativityViolated):
        participation.sens_nonneg_fastpath(C, s)


def test_check_pairwise_nonneg_identity():
    assert participation.check_pairwise_nonneg(np.eye(6), participation.make_schema(6, 3, 2))


def test_sens_upper_examples():
    s = participation.make_schema(6, 3, 2)
    assert participation.sens_upper(np.eye(6), s) == pytest.approx(math.sqrt(3))
    C = np.random.default_rng(2).normal(size=(5, 5))
    single = participation.single_participation(5)
    assert participation.sens_upper(C, single) == pytest.approx(
        participation.sens_brute(C, single), rel=1e-12)


def test_sens_upper_dominates_on_random_draws():
    rng = np.random.default_rng(3)
    s = participation.make_schema(8, 2, 4)
    for _ in range(100):
        C = rng.normal(size=(8, 8))
        assert participation.sens_upper(C, s) >= participation.sens_brute(C, s) - 1e-12


def test_sensitivity_dispatch():
    s = participation.make_schema(4, 2, 2)
    assert participation.sensitivity(np.eye(4), s, "nonneg").method == "nonneg"
    with pytest.raises(ContractViolation):
        participation.sensitivity(np.eye(4), s, "magic")
    with pytest.raises(ContractViolation):
        participation.sensitivity(np.eye(3), s)


def test_counterexample():
    every = participation.every_step(3)
    assert participation.sens_brute(COUNTER_C, every) == pytest.approx(1.0, abs=1e-12)
    assert participation.vector_sens_check(COUNTER_C, COUNTER_G) == pytest.approx(
        math.sqrt(1.1), abs=1e-12)


def test_vector_sens_check_single_row():
    C = np.random.default_rng(4).normal(size=(4, 3))
    G = np.zeros((3, 2))
    G[0, 0] = 1.0
    val = participation.vector_sens_check(C, G)
    assert val == pytest.approx(np.linalg.norm(C[:, 0]))
    assert val <= participation.sens_brute(C, participation.every_step(3)) + 1e-12


def test_vector_sens_check_rejects_long_rows():
    with pytest.raises(ContractViolation):
        participation.vector_sens_check(np.eye(2), np.array([[1.0, 1.0], [0.0, 0.0]]))


@settings(max_examples=60, deadline=None)
@given(schemas, st.integers(0, 2 ** 32 - 1))
def test_brute_matches_independent_oracle(sch, seed):
    n, k, b = sch
    s = participation.make_schema(n, k, b)
    C = np.random.default_rng(seed).normal(size=(n + 1, n))
    assert participation.sens_brute(C, s) == pytest.approx(_oracle_sens(C, s), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(schemas, st.integers(0, 2 ** 32 - 1))
def test_brute_sign_flip_invariant(sch, seed):
    n, k, b = sch
    s = participation.make_schema(n, k, b)
    C = np.random.default_rng(seed).normal(size=(n, n))
    r = participation.sens_brute_detail(C, s)
    u = np.zeros(n)
    u[list(r.pattern)] = r.corner
    assert np.linalg.norm(C @ u) == pytest.approx(np.linalg.norm(C @ -u))
    assert np.linalg.norm(C @ u) == pytest.approx(r.value, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(schemas, st.integers(0, 2 ** 32 - 1))
def test_partial_corners_never_exceed_full_corners(sch, seed):
    n, k, b = sch
    s = participation.make_schema(n, k, b)
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(n, n))
    sens = participation.sens_brute(C, s)
    p = list(s.patterns[rng.integers(len(s.patterns))])
    u = np.zeros(n)
    u[p] = rng.uniform(-1, 1, size=len(p))
    assert np.linalg.norm(C @ u) <= sens + 1e-12


@settings(max_examples=60, deadline=None)
@given(schemas, st.integers(0, 2 ** 32 - 1))
def test_upper_dominates_brute(sch, seed):
    n, k, b = sch
    s = participation.make_schema(n, k, b)
    C = np.random.default_rng(seed).normal(size=(n, n))
    assert participation.sens_upper(C, s) >= participation.sens_brute(C, s) * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(schemas, st.integers(0, 2 ** 32 - 1))
def test_nonneg_fastpath_matches_brute(sch, seed):
    n, k, b = sch
    s = participation.make_schema(n, k, b)
    C = np.random.default_rng(seed).random((n, n))
    assert participation.sens_nonneg_fastpath(C, s) == pytest.approx(
        participation.sens_brute(C, s), abs=1e-10)
