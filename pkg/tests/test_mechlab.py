import io
import math

import numpy as np
import pytest

from mfdp import mechlab, optfact, participation, workloads
from mfdp.errors import ContractViolation, DegenerateError


def _fact(B, C, schema):
    return optfact.Factorization(B=B, C=C, sens=participation.sens_brute(C, schema),
                                 schema=schema, sens_method="brute")


def test_loss_identity_factorization():
    schema = participation.make_schema(4, 2, 2)
    A = workloads.prefix_workload(4)
    assert mechlab.loss(A, np.eye(4), schema) == pytest.approx(2 * 10)


def test_loss_rescaling_invariant():
    schema = participation.make_schema(6, 3, 2)
    rng = np.random.default_rng(0)
    B, C = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    assert mechlab.loss(3 * B, C / 3, schema) == pytest.approx(mechlab.loss(B, C, schema))


def test_loss_shape_check():
    with pytest.raises(ContractViolation):
        mechlab.loss(np.eye(3), np.eye(4), participation.single_participation(4))


def test_variance_profile():
    np.testing.assert_allclose(mechlab.variance_profile(np.eye(3), 1.0), np.ones(3))
    B = workloads.prefix_workload(4)
    assert np.sum(mechlab.variance_profile(B, 2.0)) == pytest.approx(4 * np.sum(B ** 2))


def test_variance_profile_shows_epoch_structure():
    n, b = 12, 4
    f, _ = optfact.solve(workloads.prefix_workload(n), participation.make_schema(n, 3, b))
    prof = mechlab.variance_profile(f.B, f.sens)
    d = np.diff(prof)
    d = d - d.mean()
    ac = [np.dot(d[:-lag], d[lag:]) for lag in range(1, 6)]
    assert int(np.argmax(ac)) + 1 == b


def test_normalize():
    schema = participation.make_schema(4, 2, 2)
    f = _fact(workloads.prefix_workload(4), 2 * np.eye(4), schema)
    g = mechlab.normalize(f)
    assert g.sens == 1.0
    np.testing.assert_allclose(g.C, f.C / f.sens)
    assert g.loss() == pytest.approx(f.loss(), rel=1e-12)
    assert mechlab.normalize(g).loss() == pytest.approx(g.loss(), rel=1e-12)
    rng = np.random.default_rng(1)
    h = _fact(rng.normal(size=(4, 5)), rng.normal(size=(5, 4)), schema)
    assert mechlab.normalize(h).loss() == pytest.approx(h.loss(), rel=1e-12)
    with pytest.raises(DegenerateError):
        mechlab.normalize(_fact(np.eye(4), np.zeros((4, 4)), schema))


def test_sample_noise_zero_sigma():
    np.testing.assert_array_equal(mechlab.sample_noise(np.eye(3), 2, 0.0), np.zeros((3, 2)))


def test_sample_noise_columns_independent_of_width():
    B = workloads.prefix_workload(5)
    wide = mechlab.sample_noise(B, 4, 1.0, seed=9)
    narrow = mechlab.sample_noise(B, 2, 1.0, seed=9)
    np.testing.assert_array_equal(wide[:, :2], narrow)


def test_sample_noise_identity_variance():
    sigma = 1.7
    Z = mechlab.sample_noise(np.eye(1), 100_000, sigma, seed=2)
    var = Z.var()
    se = sigma ** 2 * math.sqrt(2.0 / Z.size)
    assert abs(var - sigma ** 2) <= 3 * se


def test_sample_noise_covariance():
    B = workloads.prefix_workload(4)
    sigma, draws = 0.5, 100_000
    Z = mechlab.sample_noise(B, draws, sigma, seed=3)
    emp = Z @ Z.T / draws
    cov = sigma ** 2 * B @ B.T
    se = np.sqrt((cov ** 2 + np.outer(np.diag(cov), np.diag(cov))) / draws)
    assert np.all(np.abs(emp - cov) <= 5 * se)


def test_zcdp_accounting():
    assert mechlab.zcdp(1.0, 1.0) == pytest.approx(0.5)
    assert mechlab.zcdp(2.0, mechlab.sigma_for_zcdp(2.0, 0.3)) == pytest.approx(0.3)
    assert mechlab.zcdp_to_epsilon(0.5, 1e-6) == pytest.approx(
        0.5 + 2 * math.sqrt(0.5 * math.log(1e6)))
    for bad in (lambda: mechlab.zcdp(1.0, 0.0), lambda: mechlab.zcdp_to_epsilon(0.5, 1.0),
                lambda: mechlab.sigma_for_zcdp(1.0, -1.0)):
        with pytest.raises(ContractViolation):
            bad()


def test_mechanism_report():
    schema = participation.make_schema(4, 2, 2)
    A = workloads.prefix_workload(4)
    rep = mechlab.mechanism_report("identity", A, np.eye(4), schema, sigma=2.0)
    assert rep.loss == pytest.approx(20.0)
    assert rep.root_loss == pytest.approx(math.sqrt(20.0))
    assert np.sum(rep.per_iterate_variance) == pytest.approx(rep.loss)
    assert rep.zcdp_rho == pytest.approx(2.0 / 8.0)


def test_mat64_roundtrip(tmp_path):
    M = np.random.default_rng(4).normal(size=(3, 5))
    path = tmp_path / "m.mat64"
    mechlab.write_mat64(path, M)
    np.testing.assert_array_equal(mechlab.read_mat64(path), M)
    assert path.read_bytes().startswith(b"MFDP1 3 5\n")
    buf = io.BytesIO()
    mechlab.write_mat64(buf, M)
    buf.seek(0)
    np.testing.assert_array_equal(mechlab.read_mat64(buf), M)


@pytest.mark.parametrize("blob", [b"", b"XXXX 1 1\n" + bytes(8), b"MFDP1 2 2\n" + bytes(8),
                                  b"MFDP1 a b\n"])
def test_mat64_rejects_malformed(blob):
    with pytest.raises(ContractViolation):
        mechlab.read_mat64(io.BytesIO(blob))


def test_matrix_to_csv_roundtrip():
    M = np.array([[0.1, -2.5], [1e-300, 3.0]])
    text = mechlab.matrix_to_csv(M)
    back = np.array([[float(x) for x in line.split(",")] for line in text.splitlines()])
    np.testing.assert_array_equal(back, M)


def test_loss_table():
    schema = participation.make_schema(4, 2, 2)
    row = mechlab.loss_row("x", schema, 1, "optimal", 1.5, "brute", 9.0)
    text = mechlab.write_loss_table([row])
    lines = text.splitlines()
    assert lines[0] == ",".join(mechlab.LOSS_COLUMNS)
    assert lines[1] == "x,4,2,2,1,optimal,1.5,brute,9,3"
    with pytest.raises(ContractViolation):
        mechlab.write_loss_table([{"mechanism": "x"}])
