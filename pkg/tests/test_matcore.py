import numpy as np
import pytest
import scipy.linalg

from mfdp import matcore
from mfdp.errors import ContractViolation, NotPSDError


def _random_psd(rng, n, eigs):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (Q * eigs) @ Q.T


def test_psd_sqrt_identity_and_diagonal():
    np.testing.assert_allclose(matcore.psd_sqrt(np.eye(3)), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(matcore.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]),
                               atol=1e-14)


def test_psd_sqrt_reconstructs_random_matrix():
    M = _random_psd(np.random.default_rng(0), 3, np.array([1.0, 2.0, 5.0]))
    R = matcore.psd_sqrt(M)
    np.testing.assert_allclose(R @ R, M, atol=1e-12)
    np.testing.assert_allclose(R, R.T, atol=1e-14)


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        matcore.psd_sqrt(np.diag([1.0, -1.0]))


def test_psd_inv_sqrt():
    M = _random_psd(np.random.default_rng(1), 4, np.array([0.5, 1.0, 2.0, 3.0]))
    R = matcore.psd_inv_sqrt(M)
    np.testing.assert_allclose(R @ M @ R, np.eye(4), atol=1e-12)


def test_pinv_cases():
    np.testing.assert_allclose(matcore.pinv(np.eye(4)), np.eye(4), atol=1e-14)
    np.testing.assert_allclose(matcore.pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]),
                               atol=1e-14)
    M = np.random.default_rng(2).normal(size=(6, 3))
    np.testing.assert_allclose(matcore.pinv(M) @ M, np.eye(3), atol=1e-12)


def test_left_pinv_matches_pinv():
    M = np.random.default_rng(3).normal(size=(10, 4))
    np.testing.assert_allclose(matcore.left_pinv(M), np.linalg.pinv(M), atol=1e-10)


def test_left_pinv_rank_deficient_falls_back():
    M = np.diag([1.0, 0.0])
    np.testing.assert_allclose(matcore.left_pinv(M), np.diag([1.0, 0.0]), atol=1e-14)


def test_spectral_norm():
    assert matcore.spectral_norm(np.eye(5)) == pytest.approx(1.0)
    assert matcore.spectral_norm(np.diag([3.0, -7.0])) == pytest.approx(7.0)
    expected = np.sqrt((3 + np.sqrt(5)) / 2)
    assert matcore.spectral_norm(np.array([[1.0, 1.0], [0.0, 1.0]])) == pytest.approx(expected)


def test_as_matrix_shapes_and_finiteness():
    assert matcore.as_matrix(np.ones(3)).shape == (3, 1)
    with pytest.raises(ContractViolation):
        matcore.as_matrix(np.ones((2, 2, 2)))
    with pytest.raises(ContractViolation):
        matcore.as_matrix(np.array([[1.0, np.nan]]))


def test_toeplitz_matvec_matches_dense():
    rng = np.random.default_rng(4)
    c, r, x = rng.normal(size=7), rng.normal(size=7), rng.normal(size=7)
    r[0] = c[0]
    np.testing.assert_allclose(matcore.toeplitz_matvec(c, r, x),
                               scipy.linalg.toeplitz(c, r) @ x, atol=1e-12)


def test_toeplitz_solve_identity():
    e1 = np.zeros(5)
    e1[0] = 1.0
    r = np.arange(1.0, 6.0)
    np.testing.assert_allclose(matcore.toeplitz_solve(e1, e1, r), r, atol=1e-12)


def test_toeplitz_solve_prefix_matrix():
    n = 6
    e1 = np.zeros(n)
    e1[0] = 1.0
    np.testing.assert_allclose(matcore.toeplitz_solve(np.ones(n), e1, np.ones(n)), e1,
                               atol=1e-12)


def test_toeplitz_solve_random_spd():
    n = 64
    rng = np.random.default_rng(5)
    t = np.exp(-0.3 * np.arange(n)) * (1 + 0.1 * rng.random(n))
    t[0] = 3.0
    T = scipy.linalg.toeplitz(t)
    assert np.linalg.eigvalsh(T)[0] > 0
    rhs = rng.normal(size=n)
    x = matcore.toeplitz_solve(t, t, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(T, rhs), rtol=1e-8, atol=1e-8)
