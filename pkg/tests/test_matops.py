import numpy as np
import pytest

from fismo import matops
from fismo.errors import InvalidInput, NearSingular, ShapeError

from oracles import jacobi_svd, random_spd


def test_jacobi_oracle_reconstructs():
    # sanity-check the oracle itself before using it against the library
    rng = np.random.default_rng(7)
    a = rng.standard_normal((4, 3))
    u, s, vt = jacobi_svd(a)
    assert np.linalg.norm(u @ np.diag(s) @ vt - a) < 1e-10 * np.linalg.norm(a)
    assert np.linalg.norm(u.T @ u - np.eye(3)) < 1e-12


def test_svd_identity():
    f = matops.svd(np.eye(3))
    np.testing.assert_allclose(f.u, np.eye(3))
    np.testing.assert_allclose(f.sigma, np.ones(3))
    np.testing.assert_allclose(f.vt, np.eye(3))


def test_svd_diagonal():
    f = matops.svd(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(f.sigma, [3.0, 2.0])


@pytest.mark.parametrize("seed", range(8))
def test_svd_against_jacobi_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 3))
    f = matops.svd(a)
    rec = f.u @ np.diag(f.sigma) @ f.vt
    assert np.linalg.norm(rec - a) < 1e-10 * np.linalg.norm(a)
    sigma_ref = jacobi_svd(a)[1]
    np.testing.assert_allclose(f.sigma, sigma_ref, rtol=0, atol=1e-10 * sigma_ref[0])
    # factor invariants
    r = min(a.shape)
    assert np.linalg.norm(f.u.T @ f.u - np.eye(r)) < 1e-10
    assert np.linalg.norm(f.vt @ f.vt.T - np.eye(r)) < 1e-10
    assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)


def test_svd_sign_convention_and_determinism():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 4))
    f1 = matops.svd(a)
    f2 = matops.svd(a.copy())
    np.testing.assert_array_equal(f1.u, f2.u)
    np.testing.assert_array_equal(f1.vt, f2.vt)
    for k in range(f1.sigma.size):
        col = f1.u[:, k]
        first_nz = col[np.abs(col) > 1e-12][0]
        assert first_nz > 0


def test_svd_rejects_nonfinite():
    with pytest.raises(InvalidInput):
        matops.svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_norm_diagonal():
    a = np.diag([3.0, 4.0])
    assert matops.norm(a, "frobenius") == pytest.approx(5.0)
    assert matops.norm(a, "spectral") == pytest.approx(4.0)
    assert matops.norm(a, "nuclear") == pytest.approx(7.0)


def test_norm_zero_matrix():
    z = np.zeros((3, 2))
    for kind in ("frobenius", "spectral", "nuclear"):
        assert matops.norm(z, kind) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_norm_sandwich(seed):
    # ||A||_2 <= ||A||_F <= ||A||_* <= sqrt(rank) ||A||_F
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((5, 3))
    spec = matops.norm(a, "spectral")
    fro = matops.norm(a, "frobenius")
    nuc = matops.norm(a, "nuclear")
    r = np.linalg.matrix_rank(a)
    assert spec <= fro + 1e-12
    assert fro <= nuc + 1e-12
    assert nuc <= np.sqrt(r) * fro + 1e-12


def test_frobenius_inner_basics():
    assert matops.frobenius_inner(np.eye(2), np.eye(2)) == pytest.approx(2.0)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    assert matops.frobenius_inner(a, a) == pytest.approx(np.linalg.norm(a) ** 2)
    with pytest.raises(ShapeError):
        matops.frobenius_inner(np.eye(2), np.eye(3))


@pytest.mark.parametrize("seed", range(10))
def test_frobenius_inner_holder_bound(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((4, 3))
    lhs = abs(matops.frobenius_inner(a, b))
    assert lhs <= matops.norm(a, "nuclear") * matops.norm(b, "spectral") + 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_von_neumann_trace_inequality(seed):
    rng = np.random.default_rng(100 + seed)
    m = int(rng.integers(2, 7))
    n = int(rng.integers(2, 7))
    a = rng.standard_normal((m, n))
    b = rng.standard_normal((m, n))
    sa = matops.singular_values(a)
    sb = matops.singular_values(b)
    assert abs(np.trace(a.T @ b)) <= float(sa @ sb) + 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_three_factor_holder(seed):
    rng = np.random.default_rng(200 + seed)
    m = int(rng.integers(2, 7))
    n = int(rng.integers(2, 7))
    a = rng.standard_normal((m, m))
    x = rng.standard_normal((m, n))
    b = rng.standard_normal((n, n))
    lhs = matops.norm(a @ x @ b, "nuclear")
    rhs = matops.norm(a, "spectral") * matops.norm(x, "nuclear") * matops.norm(b, "spectral")
    assert lhs <= rhs + 1e-9


def test_sym():
    s = np.array([[1.0, 2.0], [2.0, 5.0]])
    np.testing.assert_array_equal(matops.sym(s), s)
    np.testing.assert_array_equal(
        matops.sym(np.array([[0.0, 2.0], [0.0, 0.0]])), np.array([[0.0, 1.0], [1.0, 0.0]])
    )
    rng = np.random.default_rng(1)
    r = matops.sym(rng.standard_normal((3, 3)))
    np.testing.assert_array_equal(r, r.T)
    with pytest.raises(ShapeError):
        matops.sym(np.zeros((2, 3)))


def test_inv_sqrt_identity_and_diagonal():
    np.testing.assert_allclose(matops.inv_sqrt(np.eye(4)), np.eye(4), atol=1e-14)
    np.testing.assert_allclose(
        matops.inv_sqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1.0 / 3.0]), atol=1e-14
    )


@pytest.mark.parametrize("seed", range(8))
def test_inv_sqrt_construct_and_verify(seed):
    rng = np.random.default_rng(seed)
    a = random_spd(rng, 5)
    r = matops.inv_sqrt(a)
    cond = np.linalg.cond(a)
    assert np.linalg.norm(r @ a @ r - np.eye(5)) < 1e-9 * cond
    np.testing.assert_array_equal(r, r.T)
    assert np.all(np.linalg.eigvalsh(r) > 0)


def test_inv_sqrt_near_singular():
    with pytest.raises(NearSingular):
        matops.inv_sqrt(np.diag([1.0, 1e-16]))


def test_check_spd_rejects_asymmetric_and_indefinite():
    with pytest.raises(InvalidInput):
        matops.check_spd(np.array([[1.0, 0.5], [0.2, 1.0]]))
    with pytest.raises(InvalidInput):
        matops.check_spd(np.array([[1.0, 0.0], [0.0, -1.0]]))


@pytest.mark.parametrize("seed", range(8))
def test_inv_sqrt_lipschitz(seed):
    # ||A^-1/2 - B^-1/2||_2 <= ||A - B||_2 / (2 c^{3/2}) with c = min eig over both
    rng = np.random.default_rng(300 + seed)
    a = random_spd(rng, 4, floor=0.5)
    b = random_spd(rng, 4, floor=0.5)
    c = min(np.linalg.eigvalsh(a)[0], np.linalg.eigvalsh(b)[0])
    lhs = np.linalg.norm(matops.inv_sqrt(a) - matops.inv_sqrt(b), 2)
    rhs = np.linalg.norm(a - b, 2) / (2.0 * c**1.5)
    assert lhs <= rhs + 1e-10


def test_spd_inverse_pair_consistency():
    rng = np.random.default_rng(11)
    a = random_spd(rng, 4)
    inv, inv_root = matops.spd_inverse_pair(a)
    np.testing.assert_allclose(inv, np.linalg.inv(a), atol=1e-10)
    np.testing.assert_allclose(inv_root @ inv_root, inv, atol=1e-10)
