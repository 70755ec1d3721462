import numpy as np
import pytest

from fismo import matops
from fismo.errors import DegenerateInput, InvalidInput, IterationDiverged
from fismo.polar import NewtonSchulzConfig, condition_number, polar_exact, polar_ns

from oracles import jacobi_singular_values, matrix_with_condition, random_orthogonal


CUBIC = NewtonSchulzConfig(variant="cubic", iterations=20)
QUINTIC5 = NewtonSchulzConfig(variant="quintic", iterations=5)


def test_config_validation():
    with pytest.raises(InvalidInput):
        NewtonSchulzConfig(iterations=0)
    with pytest.raises(InvalidInput):
        NewtonSchulzConfig(iterations=51)
    with pytest.raises(InvalidInput):
        NewtonSchulzConfig(variant="septic")


def test_polar_exact_of_orthogonal_is_identity_map():
    rng = np.random.default_rng(0)
    o = random_orthogonal(rng, 4)
    np.testing.assert_allclose(polar_exact(o), o, atol=1e-12)


def test_polar_exact_positive_diagonal():
    np.testing.assert_allclose(polar_exact(np.diag([2.0, 5.0])), np.eye(2), atol=1e-14)


@pytest.mark.parametrize("seed", range(8))
def test_polar_exact_nuclear_identity(seed):
    # <M, Polar(M)> = ||M||_* and Polar(M)^T Polar(M) = I for full-rank input
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((4, 3))
    p = polar_exact(m)
    assert np.linalg.norm(p.T @ p - np.eye(3)) < 1e-10
    nuclear_ref = float(np.sum(jacobi_singular_values(m)))
    assert matops.frobenius_inner(m, p) == pytest.approx(nuclear_ref, abs=1e-9)


def test_polar_exact_rank_deficient_partial_isometry():
    # ||Polar(M)||_F^2 = rank(M)
    rng = np.random.default_rng(5)
    u = rng.standard_normal((5, 2))
    v = rng.standard_normal((4, 2))
    m = u @ v.T  # rank 2
    p = polar_exact(m)
    assert np.linalg.norm(p) ** 2 == pytest.approx(2.0, abs=1e-9)


def test_polar_of_zero_raises():
    with pytest.raises(DegenerateInput):
        polar_exact(np.zeros((3, 3)))
    with pytest.raises(DegenerateInput):
        polar_ns(np.zeros((3, 3)))
    with pytest.raises(DegenerateInput):
        condition_number(np.zeros((2, 2)))


def test_polar_ns_cubic_fixed_point_on_orthogonal():
    # without pre-normalization an orthogonal matrix is an exact fixed point
    rng = np.random.default_rng(1)
    o = random_orthogonal(rng, 5)
    cfg = NewtonSchulzConfig(variant="cubic", iterations=10, pre_normalize=False)
    np.testing.assert_allclose(polar_ns(o, cfg), o, atol=1e-9)
    # with pre-normalization the cubic rule re-converges to the same point
    np.testing.assert_allclose(polar_ns(o, CUBIC), o, atol=1e-9)


def test_polar_ns_cubic_diagonal_vs_exact():
    m = np.diag([2.0, 5.0])
    np.testing.assert_allclose(polar_ns(m, CUBIC), np.eye(2), atol=1e-6)


def test_polar_ns_quintic_close_to_exact():
    # measured regime for the practical quintic at 5 iterations: its
    # singular values oscillate in roughly [0.69, 1.19], so the Frobenius
    # gap to the exact polar on a rank-4 input stays below 0.6 (and is
    # ~0.47 even when all singular values coincide)
    errs = []
    for seed in range(40, 80):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((6, 4))
        errs.append(np.linalg.norm(polar_ns(m, QUINTIC5) - polar_exact(m)))
    assert max(errs) < 0.6
    assert np.median(errs) < 0.4


@pytest.mark.parametrize("seed", range(6))
def test_polar_ns_quintic_band(seed):
    # after >= 5 iterations, singular values of the result sit in [0.5, 1.5]
    rng = np.random.default_rng(60 + seed)
    m = matrix_with_condition(rng, 6, 4, cond=100.0)
    sigma = matops.singular_values(polar_ns(m, QUINTIC5))
    assert np.all(sigma >= 0.5) and np.all(sigma <= 1.5)


@pytest.mark.parametrize("seed", range(5))
def test_polar_ns_cubic_monotone_convergence(seed):
    # max_i |sigma_i(X_k) - 1| is nonincreasing in k for the cubic rule
    rng = np.random.default_rng(80 + seed)
    m = matrix_with_condition(rng, 5, 4, cond=100.0)
    errs = []
    for k in range(1, 16):
        cfg = NewtonSchulzConfig(variant="cubic", iterations=k)
        sigma = matops.singular_values(polar_ns(m, cfg))
        errs.append(np.max(np.abs(sigma - 1.0)))
    assert all(errs[i + 1] <= errs[i] + 1e-12 for i in range(len(errs) - 1))


@pytest.mark.parametrize("seed", range(5))
def test_polar_ns_kappa_decreases_with_iterations(seed):
    rng = np.random.default_rng(90 + seed)
    m = matrix_with_condition(rng, 5, 4, cond=50.0)
    kappas = []
    for k in (1, 3, 5, 9, 15):
        cfg = NewtonSchulzConfig(variant="cubic", iterations=k)
        kappas.append(condition_number(polar_ns(m, cfg)))
    assert all(kappas[i + 1] <= kappas[i] + 1e-9 for i in range(len(kappas) - 1))
    assert kappas[-1] == pytest.approx(1.0, abs=1e-6)


def test_polar_ns_divergence_detected():
    cfg = NewtonSchulzConfig(variant="cubic", iterations=5, pre_normalize=False)
    with pytest.raises(IterationDiverged):
        polar_ns(10.0 * np.eye(3), cfg)


def test_polar_ns_wide_matrix_orientation():
    rng = np.random.default_rng(9)
    m = rng.standard_normal((3, 6))
    p = polar_ns(m, CUBIC)
    assert p.shape == (3, 6)
    np.testing.assert_allclose(p, polar_exact(m), atol=1e-6)


def test_condition_number_basics():
    rng = np.random.default_rng(2)
    assert condition_number(random_orthogonal(rng, 4)) == pytest.approx(1.0)
    assert condition_number(np.diag([10.0, 1.0])) == pytest.approx(10.0)


@pytest.mark.parametrize("seed", range(5))
def test_condition_number_of_exact_polar_is_one(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((5, 3))
    assert condition_number(polar_exact(m)) == pytest.approx(1.0, abs=1e-9)


def test_condition_number_rank_tolerance():
    # numerically-zero directions are excluded from the active spectrum
    m = np.diag([1.0, 1e-12])
    assert condition_number(m, rank_tol=1e-8) == pytest.approx(1.0)
    assert condition_number(m, rank_tol=1e-14) == pytest.approx(1e12, rel=1e-6)
