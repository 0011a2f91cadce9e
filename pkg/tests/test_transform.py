import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from aluthge.linalg import PolarFactors, char_poly, haar_unitary, normality_defect, polar_decompose, spectrum_distance
from aluthge.transform import (
    DECIMATE_AFTER,
    StopReason,
    aluthge,
    aluthge_from_polar,
    direct_sum,
    excess,
    iterate,
    limit,
)
from conftest import complex_matrices, ginibre

J2 = np.array([[0, 1], [0, 0]], dtype=complex)
T12 = np.array([[1, 1], [0, 2]], dtype=complex)
lambdas = st.sampled_from([0.25, 0.5, 0.75])

# 40-digit mpmath iteration of |T|^1/2 U |T|^1/2 (sqrtm based), rounded
T12_STEP = np.array([[0.9, 0.7472135954999579], [-0.1472135954999579, 2.1]])
T12_LIMIT = np.array([[1.9013869636566454, 0.2981417538797591],
                      [0.2981417538797591, 1.0986130363433546]])


def oracle_aluthge(t, lam):
    # independent route: scipy polar and fractional matrix power
    u, p = scipy.linalg.polar(t, side="right")
    return scipy.linalg.fractional_matrix_power(p, lam) @ u @ scipy.linalg.fractional_matrix_power(p, 1 - lam)


def test_examples():
    n = np.diag([1, 2j, -3])
    np.testing.assert_allclose(aluthge(n), n, atol=1e-14)
    assert np.abs(aluthge(J2)).max() == 0
    np.testing.assert_allclose(aluthge(3j * T12), 3j * aluthge(T12), atol=1e-13)
    np.testing.assert_allclose(aluthge(T12), T12_STEP, atol=1e-14)


def test_matches_oracle(rng):
    for r in (2, 3, 5):
        t = ginibre(r, rng)
        for lam in (0.25, 0.5, 0.75):
            np.testing.assert_allclose(aluthge(t, lam), oracle_aluthge(t, lam), atol=1e-9)


def test_from_polar_agrees():
    t = np.array([[1, 2], [0.5j, -1]])
    for lam in (0.3, 0.5):
        np.testing.assert_allclose(aluthge_from_polar(polar_decompose(t), lam), aluthge(t, lam), atol=1e-12)


def test_lambda_validation():
    for bad in (0.0, 1.0, -0.5, 2):
        with pytest.raises(ValueError):
            aluthge(T12, bad)


@given(complex_matrices(max_r=5), lambdas, st.integers(0, 2**32 - 1))
def test_unitary_equivariance(t, lam, seed):
    v = haar_unitary(t.shape[0], np.random.default_rng(seed))
    lhs = aluthge(v @ t @ v.conj().T, lam)
    rhs = v @ aluthge(t, lam) @ v.conj().T
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * (1 + np.linalg.norm(t))


@given(complex_matrices(max_r=5), lambdas, st.complex_numbers(max_magnitude=5, allow_nan=False))
def test_homogeneity(t, lam, c):
    assert np.linalg.norm(aluthge(c * t, lam) - c * aluthge(t, lam)) <= 1e-8 * (1 + abs(c) * np.linalg.norm(t))


@given(complex_matrices(max_r=3), complex_matrices(max_r=3), lambdas)
def test_direct_sum_law(a, b, lam):
    lhs = aluthge(direct_sum(a, b), lam)
    rhs = direct_sum(aluthge(a, lam), aluthge(b, lam))
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * (1 + np.linalg.norm(a) + np.linalg.norm(b))


def test_direct_sum_examples():
    np.testing.assert_array_equal(direct_sum([[5]], [[7]]), np.diag([5, 7]))
    assert np.abs(aluthge(direct_sum(J2, J2))).max() == 0
    n = np.diag([1, -2j])
    np.testing.assert_allclose(aluthge(direct_sum(n, J2)), direct_sum(n, np.zeros((2, 2))), atol=1e-14)


@given(complex_matrices(max_r=5), lambdas)
def test_char_poly_invariance(t, lam):
    scale = (1 + np.linalg.norm(t)) ** t.shape[0]
    assert np.abs(char_poly(aluthge(t, lam)) - char_poly(t)).max() <= 1e-8 * scale


@given(complex_matrices(max_r=5), lambdas)
def test_norm_monotone(t, lam):
    d = aluthge(t, lam)
    assert np.linalg.norm(d) <= np.linalg.norm(t) + 1e-12 * (1 + np.linalg.norm(t))
    if normality_defect(t) > 1e-3 * (1 + np.linalg.norm(t)) ** 2:
        assert np.linalg.norm(d) < np.linalg.norm(t) - 1e-9


def test_kernel_choice_independence(rng):
    # rank-2 matrix on C^4: modify the unitary factor on ker T only
    for lam in (0.25, 0.5, 0.75):
        a = ginibre(4, rng)[:, :2] @ ginibre(4, rng)[:2, :]
        p = polar_decompose(a)
        _, _, vh = np.linalg.svd(a)
        ker = vh[2:].conj().T
        w = haar_unitary(2, rng)
        change = np.eye(4) - ker @ ker.conj().T + ker @ w @ ker.conj().T
        other = PolarFactors(p.unitary @ change, p.modulus)
        np.testing.assert_allclose(other.reconstruct(), a, atol=1e-10)
        np.testing.assert_allclose(aluthge_from_polar(other, lam), aluthge(a, lam), atol=1e-9)


def test_excess_examples():
    assert abs(excess(np.diag([1, 2]))) < 1e-14
    assert np.isclose(excess(T12), 1)
    assert np.isclose(excess(J2), 1)


@given(complex_matrices(max_r=4))
def test_excess_nonnegative_and_decreasing(t):
    scale = 1e-10 * (1 + np.linalg.norm(t)) ** 2
    assert excess(t) >= -scale
    assert excess(aluthge(t)) <= excess(t) + scale


def test_iterate_examples():
    n = np.diag([1, 1j])
    tr = iterate(n)
    assert tr.converged and tr.n_final == 0 and tr.steps[0].step_size < 1e-14
    tr = iterate(J2)
    assert tr.converged and tr.n_final == 1
    assert np.abs(tr.final).max() == 0
    tr = iterate(T12)
    assert tr.converged and tr.stop_reason is StopReason.TOLERANCE_MET
    norms = tr.column("norm")
    defects = tr.column("normality_defect")
    strict = defects[:-1] > 1e-6
    assert np.all(np.diff(norms)[strict] < 0)
    assert np.all(np.diff(norms) <= 1e-12)
    excesses = tr.column("excess")
    assert np.all(np.diff(excesses) <= 1e-12)


def test_iterate_arguments():
    with pytest.raises(ValueError):
        iterate(T12, tol=0)
    with pytest.raises(ValueError):
        iterate(T12, max_iter=0)


def test_iterate_max_iterations_and_decimation():
    j = np.array([[2, 1], [0, 2]], dtype=complex)
    tr = iterate(j, max_iter=DECIMATE_AFTER + 5000)
    assert not tr.converged and tr.stop_reason is StopReason.MAX_ITERATIONS
    ns = [s.n for s in tr.steps]
    assert ns[DECIMATE_AFTER] == DECIMATE_AFTER
    assert all(n % 2 == 0 for n in ns[DECIMATE_AFTER:-1])
    assert ns[-1] == DECIMATE_AFTER + 5000
    assert len(ns) < DECIMATE_AFTER + 2600


def test_iterate_keeps_iterates():
    tr = iterate(T12, keep_iterates=True)
    assert len(tr.iterates) == len(tr.steps)
    np.testing.assert_allclose(tr.iterates[1], T12_STEP, atol=1e-14)


def test_limit_examples():
    res = limit(np.diag([1, 2]))
    assert res.converged and res.iterations_used == 0
    np.testing.assert_allclose(res.limit, np.diag([1, 2]))

    t = direct_sum([[1]], [[2, 3], [0, 2]])
    res = limit(t)
    assert res.converged
    np.testing.assert_allclose(res.limit, np.diag([1, 2, 2]), atol=1e-10)

    res = limit(T12)
    assert res.converged and normality_defect(res.limit) < 1e-10
    np.testing.assert_allclose(char_poly(res.limit), [1, -3, 2], atol=1e-10)
    np.testing.assert_allclose(res.limit, T12_LIMIT, atol=1e-8)
    res = limit(T12, tol=1e-14, max_iter=2000)
    np.testing.assert_allclose(res.limit, T12_LIMIT, atol=1e-12)


def test_limit_plain_iteration_agrees_with_finalized(rng):
    s = ginibre(3, rng)
    t = s @ np.diag([1, 2, -1j]) @ np.linalg.inv(s)
    a = limit(t, finalize=False)
    b = limit(t)
    assert a.method == "iteration"
    np.testing.assert_allclose(a.limit, b.limit, atol=1e-8)


def test_single_eigenvalue_collapse(rng):
    # Jordan blocks converge only algebraically; the spectral finalisation gives cI
    for blocks, c in (([[1, 1], [0, 1]], 1), ([[2, 3, 0], [0, 2, 1], [0, 0, 2]], 2)):
        j = np.array(blocks, dtype=complex)
        s = ginibre(j.shape[0], rng)
        res = limit(s @ j @ np.linalg.inv(s))
        assert res.converged and res.method == "spectral"
        np.testing.assert_allclose(res.limit, c * np.eye(j.shape[0]), atol=1e-8)


def test_conjugated_jordan_with_two_clusters(rng):
    s = ginibre(3, rng)
    t = s @ direct_sum([[1]], [[2, 1], [0, 2]]) @ np.linalg.inv(s)
    res = limit(t)
    assert res.converged
    assert normality_defect(res.limit) < 1e-8
    assert spectrum_distance(np.linalg.eigvals(res.limit), [1, 2, 2]) < 1e-8


def test_limit_idempotent_and_retraction(rng):
    s = ginibre(3, rng)
    t = s @ np.diag([0.5, 1.5j, -1]) @ np.linalg.inv(s)
    base = limit(t).limit
    np.testing.assert_allclose(limit(base).limit, base, atol=1e-9)
    later = t
    for _ in range(5):
        later = aluthge(later)
    np.testing.assert_allclose(limit(later).limit, base, atol=1e-8)


def test_limit_nonconvergence_reported():
    j = np.array([[2, 1], [0, 2]], dtype=complex)
    res = limit(j, max_iter=50, finalize=False)
    assert not res.converged and res.method is None
    assert res.trace.stop_reason is StopReason.MAX_ITERATIONS


@pytest.mark.parametrize("lam", [0.25, 0.75])
def test_limit_other_lambda(lam, rng):
    s = ginibre(3, rng)
    t = s @ np.diag([1, 2, 1j]) @ np.linalg.inv(s)
    res = limit(t, lambda_param=lam)
    assert res.converged and normality_defect(res.limit) < 1e-8
    assert spectrum_distance(np.linalg.eigvals(res.limit), [1, 2, 1j]) < 1e-7
