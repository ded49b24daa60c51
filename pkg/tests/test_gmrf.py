import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg, stats

from pcspline.errors import (
    InvalidArgumentsError,
    NotPositiveDefiniteError,
    RankDeficientConstraintsError,
)
from pcspline.gmrf import (
    CanonicalGaussian,
    constrain,
    constrained_logpdf,
    difference_matrix,
    igmrf_logdensity,
    rescale_constraints,
    sample_canonical,
    structure_matrix,
)


def random_spd(rng, k):
    M = rng.standard_normal((k, k))
    return M @ M.T + k * np.eye(k)


def test_first_differences():
    np.testing.assert_array_equal(difference_matrix(3, 1), [[-1, 1, 0], [0, -1, 1]])


def test_second_difference_stencil():
    D = difference_matrix(4, 2)
    np.testing.assert_array_equal(D, [[1, -2, 1, 0], [0, 1, -2, 1]])


def test_second_difference_kills_lines():
    D = difference_matrix(10, 2)
    assert np.all(D @ (3.0 + 0.5 * np.arange(10)) == 0)


@pytest.mark.parametrize("K,r", [(2, 2), (3, 0), (5, 1.5)])
def test_difference_matrix_rejects(K, r):
    with pytest.raises(InvalidArgumentsError):
        difference_matrix(K, r)


def test_structure_rw1():
    S = structure_matrix(3, 1)
    np.testing.assert_array_equal(S.R, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    assert S.rank == 2


def test_structure_rank_rw2():
    assert structure_matrix(20, 2).rank == 18


def test_null_space_line():
    S = structure_matrix(8, 2)
    assert np.max(np.abs(S.R @ np.arange(1, 9))) == 0


@pytest.mark.parametrize("r", [1, 2, 3])
def test_null_space_polynomials(r):
    K = 12
    S = structure_matrix(K, r)
    k = np.arange(1, K + 1, dtype=float)
    for deg in range(r):
        assert np.max(np.abs(S.R @ k**deg)) <= 1e-10 * K**deg
    assert np.max(np.abs(S.R @ k**r)) > 1e-3
    assert S.rank == K - r


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3))
def test_rw2_annihilates_affine(a, b):
    S = structure_matrix(15, 2)
    v = a + b * np.arange(1, 16)
    assert np.max(np.abs(S.R @ v)) <= 1e-10 * max(1.0, abs(a), abs(b))


def test_logdensity_null_space_has_no_quadratic_term():
    S = structure_matrix(10, 2)
    base = igmrf_logdensity(np.zeros(10), 2.0, S)
    assert igmrf_logdensity(np.full(10, 7.0), 2.0, S) == pytest.approx(base, abs=1e-12)


def test_logdensity_doubling_tau(rng):
    S = structure_matrix(10, 2)
    beta = rng.standard_normal(10)
    tau = 1.7
    q = float(beta @ S.R @ beta)
    lhs = igmrf_logdensity(beta, 2 * tau, S) - igmrf_logdensity(beta, tau, S)
    assert lhs == pytest.approx(S.rank / 2 * np.log(2) - tau / 2 * q, abs=1e-12)


def test_logdensity_against_eigen_basis():
    K, tau = 5, 1.0
    S = structure_matrix(K, 1)
    w, V = np.linalg.eigh(S.R)
    keep = w > 1e-9
    z = V[:, keep].T @ np.eye(K)[0]
    oracle = stats.norm.logpdf(z, scale=1 / np.sqrt(tau * w[keep])).sum()
    assert igmrf_logdensity(np.eye(K)[0], tau, S) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0])
def test_generalized_determinant_scaling(tau):
    S = structure_matrix(12, 2)
    w = np.linalg.eigvalsh(tau * S.R)
    log_det_tau = np.sum(np.log(w[w > 1e-10 * w.max()]))
    assert abs(log_det_tau - S.log_pdet - S.rank * np.log(tau)) <= 1e-10


def test_logdensity_rejects():
    S = structure_matrix(6, 2)
    with pytest.raises(InvalidArgumentsError):
        igmrf_logdensity(np.zeros(6), 0.0, S)
    with pytest.raises(InvalidArgumentsError):
        igmrf_logdensity(np.zeros(5), 1.0, S)


def test_pinv_toy():
    # R for K=3, r=1 has pseudoinverse [[5,-1,-4],[-1,2,-1],[-4,-1,5]] / 9
    S = structure_matrix(3, 1)
    np.testing.assert_allclose(S.pinv, np.array([[5, -1, -4], [-1, 2, -1], [-4, -1, 5]]) / 9,
                               atol=1e-14)


def test_sample_identity(rng):
    g = CanonicalGaussian(np.zeros(3), np.eye(3))
    X = g.draw(rng.standard_normal((3, 100_000)))
    assert np.max(np.abs(X.mean(axis=1))) < 0.02


def test_sample_diagonal(rng):
    g = CanonicalGaussian([4.0, 18.0], np.diag([4.0, 9.0]))
    np.testing.assert_allclose(g.mean, [1.0, 2.0])
    X = g.draw(rng.standard_normal((2, 100_000)))
    np.testing.assert_allclose(X.mean(axis=1), [1, 2], atol=0.01)
    np.testing.assert_allclose(X.std(axis=1), [0.5, 1 / 3], rtol=0.01)


def test_sample_covariance_matches_inverse(rng):
    k, N = 6, 100_000
    Q = random_spd(rng, k)
    g = CanonicalGaussian(rng.standard_normal(k), Q)
    X = g.draw(rng.standard_normal((k, N)))
    Sigma = np.linalg.inv(Q)
    emp = np.cov(X)
    se = np.sqrt((np.outer(np.diag(Sigma), np.diag(Sigma)) + Sigma**2) / N)
    assert np.max(np.abs(emp - Sigma) / se) <= 5
    mean_se = np.sqrt(np.diag(Sigma) / N)
    assert np.max(np.abs(X.mean(axis=1) - np.linalg.solve(Q, g.b)) / mean_se) <= 3.5


def test_sample_canonical_is_seeded():
    g = CanonicalGaussian(np.ones(4), 2 * np.eye(4))
    a = sample_canonical(g, np.random.default_rng(5))
    b = sample_canonical(g, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        CanonicalGaussian(np.zeros(3), structure_matrix(3, 1).R)


def test_constrain_sum_to_zero():
    beta = np.array([1.0, 4.0, -2.0, 5.0])
    out = constrain(beta, np.eye(4), np.ones((1, 4)))
    np.testing.assert_allclose(out, beta - beta.mean(), atol=1e-14)


def kkt_oracle(beta, Q, A):
    k, m = Q.shape[0], A.shape[0]
    M = np.block([[Q, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([Q @ beta, np.zeros(m)])
    return np.linalg.solve(M, rhs)[:k]


def test_constrain_matches_kkt(rng):
    Q = random_spd(rng, 6)
    A = rng.standard_normal((2, 6))
    beta = rng.standard_normal(6)
    np.testing.assert_allclose(constrain(beta, Q, A), kkt_oracle(beta, Q, A), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(3, 12), m=st.integers(1, 2))
def test_constrain_properties(seed, k, m):
    rng = np.random.default_rng(seed)
    Q = random_spd(rng, k)
    A = rng.standard_normal((m, k))
    beta = 10 * rng.standard_normal(k)
    c = constrain(beta, Q, A)
    assert np.max(np.abs(rescale_constraints(A) @ c)) <= 1e-8
    assert np.max(np.abs(constrain(c, Q, A) - c)) <= 1e-10 * max(1.0, np.abs(c).max())


def test_constrain_accepts_factorized_precision(rng):
    Q = random_spd(rng, 5)
    A = rng.standard_normal((2, 5))
    beta = rng.standard_normal(5)
    g = CanonicalGaussian(np.zeros(5), Q)
    np.testing.assert_array_equal(constrain(beta, g, A), constrain(beta, Q, A))


def test_constrain_rank_deficient():
    A = np.array([[1.0, 2, 3, 4], [2.0, 4, 6, 8]])
    with pytest.raises(RankDeficientConstraintsError):
        constrain(np.ones(4), np.eye(4), A)
    with pytest.raises(RankDeficientConstraintsError):
        constrain(np.ones(2), np.eye(2), np.eye(2))


def test_rescale_rows():
    A = rescale_constraints([[2.0, -8.0], [0.5, 0.25]])
    np.testing.assert_allclose(A, [[0.25, -1.0], [1.0, 0.5]])


def test_constrained_logpdf_on_subspace(rng):
    k = 6
    Q = random_spd(rng, k)
    b = rng.standard_normal(k)
    A = rng.standard_normal((2, k))
    g = CanonicalGaussian(b, Q)
    As = rescale_constraints(A)
    N = linalg.null_space(As)
    Qz = N.T @ Q @ N
    mz = np.linalg.solve(Qz, N.T @ b)
    for _ in range(3):
        z = rng.standard_normal(k - 2)
        x = N @ z
        oracle = stats.multivariate_normal(mz, np.linalg.inv(Qz)).logpdf(z)
        lhs = constrained_logpdf(x, g, A) - 0.5 * np.linalg.slogdet(As @ As.T)[1]
        assert lhs == pytest.approx(oracle, abs=1e-10)
