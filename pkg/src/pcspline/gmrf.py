"""Random-walk IGMRF structures and Gaussian sampling in canonical form."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import (
    InvalidArgumentsError,
    NotPositiveDefiniteError,
    RankDeficientConstraintsError,
)

RANK_TOL = 1e-10
LOG_2PI = np.log(2.0 * np.pi)


def difference_matrix(K, r):
    """``(K - r) x K`` matrix applying the r-th forward difference."""
    if int(r) != r or r < 1:
        raise InvalidArgumentsError(f"difference order must be a positive integer, got {r}")
    if int(K) != K or K <= r:
        raise InvalidArgumentsError(f"need K > r, got K={K}, r={r}")
    return np.diff(np.eye(int(K)), n=int(r), axis=0)


@dataclass(frozen=True)
class IGMRFStructure:
    order_r: int
    K: int
    D: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    rank: int

    @cached_property
    def log_pdet(self):
        """Log generalized determinant of R (sum over nonzero eigenvalues)."""
        ev = self.eigenvalues
        return float(np.sum(np.log(ev[ev > RANK_TOL * ev.max()])))

    @cached_property
    def pinv(self):
        w, V = np.linalg.eigh(self.R)
        keep = w > RANK_TOL * w.max()
        return (V[:, keep] / w[keep]) @ V[:, keep].T


def structure_matrix(K, r):
    """Structure ``R = D^T D`` of an r-th order random walk on ``K`` coefficients."""
    D = difference_matrix(K, r)
    R = D.T @ D
    ev = np.linalg.eigvalsh(R)
    rank = int(np.sum(ev > RANK_TOL * ev.max()))
    for a in (D, R, ev):
        a.setflags(write=False)
    return IGMRFStructure(order_r=int(r), K=int(K), D=D, R=R, eigenvalues=ev, rank=rank)


def igmrf_logdensity(beta, tau_beta, S):
    """Log density of the intrinsic GMRF with precision ``tau_beta * R``.

    Uses the generalized determinant, so the value is the density on the
    ``rank``-dimensional row space of R.
    """
    if not tau_beta > 0:
        raise InvalidArgumentsError(f"tau_beta must be positive, got {tau_beta}")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (S.K,):
        raise InvalidArgumentsError(f"beta must have length {S.K}, got shape {beta.shape}")
    Dbeta = S.D @ beta
    quad = float(Dbeta @ Dbeta)
    log_det = S.rank * np.log(tau_beta) + S.log_pdet
    return -0.5 * S.rank * LOG_2PI + 0.5 * log_det - 0.5 * tau_beta * quad


class CanonicalGaussian:
    """Gaussian ``N_C(b, Q)``: precision ``Q`` and mean ``Q^{-1} b``.

    The Cholesky factor is computed on construction; failure means Q is not
    positive definite.
    """

    def __init__(self, b, Q):
        self.b = np.asarray(b, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        try:
            self.L = np.linalg.cholesky(self.Q)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("precision matrix is not positive definite") from exc
        self.mean = linalg.cho_solve((self.L, True), self.b, check_finite=False)

    @property
    def dim(self):
        return self.b.shape[0]

    @property
    def log_det_Q(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def solve(self, v):
        return linalg.cho_solve((self.L, True), v, check_finite=False)

    def draw(self, z):
        """Map standard normal ``z`` to a draw: ``mean + L^{-T} z``.

        ``z`` of shape ``(dim, N)`` gives ``N`` draws as columns.
        """
        z = np.asarray(z, dtype=float)
        mean = self.mean if z.ndim == 1 else self.mean[:, None]
        return mean + linalg.solve_triangular(self.L, z, trans="T", lower=True, check_finite=False)

    def logpdf(self, x):
        resid = np.asarray(x, dtype=float) - self.mean
        q = float(resid @ self.Q @ resid)
        return -0.5 * self.dim * LOG_2PI + 0.5 * self.log_det_Q - 0.5 * q


def sample_canonical(g, rng):
    """Draw from ``N(Q^{-1} b, Q^{-1})`` given a canonical Gaussian ``g``."""
    return g.draw(rng.standard_normal(g.dim))


def rescale_constraints(A):
    """Divide each constraint row by its largest absolute entry."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    scale = np.max(np.abs(A), axis=1, keepdims=True)
    if np.any(scale == 0):
        raise RankDeficientConstraintsError("constraint matrix has an all-zero row")
    return A / scale


def _constraint_system(Q, A):
    if isinstance(Q, CanonicalGaussian):
        g = Q
    else:
        g = CanonicalGaussian(np.zeros(np.shape(Q)[0]), Q)
    A = rescale_constraints(A)
    if A.shape[0] >= A.shape[1]:
        raise RankDeficientConstraintsError(
            f"need fewer constraints than coefficients, got A of shape {A.shape}"
        )
    V = g.solve(A.T)
    W = A @ V
    w = np.linalg.eigvalsh(W)
    if not w[0] > RANK_TOL * w[-1]:
        raise RankDeficientConstraintsError(
            "A Q^{-1} A^T is singular; constraint rows must be linearly independent"
        )
    W_chol = linalg.cho_factor(W, lower=True, check_finite=False)
    return g, A, V, W, W_chol


def constrain(beta, Q, A):
    """Correct a Gaussian draw so that ``A @ beta = 0`` holds.

    ``beta - Q^{-1} A^T (A Q^{-1} A^T)^{-1} A beta``; applied to an
    unconstrained draw with precision ``Q`` this yields a draw from the
    distribution conditioned on the constraints. ``Q`` may be passed as a
    :class:`CanonicalGaussian` to reuse its factorization.
    """
    _, A, V, _, W_chol = _constraint_system(Q, A)
    beta = np.asarray(beta, dtype=float)
    return beta - V @ linalg.cho_solve(W_chol, A @ beta, check_finite=False)


def constrained_logpdf(x, g, A):
    """Log density of ``g`` conditioned on ``A x = 0``, evaluated at ``x``.

    The density is with respect to Lebesgue measure on the constraint
    subspace, up to the term ``0.5 * log|A A^T|`` which depends on A only.
    """
    g, A, V, W, W_chol = _constraint_system(g, A)
    m = A.shape[0]
    Amu = A @ g.mean
    log_det_W = 2.0 * float(np.sum(np.log(np.diag(W_chol[0]))))
    log_pA = (-0.5 * m * LOG_2PI - 0.5 * log_det_W
              - 0.5 * float(Amu @ linalg.cho_solve(W_chol, Amu, check_finite=False)))
    return g.logpdf(x) - log_pA
