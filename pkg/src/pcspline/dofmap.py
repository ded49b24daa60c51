"""Effective degrees of freedom as a function of the smoothing precision.

For a design ``B`` and structure ``R`` the effective degrees of freedom are

    d(tau_beta | tau_eps) = sum_k 1 / (1 + (tau_beta / tau_eps) * v_k)

with ``v_k`` the eigenvalues of ``R (B^T B)^{-1}``. They depend on the
precisions only through their ratio, which is what makes the inverse at an
arbitrary ``tau_eps`` a rescaling of the inverse at ``tau_eps = 1``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import DesignSingularError, InvalidArgumentsError, OutOfRangeError

GRID_LO = -20.0
GRID_HI = 20.0
GRID_POINTS = 2001
ZERO_TOL = 1e-8


@dataclass(frozen=True)
class DofMapping:
    eigenvalues_v: np.ndarray = field(repr=False)
    K: int
    r: int
    grid_logtau: np.ndarray = field(repr=False)
    grid_d: np.ndarray = field(repr=False)

    @property
    def nonzero_v(self):
        return self.eigenvalues_v[self.r:]

    def d_of_log_ratio(self, s):
        """d at ``log(tau_beta / tau_eps) = s``; vectorized over ``s``."""
        return _dof_sum(self.nonzero_v, self.r, s)

    def ddof_dlog_ratio(self, s):
        """Derivative of d with respect to the log ratio (always negative)."""
        s = np.asarray(s, dtype=float)
        u = np.exp(s)[..., None] * self.nonzero_v
        return -np.sum(u / (1.0 + u) ** 2, axis=-1)


def _dof_sum(v_nonzero, r, s):
    lam = np.exp(np.asarray(s, dtype=float))[..., None]
    return r + np.sum(1.0 / (1.0 + lam * v_nonzero), axis=-1)


def _check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise InvalidArgumentsError(f"{name} must be a positive finite number, got {value}")


def _design_matrix(B):
    return np.asarray(getattr(B, "B", B), dtype=float)


def build_mapping(B, S, grid_lo=GRID_LO, grid_hi=GRID_HI, grid_points=GRID_POINTS):
    """Eigen-decompose the design/penalty pair and tabulate d on a log grid.

    The spectrum of ``R (B^T B)^{-1}`` is taken from the symmetric-definite
    generalized problem ``R u = v (B^T B) u``, which has the same eigenvalues
    and is guaranteed real.
    """
    B = _design_matrix(B)
    n, K = B.shape
    if K != S.K:
        raise InvalidArgumentsError(f"design has {K} columns but structure has K={S.K}")
    if n < K:
        raise DesignSingularError(
            f"B^T B is singular: n={n} observations < K={K} basis functions; "
            "use n >= K or fewer knots"
        )
    BtB = B.T @ B
    try:
        v = linalg.eigh(S.R, BtB, eigvals_only=True)
    except linalg.LinAlgError as exc:
        raise DesignSingularError(
            "B^T B is not positive definite; use n >= K, spread x over the domain, "
            "or fewer knots"
        ) from exc
    v = np.sort(v)
    r = S.order_r
    vmax = v[-1]
    if np.any(v[:r] > ZERO_TOL * vmax) or np.any(v[r:] <= ZERO_TOL * vmax):
        raise DesignSingularError(
            f"expected exactly {r} null eigenvalues of R (B^T B)^-1, got spectrum "
            f"starting {v[:r + 1]}"
        )
    v[:r] = 0.0
    grid = np.linspace(grid_lo, grid_hi, grid_points)
    grid_d = _dof_sum(v[r:], r, grid)
    for a in (v, grid, grid_d):
        a.setflags(write=False)
    return DofMapping(eigenvalues_v=v, K=K, r=r, grid_logtau=grid, grid_d=grid_d)


def dof(m, tau_beta, tau_eps=1.0):
    """Effective degrees of freedom at precisions ``(tau_beta, tau_eps)``."""
    _check_positive("tau_beta", tau_beta)
    _check_positive("tau_eps", tau_eps)
    return float(m.r + np.sum(1.0 / (1.0 + (tau_beta / tau_eps) * m.nonzero_v)))


def inverse_log_ratio(m, U):
    """Solve ``d(exp(s)) = U`` for the log ratio ``s = log(tau_beta / tau_eps)``."""
    if not (m.r < U < m.K):
        raise OutOfRangeError(
            f"U={U} is not attainable; degrees of freedom lie in the open interval "
            f"({m.r}, {m.K})",
            lower=m.r,
            upper=m.K,
        )
    g = m.grid_d
    # grid_d is decreasing; locate the bracketing cell
    i = int(np.searchsorted(-g, -U))
    if 0 < i < g.size:
        lo, hi = m.grid_logtau[i - 1], m.grid_logtau[i]
    else:
        # U beyond the tabulated range: widen geometrically
        step = m.grid_logtau[1] - m.grid_logtau[0]
        if i == 0:
            hi = m.grid_logtau[0]
            lo = hi - step
            while m.d_of_log_ratio(lo) < U:
                lo, hi = lo - 2 * (hi - lo), lo
        else:
            lo = m.grid_logtau[-1]
            hi = lo + step
            while m.d_of_log_ratio(hi) > U:
                lo, hi = hi, hi + 2 * (hi - lo)
    f = lambda s: float(m.d_of_log_ratio(s)) - U
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def inverse_dof(m, U, tau_eps=1.0):
    """Precision ``tau_beta`` at which the mapping equals ``U``, given ``tau_eps``.

    Computed once at ``tau_eps = 1`` and rescaled, since d depends only on
    ``tau_beta / tau_eps``.
    """
    _check_positive("tau_eps", tau_eps)
    return float(tau_eps * np.exp(inverse_log_ratio(m, U)))


def dof_grid_2d(m, logtau_beta, logtau_eps):
    """d over a (log tau_eps, log tau_beta) grid; rows index tau_eps."""
    s = np.asarray(logtau_beta)[None, :] - np.asarray(logtau_eps)[:, None]
    return m.d_of_log_ratio(s)


def marginal_sd_curve(B, S, tau_beta):
    """Marginal standard deviation of ``B beta`` under the IGMRF prior.

    Square roots of ``diag(B R^+ B^T) / tau_beta`` with ``R^+`` the
    Moore-Penrose pseudoinverse of the structure.
    """
    _check_positive("tau_beta", tau_beta)
    B = _design_matrix(B)
    var = np.einsum("ij,jk,ik->i", B, S.pinv, B) / tau_beta
    return np.sqrt(np.maximum(var, 0.0))
