"""PC and Gamma priors on the smoothing precision, and their induced laws on d.

The PC prior on ``tau_beta`` is a type-2 Gumbel with shape 1/2,

    pi(tau) = (theta / 2) * tau^(-3/2) * exp(-theta / sqrt(tau)),
    F(tau)  = exp(-theta / sqrt(tau)),

and its rate is calibrated so that ``Pr(d > U) = alpha`` on the degrees of
freedom scale.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .dofmap import inverse_dof, inverse_log_ratio
from .errors import InvalidArgumentsError, OutOfRangeError


@dataclass(frozen=True)
class PCPriorSpec:
    U: float
    alpha: float
    theta: float
    tau_eps_ref: float = 1.0

    def theta_at(self, tau_eps):
        """Gumbel rate for another noise precision: theta scales with sqrt(tau_eps)."""
        return self.theta * np.sqrt(tau_eps / self.tau_eps_ref)


@dataclass(frozen=True)
class GammaSpec:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidArgumentsError(f"Gamma shape and rate must be positive, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class PCDerivation:
    tau_beta0: float
    lam: float
    K: int

    def delta(self, tau_beta):
        return np.sqrt(self.tau_beta0 * self.K / np.asarray(tau_beta, dtype=float))


def scale_pc_prior(m, U, alpha, tau_eps=1.0):
    """Gumbel rate such that the induced prior puts mass ``alpha`` on ``d > U``."""
    if not (0.0 < alpha < 1.0):
        raise InvalidArgumentsError(f"alpha must lie in (0, 1), got {alpha}")
    if not tau_eps > 0:
        raise InvalidArgumentsError(f"tau_eps must be positive, got {tau_eps}")
    tau_u = inverse_dof(m, U, tau_eps)
    theta = -np.log(alpha) * np.sqrt(tau_u)
    return PCPriorSpec(U=float(U), alpha=float(alpha), theta=float(theta), tau_eps_ref=float(tau_eps))


def gumbel_cdf(tau_beta, theta):
    return np.exp(-theta / np.sqrt(tau_beta))


def pc_logdensity_tau(tau_beta, theta):
    """Log density of the Gumbel type-2 (1/2, theta) law at ``tau_beta``."""
    tau_beta = np.asarray(tau_beta, dtype=float)
    if np.any(tau_beta <= 0) or not theta > 0:
        raise InvalidArgumentsError("tau_beta and theta must be positive")
    out = np.log(theta / 2.0) - 1.5 * np.log(tau_beta) - theta / np.sqrt(tau_beta)
    return out if out.ndim else float(out)


def gamma_logdensity_tau(tau_beta, g):
    tau_beta = np.asarray(tau_beta, dtype=float)
    out = g.a * np.log(g.b) - gammaln(g.a) + (g.a - 1.0) * np.log(tau_beta) - g.b * tau_beta
    return out if out.ndim else float(out)


def _log_density_logtau(kind_params, logtau):
    # density of log(tau_beta): pi(tau) * tau
    kind, params = kind_params
    if kind == "pc":
        theta = params
        return np.log(theta / 2.0) - 0.5 * logtau - theta * np.exp(-0.5 * logtau)
    g = params
    return g.a * np.log(g.b) - gammaln(g.a) + g.a * logtau - g.b * np.exp(logtau)


def _check_d_grid(m, d_grid):
    d_grid = np.atleast_1d(np.asarray(d_grid, dtype=float))
    bad = np.flatnonzero(~((d_grid > m.r) & (d_grid < m.K)))
    if bad.size:
        i = int(bad[0])
        raise OutOfRangeError(
            f"d_grid[{i}] = {d_grid[i]} outside the open interval ({m.r}, {m.K})",
            lower=m.r,
            upper=m.K,
        )
    return d_grid


def _grid_step(m):
    return float(m.grid_logtau[1] - m.grid_logtau[0])


def induced_density_at_log_ratio(m, kind_params, s, tau_eps=1.0):
    """Density on d at the points ``d(s)``, ``s = log(tau_beta / tau_eps)``.

    The Jacobian ``|d log(tau) / d d|`` is a centered difference with a step of
    one mapping-grid cell.
    """
    s = np.asarray(s, dtype=float)
    h = _grid_step(m)
    jac = 2.0 * h / (m.d_of_log_ratio(s - h) - m.d_of_log_ratio(s + h))
    logtau = s + np.log(tau_eps)
    return np.exp(_log_density_logtau(kind_params, logtau)) * jac


def _density_on_d(m, kind_params, d_grid, tau_eps):
    d_grid = _check_d_grid(m, d_grid)
    s = np.array([inverse_log_ratio(m, d) for d in d_grid])
    return induced_density_at_log_ratio(m, kind_params, s, tau_eps)


def pc_density_on_d(m, spec, d_grid):
    """Density of d induced by the PC prior ``spec`` (at its reference tau_eps)."""
    return _density_on_d(m, ("pc", spec.theta), d_grid, spec.tau_eps_ref)


def gamma_density_on_d(m, g, d_grid, tau_eps=1.0):
    """Density of d induced by a Gamma(a, b) prior on ``tau_beta``."""
    return _density_on_d(m, ("gamma", g), d_grid, tau_eps)


def pc_tail_mass(m, spec):
    """Exact ``Pr(d > U)`` from the Gumbel CDF at ``d^{-1}(U)``."""
    return float(gumbel_cdf(inverse_dof(m, spec.U, spec.tau_eps_ref), spec.theta))


def make_derivation(theta, K, tau_beta0=1e12):
    return PCDerivation(tau_beta0=tau_beta0, lam=theta / np.sqrt(K * tau_beta0), K=K)


def check_gumbel_derivation(theta, tau_beta_grid, tau_beta0=1e12, K=20):
    """Max relative gap between the exponential-on-distance construction and the Gumbel density.

    The distance ``delta = sqrt(tau_beta0 * K / tau_beta)`` gets an
    exponential prior with rate ``theta / sqrt(K * tau_beta0)``; transforming
    it to ``tau_beta`` should give the Gumbel type-2 density exactly.
    """
    der = make_derivation(theta, K, tau_beta0)
    tau = np.asarray(tau_beta_grid, dtype=float)
    delta = der.delta(tau)
    # log of lam * exp(-lam * delta) * |d delta / d tau|, with |d delta / d tau| = delta / (2 tau)
    log_via_distance = np.log(der.lam) - der.lam * delta + np.log(0.5 * delta / tau)
    log_direct = pc_logdensity_tau(tau, theta)
    return float(np.max(np.abs(np.expm1(log_via_distance - log_direct))))
