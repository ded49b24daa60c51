"""Block-updating Metropolis-Hastings samplers for Bayesian P-splines.

Two samplers are provided:

* :func:`run_algorithm1` updates ``(tau_eps, tau_beta, beta)`` jointly for a
  single smooth ``y = B beta + eps``.
* :func:`run_algorithm2` handles the additive model
  ``y = X gamma + sum_j B_j beta_j + eps`` with two linear constraints per
  smooth, alternating a ``(tau_eps, gamma)`` block with one
  ``(tau_beta_j, beta_j)`` block per smooth.

Precisions are proposed multiplicatively, ``tau* = t * tau`` with ``t`` on
``[1/T, T]`` and density proportional to ``1 + 1/t``. That kernel is
symmetric in ``(tau, tau*)``, so only the target enters the acceptance ratio.
The target for a hyperparameter block is the marginal obtained by dividing
the joint density by the full conditional of the Gaussian block, evaluated
at the freshly drawn Gaussian candidate.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.special import gammaln, lambertw

from .dofmap import build_mapping, inverse_dof, inverse_log_ratio
from .errors import DesignSingularError, InvalidArgumentsError
from .gmrf import (
    LOG_2PI,
    CanonicalGaussian,
    constrain,
    constrained_logpdf,
    igmrf_logdensity,
    rescale_constraints,
)
from .priors import GammaSpec, gamma_logdensity_tau

logger = logging.getLogger(__name__)

LOG_SUPPORT = 20.0


@dataclass(frozen=True)
class ProposalConfig:
    T: float = 1.5

    def __post_init__(self):
        if not self.T > 1:
            raise InvalidArgumentsError(f"proposal bound T must exceed 1, got {self.T}")

    @property
    def normalizer(self):
        return (self.T - 1.0 / self.T) + 2.0 * np.log(self.T)


@dataclass(frozen=True)
class HyperPriorChoice:
    """Prior on the noise precision: ``"reciprocal"`` (improper 1/tau) or ``"gamma"``."""

    tag: str = "reciprocal"
    a: float = None
    b: float = None

    def __post_init__(self):
        if self.tag not in ("reciprocal", "gamma"):
            raise InvalidArgumentsError(f"unknown noise-precision prior {self.tag!r}")
        if self.tag == "gamma" and not (self.a and self.b and self.a > 0 and self.b > 0):
            raise InvalidArgumentsError("gamma hyperprior needs positive a and b")

    @classmethod
    def gamma(cls, a, b):
        return cls("gamma", float(a), float(b))

    @classmethod
    def parse(cls, text):
        """Parse ``"reciprocal"`` or ``"gamma:a,b"``."""
        text = text.strip()
        if text == "reciprocal":
            return cls()
        if text.startswith("gamma:"):
            try:
                a, b = (float(v) for v in text[6:].split(","))
            except ValueError as exc:
                raise InvalidArgumentsError(f"cannot parse hyperprior {text!r}") from exc
            return cls.gamma(a, b)
        raise InvalidArgumentsError(f"hyperprior must be 'reciprocal' or 'gamma:a,b', got {text!r}")

    def logpdf(self, tau):
        if self.tag == "reciprocal":
            return -np.log(tau)
        return self.a * np.log(self.b) - gammaln(self.a) + (self.a - 1.0) * np.log(tau) - self.b * tau

    def __str__(self):
        return "reciprocal" if self.tag == "reciprocal" else f"gamma:{self.a:g},{self.b:g}"


class PCDofPrior:
    """PC prior on ``tau_beta`` given ``tau_eps``, calibrated by ``Pr(d > U) = alpha``.

    ``theta(tau_eps) = -log(alpha) * sqrt(tau_eps * d^{-1}(U | 1))``. With
    ``reinvert=True`` the inverse mapping is solved afresh at each
    ``tau_eps`` instead of being rescaled; the two agree to round-off.
    """

    kind = "pc"

    def __init__(self, mapping, U, alpha, reinvert=False):
        if not (0.0 < alpha < 1.0):
            raise InvalidArgumentsError(f"alpha must lie in (0, 1), got {alpha}")
        self.mapping = mapping
        self.U = float(U)
        self.alpha = float(alpha)
        self.reinvert = reinvert
        self.inv_at_unit = inverse_dof(mapping, U, 1.0)
        self._neg_log_alpha = -np.log(alpha)

    def theta(self, tau_eps):
        if self.reinvert:
            return self._neg_log_alpha * np.sqrt(_inverse_dof_direct(self.mapping, self.U, tau_eps))
        return self._neg_log_alpha * np.sqrt(tau_eps * self.inv_at_unit)

    def logpdf(self, tau_beta, tau_eps):
        theta = self.theta(tau_eps)
        return np.log(0.5 * theta) - 1.5 * np.log(tau_beta) - theta / np.sqrt(tau_beta)


class GammaTauPrior:
    """Gamma(a, b) on ``tau_beta``, independent of ``tau_eps``."""

    kind = "gamma"

    def __init__(self, spec):
        self.spec = spec

    def theta(self, tau_eps):
        return np.nan

    def logpdf(self, tau_beta, tau_eps):
        return gamma_logdensity_tau(tau_beta, self.spec)


def _inverse_dof_direct(m, U, tau_eps):
    # solve d(tau_beta | tau_eps) = U over log(tau_beta) without the ratio shortcut
    log_te = np.log(tau_eps)
    s0 = inverse_log_ratio(m, U)
    f = lambda lt: float(m.d_of_log_ratio(lt - log_te)) - U
    lo, hi = s0 + log_te - 1.0, s0 + log_te + 1.0
    lt = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return float(np.exp(lt))


@dataclass
class PosteriorDraws:
    tau_eps: np.ndarray
    tau_beta: np.ndarray
    beta: list
    gamma: np.ndarray
    dof: np.ndarray
    theta: np.ndarray
    acceptance: dict
    seed: object
    n_iter: int
    burn_in: int
    thin: int
    rejected_out_of_support: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.tau_eps.shape[0]

    def beta_mean(self, j=0):
        return self.beta[j].mean(axis=0)


def propose_precision(tau, cfg, rng):
    """Multiplicative proposal ``t * tau``, ``t`` on ``[1/T, T]`` with density ~ 1 + 1/t."""
    return tau * _draw_t(rng.random(), cfg)


def _draw_t(u, cfg):
    # CDF(t) * Z = (t - 1/T) + log(t T); solve t + log t = c with Lambert W
    T = cfg.T
    c = u * cfg.normalizer + 1.0 / T - math.log(T)
    t = lambertw(math.exp(c)).real
    return min(max(float(t), 1.0 / T), T)


def proposal_density(tau_new, tau_old, cfg):
    """Density of proposing ``tau_new`` from ``tau_old``; symmetric in its arguments."""
    t = tau_new / tau_old
    inside = (t >= 1.0 / cfg.T) & (t <= cfg.T)
    return np.where(inside, (tau_new + tau_old) / (tau_new * tau_old) / cfg.normalizer, 0.0)


def _in_support(tau_eps, tau_betas):
    if abs(np.log(tau_eps)) > LOG_SUPPORT:
        return False
    for tb in tau_betas:
        if abs(np.log(tb / tau_eps)) > LOG_SUPPORT:
            return False
    return True


class SpectralConditional:
    """Full conditional ``N_C(tau_eps B^T y, tau_eps B^T B + tau_beta R)`` in a shared eigenbasis.

    With ``B^T B = L L^T`` and ``L^{-1} R L^{-T} = U diag(w) U^T``, the map
    ``M = L^{-T} U`` gives ``M^T Q M = diag(tau_eps + tau_beta w)`` for every
    pair of precisions, so draws and densities need no factorization.
    """

    def __init__(self, model, tau_eps, tau_beta):
        self.model = model
        self.prec_diag = tau_eps + tau_beta * model.w
        self.mean = model.M @ (tau_eps * model.c / self.prec_diag)

    @property
    def log_det_Q(self):
        return float(np.sum(np.log(self.prec_diag))) + self.model.log_det_BtB

    def draw(self, z):
        return self.mean + self.model.M @ (z / np.sqrt(self.prec_diag))

    def logpdf(self, x):
        zeta = self.model.M_inv @ (x - self.mean)
        q = float(self.prec_diag @ (zeta * zeta))
        return -0.5 * self.mean.shape[0] * LOG_2PI + 0.5 * self.log_det_Q - 0.5 * q


class SmoothModel:
    """Sufficient statistics of ``y = B beta + eps`` for the single-smooth sampler."""

    def __init__(self, y, B, S):
        self.y = np.asarray(y, dtype=float)
        self.B = np.asarray(getattr(B, "B", B), dtype=float)
        if self.B.shape != (self.y.shape[0], S.K):
            raise InvalidArgumentsError(
                f"design shape {self.B.shape} does not match n={self.y.shape[0]}, K={S.K}"
            )
        self.S = S
        self.n = self.y.shape[0]
        self.BtB = self.B.T @ self.B
        self.Bty = self.B.T @ self.y
        self._spectral = None

    def full_conditional(self, tau_eps, tau_beta):
        return CanonicalGaussian(tau_eps * self.Bty, tau_eps * self.BtB + tau_beta * self.S.R)

    def fast_conditional(self, tau_eps, tau_beta):
        if self._spectral is None:
            self._prepare_spectral()
        return SpectralConditional(self, tau_eps, tau_beta)

    def _prepare_spectral(self):
        try:
            L = np.linalg.cholesky(self.BtB)
        except np.linalg.LinAlgError as exc:
            raise DesignSingularError("B^T B is not positive definite") from exc
        Linv_R = linalg.solve_triangular(L, self.S.R, lower=True)
        C = linalg.solve_triangular(L, Linv_R.T, lower=True)
        w, U = np.linalg.eigh(0.5 * (C + C.T))
        self.w = np.maximum(w, 0.0)
        self.M = linalg.solve_triangular(L, U, trans="T", lower=True)
        self.M_inv = U.T @ L.T
        self.c = self.M.T @ self.Bty
        self.log_det_BtB = 2.0 * float(np.sum(np.log(np.diag(L))))
        self._spectral = True

    def loglik(self, beta, tau_eps):
        resid = self.y - self.B @ beta
        return 0.5 * self.n * (np.log(tau_eps) - LOG_2PI) - 0.5 * tau_eps * float(resid @ resid)

    def log_joint_hyper(self, beta, g, tau_eps, tau_beta, prior, hyper, likelihood=True):
        if not likelihood:
            return prior.logpdf(tau_beta, tau_eps) + hyper.logpdf(tau_eps)
        return (self.loglik(beta, tau_eps)
                + igmrf_logdensity(beta, tau_beta, self.S)
                + prior.logpdf(tau_beta, tau_eps)
                + hyper.logpdf(tau_eps)
                - g.logpdf(beta))


def beta_full_conditional(y, B, tau_eps, tau_beta, S):
    """Full conditional of the coefficients: ``N_C(tau_eps B^T y, tau_eps B^T B + tau_beta R)``."""
    return SmoothModel(y, B, S).full_conditional(tau_eps, tau_beta)


def log_joint_hyper(y, B, S, beta, tau_eps, tau_beta, prior, hyper=HyperPriorChoice()):
    """Log posterior of ``(tau_eps, tau_beta)`` up to a constant, via the candidate ``beta``.

    Joint density of data, coefficients and precisions divided by the full
    conditional of the coefficients, both evaluated at ``beta``. The result
    does not depend on ``beta``. ``prior`` is a :class:`PCDofPrior` or
    :class:`GammaTauPrior`; for the PC prior its rate is recomputed at
    ``tau_eps``.
    """
    model = SmoothModel(y, B, S)
    g = model.full_conditional(tau_eps, tau_beta)
    return model.log_joint_hyper(np.asarray(beta, dtype=float), g, tau_eps, tau_beta, prior, hyper)


def _n_stored(n_iter, burn_in, thin):
    if n_iter < 1 or thin < 1 or not (0 <= burn_in < n_iter):
        raise InvalidArgumentsError(
            f"need n_iter >= 1, thin >= 1 and 0 <= burn_in < n_iter; got "
            f"n_iter={n_iter}, burn_in={burn_in}, thin={thin}"
        )
    return (n_iter - burn_in) // thin


def _tau_beta_prior(mapping, U, alpha, tau_beta_prior, reinvert):
    if tau_beta_prior is None:
        if U is None:
            raise InvalidArgumentsError("either U (PC prior) or a Gamma tau_beta_prior is required")
        return PCDofPrior(mapping, U, alpha, reinvert=reinvert)
    if isinstance(tau_beta_prior, GammaSpec):
        return GammaTauPrior(tau_beta_prior)
    return tau_beta_prior


def run_algorithm1(y, B, S, U=None, alpha=0.01, cfg=ProposalConfig(), n_iter=5000,
                   burn_in=None, thin=1, seed=None, hyper=HyperPriorChoice(),
                   tau_beta_prior=None, likelihood=True, fix_hyper=False, init=None,
                   reinvert=False, mapping=None):
    """Joint block update of ``(tau_eps, tau_beta, beta)`` for one smooth.

    Parameters
    ----------
    y : array_like, shape (n,)
    B : DesignMatrix or ndarray, shape (n, K)
    S : IGMRFStructure
    U, alpha : float
        Calibration of the PC prior, ``Pr(d > U) = alpha``. Ignored when
        ``tau_beta_prior`` is given.
    cfg : ProposalConfig
    n_iter, burn_in, thin : int
        ``burn_in`` defaults to ``n_iter // 2``.
    seed : int or numpy.random.SeedSequence
    hyper : HyperPriorChoice
        Prior on ``tau_eps``.
    tau_beta_prior : GammaSpec, optional
        Replace the PC prior by a Gamma prior on ``tau_beta`` (no rescaling).
    likelihood : bool
        If False the data are ignored and the chain targets the prior on the
        precisions; coefficients are then not sampled.
    fix_hyper : bool
        Keep the precisions at their initial values and draw only ``beta``.
    init : dict, optional
        Initial ``tau_eps``, ``tau_beta`` and/or ``beta``.
    reinvert : bool
        Solve the inverse mapping at each proposed ``tau_eps`` rather than
        rescaling the unit-noise solution.
    """
    if burn_in is None:
        burn_in = n_iter // 2
    n_keep = _n_stored(n_iter, burn_in, thin)
    model = SmoothModel(y, B, S)
    m = mapping if mapping is not None else build_mapping(model.B, S)
    prior = _tau_beta_prior(m, U, alpha, tau_beta_prior, reinvert)
    rng = np.random.default_rng(seed)
    K = S.K
    init = dict(init or {})

    if "tau_eps" in init:
        tau_eps = float(init["tau_eps"])
    else:
        var = float(np.var(model.y, ddof=1)) if model.n > 1 else 0.0
        tau_eps = 1.0 / var if likelihood and var > 0 else 1.0
    tau_beta = float(init.get("tau_beta", inverse_dof(m, 0.5 * (m.r + m.K), tau_eps)))
    if likelihood:
        g = model.fast_conditional(tau_eps, tau_beta)
        beta = np.asarray(init["beta"], dtype=float) if "beta" in init else g.draw(rng.standard_normal(K))
    else:
        g = None
        beta = np.zeros(K)
    current = model.log_joint_hyper(beta, g, tau_eps, tau_beta, prior, hyper, likelihood)

    out_te = np.empty(n_keep)
    out_tb = np.empty((n_keep, 1))
    out_beta = np.empty((n_keep, K))
    out_theta = np.empty((n_keep, 1))
    n_accept = 0
    n_outside = 0
    k = 0
    if fix_hyper:
        g = model.fast_conditional(tau_eps, tau_beta)

    for it in range(1, n_iter + 1):
        if fix_hyper:
            beta = g.draw(rng.standard_normal(K))
            n_accept += 1
        else:
            te_new = tau_eps * _draw_t(rng.random(), cfg)
            tb_new = tau_beta * _draw_t(rng.random(), cfg)
            z = rng.standard_normal(K) if likelihood else None
            u = rng.random()
            if not _in_support(te_new, (tb_new,)):
                n_outside += 1
            else:
                if likelihood:
                    g_new = model.fast_conditional(te_new, tb_new)
                    beta_new = g_new.draw(z)
                else:
                    g_new, beta_new = None, beta
                cand = model.log_joint_hyper(beta_new, g_new, te_new, tb_new, prior, hyper,
                                             likelihood)
                if np.log(u) < cand - current:
                    tau_eps, tau_beta, beta, current = te_new, tb_new, beta_new, cand
                    n_accept += 1
        if it > burn_in and (it - burn_in) % thin == 0:
            out_te[k] = tau_eps
            out_tb[k, 0] = tau_beta
            out_beta[k] = beta
            out_theta[k, 0] = prior.theta(tau_eps)
            k += 1

    if n_outside:
        logger.warning("%d proposals left the precision support [exp(-%g), exp(%g)] and were rejected",
                       n_outside, LOG_SUPPORT, LOG_SUPPORT)
    ratio = out_tb[:, 0] / out_te
    d = m.r + np.sum(1.0 / (1.0 + ratio[:, None] * m.nonzero_v), axis=1)
    return PosteriorDraws(
        tau_eps=out_te, tau_beta=out_tb, beta=[out_beta], gamma=np.empty((n_keep, 0)),
        dof=d[:, None], theta=out_theta,
        acceptance={"hyper": n_accept / n_iter},
        seed=seed, n_iter=n_iter, burn_in=burn_in, thin=thin,
        rejected_out_of_support=n_outside,
        meta={"algorithm": 1, "prior": prior.kind, "hyper": str(hyper), "T": cfg.T},
    )


@dataclass
class SmoothBlock:
    """One additive smooth: design, structure, calibration and constraints.

    ``A`` defaults to the two rows ``1^T B`` and ``l^T B`` with
    ``l = (1, ..., n)``, each divided by its largest absolute entry.
    """

    B: np.ndarray
    S: object
    U: float = None
    alpha: float = 0.01
    A: np.ndarray = None
    tau_beta_prior: object = None
    name: str = ""

    def __post_init__(self):
        self.B = np.asarray(getattr(self.B, "B", self.B), dtype=float)
        if self.A is None:
            self.A = linear_constraints(self.B)
        else:
            self.A = rescale_constraints(self.A)


def linear_constraints(B):
    """Constant and line constraints ``[1^T B; l^T B]``, rows rescaled."""
    B = np.asarray(getattr(B, "B", B), dtype=float)
    n = B.shape[0]
    A = np.vstack([np.ones(n) @ B, np.arange(1, n + 1, dtype=float) @ B])
    return rescale_constraints(A)


class _BlockState:
    def __init__(self, blk, y_len, reinvert):
        self.blk = blk
        self.B = blk.B
        self.S = blk.S
        if self.B.shape != (y_len, blk.S.K):
            raise InvalidArgumentsError(
                f"smooth {blk.name!r}: design shape {self.B.shape} does not match n={y_len}, "
                f"K={blk.S.K}"
            )
        self.BtB = self.B.T @ self.B
        self.mapping = build_mapping(self.B, blk.S)
        self.prior = _tau_beta_prior(self.mapping, blk.U, blk.alpha, blk.tau_beta_prior, reinvert)
        self.m = self.blk.A.shape[0]
        # exponent of tau_beta in the prior restricted to {A beta = 0}
        self.prior_dim = blk.S.K - self.m
        if blk.S.order_r > self.m:
            raise InvalidArgumentsError(
                f"smooth {blk.name!r}: random-walk order {blk.S.order_r} exceeds the number of "
                f"constraints {self.m}; the constrained prior would be improper"
            )

    def conditional(self, ytil, tau_eps, tau_beta):
        return CanonicalGaussian(tau_eps * (self.B.T @ ytil), tau_eps * self.BtB + tau_beta * self.S.R)

    def log_target(self, beta, g, ytil, tau_eps, tau_beta, likelihood=True):
        prior_tb = self.prior.logpdf(tau_beta, tau_eps)
        if not likelihood:
            return prior_tb
        resid = ytil - self.B @ beta
        Dbeta = self.S.D @ beta
        return (-0.5 * tau_eps * float(resid @ resid)
                + 0.5 * self.prior_dim * np.log(tau_beta) - 0.5 * tau_beta * float(Dbeta @ Dbeta)
                + prior_tb
                - constrained_logpdf(beta, g, self.blk.A))


def run_algorithm2(y, X, blocks, tau_gamma=1e-4, cfg=ProposalConfig(), n_iter=5000,
                   burn_in=None, thin=1, seed=None, hyper=HyperPriorChoice(),
                   likelihood=True, init=None, reinvert=False):
    """Additive P-splines under linear constraints.

    Each iteration runs one MH step for ``(tau_eps, gamma)`` and one per
    smooth for ``(tau_beta_j, beta_j)``; coefficient candidates are drawn
    from their full conditional and corrected onto ``A_j beta_j = 0``. The
    PC rates ``theta_j`` follow ``tau_eps`` and are refreshed whenever the
    first block is accepted.

    Parameters
    ----------
    y : array_like, shape (n,)
    X : array_like, shape (n, p)
        Fixed-effect design, including the intercept and linear terms.
    blocks : list of SmoothBlock
    tau_gamma : float
        Prior precision of the fixed effects.
    """
    if burn_in is None:
        burn_in = n_iter // 2
    n_keep = _n_stored(n_iter, burn_in, thin)
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != y.shape[0]:
        X = X.T
    n, p = X.shape
    if not tau_gamma > 0:
        raise InvalidArgumentsError(f"tau_gamma must be positive, got {tau_gamma}")
    states = [_BlockState(b, n, reinvert) for b in blocks]
    J = len(states)
    XtX = X.T @ X
    rng = np.random.default_rng(seed)
    init = dict(init or {})

    gamma = np.asarray(init["gamma"], dtype=float) if "gamma" in init else \
        np.linalg.lstsq(X, y, rcond=None)[0]
    if "tau_eps" in init:
        tau_eps = float(init["tau_eps"])
    else:
        var = float(np.var(y - X @ gamma, ddof=1)) if n > 1 else 0.0
        tau_eps = 1.0 / var if likelihood and var > 1e-12 else 1.0
    tau_beta = np.array(init.get("tau_beta", [
        inverse_dof(st.mapping, 0.5 * (st.mapping.r + st.mapping.K), tau_eps) for st in states
    ]), dtype=float)
    betas = [np.zeros(st.S.K) for st in states]
    fits = [np.zeros(n) for _ in states]
    if likelihood:
        for j, st in enumerate(states):
            if "beta" in init:
                betas[j] = np.asarray(init["beta"][j], dtype=float)
            else:
                ytil = y - X @ gamma - (sum(fits) - fits[j])
                g = st.conditional(ytil, tau_eps, tau_beta[j])
                betas[j] = constrain(g.draw(rng.standard_normal(st.S.K)), g, st.blk.A)
            fits[j] = st.B @ betas[j]

    def gamma_conditional(te, ytil):
        return CanonicalGaussian(te * (X.T @ ytil), te * XtX + tau_gamma * np.eye(p))

    def eps_target(te, gam, g, ytil):
        val = hyper.logpdf(te) + sum(st.prior.logpdf(tau_beta[j], te) for j, st in enumerate(states))
        if not likelihood:
            return val
        resid = ytil - X @ gam
        return (val + 0.5 * n * np.log(te) - 0.5 * te * float(resid @ resid)
                + 0.5 * p * np.log(tau_gamma) - 0.5 * tau_gamma * float(gam @ gam)
                - g.logpdf(gam))

    out_te = np.empty(n_keep)
    out_tb = np.empty((n_keep, J))
    out_gamma = np.empty((n_keep, p))
    out_beta = [np.empty((n_keep, st.S.K)) for st in states]
    out_theta = np.empty((n_keep, J))
    acc_eps = 0
    acc_beta = np.zeros(J, dtype=int)
    n_outside = 0
    thetas = np.array([st.prior.theta(tau_eps) for st in states])
    k = 0

    for it in range(1, n_iter + 1):
        # (tau_eps, gamma) block
        te_new = tau_eps * _draw_t(rng.random(), cfg)
        z = rng.standard_normal(p)
        u = rng.random()
        if not _in_support(te_new, tau_beta):
            n_outside += 1
        else:
            ytil = y - sum(fits) if likelihood else None
            if likelihood:
                g_new = gamma_conditional(te_new, ytil)
                gam_new = g_new.draw(z)
                g_cur = gamma_conditional(tau_eps, ytil)
            else:
                g_new = g_cur = None
                gam_new = gamma
            cand = eps_target(te_new, gam_new, g_new, ytil)
            cur = eps_target(tau_eps, gamma, g_cur, ytil)
            if np.log(u) < cand - cur:
                tau_eps, gamma = te_new, gam_new
                thetas = np.array([st.prior.theta(tau_eps) for st in states])
                acc_eps += 1

        # (tau_beta_j, beta_j) blocks
        for j, st in enumerate(states):
            tb_new = tau_beta[j] * _draw_t(rng.random(), cfg)
            z = rng.standard_normal(st.S.K)
            u = rng.random()
            if abs(np.log(tb_new / tau_eps)) > LOG_SUPPORT:
                n_outside += 1
                continue
            if likelihood:
                ytil = y - X @ gamma - (sum(fits) - fits[j])
                g_new = st.conditional(ytil, tau_eps, tb_new)
                beta_new = constrain(g_new.draw(z), g_new, st.blk.A)
                g_cur = st.conditional(ytil, tau_eps, tau_beta[j])
            else:
                ytil = g_new = g_cur = None
                beta_new = betas[j]
            cand = st.log_target(beta_new, g_new, ytil, tau_eps, tb_new, likelihood)
            cur = st.log_target(betas[j], g_cur, ytil, tau_eps, tau_beta[j], likelihood)
            if np.log(u) < cand - cur:
                tau_beta[j] = tb_new
                betas[j] = beta_new
                if likelihood:
                    fits[j] = st.B @ beta_new
                acc_beta[j] += 1

        if it > burn_in and (it - burn_in) % thin == 0:
            out_te[k] = tau_eps
            out_tb[k] = tau_beta
            out_gamma[k] = gamma
            for j in range(J):
                out_beta[j][k] = betas[j]
            out_theta[k] = thetas
            k += 1

    if n_outside:
        logger.warning("%d proposals left the precision support [exp(-%g), exp(%g)] and were rejected",
                       n_outside, LOG_SUPPORT, LOG_SUPPORT)
    d = np.empty((n_keep, J))
    for j, st in enumerate(states):
        ratio = out_tb[:, j] / out_te
        d[:, j] = st.mapping.r + np.sum(1.0 / (1.0 + ratio[:, None] * st.mapping.nonzero_v), axis=1)
    acceptance = {"eps_gamma": acc_eps / n_iter}
    for j, st in enumerate(states):
        acceptance[f"beta_{st.blk.name or j + 1}"] = acc_beta[j] / n_iter
    return PosteriorDraws(
        tau_eps=out_te, tau_beta=out_tb, beta=out_beta, gamma=out_gamma, dof=d, theta=out_theta,
        acceptance=acceptance, seed=seed, n_iter=n_iter, burn_in=burn_in, thin=thin,
        rejected_out_of_support=n_outside,
        meta={"algorithm": 2, "hyper": str(hyper), "T": cfg.T, "tau_gamma": tau_gamma,
              "constraints": [st.blk.A for st in states]},
    )
