"""Equally spaced B-spline bases and design matrices.

The knot vector is uniform and extends ``degree`` knots past each end of the
domain with the same spacing, so every one of the ``K`` functions is a
translated copy of the cardinal B-spline. This is the layout that makes a
difference penalty on the coefficients meaningful.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentsError


@dataclass(frozen=True)
class BSplineBasis:
    domain_lo: float
    domain_hi: float
    K: int
    degree: int = 3
    knots: np.ndarray = field(repr=False, default=None)

    @property
    def spacing(self):
        return (self.domain_hi - self.domain_lo) / (self.K - self.degree)


@dataclass(frozen=True)
class DesignMatrix:
    B: np.ndarray
    x: np.ndarray
    basis: BSplineBasis

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def K(self):
        return self.B.shape[1]


def make_basis(domain_lo, domain_hi, K, degree=3):
    """Build a uniform B-spline basis with ``K`` functions on ``[domain_lo, domain_hi]``.

    The domain is split into ``K - degree`` intervals of width
    ``h = (domain_hi - domain_lo) / (K - degree)``; the knot vector has
    ``K + degree + 1`` entries starting at ``domain_lo - degree * h``.
    """
    domain_lo = float(domain_lo)
    domain_hi = float(domain_hi)
    if not (np.isfinite(domain_lo) and np.isfinite(domain_hi)) or domain_lo >= domain_hi:
        raise InvalidArgumentsError(
            f"degenerate domain [{domain_lo}, {domain_hi}]; need domain_lo < domain_hi"
        )
    if int(degree) != degree or degree < 0:
        raise InvalidArgumentsError(f"degree must be a non-negative integer, got {degree}")
    if int(K) != K or K <= degree:
        raise InvalidArgumentsError(f"need K > degree, got K={K}, degree={degree}")
    K, degree = int(K), int(degree)
    h = (domain_hi - domain_lo) / (K - degree)
    knots = domain_lo + h * np.arange(-degree, K + 1, dtype=float)
    # pin the domain end exactly so the closed last interval is found reliably
    knots[K] = domain_hi
    knots.setflags(write=False)
    return BSplineBasis(domain_lo, domain_hi, K, degree, knots)


def _interval_index(basis, x):
    # interval i satisfies knots[i] <= x < knots[i+1], i in [degree, K-1];
    # x == domain_hi goes into the last interval
    t = basis.knots
    p, K = basis.degree, basis.K
    idx = np.searchsorted(t, x, side="right") - 1
    return np.clip(idx, p, K - 1)


def _local_basis(basis, x, span):
    """Nonzero basis values at ``x``: columns ``span - degree .. span``.

    Triangular Cox-de Boor scheme, vectorized over points.
    """
    t = basis.knots
    p = basis.degree
    m = x.shape[0]
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.empty((m, p + 1))
    right = np.empty((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def evaluate_design(basis, x):
    """Evaluate all ``K`` basis functions at each covariate value.

    Parameters
    ----------
    basis : BSplineBasis
    x : array_like, shape (n,)
        Covariate values, all inside ``[domain_lo, domain_hi]``.

    Returns
    -------
    DesignMatrix
        ``B[i, k]`` is the k-th B-spline evaluated at ``x[i]``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise InvalidArgumentsError("x must be one-dimensional")
    bad = np.flatnonzero(~((x >= basis.domain_lo) & (x <= basis.domain_hi)))
    if bad.size:
        i = int(bad[0])
        raise InvalidArgumentsError(
            f"x[{i}] = {x[i]!r} lies outside the domain "
            f"[{basis.domain_lo}, {basis.domain_hi}]"
        )
    p = basis.degree
    span = _interval_index(basis, x)
    vals = _local_basis(basis, x, span)
    B = np.zeros((x.shape[0], basis.K))
    rows = np.arange(x.shape[0])[:, None]
    cols = span[:, None] - p + np.arange(p + 1)[None, :]
    B[rows, cols] = vals
    x = x.copy()
    x.setflags(write=False)
    B.setflags(write=False)
    return DesignMatrix(B=B, x=x, basis=basis)


def uniform_grid(domain_lo, domain_hi, n, closed=True):
    """Regular grid of ``n`` points; ``closed=False`` drops the upper end."""
    if closed:
        return np.linspace(domain_lo, domain_hi, n)
    return domain_lo + (domain_hi - domain_lo) * np.arange(n) / n
