"""The scaled Generalized Dirichlet distribution.

A GD vector on the simplex of scale ``A`` with shape pairs ``(a_d, b_d)``
is equivalent, through the stick-breaking coordinates of
:func:`gdclassify.simplex.v_transform`, to ``D`` independent scaled Beta
variables ``v_d ~ ScaledBeta(a_d, b_d)`` on ``(0, A)``.  All densities are
evaluated in the log domain.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .errors import DegenerateVariance, DimensionMismatch, InputError
from .simplex import log_jacobian, v_inverse, v_transform

SHAPE_MIN = 1e-3
SHAPE_MAX = 1e4


@dataclass
class GDParams:
    """Shape pairs of one scaled Generalized Dirichlet."""

    a: np.ndarray
    b: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float)).copy()
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise InputError("a and b must be vectors of equal length")
        if np.any(self.a <= 0) or np.any(self.b <= 0):
            raise InputError("GD shape parameters must be strictly positive")

    @property
    def dim(self) -> int:
        return self.a.size

    @property
    def gamma(self) -> np.ndarray:
        """Exponents of the stick remainders, recomputed from the shapes."""
        g = np.empty_like(self.b)
        g[:-1] = self.b[:-1] - (self.a[1:] + self.b[1:])
        g[-1] = self.b[-1] - 1.0
        return g

    @property
    def xi(self) -> np.ndarray:
        """Log-shapes as a ``D x 2`` array (columns ``log a``, ``log b``)."""
        return np.log(np.column_stack([self.a, self.b]))

    @classmethod
    def from_xi(cls, xi, scale=1.0) -> "GDParams":
        xi = np.asarray(xi, dtype=float)
        return cls(np.exp(xi[:, 0]), np.exp(xi[:, 1]), scale)

    def copy(self) -> "GDParams":
        return GDParams(self.a, self.b, self.scale)


def scaled_beta_logpdf(v, a, b, scale=1.0):
    """``log [v^(a-1) (A-v)^(b-1) / (A^(a+b-1) B(a, b))]``, broadcasting."""
    return ((a - 1.0) * np.log(v) + (b - 1.0) * np.log(scale - v)
            - betaln(a, b) - (a + b - 1.0) * np.log(scale))


def _check(params: GDParams, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.dim + 1:
        raise DimensionMismatch(
            f"composition has {X.shape[1]} parts, params expect {params.dim + 1}")
    return X


def log_density_v(params: GDParams, V) -> np.ndarray:
    """Sum of scaled-Beta log densities of stick-breaking coordinates ``V``.

    This is the density of ``v``; it differs from :func:`log_density` by the
    parameter-free log Jacobian of the stick-breaking map.
    """
    V = np.atleast_2d(V)
    return scaled_beta_logpdf(V, params.a, params.b, params.scale).sum(axis=1)


def log_density(params: GDParams, X) -> np.ndarray:
    """Log density of compositions ``X`` (rows) under the scaled GD.

    Computed through the independent-Beta route; normalized with respect to
    Lebesgue measure on the first ``D`` parts.
    """
    X = _check(params, X)
    V = v_transform(X, params.scale)
    return log_density_v(params, V) + log_jacobian(X, params.scale)


def log_density_direct(params: GDParams, X) -> np.ndarray:
    """Closed-form GD log density written on the parts themselves.

    ``prod_d x_d^(a_d-1) (A - S_d)^gamma_d / B(a_d, b_d)`` over ``A^(a_1+b_1-1)``
    with ``S_d`` the running sum of parts.  Kept as an independent check of
    :func:`log_density`.
    """
    X = _check(params, X)
    A = params.scale
    head = X[:, :-1]
    rem = A - np.cumsum(head, axis=1)
    body = ((params.a - 1.0) * np.log(head) + params.gamma * np.log(rem)
            - betaln(params.a, params.b)).sum(axis=1)
    return body - (params.a[0] + params.b[0] - 1.0) * np.log(A)


def sample(params: GDParams, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` compositions (``n x (D+1)``) by breaking the stick with Beta draws."""
    rng = np.random.default_rng(seed)
    A = params.scale
    V = A * rng.beta(params.a, params.b, size=(n, params.dim))
    tiny = 1e-12 * A
    V = np.clip(V, tiny, A - tiny)
    return v_inverse(V, A)


def beta_moments(mean, var):
    """Method-of-moments Beta shapes from the mean and variance of ``v / A``."""
    common = mean * (1.0 - mean) / var - 1.0
    return mean * common, (1.0 - mean) * common


def moment_init(X, scale=1.0, weights=None, strict=False) -> GDParams:
    """Moment-method GD shapes from (optionally weighted) compositions.

    Each stick-breaking coordinate gets its own Beta fit.  A coordinate whose
    variance is zero or too large for a Beta falls back to ``a = b = 1``
    with a :class:`RuntimeWarning` (or raises :class:`DegenerateVariance`
    when ``strict``).  Shapes are clamped to ``[1e-3, 1e4]``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = v_transform(X, scale) / scale
    w = np.ones(len(V)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    total = w.sum()
    # effective sample size, Kish
    if total <= 0 or total ** 2 / np.sum(w ** 2) < 2.0 - 1e-9:
        raise InputError("moment initialization needs at least two effective samples")
    m = w @ V / total
    s2 = w @ (V - m) ** 2 / total
    bad = (s2 <= 0) | (s2 >= m * (1.0 - m))
    if bad.any():
        msg = f"degenerate variance in coordinate(s) {np.flatnonzero(bad).tolist()}"
        if strict:
            raise DegenerateVariance(msg)
        warnings.warn(msg + "; using a = b = 1", RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        a, b = beta_moments(m, np.where(bad, 1.0, s2))
    a = np.where(bad, 1.0, a)
    b = np.where(bad, 1.0, b)
    return GDParams(np.clip(a, SHAPE_MIN, SHAPE_MAX), np.clip(b, SHAPE_MIN, SHAPE_MAX), scale)
