"""Reverse-Jensen upper bound on the log of a Generalized Dirichlet mixture.

Component ``k`` of an ``M``-component GD mixture is written as an
exponential-family member with natural parameter

    theta_k = (a_k1, b_k1, ..., a_kD, b_kD, eta_1, ..., eta_{M-1}),
    eta_j = log(alpha_j / alpha_M),

sufficient statistic ``(log v_1, log(A - v_1), ..., one_hot_k)`` and
cumulant ``K``.  For a contact point ``theta~`` the bound

    log sum_k alpha_k GD(x | mu_k)
        <= sum_k -W_k (xdd_k . theta_k - K(theta_k)) + cst

is tangent at the contact point and dominates the exact log mixture elsewhere.
The per-component curvature weight is

    W_k = 4 G(h_k / 2) Z_k'Z_k + w_min_k,

where ``h_k`` is the contact responsibility, ``Z_k'Z_k`` the Mahalanobis
length of ``x_bar_k - K'(theta~_k)`` in the metric ``K''(theta~_k)^-1``, and
``w_min_k`` the smallest weight keeping ``xdd_k`` inside the open mean
space of the family.

The density of a composition differs from ``exp(x_bar . theta - K)`` by a
parameter-free base measure (the ``-1`` exponents and the stick-breaking
Jacobian).  It is common to all components, so it only shifts ``cst``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, logsumexp, polygamma

from .errors import OutOfRange, SingularBlock

W_EPS = 1e-8
SINGULAR_TOL = 1e-12


def trigamma(x):
    return polygamma(1, x)


# ---------------------------------------------------------------------------
# exponential-family reparametrization


def natural_params(a, b, alphas) -> np.ndarray:
    """Interleaved ``(a_1, b_1, ..., a_D, b_D)`` followed by the ``M-1`` logits."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    eta = np.log(alphas[:-1]) - np.log(alphas[-1])
    return np.concatenate([np.column_stack([a, b]).ravel(), eta])


def split_params(theta, D):
    theta = np.asarray(theta, dtype=float)
    ab = theta[:2 * D].reshape(D, 2)
    return ab[:, 0], ab[:, 1], theta[2 * D:]


def logits_to_alphas(eta) -> np.ndarray:
    full = np.append(np.asarray(eta, dtype=float), 0.0)
    return np.exp(full - logsumexp(full))


def sufficient_stats(v, k, M, scale=1.0) -> np.ndarray:
    """``(log v_1, log(A - v_1), ..., log v_D, log(A - v_D), one_hot_k)``.

    The one-hot block has ``M - 1`` entries; it is all zero for ``k = M - 1``.
    """
    v = np.asarray(v, dtype=float)
    onehot = np.zeros(M - 1)
    if k < M - 1:
        onehot[k] = 1.0
    return np.concatenate([np.column_stack([np.log(v), np.log(scale - v)]).ravel(), onehot])


def cumulant(theta, D, scale=1.0) -> float:
    """Log normalizer of one exponential-family component.

    ``log(1 + sum exp(eta)) + sum_d [log B(a_d, b_d) + (a_d + b_d - 1) log A]``.
    """
    a, b, eta = split_params(theta, D)
    cat = logsumexp(np.append(eta, 0.0))
    return float(cat + np.sum(betaln(a, b) + (a + b - 1.0) * np.log(scale)))


def cumulant_grad(theta, D, scale=1.0) -> np.ndarray:
    a, b, eta = split_params(theta, D)
    ab = a + b
    logA = np.log(scale)
    beta_part = np.column_stack([digamma(a) - digamma(ab) + logA,
                                 digamma(b) - digamma(ab) + logA]).ravel()
    return np.concatenate([beta_part, logits_to_alphas(eta)[:-1]])


@dataclass
class CumulantHessian:
    """Block-diagonal Hessian: ``D`` Beta blocks and one softmax block."""

    beta_blocks: np.ndarray   # D x 2 x 2
    softmax_block: np.ndarray  # (M-1) x (M-1)

    def dense(self) -> np.ndarray:
        D = self.beta_blocks.shape[0]
        P = 2 * D + self.softmax_block.shape[0]
        out = np.zeros((P, P))
        for d in range(D):
            out[2 * d:2 * d + 2, 2 * d:2 * d + 2] = self.beta_blocks[d]
        out[2 * D:, 2 * D:] = self.softmax_block
        return out


def beta_block(a, b):
    """``K1_d`` for broadcastable ``a``, ``b``; returns ``(..., 2, 2)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    tab = trigamma(a + b)
    out = np.empty(np.broadcast(a, b).shape + (2, 2))
    out[..., 0, 0] = trigamma(a) - tab
    out[..., 1, 1] = trigamma(b) - tab
    out[..., 0, 1] = out[..., 1, 0] = -tab
    return out


def softmax_block(p):
    p = np.asarray(p, dtype=float)
    return np.diag(p) - np.outer(p, p)


def cumulant_hess(theta, D, scale=1.0) -> CumulantHessian:
    a, b, eta = split_params(theta, D)
    return CumulantHessian(beta_block(a, b), softmax_block(logits_to_alphas(eta)[:-1]))


# ---------------------------------------------------------------------------
# closed-form inverses (rank-one corrections of diagonal matrices)


def beta_block_inverse(a, b):
    """Inverse of ``diag(psi'(a), psi'(b)) + e1 11'`` with ``e1 = -psi'(a+b)``.

    Broadcasts over leading dimensions.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    qa, qb = trigamma(a), trigamma(b)
    e1 = -trigamma(a + b)
    ua, ub = 1.0 / qa, 1.0 / qb
    denom = 1.0 + e1 * (ua + ub)
    if np.any(np.abs(denom) < SINGULAR_TOL):
        raise SingularBlock("Beta block correction denominator vanished")
    e1s = e1 / denom
    out = np.empty(np.broadcast(a, b).shape + (2, 2))
    out[..., 0, 0] = ua - e1s * ua * ua
    out[..., 1, 1] = ub - e1s * ub * ub
    out[..., 0, 1] = out[..., 1, 0] = -e1s * ua * ub
    return out


def softmax_block_inverse(p) -> np.ndarray:
    """Inverse of ``diag(p) - pp'``: ``diag(1/p) + 11' / (1 - sum p)``."""
    p = np.asarray(p, dtype=float)
    rest = 1.0 - p.sum()
    if rest < SINGULAR_TOL or np.any(p < SINGULAR_TOL):
        raise SingularBlock("softmax block is singular")
    return np.diag(1.0 / p) + np.full((p.size, p.size), 1.0 / rest)


def newton_hessian_inverse(r1, r2, e3, a, b):
    """Inverse of ``diag(r1, r2) + e3 gg'`` with ``g = (a, b)``, broadcasting.

    Returns the three distinct entries ``(i11, i12, i22)``.
    """
    g1, g2 = a / r1, b / r2
    denom = 1.0 + e3 * (a * a / r1 + b * b / r2)
    if np.any(np.abs(denom) < SINGULAR_TOL) or np.any(r1 == 0) or np.any(r2 == 0):
        raise SingularBlock("Newton Hessian correction denominator vanished")
    e3s = e3 / denom
    return 1.0 / r1 - e3s * g1 * g1, -e3s * g1 * g2, 1.0 / r2 - e3s * g2 * g2


# ---------------------------------------------------------------------------
# curvature scalar


def g_function(gamma):
    """Curvature scalar ``G`` of the bound, for ``gamma`` in ``[0, 1/2]``.

    With ``u = 1 - 4 gamma``, ``G = u / (8 artanh(u))`` on ``[0, 1/4)`` and
    ``G = 1/8`` beyond.  On the lower branch ``4 G(h/2)`` is the smallest
    curvature ``c`` for which ``log(h e^t + 1 - h) - h t <= c' t^2 / 2``
    with ``1/c' = 1/c(h) + 1/c(1-h)``; the cap at ``1/8`` is the uniform
    quadratic bound of the log-sum-exp.  Nondecreasing, ``G(0) = 0``.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0) or np.any(g > 0.5) or np.any(~np.isfinite(g)):
        raise OutOfRange("G is defined on [0, 1/2]")
    with np.errstate(divide="ignore"):
        out = _g_from_log(np.log(2.0 * g), g)
    return out if out.ndim else float(out)


def _g_from_log(log_h, gamma=None):
    """``G(h / 2)`` from ``log h``.

    ``artanh(1 - 2h) = log((1 - h) / h) / 2`` is evaluated through logs so
    that responsibilities far below machine epsilon keep a positive
    curvature.
    """
    log_h = np.asarray(log_h, dtype=float)
    h = np.exp(log_h) if gamma is None else 2.0 * np.asarray(gamma, dtype=float)
    low = h < 0.5
    safe_h = np.where(low, h, 0.25)
    safe_log = np.where(low, log_h, np.log(0.25))
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 4.0 * (np.log1p(-safe_h) - safe_log)
        val = (1.0 - 2.0 * safe_h) / denom
    # h -> 1/2 is the removable point of the ratio, where it tends to 1/8
    val = np.where(np.abs(0.5 - safe_h) < 1e-6, 0.125, val)
    val = np.where(np.isneginf(safe_log), 0.0, val)
    return np.where(low, val, 0.125)


# ---------------------------------------------------------------------------
# minimum curvature keeping the variational point admissible


def bound_terms(xbar, kprime, resp, D, scale=1.0) -> np.ndarray:
    """The per-coordinate lower limits on ``W`` from the box constraints.

    One value per Beta coordinate (``xdd < log A``), per logit entry
    (``xdd > 0`` and ``xdd < 1``) and one for the implied last probability.
    ``W`` must exceed every entry.  Vector inputs only.
    """
    xbar = np.asarray(xbar, dtype=float)
    kp = np.asarray(kprime, dtype=float)
    logA = np.log(scale)
    diff = xbar - kp
    beta = resp * diff[:2 * D] / (kp[:2 * D] - logA)
    cd, ck = diff[2 * D:], kp[2 * D:]
    lower = resp * cd / ck
    upper = resp * cd / (ck - 1.0)
    last = np.array([resp * cd.sum() / (ck.sum() - 1.0)]) if ck.size else np.zeros(0)
    return np.concatenate([beta, lower, upper, last])


def _beta_exit_weight(ka, kb, da, db, resp, scale):
    """Smallest ``W`` keeping ``exp(xdd_a) + exp(xdd_b) < A``.

    ``xdd = K' + s (K' - x_bar)`` with ``s = resp / W``; ``(da, db)`` is
    ``K' - x_bar``.  The left side is convex in ``s`` and negative at 0, so
    the exit point ``s*`` is found by Newton iterations started to its right.
    Broadcasts; returns 0 where the ray never leaves the mean space.
    """
    logA = np.log(scale)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ta = np.where(da > 0, (logA - ka) / da, np.inf)
        tb = np.where(db > 0, (logA - kb) / db, np.inf)
    s = np.minimum(ta, tb)
    exits = np.isfinite(s)
    s = np.where(exits, s, 1.0)
    for _ in range(60):
        ea = np.exp(ka + s * da)
        eb = np.exp(kb + s * db)
        g = ea + eb - scale
        gp = ea * da + eb * db
        step = np.where(exits & (gp > 0), g / np.where(gp > 0, gp, 1.0), 0.0)
        s = s - step
        if np.all(np.abs(step) <= 1e-15 * np.abs(s)):
            break
    with np.errstate(divide="ignore"):
        w = np.where(exits, resp / s, 0.0)
    # the right-side Newton iterate slightly overestimates s*
    return w * (1.0 + 1e-9)


def w_min(xbar, kprime, resp, D, scale=1.0) -> float:
    """Smallest admissible curvature for one (sample, component) pair, plus margin.

    Beyond the box limits of :func:`bound_terms`, each Beta pair of the
    variational point is kept strictly inside ``{(s, t): e^s + e^t < A}``,
    the actual mean space of the scaled Beta family.
    """
    xbar = np.asarray(xbar, dtype=float)
    kp = np.asarray(kprime, dtype=float)
    terms = bound_terms(xbar, kp, resp, D, scale)
    kab = kp[:2 * D].reshape(D, 2)
    dab = (kp - xbar)[:2 * D].reshape(D, 2)
    exit_w = _beta_exit_weight(kab[:, 0], kab[:, 1], dab[:, 0], dab[:, 1], resp, scale)
    return float(max(0.0, terms.max(initial=0.0), exit_w.max(initial=0.0)) + W_EPS)


# ---------------------------------------------------------------------------
# the bound for a whole data set


def log_components(log_v, log_w, log_jac, a, b, alphas, scale=1.0) -> np.ndarray:
    """``log(alpha_k GD(x_n | mu_k))`` as an ``N x M`` array.

    ``log_v`` and ``log_w`` are ``log v`` and ``log(A - v)`` (``N x D``).
    """
    logA = np.log(scale)
    per = ((a[None] - 1.0) * log_v[:, None, :] + (b[None] - 1.0) * log_w[:, None, :]
           - betaln(a, b)[None] - (a + b - 1.0)[None] * logA)
    with np.errstate(divide="ignore"):
        return np.log(alphas)[None, :] + per.sum(axis=2) + log_jac[:, None]


@dataclass
class VariationalState:
    """Bound quantities for every (sample, component) pair at one contact point.

    ``xdd_beta`` is ``N x M x D x 2`` (the ``a``/``b`` entries of the
    variational point), ``xdd_cat`` is ``N x M x (M-1)``.  ``cst`` holds the
    per-sample offset so that the bound equals
    ``sum_k -W (xdd . theta_k - K(theta_k)) + cst``.
    """

    W: np.ndarray
    xdd_beta: np.ndarray
    xdd_cat: np.ndarray
    cst: np.ndarray
    resp: np.ndarray
    mahalanobis: np.ndarray
    wmin: np.ndarray
    log_mix: np.ndarray
    contact_a: np.ndarray
    contact_b: np.ndarray
    contact_alphas: np.ndarray
    scale: float = 1.0


def _cumulants(a, b, alphas, scale):
    """Per-component cumulant values (length ``M``)."""
    cat = -np.log(alphas[-1])
    return cat + np.sum(betaln(a, b) + (a + b - 1.0) * np.log(scale), axis=1)


def _linear(xdd_beta, xdd_cat, a, b, alphas):
    """``xdd_nk . theta_k`` for every pair, ``N x M``."""
    lin = np.einsum("nkd,kd->nk", xdd_beta[..., 0], a) + np.einsum("nkd,kd->nk", xdd_beta[..., 1], b)
    if alphas.size > 1:
        eta = np.log(alphas[:-1]) - np.log(alphas[-1])
        lin = lin + xdd_cat @ eta
    return lin


def compute_variational(log_v, log_w, log_jac, a, b, alphas, scale=1.0,
                        g_scale=1.0, variational=True) -> VariationalState:
    """Build the bound for every sample at contact point ``(a, b, alphas)``.

    ``g_scale`` multiplies ``G`` (values above 1 loosen the bound).  With
    ``variational=False`` all curvatures and variational points are zero,
    which turns the lower bound on the posterior into the generative
    likelihood.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    N, D = log_v.shape
    M = alphas.size
    comp = log_components(log_v, log_w, log_jac, a, b, alphas, scale)
    log_mix = logsumexp(comp, axis=1)
    log_resp = comp - log_mix[:, None]
    resp = np.exp(log_resp)
    if not variational:
        zeros = np.zeros((N, M))
        return VariationalState(zeros, np.zeros((N, M, D, 2)), np.zeros((N, M, M - 1)),
                                log_mix.copy(), resp, zeros.copy(), zeros.copy(), log_mix,
                                a.copy(), b.copy(), alphas.copy(), scale)

    logA = np.log(scale)
    ab = a + b
    ka = digamma(a) - digamma(ab) + logA  # M x D
    kb = digamma(b) - digamma(ab) + logA
    ra = log_v[:, None, :] - ka[None]      # N x M x D, x_bar - K'
    rb = log_w[:, None, :] - kb[None]
    inv = beta_block_inverse(a, b)         # M x D x 2 x 2
    maha = (inv[None, ..., 0, 0] * ra * ra + 2 * inv[None, ..., 0, 1] * ra * rb
            + inv[None, ..., 1, 1] * rb * rb).sum(axis=2)
    p = alphas[:-1]
    onehot = np.eye(M)[:, :-1]             # M x (M-1)
    rc = onehot[None] - p[None, None, :]   # 1 x M x (M-1), broadcast over n
    if M > 1:
        maha = maha + (1.0 / alphas - 1.0)[None, :]

    # admissibility of the variational point
    with np.errstate(divide="ignore", invalid="ignore"):
        box_beta = np.maximum((resp[..., None] * ra / (ka[None] - logA)).max(axis=2),
                              (resp[..., None] * rb / (kb[None] - logA)).max(axis=2))
    exit_w = _beta_exit_weight(ka[None], kb[None], -ra, -rb, resp[..., None], scale).max(axis=2)
    wmin = np.maximum(np.maximum(box_beta, exit_w), 0.0)
    if M > 1:
        rcn = np.broadcast_to(rc, (N, M, M - 1))
        lower = resp[..., None] * rcn / p
        upper = resp[..., None] * rcn / (p - 1.0)
        last = resp * rcn.sum(axis=2) / (p.sum() - 1.0)
        wmin = np.maximum(wmin, np.maximum(lower.max(axis=2), upper.max(axis=2)))
        wmin = np.maximum(wmin, last)
    wmin = wmin + W_EPS

    W = 4.0 * g_scale * _g_from_log(log_resp) * maha + wmin
    ratio = resp / W
    xdd_beta = np.stack([ka[None] - ratio[..., None] * ra,
                         kb[None] - ratio[..., None] * rb], axis=-1)
    xdd_cat = p[None, None, :] - ratio[..., None] * rc
    cst = log_mix + np.sum(W * (_linear(xdd_beta, xdd_cat, a, b, alphas)
                                - _cumulants(a, b, alphas, scale)[None]), axis=1)
    return VariationalState(W, xdd_beta, xdd_cat, cst, resp, maha, wmin, log_mix,
                            a.copy(), b.copy(), alphas.copy(), scale)


def upper_bound_value(state: VariationalState, a, b, alphas) -> np.ndarray:
    """The bound on ``log sum_k alpha_k GD(x_n | mu_k)`` at new parameters, per sample."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    inner = (_linear(state.xdd_beta, state.xdd_cat, a, b, alphas)
             - _cumulants(a, b, alphas, state.scale)[None])
    return -np.sum(state.W * inner, axis=1) + state.cst


def log_mixture(log_v, log_w, log_jac, a, b, alphas, scale=1.0) -> np.ndarray:
    return logsumexp(log_components(log_v, log_w, log_jac, a, b, alphas, scale), axis=1)


def stick_logs(X, scale=1.0):
    """``log v``, ``log(A - v)`` and the log Jacobian for compositions ``X``."""
    from .simplex import log_jacobian, v_transform
    V = v_transform(np.atleast_2d(X), scale)
    return np.log(V), np.log(scale - V), log_jacobian(X, scale)


def mixture_identity_terms(log_v, log_w, a, b, alphas, scale=1.0) -> np.ndarray:
    """``x_bar_nk . theta_k - K(theta_k)`` for every pair (``N x M``).

    ``logsumexp`` over ``k`` plus the base measure
    ``-sum_d [log v_d + log(A - v_d)]`` plus the log Jacobian reproduces the
    log mixture density.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    N = log_v.shape[0]
    M = alphas.size
    lin = log_v @ a.T + log_w @ b.T
    if M > 1:
        eta = np.log(alphas[:-1]) - np.log(alphas[-1])
        lin = lin + np.append(eta, 0.0)[None, :]
    return lin - _cumulants(a, b, alphas, scale)[None] + np.zeros((N, 1))


def calibrate_g_scale(check, start=1.0, grow=1.5, max_rounds=20) -> float:
    """Enlarge the ``G`` multiplier until ``check(g_scale)`` returns True.

    ``check`` runs a batch of dominance tests at the given multiplier.  Since
    a larger ``W`` can only loosen the bound, the search is monotone.
    """
    g = start
    for _ in range(max_rounds):
        if check(g):
            return g
        g *= grow
    raise RuntimeError(f"no G multiplier up to {g:.3g} passed the dominance checks")
