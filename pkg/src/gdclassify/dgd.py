"""Discriminative Generalized Dirichlet classifier.

The model is a GD mixture with one component per class; a composition is
classified by the posterior ``pi_c(x) = alpha_c GD(x|mu_c) / sum_k alpha_k GD(x|mu_k)``.

Training maximizes the weighted conditional log-likelihood

    Phi = sum_n H_n sum_c h_nc log pi_c(x_n)

by bound optimization: the log of the mixture (the denominator) is replaced by
the reverse-Jensen upper bound of :mod:`gdclassify.bound`, built at the
current parameters.  The resulting lower bound ``Phi_1`` separates into one
concave problem per (class, dimension) pair plus a closed-form update of the
mixing weights, so each iteration cannot decrease ``Phi``.

Setting every curvature ``W`` to zero leaves the generative likelihood, which
is how the MGD baseline is obtained from the same code path.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import betaln, digamma, logsumexp

from . import bound
from .distribution import SHAPE_MAX, SHAPE_MIN, GDParams, moment_init
from .errors import DimensionMismatch, InputError, NoEffectiveData, NonFiniteObjective
from .simplex import Dataset

MAX_HALVINGS = 10


@dataclass
class DGDModel:
    """Mixing weights and per-class GD shapes (``a``, ``b`` are ``C x D``)."""

    alphas: np.ndarray
    a: np.ndarray
    b: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float).copy()
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float)).copy()
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float)).copy()
        if self.a.shape != self.b.shape or self.a.shape[0] != self.alphas.size:
            raise InputError("alphas, a and b disagree on the class count")
        if np.any(self.alphas < 0) or abs(self.alphas.sum() - 1.0) > 1e-9:
            raise InputError("alphas must be a probability vector")
        if np.any(self.a <= 0) or np.any(self.b <= 0):
            raise InputError("GD shape parameters must be strictly positive")

    @property
    def class_count(self) -> int:
        return self.alphas.size

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    @property
    def gds(self) -> list:
        return [GDParams(self.a[c], self.b[c], self.scale) for c in range(self.class_count)]

    @classmethod
    def from_gds(cls, alphas, gds, scale=None) -> "DGDModel":
        scale = gds[0].scale if scale is None else scale
        return cls(alphas, np.vstack([g.a for g in gds]), np.vstack([g.b for g in gds]), scale)

    def copy(self) -> "DGDModel":
        return DGDModel(self.alphas, self.a, self.b, self.scale)

    def log_joint(self, X) -> np.ndarray:
        """``log alpha_c + log GD(x_n | mu_c)`` as an ``N x C`` array."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim + 1:
            raise DimensionMismatch(f"expected {self.dim + 1} parts, got {X.shape[1]}")
        return bound.log_components(*bound.stick_logs(X, self.scale), self.a, self.b,
                                    self.alphas, self.scale)

    def log_posterior(self, X) -> np.ndarray:
        lj = self.log_joint(X)
        return lj - logsumexp(lj, axis=1, keepdims=True)

    def posterior(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        out = np.exp(self.log_posterior(X))
        return out[0] if single else out

    def predict(self, X):
        # argmax returns the first maximum, so ties go to the lowest index
        return np.argmax(self.posterior(X), axis=-1)


def posterior(model: DGDModel, X) -> np.ndarray:
    return model.posterior(X)


def predict(model: DGDModel, X):
    return model.predict(X)


@dataclass
class FitConfig:
    tol: float = 1e-4
    max_iter: int = 50
    newton_inner_iters: int = 5
    min_alpha: float = 1e-3
    seed: int = 0
    g_scale: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if int(self.max_iter) < 1 or int(self.newton_inner_iters) < 1:
            raise InputError("iteration caps must be at least 1")
        if not 0 <= self.min_alpha < 1:
            raise InputError("min_alpha must lie in [0, 1)")
        self.max_iter = int(self.max_iter)
        self.newton_inner_iters = int(self.newton_inner_iters)


@dataclass
class FitReport:
    """``objective`` holds Phi before the first and after every iteration;
    ``bound`` holds Phi_1 after every M-step.  For a generative fit both
    hold the joint log-likelihood, up to a constant for ``bound``."""

    objective: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    warnings: list = field(default_factory=list)

    def summary(self) -> str:
        last = self.objective[-1] if self.objective else float("nan")
        state = "converged" if self.converged else "stopped at max_iter"
        return f"{state} after {self.iterations} iterations, objective {last:.6f}"


# ---------------------------------------------------------------------------
# data plumbing


class _Prepared:
    """Stick-breaking logs of a data set, computed once per fit."""

    def __init__(self, X, scale):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.scale = scale
        self.log_v, self.log_w, self.log_jac = bound.stick_logs(self.X, scale)

    def components(self, model: DGDModel):
        return bound.log_components(self.log_v, self.log_w, self.log_jac,
                                    model.a, model.b, model.alphas, self.scale)


def _targets(data: Dataset, h, H):
    N = data.n_samples
    if h is None:
        if data.labels is None:
            raise InputError("hard labels or soft targets are required")
        h = np.eye(data.class_count)[data.labels]
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if h.shape[0] != N:
        raise InputError("one target row per sample is required")
    if np.any(h < 0) or np.any(np.abs(h.sum(axis=1) - 1.0) > 1e-6):
        raise InputError("target rows must be nonnegative and sum to 1")
    H = np.ones(N) if H is None else np.asarray(H, dtype=float)
    if H.shape != (N,) or np.any(H < 0):
        raise InputError("weights must be N nonnegative values")
    if H.sum() <= 1e-12:
        raise NoEffectiveData("all sample weights are zero")
    return h, H


def _clamp_alphas(alphas, min_alpha):
    alphas = np.maximum(alphas, min_alpha)
    return alphas / alphas.sum()


def initialize(data: Dataset, h, H, min_alpha=1e-3, notes=None) -> DGDModel:
    """Per-class weighted moment estimates and weighted class frequencies.

    A class without enough effective weight borrows the moment estimate of
    the whole (weighted) data, and failing that ``a = b = 1``.
    """
    C = h.shape[1]
    gds = []
    for c in range(C):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                g = moment_init(data.X, data.scale, H * h[:, c])
            except InputError:
                try:
                    g = moment_init(data.X, data.scale, H)
                except InputError:
                    g = GDParams(np.ones(data.dim), np.ones(data.dim), data.scale)
                if notes is not None:
                    notes.append(f"class {c}: too little weight for its own moment estimate")
        if notes is not None:
            notes.extend(f"class {c}: {w.message}" for w in caught)
        gds.append(g)
    alphas = _clamp_alphas(H @ h / H.sum(), min_alpha)
    return DGDModel.from_gds(alphas, gds, data.scale)


# ---------------------------------------------------------------------------
# objectives


def joint_objective(prep: _Prepared, model: DGDModel, h, H) -> float:
    """The weighted generative log-likelihood ``sum_n H_n sum_c h_nc log(alpha_c GD_c)``."""
    return float(H @ np.sum(h * prep.components(model), axis=1))


def objective(prep: _Prepared, model: DGDModel, h, H) -> float:
    """The weighted conditional log-likelihood Phi."""
    comp = prep.components(model)
    logpost = comp - logsumexp(comp, axis=1, keepdims=True)
    return float(H @ np.sum(h * logpost, axis=1))


def lower_bound(prep: _Prepared, model: DGDModel, h, H, state: bound.VariationalState) -> float:
    """Phi_1: Phi with the log mixture replaced by its upper bound."""
    comp = prep.components(model)
    ub = bound.upper_bound_value(state, model.a, model.b, model.alphas)
    return float(H @ (np.sum(h * comp, axis=1) - ub))


@dataclass
class BlockStats:
    """Sufficient statistics of Phi_1 for the shape blocks and the weights.

    For class ``c`` and dimension ``d`` the shape part of Phi_1 is
    ``a Sa + b Sb - S (log B(a, b) + (a + b) log A)`` up to a constant.
    """

    S: np.ndarray       # C
    Sa: np.ndarray      # C x D
    Sb: np.ndarray      # C x D
    counts: np.ndarray  # C, weight counts for the alpha update


def block_stats(prep: _Prepared, h, H, state: bound.VariationalState) -> BlockStats:
    Hh = H[:, None] * h
    HW = H[:, None] * state.W
    S = Hh.sum(axis=0) + HW.sum(axis=0)
    Sa = Hh.T @ prep.log_v + np.einsum("nk,nkd->kd", HW, state.xdd_beta[..., 0])
    Sb = Hh.T @ prep.log_w + np.einsum("nk,nkd->kd", HW, state.xdd_beta[..., 1])
    C = h.shape[1]
    counts = Hh.sum(axis=0).copy()
    if C > 1:
        lead = np.einsum("nk,nkl->l", HW, state.xdd_cat)
        counts[:-1] += lead
        counts[-1] += HW.sum() - lead.sum()
    return BlockStats(S, Sa, Sb, counts)


def block_objective(xi_a, xi_b, S, Sa, Sb, scale=1.0):
    a, b = np.exp(xi_a), np.exp(xi_b)
    return a * Sa + b * Sb - S * (betaln(a, b) + (a + b) * np.log(scale))


def block_gradient(xi_a, xi_b, S, Sa, Sb, scale=1.0):
    """Gradient of :func:`block_objective` with respect to ``(log a, log b)``."""
    a, b = np.exp(xi_a), np.exp(xi_b)
    logA = np.log(scale)
    dab = digamma(a + b)
    ga = Sa - S * (digamma(a) - dab + logA)
    gb = Sb - S * (digamma(b) - dab + logA)
    return a * ga, b * gb


def block_hessian(xi_a, xi_b, S, Sa, Sb, scale=1.0):
    """Hessian entries ``(haa, hab, hbb)`` in the log-shape coordinates.

    Written as ``diag(r1, r2) + e3 g g'`` with ``g = (a, b)``; returns the
    pieces ``r1, r2, e3`` along with the entries.
    """
    a, b = np.exp(xi_a), np.exp(xi_b)
    Ga, Gb = block_gradient(xi_a, xi_b, S, Sa, Sb, scale)
    e3 = S * bound.trigamma(a + b)
    r1 = Ga - a * a * S * bound.trigamma(a)
    r2 = Gb - b * b * S * bound.trigamma(b)
    return r1 + e3 * a * a, e3 * a * b, r2 + e3 * b * b, (r1, r2, e3)


def _solve2(r1, r2, e3, a, b, Ga, Gb):
    """``(diag(r1, r2) + e3 gg')^-1 (Ga, Gb)``, falling back to the 2x2 formula."""
    try:
        i11, i12, i22 = bound.newton_hessian_inverse(r1, r2, e3, a, b)
    except Exception:
        h11, h12, h22 = r1 + e3 * a * a, e3 * a * b, r2 + e3 * b * b
        det = h11 * h22 - h12 * h12
        safe = np.where(det == 0, 1.0, det)
        i11, i12, i22 = h22 / safe, -h12 / safe, h11 / safe
    return i11 * Ga + i12 * Gb, i12 * Ga + i22 * Gb


def newton_step(xi_a, xi_b, S, Sa, Sb, scale=1.0):
    """One safeguarded Newton ascent step on every (class, dimension) block.

    Where the log-shape Hessian is not negative definite the curvature of the
    (concave) shape-space problem, expressed in log coordinates, is used
    instead.  Steps are halved up to ten times until the block objective does
    not decrease and the shapes stay inside ``[1e-3, 1e4]``.  Returns the new
    log-shapes and a mask of blocks whose step was rejected.
    """
    xi_a = np.asarray(xi_a, dtype=float)
    xi_b = np.asarray(xi_b, dtype=float)
    S = np.broadcast_to(np.asarray(S, dtype=float), xi_a.shape)
    a, b = np.exp(xi_a), np.exp(xi_b)
    Ga, Gb = block_gradient(xi_a, xi_b, S, Sa, Sb, scale)
    haa, hab, hbb, (r1, r2, e3) = block_hessian(xi_a, xi_b, S, Sa, Sb, scale)
    indefinite = ~((haa < 0) & (haa * hbb - hab * hab > 0))
    r1 = np.where(indefinite, r1 - Ga, r1)
    r2 = np.where(indefinite, r2 - Gb, r2)
    da, db = _solve2(r1, r2, e3, a, b, Ga, Gb)
    da, db = -da, -db

    f0 = block_objective(xi_a, xi_b, S, Sa, Sb, scale)
    new_a, new_b = xi_a.copy(), xi_b.copy()
    # a predicted gain below the rounding of f means the block is already stationary
    gain = 0.5 * (Ga * da + Gb * db)
    stationary = np.abs(gain) <= 1e-13 * (1.0 + np.abs(f0))
    pending = (S > 0) & np.isfinite(da) & np.isfinite(db) & ~stationary
    t = 1.0
    lo, hi = np.log(SHAPE_MIN), np.log(SHAPE_MAX)
    for _ in range(MAX_HALVINGS + 1):
        if not pending.any():
            break
        ca, cb = xi_a + t * da, xi_b + t * db
        inside = (ca >= lo) & (ca <= hi) & (cb >= lo) & (cb <= hi)
        with np.errstate(all="ignore"):
            f1 = block_objective(ca, cb, S, Sa, Sb, scale)
        ok = pending & inside & np.isfinite(f1) & (f1 >= f0)
        new_a = np.where(ok, ca, new_a)
        new_b = np.where(ok, cb, new_b)
        pending &= ~ok
        t *= 0.5
    return new_a, new_b, pending


def update_alphas(stats: BlockStats, old_alphas, min_alpha=1e-3):
    """Maximize ``sum_l counts_l log alpha_l`` on the simplex, then clamp.

    Returns the new weights and whether a raw count was negative, which
    signals a loose bound.  The old weights are kept if clamping made the
    weight part of Phi_1 worse than before.
    """
    counts = stats.counts
    negative = bool(np.any(counts < 0))
    total = counts.sum()
    raw = np.maximum(counts, 0.0) / total if total > 0 else np.asarray(old_alphas)
    new = _clamp_alphas(raw, min_alpha)

    def value(al):
        return float(np.sum(counts * np.log(al)))

    if value(new) < value(old_alphas):
        new = np.asarray(old_alphas, dtype=float).copy()
    return new, negative


# ---------------------------------------------------------------------------
# fitting


def fit(data: Dataset, h=None, H=None, cfg: Optional[FitConfig] = None,
        init: Optional[DGDModel] = None, variational=True):
    """Fit a (weighted) DGD by bound optimization.

    ``h`` are per-sample targets over the classes (one-hot labels by default),
    ``H`` per-sample weights (ones by default).  With ``variational=False``
    the curvature terms are switched off and the result is the per-class
    maximum-likelihood (MGD) fit.
    """
    cfg = cfg or FitConfig()
    h, H = _targets(data, h, H)
    report = FitReport()
    model = init.copy() if init is not None else initialize(data, h, H, cfg.min_alpha, report.warnings)
    if model.class_count != h.shape[1] or model.dim != data.dim:
        raise DimensionMismatch("initial model does not match the data")
    prep = _Prepared(data.X, data.scale)
    # the generative fit climbs the joint likelihood, not Phi
    target = objective if variational else joint_objective
    phi = target(prep, model, h, H)
    report.objective.append(phi)
    if model.class_count == 1:
        report.converged = True
        report.bound.append(phi)
        return model, report

    for it in range(cfg.max_iter):
        state = bound.compute_variational(prep.log_v, prep.log_w, prep.log_jac, model.a, model.b,
                                          model.alphas, data.scale, cfg.g_scale, variational)
        stats = block_stats(prep, h, H, state)
        xa, xb = np.log(model.a), np.log(model.b)
        S = np.broadcast_to(stats.S[:, None], xa.shape)
        rejected = np.zeros(xa.shape, dtype=bool)
        for _ in range(cfg.newton_inner_iters):
            xa, xb, rej = newton_step(xa, xb, S, stats.Sa, stats.Sb, data.scale)
            rejected |= rej
        alphas, negative = update_alphas(stats, model.alphas, cfg.min_alpha)
        if negative:
            report.warnings.append(f"iteration {it}: negative weight count before clamping")
        if rejected.any():
            report.warnings.append(f"iteration {it}: {int(rejected.sum())} Newton step(s) rejected")
        model = DGDModel(alphas, np.exp(xa), np.exp(xb), data.scale)
        phi1 = lower_bound(prep, model, h, H, state)
        new_phi = target(prep, model, h, H)
        if not (np.isfinite(new_phi) and np.isfinite(phi1)):
            raise NonFiniteObjective(f"objective became non-finite at iteration {it}")
        report.bound.append(phi1)
        report.objective.append(new_phi)
        report.iterations = it + 1
        change = abs(new_phi - phi) / max(abs(phi), 1e-12)
        phi = new_phi
        if change < cfg.tol:
            report.converged = True
            break
    return model, report


def fit_generative(data: Dataset, labels=None, cfg: Optional[FitConfig] = None):
    """MGD baseline: per-class GD maximum likelihood with empirical priors."""
    cfg = cfg or FitConfig()
    if labels is not None:
        data = Dataset(data.X, labels, data.class_count, data.scale)
    if data.labels is None:
        raise InputError("the generative fit needs hard labels")
    model, report = fit(data, None, None, cfg, variational=False)
    # the generative weight update is the empirical frequency; keep it exact
    freq = np.bincount(data.labels, minlength=data.class_count) / data.n_samples
    if np.all(freq >= cfg.min_alpha):
        model = DGDModel(freq, model.a, model.b, model.scale)
    return model, report
