"""Hierarchical mixture of DGD experts (two gating levels).

The class posterior is

    p(y | x) = sum_i g_i(x) sum_j g_{j|i}(x) p_ij(y | x),

where the root gating ``g`` and the inner gatings ``g_{.|i}`` are DGD
posteriors over regions and sub-regions, and every leaf ``(i, j)`` holds a
DGD expert over the classes.  Fitting is EM over the latent region
assignments; each M-step is a set of independent weighted DGD fits, one per
node, with the path responsibilities as targets or weights.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from . import dgd
from .distribution import moment_init
from .dgd import DGDModel, FitConfig
from .errors import DimensionMismatch, InputError, WouldEmptyTree
from .simplex import Dataset, v_transform

PRUNE_THRESHOLD = 0.01


@dataclass
class HMGDConfig:
    """Iteration caps and thresholds for the hierarchical fit."""

    outer_iter: int = 10
    gating_iter: int = 5
    expert_iter: int = 30
    tol: float = 1e-4
    min_alpha: float = 1e-3
    prune_threshold: float = PRUNE_THRESHOLD
    newton_inner_iters: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if min(self.outer_iter, self.gating_iter, self.expert_iter) < 1:
            raise InputError("iteration caps must be at least 1")

    def node_config(self, max_iter) -> FitConfig:
        return FitConfig(self.tol, max_iter, self.newton_inner_iters, self.min_alpha, self.seed)


@dataclass
class HMGDTree:
    """Root gating over ``K`` regions, inner gatings and a grid of experts."""

    root: DGDModel
    inner: List[DGDModel]
    experts: List[List[DGDModel]]
    scale: float = 1.0

    def __post_init__(self):
        K = self.root.class_count
        if len(self.inner) != K or len(self.experts) != K:
            raise InputError("one inner gating and one expert row per region")
        D = self.root.dim
        C = None
        for g, row in zip(self.inner, self.experts):
            if len(row) != g.class_count:
                raise InputError("one expert per sub-region")
            for e in [g, *row]:
                if e.dim != D or e.scale != self.scale:
                    raise InputError("all nodes must share dimension and scale")
            for e in row:
                C = e.class_count if C is None else C
                if e.class_count != C:
                    raise InputError("all experts must share the class count")
        if D != self.root.dim or self.root.scale != self.scale:
            raise InputError("all nodes must share dimension and scale")

    @property
    def K(self) -> int:
        return self.root.class_count

    @property
    def M(self) -> list:
        return [g.class_count for g in self.inner]

    @property
    def class_count(self) -> int:
        return self.experts[0][0].class_count

    @property
    def dim(self) -> int:
        return self.root.dim

    def leaves(self):
        for i, row in enumerate(self.experts):
            for j, e in enumerate(row):
                yield i, j, e

    def copy(self) -> "HMGDTree":
        return HMGDTree(self.root.copy(), [g.copy() for g in self.inner],
                        [[e.copy() for e in row] for row in self.experts], self.scale)

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim + 1:
            raise DimensionMismatch(f"expected {self.dim + 1} parts, got {X.shape[1]}")
        return X

    def log_gates(self, X):
        """Log root gate ``N x K`` and a list of log inner gates ``N x M_i``."""
        X = self._check(X)
        return self.root.log_posterior(X), [g.log_posterior(X) for g in self.inner]

    def predict_proba(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        lg0, lg1 = self.log_gates(X)
        X = self._check(X)
        paths = [lg0[:, i, None] + lg1[i][:, j, None] + e.log_posterior(X)
                 for i, j, e in self.leaves()]
        log_p = logsumexp(np.stack(paths), axis=0)
        out = np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))
        return out[0] if single else out

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=-1)


def predict_proba(tree: HMGDTree, X) -> np.ndarray:
    return tree.predict_proba(X)


@dataclass
class Responsibilities:
    h0: np.ndarray
    h1: list

    def path_weight(self, i, j) -> np.ndarray:
        return self.h0[:, i] * self.h1[i][:, j]


def _label_loglik(tree: HMGDTree, X, labels):
    """``log p_ij(y_n | x_n)`` per region, each an ``N x M_i`` array."""
    rows = np.arange(len(labels))
    out = []
    for row in tree.experts:
        out.append(np.column_stack([e.log_posterior(X)[rows, labels] for e in row]))
    return out


def _log_terms(tree: HMGDTree, X, labels):
    lg0, lg1 = tree.log_gates(X)
    ll = _label_loglik(tree, X, labels)
    inner = [lg1[i] + ll[i] for i in range(tree.K)]
    region = np.column_stack([logsumexp(t, axis=1) for t in inner])
    return lg0, inner, region


def log_likelihood(tree: HMGDTree, X, labels) -> float:
    """Observed conditional log-likelihood ``sum_n log p(y_n | x_n)``."""
    lg0, _, region = _log_terms(tree, X, np.asarray(labels, dtype=int))
    return float(logsumexp(lg0 + region, axis=1).sum())


def e_step(tree: HMGDTree, X, labels) -> Responsibilities:
    """Posterior region and sub-region assignments given the labels."""
    lg0, inner, region = _log_terms(tree, X, np.asarray(labels, dtype=int))
    top = lg0 + region
    h0 = np.exp(top - logsumexp(top, axis=1, keepdims=True))
    h1 = [np.exp(t - logsumexp(t, axis=1, keepdims=True)) for t in inner]
    return Responsibilities(h0, h1)


@dataclass
class HMGDReport:
    """``objective`` pairs the log-likelihood before and after each E+M cycle."""

    objective: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    pruned: list = field(default_factory=list)
    node_reports: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def m_step(tree: HMGDTree, data: Dataset, resp: Responsibilities, cfg: HMGDConfig,
           report: Optional[HMGDReport] = None) -> HMGDTree:
    """Refit every node against the current responsibilities, warm-started."""
    gate_cfg = cfg.node_config(cfg.gating_iter)
    expert_cfg = cfg.node_config(cfg.expert_iter)
    notes = {}
    root, rep = dgd.fit(data, resp.h0, None, gate_cfg, init=tree.root)
    notes["root"] = rep
    inner, experts = [], []
    for i, g in enumerate(tree.inner):
        weight = resp.h0[:, i]
        if weight.sum() > 1e-12:
            g, rep = dgd.fit(data, resp.h1[i], weight, gate_cfg, init=g)
            notes[f"gate {i}"] = rep
        inner.append(g)
        row = []
        for j, e in enumerate(tree.experts[i]):
            w = resp.path_weight(i, j)
            if w.sum() > 1e-12:
                e, rep = dgd.fit(data, None, w, expert_cfg, init=e)
                notes[f"expert {i},{j}"] = rep
            row.append(e)
        experts.append(row)
    if report is not None:
        report.node_reports.append(notes)
    return HMGDTree(root, inner, experts, tree.scale)


def _drop(model: DGDModel, keep) -> DGDModel:
    alphas = model.alphas[keep]
    return DGDModel(alphas / alphas.sum(), model.a[keep], model.b[keep], model.scale)


def prune(tree: HMGDTree, threshold=PRUNE_THRESHOLD, strict=False):
    """Remove gating branches with mixing weight below ``threshold``.

    Returns the (possibly) smaller tree and a list of removed branches.  If
    a gating would lose every branch it is left alone, with a warning (or
    :class:`WouldEmptyTree` when ``strict``).
    """
    removed = []

    def survivors(model, name):
        keep = np.flatnonzero(model.alphas >= threshold)
        if keep.size == 0:
            msg = f"pruning would remove every branch of {name}"
            if strict:
                raise WouldEmptyTree(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            return np.arange(model.class_count)
        return keep

    keep0 = survivors(tree.root, "the root")
    removed += [("root", int(i)) for i in range(tree.K) if i not in keep0]
    inner, experts = [], []
    for i in keep0:
        g = tree.inner[i]
        keep1 = survivors(g, f"region {i}")
        removed += [(f"region {i}", int(j)) for j in range(g.class_count) if j not in keep1]
        inner.append(_drop(g, keep1) if keep1.size < g.class_count else g)
        experts.append([tree.experts[i][j] for j in keep1])
    root = _drop(tree.root, keep0) if keep0.size < tree.K else tree.root
    return HMGDTree(root, inner, experts, tree.scale), removed


# ---------------------------------------------------------------------------
# initialization


def _clusters(V, k, seed):
    if k == 1 or len(V) < k:
        return np.zeros(len(V), dtype=int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, lab = kmeans2(V, k, minit="++", seed=np.random.default_rng(seed))
    return lab


def _gating_from_clusters(X, scale, lab, k, fallback, min_alpha):
    gds = []
    for c in range(k):
        w = (lab == c).astype(float)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                gds.append(moment_init(X, scale, w))
        except InputError:
            gds.append(fallback)
    freq = np.maximum(np.bincount(lab, minlength=k) / len(lab), min_alpha)
    return DGDModel.from_gds(freq / freq.sum(), gds, scale)


def _expert_init(data: Dataset, member, global_gds, min_alpha):
    y = data.labels
    C = data.class_count
    gds = []
    for c in range(C):
        w = (member & (y == c)).astype(float)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                gds.append(moment_init(data.X, data.scale, w))
        except InputError:
            gds.append(global_gds[c])
    counts = np.bincount(y[member], minlength=C).astype(float) if member.any() else np.ones(C)
    alphas = np.maximum(counts / counts.sum(), min_alpha)
    return DGDModel.from_gds(alphas / alphas.sum(), gds, data.scale)


def initialize(data: Dataset, K: int, M, cfg: HMGDConfig) -> HMGDTree:
    """k-means in stick-breaking coordinates for the gatings, per-leaf moments for experts."""
    M = [M] * K if np.isscalar(M) else list(M)
    if len(M) != K or K < 1 or min(M) < 1:
        raise InputError("structure needs K >= 1 regions and M_i >= 1 sub-regions each")
    X, A = data.X, data.scale
    V = v_transform(X, A) / A
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        whole = moment_init(X, A)
    global_gds = []
    for c in range(data.class_count):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                global_gds.append(moment_init(X, A, (data.labels == c).astype(float)))
        except InputError:
            global_gds.append(whole)
    lab0 = _clusters(V, K, cfg.seed)
    root = _gating_from_clusters(X, A, lab0, K, whole, cfg.min_alpha)
    inner, experts = [], []
    for i in range(K):
        member = lab0 == i
        sub = np.zeros(len(X), dtype=int)
        if member.sum() >= M[i]:
            sub[member] = _clusters(V[member], M[i], cfg.seed + 1 + i)
        lab1 = np.where(member, sub, -1)
        if member.any():
            inner.append(_gating_from_clusters(X[member], A, sub[member], M[i], whole, cfg.min_alpha))
        else:
            inner.append(_gating_from_clusters(X, A, sub, M[i], whole, cfg.min_alpha))
        experts.append([_expert_init(data, lab1 == j, global_gds, cfg.min_alpha) for j in range(M[i])])
    return HMGDTree(root, inner, experts, A)


# ---------------------------------------------------------------------------
# fitting


def fit(data: Dataset, K: int = 2, M=1, cfg: Optional[HMGDConfig] = None):
    """EM over the tree.

    The degenerate one-leaf tree is a single DGD and is fitted as such, with
    the expert iteration cap.  Otherwise each outer iteration runs an E-step,
    an M-step and a pruning pass.
    """
    cfg = cfg or HMGDConfig()
    if data.labels is None:
        raise InputError("HMGD training needs labels")
    M_list = [M] * K if np.isscalar(M) else list(M)
    report = HMGDReport()
    if K == 1 and M_list == [1]:
        expert, rep = dgd.fit(data, cfg=cfg.node_config(cfg.expert_iter))
        report.node_reports.append({"expert 0,0": rep})
        one = DGDModel([1.0], expert.a[:1], expert.b[:1], data.scale)
        tree = HMGDTree(one, [one.copy()], [[expert]], data.scale)
        ll = log_likelihood(tree, data.X, data.labels)
        report.objective.append((ll, ll))
        report.converged = True
        return tree, report

    tree = initialize(data, K, M_list, cfg)
    prev = log_likelihood(tree, data.X, data.labels)
    for it in range(cfg.outer_iter):
        resp = e_step(tree, data.X, data.labels)
        tree = m_step(tree, data, resp, cfg, report)
        cur = log_likelihood(tree, data.X, data.labels)
        report.objective.append((prev, cur))
        report.iterations = it + 1
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tree, removed = prune(tree, cfg.prune_threshold)
        report.warnings.extend(str(w.message) for w in caught)
        if removed:
            report.pruned.append((it, removed))
            cur = log_likelihood(tree, data.X, data.labels)
        change = abs(cur - prev) / max(abs(prev), 1e-12)
        prev = cur
        if change < cfg.tol and not removed:
            report.converged = True
            break
    return tree, report
