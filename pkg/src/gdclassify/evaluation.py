"""Cross-validation, metrics, synthetic data and experiment runs."""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import dgd, hmgd
from .distribution import GDParams, sample
from .errors import ClassTooSmall, EmptyMatrix, InputError, SchemaError
from .simplex import Dataset

RESULT_VERSION = 1
MODEL_KINDS = ("dgd", "mgd", "hmgd")


@dataclass
class ConfusionMatrix:
    """Counts with rows indexed by the true class and columns by the prediction."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise InputError("a confusion matrix is square")
        if np.any(self.counts < 0):
            raise InputError("confusion counts are nonnegative")

    @classmethod
    def from_labels(cls, truth, predicted, class_count=None) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=int)
        predicted = np.asarray(predicted, dtype=int)
        C = class_count or int(max(truth.max(initial=-1), predicted.max(initial=-1)) + 1)
        counts = np.zeros((C, C), dtype=np.int64)
        np.add.at(counts, (truth, predicted), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def mcc_flagged(cm: ConfusionMatrix):
    """Multiclass Matthews correlation (Gorodkin's R_K) and whether it is defined."""
    if cm.total == 0:
        raise EmptyMatrix("MCC of an empty confusion matrix")
    C = cm.counts.astype(float)
    s = C.sum()
    c = np.trace(C)
    p = C.sum(axis=0)
    t = C.sum(axis=1)
    left = s * s - p @ p
    right = s * s - t @ t
    if left == 0 or right == 0:
        return 0.0, False
    return float((c * s - p @ t) / np.sqrt(left * right)), True


def mcc(cm: ConfusionMatrix) -> float:
    return mcc_flagged(cm)[0]


@dataclass
class CVPlan:
    folds: list
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, i):
        test = self.folds[i]
        train = np.concatenate([f for j, f in enumerate(self.folds) if j != i])
        return np.sort(train), test


def stratified_kfold(labels, k=5, seed=0) -> CVPlan:
    """Deal each class's shuffled indices round-robin onto ``k`` folds.

    The dealing position carries over from one class to the next, so fold
    sizes stay within one of each other overall too.
    """
    labels = np.asarray(labels, dtype=int)
    if k < 2:
        raise InputError("need at least two folds")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    start = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < k:
            raise ClassTooSmall(f"class {c} has {idx.size} member(s), fewer than {k} folds")
        idx = rng.permutation(idx)
        for pos, n in enumerate(idx):
            buckets[(start + pos) % k].append(n)
        start = (start + idx.size) % k
    return CVPlan([np.sort(np.array(b, dtype=int)) for b in buckets], seed)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class ClassSpec:
    params: GDParams
    prior: float


def synth_gd(specs, N: int, seed=0) -> Dataset:
    """Draw labels from the priors, then each sample from its class GD."""
    priors = np.array([s.prior for s in specs], dtype=float)
    if np.any(priors < 0) or priors.sum() <= 0:
        raise InputError("class priors must be nonnegative and not all zero")
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(specs), size=N, p=priors / priors.sum())
    D = specs[0].params.dim
    scale = specs[0].params.scale
    X = np.empty((N, D + 1))
    for c, s in enumerate(specs):
        rows = np.flatnonzero(labels == c)
        if rows.size:
            X[rows] = sample(s.params, rows.size, rng)
    return Dataset(X, labels, len(specs), scale)


def bayes_model(specs) -> dgd.DGDModel:
    """The classifier built from the generating distributions themselves."""
    priors = np.array([s.prior for s in specs], dtype=float)
    return dgd.DGDModel.from_gds(priors / priors.sum(), [s.params for s in specs])


def separated_specs(C, D, seed=0, strength=12.0, scale=1.0):
    """Class GDs whose Beta coordinates lean in different directions.

    Class ``c`` puts shapes ``(strength, 2)`` or ``(2, strength)`` on each
    coordinate following a seeded sign pattern distinct from other classes.
    """
    rng = np.random.default_rng(seed)
    patterns = set()
    specs = []
    while len(specs) < C:
        signs = tuple(rng.integers(0, 2, D))
        if signs in patterns and len(patterns) < 2 ** D:
            continue
        patterns.add(signs)
        s = np.array(signs, dtype=bool)
        a = np.where(s, strength, 2.0)
        b = np.where(s, 2.0, strength)
        specs.append(ClassSpec(GDParams(a, b, scale), 1.0 / C))
    return specs


# ---------------------------------------------------------------------------
# experiments


def thread_count(default=1) -> int:
    """Worker count from ``SIMPLEX_THREADS`` (0 means one per CPU)."""
    raw = os.environ.get("SIMPLEX_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"SIMPLEX_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InputError("SIMPLEX_THREADS must be nonnegative")
    return n or (os.cpu_count() or 1)


@dataclass
class ExperimentResult:
    kind: str
    accuracy: list
    mcc: list
    folds: int
    seed: int
    structure: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    schema_version: int = RESULT_VERSION

    @staticmethod
    def _stats(values):
        v = np.asarray(values, dtype=float)
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        return float(v.mean()), sd

    @property
    def accuracy_mean_sd(self):
        return self._stats(self.accuracy)

    @property
    def mcc_mean_sd(self):
        return self._stats(self.mcc)

    def summary(self) -> str:
        """Two lines, accuracy as a percentage and MCC, each mean +/- sd over folds."""
        am, asd = self.accuracy_mean_sd
        mm, msd = self.mcc_mean_sd
        name = self.kind.upper()
        return (f"{name} accuracy {100 * am:.2f} +/- {100 * asd:.2f}\n"
                f"{name} MCC {mm:.4f} +/- {msd:.4f}")

    def to_dict(self) -> dict:
        out = asdict(self)
        am, asd = self.accuracy_mean_sd
        mm, msd = self.mcc_mean_sd
        out.update(accuracy_mean=am, accuracy_sd=asd, mcc_mean=mm, mcc_sd=msd)
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentResult":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc.get("schema_version")
        if not isinstance(version, int) or version > RESULT_VERSION:
            raise SchemaError(f"unsupported result schema_version {version!r}")
        for derived in ("accuracy_mean", "accuracy_sd", "mcc_mean", "mcc_sd"):
            doc.pop(derived, None)
        return cls(**doc)


def train_model(train: Dataset, kind, structure=None, cfg=None):
    """Fit one model of the given kind; returns ``(model, report)``."""
    structure = structure or {}
    if kind == "dgd":
        return dgd.fit(train, cfg=cfg)
    if kind == "mgd":
        return dgd.fit_generative(train, cfg=cfg)
    if kind == "hmgd":
        hcfg = cfg if isinstance(cfg, hmgd.HMGDConfig) else hmgd.HMGDConfig()
        return hmgd.fit(train, structure.get("K", 2), structure.get("M", 1), hcfg)
    raise InputError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")


def run_experiment(dataset: Dataset, kind="dgd", structure=None, cfg=None, folds=5,
                   seed=0, threads=None, plan: Optional[CVPlan] = None) -> ExperimentResult:
    """Stratified k-fold cross-validation of one model kind."""
    if kind not in MODEL_KINDS:
        raise InputError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    if dataset.labels is None:
        raise InputError("cross-validation needs labels")
    plan = plan or stratified_kfold(dataset.labels, folds, seed)
    C = dataset.class_count
    start = time.perf_counter()

    def one(i):
        train_idx, test_idx = plan.split(i)
        try:
            model, _ = train_model(dataset.subset(train_idx), kind, structure, cfg)
        except Exception as exc:
            exc.args = (f"fold {i}: {exc}",) + exc.args[1:]
            raise
        test = dataset.subset(test_idx)
        cm = ConfusionMatrix.from_labels(test.labels, model.predict(test.X), C)
        return accuracy(cm), mcc(cm)

    workers = thread_count() if threads is None else threads
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(one, range(plan.k)))
    else:
        scores = [one(i) for i in range(plan.k)]
    return ExperimentResult(kind, [s[0] for s in scores], [s[1] for s in scores], plan.k, seed,
                            dict(structure or {}), {"N": dataset.n_samples, "D": dataset.dim, "C": C},
                            time.perf_counter() - start)
