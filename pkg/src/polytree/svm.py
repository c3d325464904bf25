"""Linear SVM trainer (dual coordinate descent) and SVM-based split candidates.

The trainer minimizes ``0.5*|w|^2 + C * sum_i s_i * max(0, 1 - y_i (w.x_i + w_0))``
where the bias ``w_0`` is the weight of an appended constant-1 feature and
is regularized like every other weight.  Samples are visited in index order,
so results are fully deterministic.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .dataset import DatasetView, LabelSet
from .featuremap import (
    FeatureMap,
    Hyperplane,
    Standardizer,
    destandardize_hyperplane,
    fit_standardizer,
    left_side,
)
from .impurity import ImpurityKind, score_mask
from .predicates import COEF_MAX, Generator, Linear, Polynomial, SplitCandidate

log = logging.getLogger(__name__)

CONTROL_WEIGHT = 1e-3


class SvmError(ValueError):
    """Training inputs are unusable (single class, non-finite values)."""


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_epochs: int = 1000
    # Multiply C by 10 (warm-started) while training accuracy is below 1, up to this value.
    C_max: float = 1e6
    deterministic: bool = True

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.C_max < self.C:
            raise ValueError("C_max must be at least C")


@dataclass(frozen=True)
class TrainResult:
    hyperplane: Hyperplane  # standardized space when trained on standardized features
    accuracy: float
    converged: bool
    epochs: int
    C: float = 1.0


@njit(cache=True, nogil=True)
def _dual_cd(X, y, upper, tol, max_epochs, w, alpha):  # pragma: no cover - compiled
    n, d = X.shape
    qii = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += X[i, j] * X[i, j]
        qii[i] = s
    for epoch in range(max_epochs):
        pg_max = -np.inf
        pg_min = np.inf
        for i in range(n):
            if qii[i] == 0.0:
                continue
            g = 0.0
            for j in range(d):
                g += w[j] * X[i, j]
            g = y[i] * g - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == upper[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                new = min(max(a - g / qii[i], 0.0), upper[i])
                delta = (new - a) * y[i]
                if delta != 0.0:
                    for j in range(d):
                        w[j] += delta * X[i, j]
                alpha[i] = new
        if pg_max - pg_min <= tol:
            return epoch + 1, True
    return max_epochs, False


def _check_inputs(features: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise SvmError("features must be N x D with one label per row")
    if X.shape[0] < 2:
        raise SvmError("need at least two samples")
    if not np.all(np.isfinite(X)):
        raise SvmError("non-finite feature values")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise SvmError("labels must be +1/-1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SvmError("both classes must be present")
    return X, y


def _accuracy(h: Hyperplane, X: np.ndarray, y: np.ndarray) -> float:
    pred = np.where(h.decision(X) > 0.0, 1.0, -1.0)
    return float(np.mean(pred == y))


def train_linear_svm(
    features: np.ndarray,
    labels: np.ndarray,
    cfg: SvmConfig = SvmConfig(),
    weights: np.ndarray | None = None,
    *,
    escalate: bool = False,
    space: str = "standardized",
) -> TrainResult:
    """Train on ``features`` (already standardized by the caller) and ``+-1`` labels.

    With ``escalate`` the penalty C grows tenfold, warm-started from the
    previous dual solution, until training accuracy reaches 1.  If that never
    happens up to ``C_max`` the data is treated as not separable and the
    soft-margin solution at the base C is returned.
    """
    X, y = _check_inputs(features, labels)
    n, d = X.shape
    s = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if s.shape != (n,) or not np.all(s > 0):
        raise SvmError("sample weights must be positive, one per row")
    Xb = np.ascontiguousarray(np.hstack([X, np.ones((n, 1))]))
    w = np.zeros(d + 1)
    alpha = np.zeros(n)
    C = cfg.C
    base: TrainResult | None = None
    while True:
        epochs, converged = _dual_cd(Xb, y, C * s, cfg.tol, cfg.max_epochs, w, alpha)
        h = Hyperplane(w[:d].copy(), -float(w[d]), space)
        res = TrainResult(h, _accuracy(h, X, y), bool(converged), int(epochs), C)
        if base is None:
            base = res
        if not escalate or res.accuracy == 1.0:
            return res
        if C * 10 > cfg.C_max:
            return base
        C *= 10


def one_vs_rest_encode(view: DatasetView, target: LabelSet | int) -> np.ndarray:
    ds = view.dataset
    idx = ds.label_table.index(target) if isinstance(target, LabelSet) else int(target)
    labels = view.labels
    if not np.any(labels == idx):
        raise ValueError("target label does not occur in the view")
    return np.where(labels == idx, 1.0, -1.0)


def augment_control_samples(
    features: np.ndarray, labels: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Append ``(e_i, +1)`` and ``(e_i, -1)`` for every dimension, with weight 1e-3 of the regular one."""
    X = np.asarray(features, dtype=np.float64)
    d = X.shape[1]
    w_ctrl = CONTROL_WEIGHT * float(np.min(weights))
    eye = np.eye(d)
    Xa = np.vstack([X, eye, eye])
    ya = np.concatenate([labels, np.ones(d), -np.ones(d)])
    wa = np.concatenate([weights, np.full(2 * d, w_ctrl)])
    return Xa, ya, wa


# Split candidate pipeline ----------------------------------------------------


@dataclass
class RawTrainer:
    """Trains one-vs-rest on raw feature-map values and returns raw left-form hyperplanes.

    Left form means the target rows satisfy ``w.phi <= b``.  ``excluded``
    dimensions are zeroed in the standardized matrix, which keeps their
    weight exactly 0 under coordinate descent.
    """

    Phi: np.ndarray
    y: np.ndarray
    cfg: SvmConfig
    standardizer: Standardizer = field(init=False)
    control_samples: bool = False

    def __post_init__(self) -> None:
        self.standardizer = fit_standardizer(self.Phi)

    def __call__(self, excluded: frozenset[int] = frozenset()) -> Hyperplane:
        X, y = self.Phi, self.y
        wts = np.ones(len(y))
        if self.control_samples:
            X, y, wts = augment_control_samples(X, y, wts)
        Z = self.standardizer.transform(X)
        if excluded:
            Z[:, sorted(excluded)] = 0.0
        res = train_linear_svm(Z, y, self.cfg, wts, escalate=True)
        raw = destandardize_hyperplane(res.hyperplane, self.standardizer)
        # Target (+1) lies on the positive side; flip so it is the "<=" side.
        w = -raw.w
        w[sorted(excluded)] = 0.0
        return Hyperplane(w, -raw.b, "raw")


def fit_label_predicate(
    Phi: np.ndarray, target: np.ndarray, cfg: SvmConfig, prettify: bool = True
) -> Hyperplane | None:
    """Train, sanitize and prettify a raw left-form hyperplane isolating ``target`` rows."""
    from . import prettify as pp

    y = np.where(target, 1.0, -1.0)
    trainer = RawTrainer(Phi, y, cfg)
    h = trainer()
    if np.max(np.abs(h.w)) > COEF_MAX:
        log.debug("coefficient above 1e7, retraining with control samples")
        trainer.control_samples = True
        h = trainer()
    if not np.any(h.w):
        return None
    if prettify:
        h = pp.prettify_hyperplane(Phi, target, h, trainer)
    h, changed = pp.clamp_coefficients(h, Phi)
    if changed:
        log.info("clamping changed the side of %d rows", changed)
    return h


def _hyperplane_predicate(h: Hyperplane, n_vars: int, degree: int):
    if degree == 1:
        return Linear(tuple(h.w), h.b)
    return Polynomial(n_vars, tuple(h.w), h.b)


def svm_candidate(
    view: DatasetView,
    impurity: ImpurityKind,
    cfg: SvmConfig = SvmConfig(),
    *,
    degree: int = 2,
    priority: float = 1.0,
    threads: int = 1,
    prettify: bool = True,
) -> SplitCandidate | None:
    """Best one-vs-rest SVM split over every label present in ``view``."""
    present = view.present_labels()
    if len(present) < 2:
        return None
    fm = FeatureMap(view.dataset.n_vars, degree)
    Phi = fm.transform(view.X)
    labels = view.labels
    n_labels = view.dataset.n_labels
    generator = Generator.LINEAR if degree == 1 else Generator.SVM_POLY

    def run(lab: int) -> SplitCandidate | None:
        try:
            h = fit_label_predicate(Phi, labels == lab, cfg, prettify)
        except (SvmError, ValueError) as exc:
            log.debug("label %d skipped: %s", lab, exc)
            return None
        if h is None:
            return None
        try:
            pred = _hyperplane_predicate(h, fm.n_vars, degree)
        except ValueError as exc:
            log.debug("label %d skipped: %s", lab, exc)
            return None
        mask = left_side(h, Phi)
        if mask.all() or not mask.any():
            return None
        s = score_mask(impurity, labels, mask, n_labels)
        return SplitCandidate(pred, s, priority, generator, lab, mask)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, present))
    else:
        results = [run(lab) for lab in present]
    best: SplitCandidate | None = None
    for cand in results:
        if cand is not None and (best is None or cand.score < best.score):
            best = cand
    return best


def polynomial_candidate(view, impurity, cfg=SvmConfig(), **kw) -> SplitCandidate | None:
    return svm_candidate(view, impurity, cfg, degree=2, **kw)


def linear_candidate(view, impurity, cfg=SvmConfig(), **kw) -> SplitCandidate | None:
    return svm_candidate(view, impurity, cfg, degree=1, **kw)


TrainerFn = Callable[[frozenset], Hyperplane]
