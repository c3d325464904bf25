"""Make learned predicates readable without changing what they classify.

Every step here preserves the side of every row of the node's data, with
the single exception of clamping, which reports how many rows moved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .dataset import ControllerDataset
from .featuremap import Hyperplane, left_side
from .predicates import COEF_MAX, COEF_MIN

NUDGE = 1e-5


@dataclass
class RelevanceReport:
    variable_names: tuple[str, ...]
    ratios: list[float] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)

    @property
    def kept(self) -> list[int]:
        return [i for i in range(len(self.variable_names)) if i not in self.removed]

    def to_dict(self) -> dict:
        return {
            "collision_ratio": dict(zip(self.variable_names, self.ratios)),
            "removed": [self.variable_names[i] for i in self.removed],
        }

    def __str__(self) -> str:
        rows = [
            f"  {n}: collisions {r:.4f}{' (removed)' if i in self.removed else ''}"
            for i, (n, r) in enumerate(zip(self.variable_names, self.ratios))
        ]
        return "feature relevance:\n" + "\n".join(rows)


def _collision_ratio(X: np.ndarray, labels: np.ndarray, cols: list[int]) -> float:
    n = X.shape[0]
    if cols:
        _, group = np.unique(X[:, cols], axis=0, return_inverse=True)
        group = group.ravel()
    else:
        group = np.zeros(n, dtype=np.int64)
    lo = np.full(group.max() + 1, np.iinfo(np.int64).max)
    hi = np.full(group.max() + 1, -1)
    np.minimum.at(lo, group, labels)
    np.maximum.at(hi, group, labels)
    colliding = lo[group] != hi[group]
    return float(colliding.sum()) / n


def feature_relevance(ds: ControllerDataset) -> RelevanceReport:
    """Drop, in declaration order, each feature whose removal causes no label collision."""
    if ds.n_states == 0:
        raise ValueError("empty dataset")
    report = RelevanceReport(ds.variable_names)
    kept = list(range(ds.n_vars))
    for f in range(ds.n_vars):
        others = [k for k in kept if k != f]
        ratio = _collision_ratio(ds.X, ds.labels, others)
        report.ratios.append(ratio)
        if ratio == 0.0:
            kept.remove(f)
            report.removed.append(f)
    return report


def reduce_dataset(ds: ControllerDataset, report: RelevanceReport) -> ControllerDataset:
    """Project onto the kept features and merge states that became equal."""
    if not report.removed:
        return ds
    kept = report.kept
    X = ds.X[:, kept]
    _, first = np.unique(X, axis=0, return_index=True)
    first = np.sort(first)
    return ControllerDataset(
        [ds.variable_names[i] for i in kept],
        X[first],
        ds.labels[first],
        ds.label_table,
        ds.action_names,
    )


def _same_sides(h: Hyperplane, Phi: np.ndarray, part: np.ndarray) -> bool:
    return bool(np.array_equal(left_side(h, Phi), part))


def zero_coefficients(
    Phi: np.ndarray,
    target: np.ndarray,
    h: Hyperplane,
    retrain: Callable[[frozenset], Hyperplane],
) -> Hyperplane:
    """Retrain without one feature-map dimension at a time, smallest ``|w|`` first.

    A removal is kept when the retrained hyperplane puts every row on the
    same side as before, which also keeps the accuracy on ``target``.
    """
    part = left_side(h, Phi)
    excluded: frozenset[int] = frozenset(int(d) for d in np.flatnonzero(h.w == 0.0))
    tried: set[int] = set()
    current = h
    while True:
        open_dims = [d for d in np.flatnonzero(current.w) if d not in tried]
        if not open_dims:
            return current
        d = int(min(open_dims, key=lambda k: (abs(current.w[k]), k)))
        tried.add(d)
        try:
            cand = retrain(excluded | {d})
        except ValueError:
            continue
        if np.any(cand.w) and _same_sides(cand, Phi, part):
            current = cand
            excluded = excluded | {d} | frozenset(int(k) for k in np.flatnonzero(cand.w == 0.0))


def scale_hyperplane(h: Hyperplane) -> Hyperplane:
    """Scale by a positive factor so the coefficient closest to 1 in magnitude becomes exactly +-1."""
    nz = np.flatnonzero(h.w)
    if nz.size == 0:
        raise ValueError("cannot scale an all-zero hyperplane")
    k = int(nz[np.argmin(np.abs(np.abs(h.w[nz]) - 1.0))])
    s = 1.0 / abs(h.w[k])
    w = h.w * s
    w[k] = math.copysign(1.0, h.w[k])
    return Hyperplane(w, h.b * s, h.space)


def rounding_ladder(x: float) -> Iterator[float]:
    """Nearest power of ten, then 1, 2, ... significant digits, ending at ``x`` itself."""
    if x == 0.0 or not math.isfinite(x):
        return
    seen = {x}
    p = math.copysign(10.0 ** round(math.log10(abs(x))), x)
    if p not in seen:
        seen.add(p)
        yield p
    for digits in range(1, 18):
        c = float(f"{x:.{digits - 1}e}")
        if c == x:
            return
        if c not in seen:
            seen.add(c)
            yield c


def nudge(candidate: float, original: float) -> float:
    """Move ``candidate`` by a relative 1e-5 further away from ``original``."""
    if candidate == original:
        return candidate
    return candidate + math.copysign(NUDGE * abs(candidate), candidate - original)


def round_coefficients(Phi: np.ndarray, h: Hyperplane) -> Hyperplane:
    """Replace each coefficient and the intercept by the shortest ladder value that keeps every row's side.

    Candidates are also checked in over-approximated form (nudged away from
    the original); since each row's value is affine in one coefficient, both
    endpoints agreeing covers every value in between.  No retraining.
    """
    part = left_side(h, Phi)
    w = h.w.copy()
    b = h.b
    order = sorted(np.flatnonzero(w), key=lambda k: (abs(w[k]), k))
    for d in order:
        orig = w[d]
        for c in rounding_ladder(orig):
            ok = True
            for val in (nudge(c, orig), c):
                w[d] = val
                if not _same_sides(Hyperplane(w, b, h.space), Phi, part):
                    ok = False
                    break
            if ok:
                w[d] = c
                break
            w[d] = orig
    orig = b
    for c in rounding_ladder(orig):
        if all(_same_sides(Hyperplane(w, val, h.space), Phi, part) for val in (nudge(c, orig), c)):
            b = c
            break
    return Hyperplane(w, b, h.space)


def clamp_coefficients(h: Hyperplane, Phi: np.ndarray | None = None) -> tuple[Hyperplane, int]:
    """Clip nonzero ``|w|`` into ``[1e-7, 1e7]``; returns the result and how many rows changed side."""
    a = np.abs(h.w)
    w = np.where(a > COEF_MAX, np.copysign(COEF_MAX, h.w), h.w)
    w = np.where((a > 0) & (a < COEF_MIN), np.copysign(COEF_MIN, h.w), w)
    out = Hyperplane(w, h.b, h.space)
    changed = 0
    if Phi is not None and not np.array_equal(w, h.w):
        changed = int(np.sum(left_side(h, Phi) != left_side(out, Phi)))
    return out, changed


def prettify_hyperplane(
    Phi: np.ndarray,
    target: np.ndarray,
    h: Hyperplane,
    retrain: Callable[[frozenset], Hyperplane] | None = None,
) -> Hyperplane:
    """Zero, scale, then round; the partition of ``Phi`` is preserved throughout."""
    part = left_side(h, Phi)
    if retrain is not None:
        h = zero_coefficients(Phi, target, h, retrain)
    scaled = scale_hyperplane(h)
    if _same_sides(scaled, Phi, part):
        h = scaled
    h = round_coefficients(Phi, h)
    assert _same_sides(h, Phi, part)
    return h
