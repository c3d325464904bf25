"""Split impurity: classic entropy and min-label entropy (log base 2)."""

from __future__ import annotations

import enum
import math
from typing import Mapping, Sequence

import numpy as np


class ImpurityKind(enum.Enum):
    ENTROPY = "entropy"
    MIN_LABEL_ENTROPY = "mle"


Counts = Sequence[int] | Mapping[object, int] | np.ndarray


def _values(counts: Counts) -> list[int]:
    if isinstance(counts, Mapping):
        return [int(c) for c in counts.values()]
    return [int(c) for c in np.asarray(counts).ravel()]


def _k(p: float) -> float:
    # K(p) = -p log2 p, with K(0) = K(1) = 0 by branching.
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p)


def entropy(counts: Counts, total: int | None = None) -> float:
    values = _values(counts)
    n = sum(values) if total is None else int(total)
    if n <= 0:
        raise ValueError("entropy of an empty dataset is undefined")
    if sum(values) != n:
        raise ValueError("label counts must sum to the dataset size")
    return sum(_k(c / n) for c in values)


def split_entropy(left: Counts, right: Counts) -> float:
    """Size-weighted entropy of the two sides; an empty side contributes 0."""
    lv, rv = _values(left), _values(right)
    nl, nr = sum(lv), sum(rv)
    n = nl + nr
    if n == 0:
        raise ValueError("both sides of the split are empty")
    h = 0.0
    if nl:
        h += nl / n * entropy(lv)
    if nr:
        h += nr / n * entropy(rv)
    return h


def min_label_entropy(left: Counts, right: Counts) -> float:
    """Min over labels present in the node of the weighted per-label K terms of both sides.

    A split that puts every occurrence of some label on one side, alone,
    scores exactly 0.
    """
    lv, rv = _values(left), _values(right)
    if len(lv) != len(rv):
        raise ValueError("left and right counts must cover the same labels")
    nl, nr = sum(lv), sum(rv)
    n = nl + nr
    if n == 0:
        raise ValueError("both sides of the split are empty")
    best = math.inf
    for cl, cr in zip(lv, rv):
        if cl + cr == 0:
            continue  # labels absent from the node do not compete
        term = 0.0
        if nl:
            term += nl / n * _k(cl / nl)
        if nr:
            term += nr / n * _k(cr / nr)
        best = min(best, term)
    return best


def score(kind: ImpurityKind, left: Counts, right: Counts) -> float:
    if kind is ImpurityKind.ENTROPY:
        return split_entropy(left, right)
    if kind is ImpurityKind.MIN_LABEL_ENTROPY:
        return min_label_entropy(left, right)
    raise ValueError(f"unknown impurity kind {kind!r}")


def _k_array(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    inner = (p > 0.0) & (p < 1.0)
    q = p[inner]
    out[inner] = -q * np.log2(q)
    return out


def score_many(kind: ImpurityKind, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Vectorized :func:`score` over candidate splits.

    ``left`` and ``right`` are ``(n_candidates, n_labels)`` count matrices.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    nl = left.sum(axis=1, keepdims=True)
    nr = right.sum(axis=1, keepdims=True)
    n = nl + nr
    with np.errstate(invalid="ignore", divide="ignore"):
        pl = np.where(nl > 0, left / np.where(nl > 0, nl, 1), 0.0)
        pr = np.where(nr > 0, right / np.where(nr > 0, nr, 1), 0.0)
    kl = _k_array(pl)
    kr = _k_array(pr)
    wl = nl / n
    wr = nr / n
    if kind is ImpurityKind.ENTROPY:
        return (wl * kl.sum(axis=1, keepdims=True) + wr * kr.sum(axis=1, keepdims=True)).ravel()
    if kind is ImpurityKind.MIN_LABEL_ENTROPY:
        terms = np.where(left + right > 0, wl * kl + wr * kr, np.inf)
        return terms.min(axis=1)
    raise ValueError(f"unknown impurity kind {kind!r}")


def score_mask(kind: ImpurityKind, labels: np.ndarray, mask: np.ndarray, n_labels: int) -> float:
    """Impurity of the partition ``labels[mask]`` / ``labels[~mask]``."""
    left = np.bincount(labels[mask], minlength=n_labels)
    right = np.bincount(labels[~mask], minlength=n_labels)
    return score(kind, left, right)
