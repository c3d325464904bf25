"""Explicit monomial feature maps, z-score standardization, hyperplane conversion.

Monomial order for the quadratic map over ``M`` variables is fixed:
all ``v_i``, then all products ``v_i*v_j`` (i<j), then all squares ``v_i^2``.
For ``(v_e, v_f, d_r)`` that is
``(v_e, v_f, d_r, v_e*v_f, v_e*d_r, v_f*d_r, v_e^2, v_f^2, d_r^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

Monomial = tuple[int, ...]


@dataclass(frozen=True)
class FeatureMap:
    """Monomial expansion of degree 1 (identity) or 2 (quadratic)."""

    n_vars: int
    degree: int = 2

    def __post_init__(self) -> None:
        if self.n_vars < 1:
            raise ValueError("feature map needs at least one input variable")
        if self.degree not in (1, 2):
            raise ValueError("only degree 1 and 2 maps are supported")

    @cached_property
    def monomials(self) -> tuple[Monomial, ...]:
        m = self.n_vars
        mons: list[Monomial] = [(i,) for i in range(m)]
        if self.degree == 2:
            mons += [(i, j) for i in range(m) for j in range(i + 1, m)]
            mons += [(i, i) for i in range(m)]
        return tuple(mons)

    @property
    def dim(self) -> int:
        m = self.n_vars
        return m if self.degree == 1 else m + m * (m + 1) // 2

    def names(self, var_names: Sequence[str]) -> list[str]:
        return [monomial_name(mon, var_names) for mon in self.monomials]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self.transform(X[None, :])[0]
        if X.shape[1] != self.n_vars:
            raise ValueError(f"expected {self.n_vars} variables, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.dim), dtype=np.float64)
        for d, mon in enumerate(self.monomials):
            col = X[:, mon[0]].copy()
            for i in mon[1:]:
                col = col * X[:, i]
            out[:, d] = col
        return out


def quadratic_map(state: Sequence[float] | np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    return FeatureMap(state.shape[-1], 2).transform(state)


def monomial_name(mon: Monomial, var_names: Sequence[str]) -> str:
    if len(mon) == 1:
        return var_names[mon[0]]
    i, j = mon
    if i == j:
        return f"{var_names[i]}^2"
    return f"{var_names[i]}*{var_names[j]}"


def parse_monomial(name: str, var_names: Sequence[str]) -> Monomial:
    index = {v: i for i, v in enumerate(var_names)}
    try:
        if name.endswith("^2"):
            i = index[name[:-2]]
            return (i, i)
        if name in index:
            return (index[name],)
        a, b = name.split("*")
        i, j = sorted((index[a], index[b]))
        return (i, j)
    except (KeyError, ValueError):
        raise ValueError(f"unknown monomial {name!r}") from None


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def transform(self, Phi: np.ndarray) -> np.ndarray:
        return (np.asarray(Phi, dtype=np.float64) - self.mean) / self.std


def fit_standardizer(matrix: np.ndarray) -> Standardizer:
    """Population mean/std per column; zero-variance columns get ``std = 1``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError("need a non-empty 2-D matrix")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    constant = std == 0.0
    std = np.where(constant, 1.0, std)
    return Standardizer(mean, std, constant)


@dataclass(frozen=True)
class Hyperplane:
    """Decision rule ``sgn(w.x - b)``; ``space`` is ``"standardized"`` or ``"raw"``."""

    w: np.ndarray
    b: float
    space: str = "raw"

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValueError("hyperplane coefficients must be finite")

    def decision(self, Phi: np.ndarray) -> np.ndarray:
        return np.asarray(Phi, dtype=np.float64) @ self.w - self.b

    def with_(self, w: np.ndarray | None = None, b: float | None = None) -> "Hyperplane":
        return Hyperplane(self.w if w is None else w, self.b if b is None else b, self.space)


def destandardize_hyperplane(h: Hyperplane, s: Standardizer) -> Hyperplane:
    """Express a standardized-space hyperplane over raw features.

    ``w.z - b`` with ``z = (x - mu)/sigma`` equals ``w'.x - b'`` for
    ``w' = w/sigma`` and ``b' = b + sum(w*mu/sigma)``.
    """
    if h.w.shape != s.mean.shape:
        raise ValueError("hyperplane and standardizer dimensions differ")
    w_raw = h.w / s.std
    b_raw = h.b + float(np.sum(h.w * s.mean / s.std))
    return Hyperplane(w_raw, b_raw, "raw")


def accumulate(w: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    """``sum_d w_d * Phi[:, d]`` accumulated left to right over nonzero ``w_d``.

    This fixed order is what exported C code reproduces, so verification in
    Python and evaluation on a device agree bit for bit.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    acc = np.zeros(Phi.shape[0], dtype=np.float64)
    for d in np.flatnonzero(w):
        acc = acc + w[d] * Phi[:, d]
    return acc


def left_side(h: Hyperplane, Phi: np.ndarray) -> np.ndarray:
    """Rows with ``w.x <= b`` (predicate true, routed left)."""
    return accumulate(h.w, Phi) <= h.b
