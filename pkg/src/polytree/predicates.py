"""Split predicates: axis-aligned, linear, quadratic polynomial and algebraic.

Every predicate has the shape ``lhs(state) <= threshold``.  When it holds the
state goes to the left (true) child; equality counts as true.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence, Union

import numpy as np

from .dataset import DatasetView, format_number
from .featuremap import FeatureMap, accumulate, parse_monomial
from .impurity import ImpurityKind, score_many

if TYPE_CHECKING:
    from .domainkb.expr import Expr

COEF_MIN = 1e-7
COEF_MAX = 1e7


class DimensionError(ValueError):
    """State vector length does not match the predicate."""


def _check_coeffs(coeffs: Sequence[float]) -> tuple[float, ...]:
    coeffs = tuple(float(a) for a in coeffs)
    if not any(coeffs):
        raise ValueError("predicate needs at least one nonzero coefficient")
    for a in coeffs:
        if not math.isfinite(a):
            raise ValueError("coefficients must be finite")
        if a != 0.0 and not (COEF_MIN <= abs(a) <= COEF_MAX):
            raise ValueError(f"coefficient {a!r} outside [1e-7, 1e7]")
    return coeffs


@dataclass(frozen=True)
class AxisAligned:
    feature: int
    threshold: float

    def __post_init__(self) -> None:
        if self.feature < 0:
            raise ValueError("feature index must be non-negative")
        object.__setattr__(self, "threshold", float(self.threshold))
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    def lhs(self, X: np.ndarray) -> np.ndarray:
        if self.feature >= X.shape[1]:
            raise DimensionError(f"feature {self.feature} out of range for {X.shape[1]} variables")
        return X[:, self.feature]


@dataclass(frozen=True)
class Linear:
    """``sum_i coeffs[i] * x_i <= threshold``."""

    coeffs: tuple[float, ...]
    threshold: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs))
        object.__setattr__(self, "threshold", float(self.threshold))
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    @property
    def n_vars(self) -> int:
        return len(self.coeffs)

    def lhs(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.n_vars:
            raise DimensionError(f"expected {self.n_vars} variables, got {X.shape[1]}")
        return accumulate(np.array(self.coeffs), X)


@dataclass(frozen=True)
class Polynomial:
    """``w . phi(x) <= threshold`` over the quadratic feature map of ``n_vars`` inputs.

    Rendered as ``w . phi(x) - threshold <= 0``.
    """

    n_vars: int
    coeffs: tuple[float, ...]
    threshold: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs))
        object.__setattr__(self, "threshold", float(self.threshold))
        if len(self.coeffs) != self.feature_map.dim:
            raise ValueError(f"expected {self.feature_map.dim} quadratic coefficients")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    @property
    def feature_map(self) -> FeatureMap:
        return FeatureMap(self.n_vars, 2)

    def lhs(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.n_vars:
            raise DimensionError(f"expected {self.n_vars} variables, got {X.shape[1]}")
        return accumulate(np.array(self.coeffs), self.feature_map.transform(X))


@dataclass(frozen=True)
class Algebraic:
    """``expr(x) <= threshold`` where ``expr`` ranges over state variables and bound constants."""

    expr: "Expr"
    threshold: float
    variables: tuple[str, ...]
    constants: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constants", tuple((n, float(v)) for n, v in self.constants))
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    def lhs(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != len(self.variables):
            raise DimensionError(f"expected {len(self.variables)} variables, got {X.shape[1]}")
        env: dict[str, Any] = dict(self.constants)
        for i, name in enumerate(self.variables):
            env[name] = X[:, i]
        from .domainkb.expr import evaluate as evaluate_expr

        with np.errstate(all="ignore"):
            out = np.asarray(evaluate_expr(self.expr, env), dtype=np.float64)
        return np.broadcast_to(out, (X.shape[0],))


Predicate = Union[AxisAligned, Linear, Polynomial, Algebraic]


def evaluate_many(p: Predicate, X: np.ndarray) -> np.ndarray:
    """Boolean mask of rows satisfying ``p``; NaN values evaluate to false."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("expected a 2-D state matrix")
    return p.lhs(X) <= p.threshold


def evaluate(p: Predicate, state: Sequence[float] | np.ndarray) -> bool:
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1:
        raise DimensionError("expected a single state vector")
    return bool(evaluate_many(p, state[None, :])[0])


class Generator(enum.IntEnum):
    """Candidate sources, in tie-break order."""

    AXIS = 0
    LINEAR = 1
    SVM_POLY = 2
    DOMAIN_KB = 3

    @property
    def tag(self) -> str:
        return {0: "axis", 1: "linear", 2: "svm-poly", 3: "domain-kb"}[self.value]


@dataclass(frozen=True)
class SplitCandidate:
    predicate: Predicate
    score: float
    priority: float
    generator: Generator
    order: int = 0  # feature index or label index inside the generator
    mask: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.score >= 0.0:
            raise ValueError("impurity score must be non-negative")
        if not 0.0 < self.priority <= 1.0:
            raise ValueError("priority must lie in (0, 1]")

    @property
    def effective(self) -> float:
        return self.score / self.priority

    def sort_key(self) -> tuple:
        # A perfect split beats any imperfect one regardless of priority.
        return (self.score != 0.0, self.effective, int(self.generator), self.order)


def _midpoints(u: np.ndarray) -> np.ndarray:
    lo, hi = u[:-1], u[1:]
    mid = 0.5 * lo + 0.5 * hi
    # Adjacent floats can round up to hi; keep the threshold strictly below it.
    return np.where((mid >= hi) | (mid < lo), lo, mid)


def axis_aligned_candidates(view: DatasetView, feature: int) -> list[float]:
    if len(view) == 0:
        raise ValueError("no candidates on an empty view")
    if not 0 <= feature < view.dataset.n_vars:
        raise DimensionError(f"feature {feature} out of range")
    u = np.unique(view.column(feature))
    return _midpoints(u).tolist()


def best_threshold(
    values: np.ndarray, labels: np.ndarray, n_labels: int, kind: ImpurityKind
) -> tuple[float, float] | None:
    """Best ``values <= c`` split over midpoint thresholds as ``(c, score)``.

    Ties go to the smallest threshold.  ``None`` when ``values`` has fewer
    than two distinct finite entries.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite values")
    order = np.argsort(values, kind="stable")
    v = values[order]
    lab = labels[order]
    cut = np.flatnonzero(v[1:] != v[:-1])  # split after position cut
    if cut.size == 0:
        return None
    onehot = np.zeros((v.size, n_labels), dtype=np.int64)
    onehot[np.arange(v.size), lab] = 1
    cum = np.cumsum(onehot, axis=0)
    left = cum[cut]
    right = cum[-1] - left
    scores = score_many(kind, left, right)
    j = int(np.argmin(scores))
    c = float(_midpoints(np.array([v[cut[j]], v[cut[j] + 1]]))[0])
    return c, float(scores[j])


def best_axis_split(view: DatasetView, kind: ImpurityKind, priority: float = 1.0) -> SplitCandidate | None:
    """Best axis-aligned split over all features; ties go to the lower feature index."""
    best: SplitCandidate | None = None
    labels = view.labels
    for f in range(view.dataset.n_vars):
        found = best_threshold(view.column(f), labels, view.dataset.n_labels, kind)
        if found is None:
            continue
        c, s = found
        cand = SplitCandidate(AxisAligned(f, c), s, priority, Generator.AXIS, f)
        if best is None or s < best.score:
            best = cand
    return best


# Rendering ------------------------------------------------------------------


def _join_terms(terms: list[tuple[float, str]]) -> str:
    parts: list[str] = []
    for coef, name in terms:
        mag = abs(coef)
        if name:
            body = name if mag == 1.0 else f"{format_number(mag)}*{name}"
        else:
            body = format_number(mag)
        if not parts:
            parts.append(body if coef > 0 else f"-{body}")
        else:
            parts.append(f"{'+' if coef > 0 else '-'} {body}")
    return " ".join(parts) if parts else "0"


def polynomial_terms(p: Polynomial, variable_names: Sequence[str]) -> list[tuple[float, str]]:
    """Nonzero terms in display order: squares, products, linear terms."""
    fm = p.feature_map
    names = fm.names(variable_names)
    m = p.n_vars
    order = list(range(fm.dim - m, fm.dim)) + list(range(m, fm.dim - m)) + list(range(m))
    return [(p.coeffs[d], names[d]) for d in order if p.coeffs[d] != 0.0]


def render(p: Predicate, variable_names: Sequence[str]) -> str:
    if isinstance(p, AxisAligned):
        return f"{variable_names[p.feature]} <= {format_number(p.threshold)}"
    if isinstance(p, Linear):
        if len(variable_names) != p.n_vars:
            raise DimensionError("variable name count mismatch")
        terms = [(a, n) for a, n in zip(p.coeffs, variable_names) if a != 0.0]
        return f"{_join_terms(terms)} <= {format_number(p.threshold)}"
    if isinstance(p, Polynomial):
        if len(variable_names) != p.n_vars:
            raise DimensionError("variable name count mismatch")
        terms = polynomial_terms(p, variable_names)
        if p.threshold != 0.0:
            terms.append((-p.threshold, ""))
        return f"{_join_terms(terms)} <= 0"
    if isinstance(p, Algebraic):
        from .domainkb.expr import render as render_expr

        return f"{render_expr(p.expr)} <= {format_number(p.threshold)}"
    raise TypeError(f"not a predicate: {p!r}")


def _parse_sum(text: str, variable_names: Sequence[str]) -> tuple[dict, float]:
    """Parse ``[+-] [num[*]] [monomial]`` terms into ``({monomial: coef}, constant)``."""
    coeffs: dict = {}
    const = 0.0
    tokens = re.split(r"\s+(?=[+-]\s)", text.strip())
    for tok in tokens:
        m = re.fullmatch(r"([+-])?\s*(?:(\d[\d.]*(?:[eE][+-]?\d+)?|inf|nan)(?:\*|$))?\s*([A-Za-z_]\w*(?:\^2|\*[A-Za-z_]\w*)?)?", tok.strip())
        if m is None or (m.group(2) is None and m.group(3) is None):
            raise ValueError(f"cannot parse term {tok!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        num = float(m.group(2)) if m.group(2) is not None else 1.0
        if m.group(3) is None:
            const += sign * num
        else:
            mon = parse_monomial(m.group(3), variable_names)
            coeffs[mon] = coeffs.get(mon, 0.0) + sign * num
    return coeffs, const


def parse(text: str, variable_names: Sequence[str]) -> Predicate:
    """Inverse of :func:`render` for axis, linear and polynomial predicates."""
    if "<=" not in text:
        raise ValueError("predicate must be in '<=' form")
    lhs, rhs = text.rsplit("<=", 1)
    coeffs, const = _parse_sum(lhs, variable_names)
    threshold = float(rhs) - const
    m = len(variable_names)
    if any(len(mon) == 2 for mon in coeffs):
        fm = FeatureMap(m, 2)
        w = [coeffs.get(mon, 0.0) for mon in fm.monomials]
        return Polynomial(m, tuple(w), threshold)
    if len(coeffs) == 1:
        ((mon, a),) = coeffs.items()
        if a == 1.0:
            return AxisAligned(mon[0], threshold)
    return Linear(tuple(coeffs.get((i,), 0.0) for i in range(m)), threshold)
