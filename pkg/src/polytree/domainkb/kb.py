"""Knowledge bases and the pool-growing enumeration of algebraic expressions.

File format, one declaration per line (``#`` starts a comment)::

    quantity d v a t
    constant d_safe d 5
    variable v_e v
    identity a = 2*(d - t*v)/t^2

Identities are written over quantity names; substituting a pool member of
the matching quantity for each quantity symbol yields a new value of the
target quantity.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .expr import Expr, ExprError, Sym, canonical_key, parse_expr, render, substitute, symbols

log = logging.getLogger(__name__)

DEFAULT_CAP = 1_000_000
FINGERPRINT_SAMPLES = 64
FINGERPRINT_SEED = 20231
FINGERPRINT_DIGITS = 10


class KnowledgeBaseError(ValueError):
    pass


class PoolCapExceeded(RuntimeError):
    """Enumeration would exceed the expression cap; ``counts`` holds what was done so far."""

    def __init__(self, needed: int, cap: int, counts: list[dict]) -> None:
        super().__init__(f"expression count {needed} exceeds cap {cap}")
        self.needed = needed
        self.cap = cap
        self.counts = counts


@dataclass(frozen=True)
class Identity:
    target: str
    expr: Expr
    text: str

    @property
    def quantities(self) -> tuple[str, ...]:
        # Deterministic order: first appearance in the source text.
        seen: list[str] = []
        for name in _symbol_order(self.expr):
            if name not in seen:
                seen.append(name)
        return tuple(seen)


def _symbol_order(e: Expr) -> list[str]:
    if isinstance(e, Sym):
        return [e.name]
    out: list[str] = []
    for child in ("a", "b"):
        sub = getattr(e, child, None)
        if sub is not None:
            out.extend(_symbol_order(sub))
    return out


@dataclass(frozen=True)
class KnowledgeBase:
    quantities: tuple[str, ...]
    constants: tuple[tuple[str, str, float], ...]  # (name, quantity, value)
    variables: tuple[tuple[str, str], ...]  # (name, quantity)
    identities: tuple[Identity, ...]

    def __post_init__(self) -> None:
        names = [c[0] for c in self.constants] + [v[0] for v in self.variables]
        if len(set(names)) != len(names):
            raise KnowledgeBaseError("every constant and variable must be declared once")
        clash = set(names) & set(self.quantities)
        if clash:
            raise KnowledgeBaseError(f"names clash with quantities: {sorted(clash)}")
        for name, q, *_ in list(self.constants) + list(self.variables):
            if q not in self.quantities:
                raise KnowledgeBaseError(f"{name} tagged with unknown quantity {q!r}")
        for ident in self.identities:
            if ident.target not in self.quantities:
                raise KnowledgeBaseError(f"identity target {ident.target!r} is not a quantity")
            unknown = symbols(ident.expr) - set(self.quantities)
            if unknown:
                raise KnowledgeBaseError(f"identity {ident.text!r} uses non-quantities {sorted(unknown)}")

    @property
    def constant_values(self) -> dict[str, float]:
        return {n: v for n, _, v in self.constants}

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.variables)

    def quantity_of(self, name: str) -> str:
        for n, q, *_ in list(self.constants) + list(self.variables):
            if n == name:
                return q
        raise KnowledgeBaseError(f"untagged symbol {name!r}")

    def without(self, *names: str) -> "KnowledgeBase":
        return replace(
            self,
            constants=tuple(c for c in self.constants if c[0] not in names),
            variables=tuple(v for v in self.variables if v[0] not in names),
        )

    def with_values(self, values: Mapping[str, float]) -> "KnowledgeBase":
        return replace(
            self, constants=tuple((n, q, float(values.get(n, v))) for n, q, v in self.constants)
        )


def parse_kb(text: str) -> KnowledgeBase:
    quantities: list[str] = []
    constants: list[tuple[str, str, float]] = []
    variables: list[tuple[str, str]] = []
    identities: list[Identity] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        parts = rest.split()
        try:
            if head == "quantity":
                quantities.extend(parts)
            elif head == "constant":
                name, q, value = parts
                constants.append((name, q, float(value)))
            elif head == "variable":
                name, q = parts
                variables.append((name, q))
            elif head == "identity":
                target, _, body = rest.partition("=")
                identities.append(Identity(target.strip(), parse_expr(body), body.strip()))
            else:
                raise KnowledgeBaseError(f"unknown declaration {head!r}")
        except (ValueError, ExprError) as exc:
            raise KnowledgeBaseError(f"line {lineno}: {exc}") from None
    return KnowledgeBase(tuple(quantities), tuple(constants), tuple(variables), tuple(identities))


def load_kb(path: str | Path) -> KnowledgeBase:
    return parse_kb(Path(path).read_text(encoding="utf-8"))


def cruise_kb() -> KnowledgeBase:
    """The shipped cruise-control knowledge base (includes ``a_neu``)."""
    text = resources.files("polytree.data").joinpath("cruise.kb").read_text(encoding="utf-8")
    return parse_kb(text)


# Pools -----------------------------------------------------------------------


@dataclass(frozen=True)
class Entry:
    expr: Expr
    quantity: str
    trace: str
    key: str
    values: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass
class Pools:
    """Ordered, structurally deduplicated value pools ``V_p``."""

    order: tuple[str, ...]
    entries: dict[str, list[Entry]] = field(default_factory=dict)
    keys: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for q in self.order:
            self.entries.setdefault(q, [])
            self.keys.setdefault(q, set())

    def add(self, expr: Expr, quantity: str, trace: str, values=None, key: str | None = None) -> bool:
        """Insert unless structurally equal to a member or a structural zero."""
        key = canonical_key(expr) if key is None else key
        if not key or key == "#0" or key in self.keys[quantity]:
            return False
        self.keys[quantity].add(key)
        self.entries[quantity].append(Entry(expr, quantity, trace, key, values))
        return True

    def sizes(self) -> dict[str, int]:
        return {q: len(self.entries[q]) for q in self.order}

    def copy(self) -> "Pools":
        return Pools(self.order, {q: list(v) for q, v in self.entries.items()}, {q: set(v) for q, v in self.keys.items()})

    def all(self) -> list[Entry]:
        return [e for q in self.order for e in self.entries[q]]


def init_pools(kb: KnowledgeBase, seed: int = FINGERPRINT_SEED) -> Pools:
    pools = Pools(kb.quantities)
    env = fingerprint_env(kb, seed=seed)
    for name, q, _ in kb.constants:
        pools.add(Sym(name), q, "constant", _sample(env[name]))
    for name, q in kb.variables:
        pools.add(Sym(name), q, "state variable", _sample(env[name]))
    return pools


def _sample(v) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=np.float64), (FINGERPRINT_SAMPLES,))


def sum_count(pools: Pools) -> int:
    return sum(2 * n * n for n in pools.sizes().values())


def expand_sums(pools: Pools) -> tuple[Pools, int]:
    """Add ``x1 + x2`` and ``x1 - x2`` for every ordered pair within each pool.

    Returns the grown pools and the number of candidate expressions formed.
    """
    from .expr import Add, Sub

    out = pools.copy()
    formed = 0
    for q in pools.order:
        members = pools.entries[q]
        for x1, x2 in itertools.product(members, repeat=2):
            for op, sym in ((Add, "+"), (Sub, "-")):
                formed += 1
                vals = _combine(x1.values, x2.values, sym)
                out.add(op(x1.expr, x2.expr), q, f"sum: ({render(x1.expr)}) {sym} ({render(x2.expr)})", vals)
    return out, formed


def _combine(a, b, sym):
    if a is None or b is None:
        return None
    with np.errstate(all="ignore"):
        return a + b if sym == "+" else a - b


def substitution_count(pools: Pools, kb: KnowledgeBase) -> int:
    sizes = pools.sizes()
    return sum(math.prod(sizes[q] for q in ident.quantities) for ident in kb.identities)


def apply_identities(pools: Pools, kb: KnowledgeBase) -> tuple[Pools, list[Entry]]:
    """Every total substitution of pool members into every identity.

    Returns the grown pools and the full list of substitution results in
    enumeration order (before deduplication).
    """
    from .expr import evaluate

    out = pools.copy()
    produced: list[Entry] = []
    for k, ident in enumerate(kb.identities):
        qs = ident.quantities
        for combo in itertools.product(*(pools.entries[q] for q in qs)):
            mapping = {q: e.expr for q, e in zip(qs, combo)}
            new = substitute(ident.expr, mapping)
            trace = f"identity {k + 1} ({ident.target} = {ident.text}) with " + ", ".join(
                f"{q} := {render(e.expr)}" for q, e in zip(qs, combo)
            )
            vals = None
            if all(e.values is not None for e in combo):
                # Same operations as evaluating the substituted tree, so bitwise equal.
                with np.errstate(all="ignore"):
                    vals = _sample(evaluate(ident.expr, {q: e.values for q, e in zip(qs, combo)}))
            key = canonical_key(new) or ""
            entry = Entry(new, ident.target, trace, key, vals)
            produced.append(entry)
            out.add(new, ident.target, trace, vals, key)
    return out, produced


def fingerprint_env(kb: KnowledgeBase, samples: int = FINGERPRINT_SAMPLES, seed: int = FINGERPRINT_SEED) -> dict:
    """Constants bound to their values, state variables to fixed pseudorandom draws."""
    rng = np.random.default_rng(seed)
    env: dict[str, object] = dict(kb.constant_values)
    for name in kb.variable_names:
        env[name] = rng.uniform(-10.0, 10.0, samples)
    return env


def fingerprint(e: Expr | Entry, env: Mapping[str, object] | None = None, samples: int = FINGERPRINT_SAMPLES) -> tuple:
    """Values on the sample bindings rounded to 10 significant digits; NaN and inf kept as tokens."""
    from .expr import evaluate

    if isinstance(e, Entry) and e.values is not None:
        v = e.values
    else:
        expr = e.expr if isinstance(e, Entry) else e
        with np.errstate(all="ignore"):
            v = np.broadcast_to(np.asarray(evaluate(expr, env), dtype=np.float64), (samples,))
    out = []
    for x in v.tolist():
        if math.isnan(x):
            out.append("nan")
        elif math.isinf(x):
            out.append("inf" if x > 0 else "-inf")
        else:
            out.append(float(f"{x:.{FINGERPRINT_DIGITS}g}") + 0.0)
    return tuple(out)


def is_constant_only(e: Expr, kb: KnowledgeBase) -> bool:
    return not (symbols(e) & set(kb.variable_names))


@dataclass
class PoolResult:
    pools: Pools
    counts: list[dict]  # one record per iteration

    @property
    def expressions(self) -> list[Entry]:
        return self.pools.all()


def generate_pool(
    kb: KnowledgeBase,
    iterations: int,
    with_sums: bool = False,
    cap: int = DEFAULT_CAP,
    seed: int = FINGERPRINT_SEED,
) -> PoolResult:
    """Grow the pools ``iterations`` times (sums first when enabled, then identities).

    Per iteration the record holds the raw number of substitution results,
    how many were structurally new, and how many distinct numeric
    fingerprints the non-constant results have.
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    pools = init_pools(kb, seed)
    env = fingerprint_env(kb, seed=seed)
    counts: list[dict] = []
    for it in range(1, iterations + 1):
        rec: dict = {"iteration": it}
        if with_sums:
            need = sum_count(pools)
            if need > cap:
                raise PoolCapExceeded(need, cap, counts)
            pools, rec["sum_terms"] = expand_sums(pools)
        need = substitution_count(pools, kb)
        if need > cap:
            raise PoolCapExceeded(need, cap, counts)
        before = sum(pools.sizes().values())
        pools, produced = apply_identities(pools, kb)
        nonconst = [e for e in produced if not is_constant_only(e.expr, kb)]
        rec["raw"] = len(produced)
        rec["structurally_distinct"] = len({e.key for e in produced if e.key})
        rec["added"] = sum(pools.sizes().values()) - before
        rec["constant_only"] = len(produced) - len(nonconst)
        rec["numerically_unique"] = len({fingerprint(e, env) for e in nonconst})
        rec["pool_sizes"] = pools.sizes()
        counts.append(rec)
        log.info("iteration %d: %s", it, rec)
    return PoolResult(pools, counts)


# Split candidates ------------------------------------------------------------


def pool_candidates(
    entries: Iterable[Entry],
    kb: KnowledgeBase,
    view,
    impurity,
    priority: float = 1.0,
    variable_names: Sequence[str] | None = None,
) -> list:
    """Best threshold split ``e(state) <= c`` for every non-constant expression."""
    from ..predicates import Algebraic, Generator, SplitCandidate, best_threshold
    from .expr import evaluate

    names = tuple(variable_names or view.dataset.variable_names)
    X = view.X
    env: dict[str, object] = dict(kb.constant_values)
    for i, n in enumerate(names):
        env[n] = X[:, i]
    consts = tuple(sorted(kb.constant_values.items()))
    labels = view.labels
    out = []
    for k, entry in enumerate(entries):
        if is_constant_only(entry.expr, kb):
            continue
        try:
            with np.errstate(all="ignore"):
                vals = np.broadcast_to(np.asarray(evaluate(entry.expr, env), dtype=np.float64), (len(view),))
        except ExprError as exc:
            log.debug("skipping %s: %s", render(entry.expr), exc)
            continue
        if not np.all(np.isfinite(vals)):
            log.debug("skipping %s: non-finite on this view", render(entry.expr))
            continue
        found = best_threshold(vals, labels, view.dataset.n_labels, impurity)
        if found is None:
            continue
        c, s = found
        pred = Algebraic(entry.expr, c, names, consts)
        out.append(SplitCandidate(pred, s, priority, Generator.DOMAIN_KB, k, vals <= c))
    return out


@dataclass
class DomainKbGenerator:
    """Candidate source for tree building: the best split over a fixed expression pool."""

    kb: KnowledgeBase
    entries: list[Entry]

    def __call__(self, view, impurity, priority: float):
        cands = pool_candidates(self.entries, self.kb, view, impurity, priority)
        return min(cands, key=lambda c: (c.score, c.order), default=None)
