"""Greedy decision-tree construction over pluggable predicate generators."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .dataset import ControllerDataset, DatasetView, LabelSet
from .impurity import ImpurityKind
from .predicates import (
    Generator,
    Predicate,
    SplitCandidate,
    best_axis_split,
    evaluate_many,
)
from .svm import SvmConfig, linear_candidate, polynomial_candidate

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 3 * 3600.0


@dataclass
class Leaf:
    labels: LabelSet
    impure: bool = False


@dataclass
class Inner:
    predicate: Predicate
    true: "Node"
    false: "Node"
    generator: Generator = Generator.AXIS


Node = Union[Leaf, Inner]


@dataclass
class DecisionTree:
    root: Node
    variable_names: tuple[str, ...]
    action_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def nodes(self) -> Iterator[Node]:
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            if isinstance(n, Inner):
                stack.extend((n.false, n.true))

    def predict(self, X: np.ndarray) -> list[LabelSet]:
        """Label set reached by each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        out: list[Optional[LabelSet]] = [None] * X.shape[0]
        stack: list[tuple[Node, np.ndarray]] = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if isinstance(node, Leaf):
                for i in idx:
                    out[i] = node.labels
                continue
            if idx.size == 0:
                continue
            mask = evaluate_many(node.predicate, X[idx])
            stack.append((node.true, idx[mask]))
            stack.append((node.false, idx[~mask]))
        return out  # type: ignore[return-value]


class BuildTimeout(RuntimeError):
    """Construction hit the wall-clock limit; ``tree`` holds the partial result."""

    def __init__(self, tree: DecisionTree) -> None:
        super().__init__("tree construction timed out")
        self.tree = tree


CandidateFn = Callable[[DatasetView, ImpurityKind, float], Optional[SplitCandidate]]


@dataclass
class BuildConfig:
    impurity: ImpurityKind = ImpurityKind.ENTROPY
    # Enabled generators and their priorities; iteration order is irrelevant.
    priorities: dict = field(default_factory=lambda: {Generator.AXIS: 1.0})
    max_depth: Optional[int] = None
    timeout: float = DEFAULT_TIMEOUT
    svm: SvmConfig = field(default_factory=SvmConfig)
    threads: int = 1
    prettify: bool = True
    # Candidate source for Generator.DOMAIN_KB (see domainkb.DomainKbGenerator).
    domain_kb: Optional[CandidateFn] = None

    def __post_init__(self) -> None:
        if not self.priorities:
            raise ValueError("at least one predicate generator must be enabled")
        for g, prio in self.priorities.items():
            if not 0.0 < prio <= 1.0:
                raise ValueError(f"priority of {Generator(g).tag} must lie in (0, 1]")
        if Generator.DOMAIN_KB in self.priorities and self.domain_kb is None:
            raise ValueError("domain-knowledge generator enabled without a knowledge base")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    def describe(self) -> dict:
        return {
            "impurity": self.impurity.value,
            "priorities": {Generator(g).tag: p for g, p in sorted(self.priorities.items())},
            "max_depth": self.max_depth,
            "timeout": self.timeout,
            "svm": {"C": self.svm.C, "tol": self.svm.tol, "max_epochs": self.svm.max_epochs, "C_max": self.svm.C_max},
            "prettify": self.prettify,
        }


def generator_candidates(view: DatasetView, cfg: BuildConfig) -> list[SplitCandidate]:
    """One best candidate per enabled generator, invoked in fixed order."""
    kind = cfg.impurity
    out = []
    for g in sorted(cfg.priorities):
        prio = cfg.priorities[g]
        if g == Generator.AXIS:
            c = best_axis_split(view, kind, prio)
        elif g == Generator.LINEAR:
            c = linear_candidate(view, kind, cfg.svm, priority=prio, threads=cfg.threads, prettify=cfg.prettify)
        elif g == Generator.SVM_POLY:
            c = polynomial_candidate(view, kind, cfg.svm, priority=prio, threads=cfg.threads, prettify=cfg.prettify)
        else:
            c = cfg.domain_kb(view, kind, prio)  # type: ignore[misc]
        if c is not None:
            out.append(c)
    return out


def choose(cands: list[SplitCandidate]) -> Optional[SplitCandidate]:
    """Minimum effective score; exact splits first; ties by generator then feature/label order."""
    return min(cands, key=SplitCandidate.sort_key, default=None)


def select_split(view: DatasetView, cfg: BuildConfig) -> Optional[SplitCandidate]:
    if len(view.present_labels()) < 2:
        return None
    valid = []
    for c in generator_candidates(view, cfg):
        mask = c.mask if c.mask is not None else evaluate_many(c.predicate, view.X)
        if mask.all() or not mask.any():
            continue
        valid.append(c)
    return choose(valid)


def _modal_leaf(view: DatasetView, impure: bool) -> Leaf:
    counts = view.label_counts()
    lab = int(np.argmax(counts))  # first maximum follows label-table order
    return Leaf(view.dataset.label_table[lab], impure)


def build_tree(ds: ControllerDataset, cfg: BuildConfig) -> DecisionTree:
    """Split greedily until every leaf is pure or a bound stops the recursion."""
    if ds.n_states == 0:
        raise ValueError("empty dataset")
    start = time.monotonic()
    deadline = start + cfg.timeout
    timed_out = False
    root_holder: list[Node] = [Leaf(ds.label_table[0])]

    # Each work item builds a node and stores it through its setter.
    work: list[tuple[DatasetView, int, Callable[[Node], None]]] = [
        (ds.view(), 0, lambda n: root_holder.__setitem__(0, n))
    ]
    while work:
        view, depth, put = work.pop()
        if view.is_pure():
            put(Leaf(ds.label_table[view.present_labels()[0]]))
            continue
        if timed_out or time.monotonic() > deadline:
            timed_out = True
            put(_modal_leaf(view, True))
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            put(_modal_leaf(view, True))
            continue
        cand = select_split(view, cfg)
        if cand is None:
            put(_modal_leaf(view, True))
            continue
        mask = evaluate_many(cand.predicate, view.X)
        node = Inner(cand.predicate, Leaf(ds.label_table[0]), Leaf(ds.label_table[0]), cand.generator)
        put(node)
        log.debug(
            "depth %d: %s split, score %.6g, %d/%d rows left",
            depth, cand.generator.tag, cand.score, int(mask.sum()), len(view),
        )
        # Push false first so the true subtree is built first.
        work.append((view.subset(~mask), depth + 1, lambda n, node=node: setattr(node, "false", n)))
        work.append((view.subset(mask), depth + 1, lambda n, node=node: setattr(node, "true", n)))

    meta = cfg.describe()
    meta["build_seconds"] = time.monotonic() - start
    tree = DecisionTree(root_holder[0], ds.variable_names, ds.action_names, meta)
    if timed_out:
        raise BuildTimeout(tree)
    return tree


def verify_tree(tree: DecisionTree, ds: ControllerDataset) -> float:
    """Fraction of states whose predicted label set differs from the controller's."""
    if tuple(tree.variable_names) != tuple(ds.variable_names) and len(tree.variable_names) != ds.n_vars:
        raise ValueError("tree and dataset dimensions differ")
    if ds.n_states == 0:
        return 0.0
    pred = tree.predict(ds.X)
    wrong = 0
    for got, lab in zip(pred, ds.labels.tolist()):
        want = ds.label_table[lab]
        if tuple(tree.action_names) != tuple(ds.action_names):
            same = got is not None and sorted(got.names(tree.action_names)) == sorted(want.names(ds.action_names))
        else:
            same = got == want
        wrong += not same
    return wrong / ds.n_states


def tree_stats(tree: DecisionTree) -> dict:
    inner = leaves = 0
    per_gen = {g.tag: 0 for g in Generator}
    depth = 0
    stack: list[tuple[Node, int]] = [(tree.root, 0)]
    while stack:
        n, d = stack.pop()
        depth = max(depth, d)
        if isinstance(n, Leaf):
            leaves += 1
        else:
            inner += 1
            per_gen[n.generator.tag] += 1
            stack.append((n.true, d + 1))
            stack.append((n.false, d + 1))
    return {"total": inner + leaves, "inner": inner, "leaves": leaves, "depth": depth, "predicates": per_gen}
