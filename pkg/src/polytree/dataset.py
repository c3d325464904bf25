"""Controller tables: permissive state -> action-set maps as a learning substrate.

A controller is read from a CSV with one state-action pair per line.  All
pairs sharing a state vector are merged into one :class:`LabelSet`; the
distinct label sets form the label table ``U`` that the tree classifies into.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DatasetFormatError(ValueError):
    """Raised for malformed controller files."""


@dataclass(frozen=True, order=True)
class LabelSet:
    """A non-empty, sorted, duplicate-free set of action indices."""

    actions: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValueError("label set must be non-empty")
        if any(b <= a for a, b in zip(self.actions, self.actions[1:])):
            raise ValueError(f"label set must be sorted and duplicate-free: {self.actions}")

    def __len__(self) -> int:
        return len(self.actions)

    def names(self, action_names: Sequence[str]) -> list[str]:
        return [action_names[a] for a in self.actions]


class ControllerDataset:
    """Immutable table of deduplicated states and their permitted action sets.

    ``X`` is stored column-major (Fortran order) since threshold enumeration
    walks one feature at a time.
    """

    def __init__(
        self,
        variable_names: Sequence[str],
        X: np.ndarray,
        labels: Sequence[int] | np.ndarray,
        label_table: Sequence[LabelSet],
        action_names: Sequence[str],
    ) -> None:
        X = np.asfortranarray(np.asarray(X, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError("state matrix must be 2-D")
        n, m = X.shape
        if m != len(variable_names):
            raise ValueError(f"expected {len(variable_names)} coordinates per state, got {m}")
        if labels.shape != (n,):
            raise ValueError("one label per state required")
        if not np.all(np.isfinite(X)):
            raise ValueError("state coordinates must be finite")
        label_table = tuple(label_table)
        if len(set(label_table)) != len(label_table):
            raise ValueError("label table contains duplicate action subsets")
        if n and (labels.min() < 0 or labels.max() >= len(label_table)):
            raise ValueError("label index outside label table")
        if len(np.unique(labels)) != len(label_table):
            raise ValueError("label table contains entries unused by every state")
        for ls in label_table:
            if ls.actions[-1] >= len(action_names):
                raise ValueError("label set references unknown action")
        if n and len({tuple(row) for row in X.tolist()}) != n:
            raise ValueError("duplicate state vector")
        X.setflags(write=False)
        labels.setflags(write=False)
        self.variable_names = tuple(variable_names)
        self.X = X
        self.labels = labels
        self.label_table = label_table
        self.action_names = tuple(action_names)

    @property
    def n_states(self) -> int:
        return self.X.shape[0]

    @property
    def n_vars(self) -> int:
        return self.X.shape[1]

    @property
    def n_labels(self) -> int:
        return len(self.label_table)

    @property
    def n_pairs(self) -> int:
        sizes = np.array([len(ls) for ls in self.label_table], dtype=np.int64)
        return int(sizes[self.labels].sum())

    def view(self) -> "DatasetView":
        return DatasetView(self, np.arange(self.n_states, dtype=np.int64))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ControllerDataset):
            return NotImplemented
        return (
            self.variable_names == other.variable_names
            and self.action_names == other.action_names
            and self.label_table == other.label_table
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.X, other.X)
        )

    def __repr__(self) -> str:
        return (
            f"ControllerDataset(vars={list(self.variable_names)}, states={self.n_states}, "
            f"labels={self.n_labels}, actions={list(self.action_names)})"
        )


class DatasetView:
    """A subset of a dataset's rows, kept in increasing index order."""

    __slots__ = ("dataset", "indices")

    def __init__(self, dataset: ControllerDataset, indices: np.ndarray) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (
            indices[0] < 0 or indices[-1] >= dataset.n_states or np.any(np.diff(indices) <= 0)
        ):
            raise ValueError("view indices must be strictly increasing and in bounds")
        self.dataset = dataset
        self.indices = indices

    def __len__(self) -> int:
        return self.indices.size

    @property
    def X(self) -> np.ndarray:
        return self.dataset.X[self.indices]

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.labels[self.indices]

    def column(self, feature: int) -> np.ndarray:
        return self.dataset.X[self.indices, feature]

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.dataset.n_labels)

    def present_labels(self) -> list[int]:
        """Label ids occurring in the view, in label-table order."""
        return [int(i) for i in np.flatnonzero(self.label_counts())]

    def is_pure(self) -> bool:
        return len(self) > 0 and len(self.present_labels()) == 1

    def subset(self, mask: np.ndarray) -> "DatasetView":
        return DatasetView(self.dataset, self.indices[np.asarray(mask, dtype=bool)])


def label_statistics(ds: ControllerDataset) -> tuple[dict[LabelSet, int], int]:
    """Per-label state counts and the node lower bound ``2|U| - 1`` for exact trees."""
    counts = np.bincount(ds.labels, minlength=ds.n_labels)
    per_label = {ls: int(c) for ls, c in zip(ds.label_table, counts)}
    return per_label, 2 * ds.n_labels - 1


def split_view(view: DatasetView, pred) -> tuple[DatasetView, DatasetView]:
    """Partition ``view`` into rows where ``pred`` holds (left) and the rest (right)."""
    from .predicates import evaluate_many

    mask = evaluate_many(pred, view.X)
    return view.subset(mask), view.subset(~mask)


def _parse_number(cell: str, lineno: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: malformed numeric cell {cell!r}") from None
    if not math.isfinite(value):
        raise DatasetFormatError(f"line {lineno}: non-finite coordinate {cell!r}")
    return value


def parse_controller_csv(data: bytes | str) -> ControllerDataset:
    """Parse the pair-per-line controller format.

    Actions are indexed by first occurrence when scanning states in
    first-appearance order, which makes ``parse(write(parse(x)))`` stable.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise DatasetFormatError(f"controller file is not UTF-8: {exc}") from None
    lines = [(i + 1, line) for i, line in enumerate(data.splitlines())]
    lines = [(i, line) for i, line in lines if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise DatasetFormatError("empty file")

    rows = list(csv.reader([line for _, line in lines]))
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[-1] != "action":
        raise DatasetFormatError("header must be 'v1,...,vM,action'")
    var_names = header[:-1]
    if len(set(var_names)) != len(var_names) or any(not v for v in var_names):
        raise DatasetFormatError("state variable names must be non-empty and distinct")
    width = len(header)

    state_actions: dict[tuple[float, ...], list[str]] = {}
    for (lineno, _), cells in zip(lines[1:], rows[1:]):
        if len(cells) != width:
            raise DatasetFormatError(
                f"line {lineno}: expected {width} columns, found {len(cells)}"
            )
        state = tuple(_parse_number(c.strip(), lineno) for c in cells[:-1])
        action = cells[-1].strip()
        if not action:
            raise DatasetFormatError(f"line {lineno}: state without an action")
        acts = state_actions.setdefault(state, [])
        if action not in acts:
            acts.append(action)

    if not state_actions:
        raise DatasetFormatError("empty dataset")

    action_index: dict[str, int] = {}
    for acts in state_actions.values():
        for a in acts:
            action_index.setdefault(a, len(action_index))

    table: dict[LabelSet, int] = {}
    labels = []
    for acts in state_actions.values():
        ls = LabelSet(tuple(sorted(action_index[a] for a in acts)))
        labels.append(table.setdefault(ls, len(table)))

    X = np.array(list(state_actions.keys()), dtype=np.float64).reshape(-1, len(var_names))
    return ControllerDataset(var_names, X, labels, list(table), list(action_index))


def format_number(x: float) -> str:
    """Shortest round-tripping text for ``x``; integral values drop the ``.0``."""
    x = float(x)
    if x == 0.0:
        return "0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def write_controller_csv(ds: ControllerDataset) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*ds.variable_names, "action"])
    for row, lab in zip(ds.X.tolist(), ds.labels.tolist()):
        cells = [format_number(v) for v in row]
        for a in ds.label_table[lab].actions:
            w.writerow([*cells, ds.action_names[a]])
    return buf.getvalue().encode("utf-8")


def dataset_from_pairs(
    variable_names: Sequence[str], pairs: Iterable[tuple[Sequence[float], str]]
) -> ControllerDataset:
    """Build a dataset from ``(state, action)`` pairs, same merging rules as the CSV reader."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*variable_names, "action"])
    for state, action in pairs:
        w.writerow([*(format_number(v) for v in state), action])
    return parse_controller_csv(buf.getvalue())
