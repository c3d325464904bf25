"""Tree serialization: JSON (round-trippable), Graphviz DOT and a C predict function."""

from __future__ import annotations

import json
from typing import Any

from .dataset import LabelSet
from .domainkb.expr import c_literal, parse_expr, render as render_expr, to_c
from .featuremap import FeatureMap, monomial_name, parse_monomial
from .predicates import Algebraic, AxisAligned, Generator, Linear, Polynomial, render
from .tree import DecisionTree, Inner, Leaf, Node

FORMATS = ("json", "dot", "c")


class ExportError(ValueError):
    pass


# JSON ------------------------------------------------------------------------


def _pred_json(p, names) -> dict:
    if isinstance(p, AxisAligned):
        return {"kind": "axis", "coeffs": {names[p.feature]: 1.0}, "c": p.threshold}
    if isinstance(p, Linear):
        return {"kind": "linear", "coeffs": {n: a for n, a in zip(names, p.coeffs) if a != 0.0}, "c": p.threshold}
    if isinstance(p, Polynomial):
        fm = p.feature_map
        coeffs = {monomial_name(m, names): a for m, a in zip(fm.monomials, p.coeffs) if a != 0.0}
        return {"kind": "poly", "coeffs": coeffs, "c": p.threshold}
    if isinstance(p, Algebraic):
        return {"kind": "expr", "expr": render_expr(p.expr), "constants": dict(p.constants), "c": p.threshold}
    raise ExportError(f"cannot export predicate {p!r}")


def _node_json(n: Node, names) -> dict:
    if isinstance(n, Leaf):
        leaf: dict[str, Any] = {"actions": list(n.labels.actions)}
        if n.impure:
            leaf["impure"] = True
        return {"leaf": leaf}
    return {
        "pred": _pred_json(n.predicate, names),
        "generator": n.generator.tag,
        "true": _node_json(n.true, names),
        "false": _node_json(n.false, names),
    }


def tree_to_json(tree: DecisionTree) -> dict:
    return {
        "vars": list(tree.variable_names),
        "actions": list(tree.action_names),
        "root": _node_json(tree.root, tree.variable_names),
    }


def _pred_from_json(d: dict, names):
    kind = d["kind"]
    c = float(d["c"])
    if kind == "axis":
        ((name, a),) = d["coeffs"].items()
        if a != 1.0:
            raise ExportError("axis predicate must have coefficient 1")
        return AxisAligned(list(names).index(name), c)
    if kind == "linear":
        return Linear(tuple(float(d["coeffs"].get(n, 0.0)) for n in names), c)
    if kind == "poly":
        fm = FeatureMap(len(names), 2)
        w = {parse_monomial(k, names): float(v) for k, v in d["coeffs"].items()}
        return Polynomial(len(names), tuple(w.get(m, 0.0) for m in fm.monomials), c)
    if kind == "expr":
        consts = tuple((k, float(v)) for k, v in d.get("constants", {}).items())
        return Algebraic(parse_expr(d["expr"]), c, tuple(names), consts)
    raise ExportError(f"unknown predicate kind {kind!r}")


_TAGS = {g.tag: g for g in Generator}


def _node_from_json(d: dict, names) -> Node:
    if "leaf" in d:
        return Leaf(LabelSet(tuple(int(a) for a in d["leaf"]["actions"])), bool(d["leaf"].get("impure", False)))
    pred = _pred_from_json(d["pred"], names)
    gen = _TAGS.get(d.get("generator", ""), _default_generator(pred))
    return Inner(pred, _node_from_json(d["true"], names), _node_from_json(d["false"], names), gen)


def _default_generator(pred) -> Generator:
    return {
        AxisAligned: Generator.AXIS,
        Linear: Generator.LINEAR,
        Polynomial: Generator.SVM_POLY,
        Algebraic: Generator.DOMAIN_KB,
    }[type(pred)]


def tree_from_json(data: bytes | str | dict) -> DecisionTree:
    if not isinstance(data, dict):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ExportError(f"invalid JSON: {exc}") from None
    try:
        names = tuple(data["vars"])
        return DecisionTree(_node_from_json(data["root"], names), names, tuple(data["actions"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ExportError(f"malformed tree JSON: {exc}") from None


def export_json(tree: DecisionTree) -> bytes:
    return (json.dumps(tree_to_json(tree), indent=2) + "\n").encode("utf-8")


# DOT -------------------------------------------------------------------------


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _leaf_text(labels: LabelSet, actions) -> str:
    return "{" + ", ".join(labels.names(actions)) + "}"


def export_dot(tree: DecisionTree) -> bytes:
    """Inner nodes show their predicate; true edges are solid, false edges dashed."""
    lines = ["digraph tree {", '  node [fontname="Helvetica"];']
    counter = 0
    stack: list[tuple[Node, int]] = [(tree.root, 0)]
    edges: list[str] = []
    while stack:
        node, ident = stack.pop(0)
        if isinstance(node, Leaf):
            text = _leaf_text(node.labels, tree.action_names)
            style = ', style="dashed"' if node.impure else ""
            lines.append(f'  n{ident} [shape=box, label="{_dot_escape(text)}"{style}];')
            continue
        text = render(node.predicate, tree.variable_names)
        lines.append(f'  n{ident} [shape=ellipse, label="{_dot_escape(text)}"];')
        t, f = counter + 1, counter + 2
        counter += 2
        edges.append(f'  n{ident} -> n{t} [label="true"];')
        edges.append(f'  n{ident} -> n{f} [label="false", style="dashed"];')
        stack.append((node.true, t))
        stack.append((node.false, f))
    lines.extend(edges)
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# C ---------------------------------------------------------------------------


def _c_condition(p, names) -> str:
    state = {n: f"state[{i}]" for i, n in enumerate(names)}
    if isinstance(p, AxisAligned):
        return f"state[{p.feature}] <= {c_literal(p.threshold)}"
    if isinstance(p, Algebraic):
        return f"{to_c(p.expr, state, dict(p.constants))} <= {c_literal(p.threshold)}"
    if isinstance(p, Linear):
        terms = [(a, f"state[{i}]") for i, a in enumerate(p.coeffs)]
    else:
        fm = p.feature_map
        terms = [
            (a, " * ".join(f"state[{i}]" for i in mon) if len(mon) == 2 else f"state[{mon[0]}]")
            for mon, a in zip(fm.monomials, p.coeffs)
        ]
        terms = [(a, f"({t})" if "*" in t else t) for a, t in terms]
    # Accumulate left to right from 0.0, exactly like the Python evaluator.
    acc = "0.0"
    for a, t in terms:
        if a != 0.0:
            acc = f"({acc} + {c_literal(a)} * {t})"
    return f"{acc} <= {c_literal(p.threshold)}"


def export_c(tree: DecisionTree) -> bytes:
    """A self-contained ``predict`` writing the action indices and returning their count.

    Compile with ``-ffp-contract=off`` so products and sums are rounded exactly
    like the reference evaluator.
    """
    out = [
        "/* Decision tree controller.",
        " * state: " + ", ".join(f"[{i}] {n}" for i, n in enumerate(tree.variable_names)),
        " * actions: " + ", ".join(f"{i} = {a}" for i, a in enumerate(tree.action_names)),
        " */",
        "#include <math.h>",
        "",
        "int predict(const double* state, int* actions_out)",
        "{",
    ]

    def emit(node: Node, indent: int) -> None:
        pad = "    " * indent
        if isinstance(node, Leaf):
            for k, a in enumerate(node.labels.actions):
                out.append(f"{pad}actions_out[{k}] = {a};")
            out.append(f"{pad}return {len(node.labels)};")
            return
        out.append(f"{pad}if ({_c_condition(node.predicate, tree.variable_names)}) {{")
        emit(node.true, indent + 1)
        out.append(f"{pad}}} else {{")
        emit(node.false, indent + 1)
        out.append(f"{pad}}}")

    emit(tree.root, 1)
    out.append("}")
    return ("\n".join(out) + "\n").encode("utf-8")


def export_tree(tree: DecisionTree, fmt: str) -> bytes:
    if fmt == "json":
        return export_json(tree)
    if fmt == "dot":
        return export_dot(tree)
    if fmt == "c":
        return export_c(tree)
    raise ExportError(f"unknown export format {fmt!r}; expected one of {', '.join(FORMATS)}")
