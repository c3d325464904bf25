"""Command line driver: load or generate a controller, learn a tree, verify, export.

Exit codes: 0 success, 1 tree misclassifies some state, 2 usage error,
3 I/O error, 4 malformed input, 5 timeout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .cruise import CruiseError, CruiseParams, synthesize_controller
from .dataset import ControllerDataset, DatasetFormatError, parse_controller_csv, write_controller_csv
from .export import FORMATS, export_tree
from .impurity import ImpurityKind
from .predicates import Generator
from .prettify import feature_relevance, reduce_dataset
from .svm import SvmConfig
from .tree import BuildConfig, BuildTimeout, DecisionTree, build_tree, tree_stats, verify_tree

log = logging.getLogger("polytree")

EXIT_OK, EXIT_INEXACT, EXIT_USAGE, EXIT_IO, EXIT_PARSE, EXIT_TIMEOUT = range(6)

DEFAULTS: dict[str, Any] = {
    "input": None,
    "generate": None,
    "v_min": -6,
    "v_max": 8,
    "d_max": 40,
    "d_safe": 5,
    "predicates": "axis",
    "impurity": "entropy",
    "poly_priority": 0.1,
    "linear_priority": 1.0,
    "dk_priority": 1.0,
    "dk_kb": None,
    "dk_iterations": 1,
    "dk_sums": False,
    "dk_exclude": "",
    "max_depth": None,
    "timeout": 10800.0,
    "out": "",
    "manifest": None,
    "emit_csv": None,
    "threads": 1,
    "seed": None,
    "svm_c": 1.0,
    "no_prettify": False,
    "no_relevance": False,
    "verbose": 0,
}

_PREDICATES = {"axis": Generator.AXIS, "linear": Generator.LINEAR, "poly": Generator.SVM_POLY, "dk": Generator.DOMAIN_KB}


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polytree",
        description="Learn compact decision trees with algebraic predicates from permissive controllers.",
    )
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", metavar="PATH", help="controller CSV (v1,...,vM,action)")
    src.add_argument("--generate", choices=["cruise"], help="synthesize the cruise-control controller")
    g = p.add_argument_group("cruise model")
    g.add_argument("--v-min", type=int)
    g.add_argument("--v-max", type=int)
    g.add_argument("--d-max", type=int)
    g.add_argument("--d-safe", type=int)
    t = p.add_argument_group("tree construction")
    t.add_argument("--predicates", metavar="LIST", help="comma list of axis,linear,poly,dk (default axis)")
    t.add_argument("--impurity", choices=["entropy", "mle"])
    t.add_argument("--poly-priority", type=float, metavar="F")
    t.add_argument("--linear-priority", type=float, metavar="F")
    t.add_argument("--dk-priority", type=float, metavar="F")
    t.add_argument("--dk-kb", metavar="PATH", help="knowledge base file (default: shipped cruise kb)")
    t.add_argument("--dk-iterations", type=int, metavar="N")
    t.add_argument("--dk-sums", type=_bool, metavar="BOOL")
    t.add_argument("--dk-exclude", metavar="LIST", help="constants or variables to leave out of the kb")
    t.add_argument("--max-depth", type=int, metavar="N")
    t.add_argument("--timeout", type=float, metavar="SECONDS")
    t.add_argument("--svm-c", type=float, metavar="C", help="base SVM penalty")
    t.add_argument("--no-prettify", action="store_true", default=None)
    t.add_argument("--no-relevance", action="store_true", default=None, help="skip feature-relevance reduction")
    o = p.add_argument_group("output")
    o.add_argument("--out", metavar="LIST", help="comma list of formats (json,dot,c) or paths with those suffixes")
    o.add_argument("--manifest", metavar="PATH")
    o.add_argument("--emit-csv", metavar="PATH", help="write the (generated) controller CSV")
    p.add_argument("--config", metavar="PATH", help="TOML file with defaults for any flag")
    p.add_argument("--threads", type=int, metavar="N")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--verbose", "-v", action="count", default=None)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _load_config(path: str) -> dict:
    import tomli

    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"invalid config {path}: {exc}") from None
    out = {}
    for k, v in data.items():
        key = k.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {k!r}")
        out[key] = v
    return out


def resolve_options(argv: Sequence[str] | None) -> dict:
    """Merge flags over config over defaults."""
    ns = build_parser().parse_args(argv)
    opts = dict(DEFAULTS)
    if ns.config:
        opts.update(_load_config(ns.config))
    for k, v in vars(ns).items():
        if k != "config" and v is not None:
            opts[k] = v
    if bool(opts["input"]) == bool(opts["generate"]):
        raise UsageError("exactly one of --input or --generate is required")
    return opts


def _generators(opts: dict) -> dict:
    names = [s.strip() for s in str(opts["predicates"]).split(",") if s.strip()]
    if not names:
        raise UsageError("--predicates must name at least one generator")
    prios = {}
    for n in names:
        if n not in _PREDICATES:
            raise UsageError(f"unknown predicate generator {n!r}")
        g = _PREDICATES[n]
        prios[g] = {
            Generator.AXIS: 1.0,
            Generator.LINEAR: float(opts["linear_priority"]),
            Generator.SVM_POLY: float(opts["poly_priority"]),
            Generator.DOMAIN_KB: float(opts["dk_priority"]),
        }[g]
    return prios


def _out_targets(spec: str) -> list[tuple[str, Path]]:
    targets = []
    for item in [s.strip() for s in spec.split(",") if s.strip()]:
        if item in FORMATS:
            targets.append((item, Path(f"tree.{item}")))
            continue
        suffix = Path(item).suffix.lstrip(".")
        if suffix not in FORMATS:
            raise UsageError(f"cannot infer export format of {item!r}")
        targets.append((suffix, Path(item)))
    return targets


def _load_dataset(opts: dict) -> tuple[ControllerDataset, bytes]:
    if opts["generate"] == "cruise":
        params = CruiseParams(
            v_min=int(opts["v_min"]), v_max=int(opts["v_max"]), d_max=int(opts["d_max"]), d_safe=int(opts["d_safe"])
        )
        ds = synthesize_controller(params)
        return ds, write_controller_csv(ds)
    raw = Path(opts["input"]).read_bytes()
    return parse_controller_csv(raw), raw


def _domain_kb(opts: dict, ds: ControllerDataset):
    from .domainkb import DomainKbGenerator, cruise_kb, generate_pool, load_kb
    from .domainkb.expr import symbols
    from .domainkb.kb import FINGERPRINT_SEED

    kb = load_kb(opts["dk_kb"]) if opts["dk_kb"] else cruise_kb()
    if opts["generate"] == "cruise":
        kb = kb.with_values({"v_min": opts["v_min"], "v_max": opts["v_max"], "d_safe": opts["d_safe"]})
    exclude = [s.strip() for s in str(opts["dk_exclude"]).split(",") if s.strip()]
    if exclude:
        kb = kb.without(*exclude)
    seed = FINGERPRINT_SEED if opts["seed"] is None else int(opts["seed"])
    result = generate_pool(kb, int(opts["dk_iterations"]), bool(opts["dk_sums"]), seed=seed)
    allowed = set(ds.variable_names) | set(kb.constant_values)
    entries = [e for e in result.expressions if symbols(e.expr) <= allowed]
    log.info("domain knowledge: %d usable expressions", len(entries))
    return DomainKbGenerator(kb, entries), result.counts


def run_pipeline(opts: dict) -> tuple[int, dict]:
    timings: dict[str, float] = {}
    t0 = time.monotonic()
    ds, raw = _load_dataset(opts)
    timings["load"] = time.monotonic() - t0
    if opts["emit_csv"]:
        Path(opts["emit_csv"]).write_bytes(write_controller_csv(ds))

    manifest: dict[str, Any] = {
        "tool": f"polytree {__version__}",
        "input_sha256": hashlib.sha256(raw).hexdigest(),
        "config": {k: opts[k] for k in sorted(opts) if k not in ("verbose",)},
        "dataset": {"states": ds.n_states, "pairs": ds.n_pairs, "labels": ds.n_labels, "vars": list(ds.variable_names)},
    }

    t0 = time.monotonic()
    work = ds
    if not opts["no_relevance"]:
        report = feature_relevance(ds)
        log.info("%s", report)
        manifest["relevance"] = report.to_dict()
        work = reduce_dataset(ds, report)
    timings["relevance"] = time.monotonic() - t0

    prios = _generators(opts)
    dk = None
    if Generator.DOMAIN_KB in prios:
        t0 = time.monotonic()
        dk, counts = _domain_kb(opts, work)
        manifest["domain_kb_counts"] = counts
        timings["domain_kb"] = time.monotonic() - t0

    cfg = BuildConfig(
        impurity=ImpurityKind(opts["impurity"]),
        priorities=prios,
        max_depth=None if opts["max_depth"] is None else int(opts["max_depth"]),
        timeout=float(opts["timeout"]),
        svm=SvmConfig(C=float(opts["svm_c"]), C_max=max(1e6, float(opts["svm_c"]))),
        threads=int(opts["threads"]),
        prettify=not opts["no_prettify"],
        domain_kb=dk,
    )
    t0 = time.monotonic()
    timed_out = False
    try:
        tree = build_tree(work, cfg)
    except BuildTimeout as exc:
        tree = exc.tree
        timed_out = True
    timings["build"] = time.monotonic() - t0
    tree.metadata.pop("build_seconds", None)

    t0 = time.monotonic()
    err = verify_tree(tree, work)
    timings["verify"] = time.monotonic() - t0
    stats = tree_stats(tree)
    manifest.update({"tree": stats, "error_rate": err, "timed_out": timed_out, "min_tree_size": 2 * work.n_labels - 1})

    for fmt, path in _out_targets(str(opts["out"])):
        path.write_bytes(export_tree(tree, fmt))
        log.info("wrote %s", path)
    manifest["timings"] = timings
    if opts["manifest"]:
        Path(opts["manifest"]).write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")

    print(
        f"states={work.n_states} labels={work.n_labels} nodes={stats['total']} inner={stats['inner']} "
        f"leaves={stats['leaves']} depth={stats['depth']} error_rate={err:.6g}"
        + (" TIMEOUT" if timed_out else "")
    )
    if timed_out:
        return EXIT_TIMEOUT, manifest
    return (EXIT_OK if err == 0.0 else EXIT_INEXACT), manifest


def main(argv: Sequence[str] | None = None) -> int:
    try:
        opts = resolve_options(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0) and EXIT_USAGE
    except UsageError as exc:
        print(f"polytree: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"polytree: {exc}", file=sys.stderr)
        return EXIT_IO
    level = logging.WARNING - 10 * min(int(opts["verbose"] or 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        code, _ = run_pipeline(opts)
        return code
    except UsageError as exc:
        print(f"polytree: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetFormatError, CruiseError) as exc:
        print(f"polytree: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"polytree: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        from .domainkb import ExprError, KnowledgeBaseError

        if isinstance(exc, (ExprError, KnowledgeBaseError)):
            print(f"polytree: {exc}", file=sys.stderr)
            return EXIT_PARSE
        print(f"polytree: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
