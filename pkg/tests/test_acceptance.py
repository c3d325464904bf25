"""The nine acceptance criteria, each reporting one PASS/FAIL line.

Lines are printed as they are decided and collected again in the terminal
summary under "acceptance criteria".
"""

import contextlib
import itertools
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from conftest import build_cruise_poly, bump_grid, compile_c
from oracles import (
    brute_min_label_entropy,
    brute_split_entropy,
    count_tables,
    expand,
    front_car_can_force_crash,
    solve_cruise_game,
)
from test_prettify import check_prettify_fixture, rounding_fixture
from test_svm import check_separable_fixture
from polytree.dataset import label_statistics
from polytree.domainkb import cruise_kb, generate_pool
from polytree.export import export_tree, tree_from_json, tree_to_json
from polytree.featuremap import monomial_name
from polytree.impurity import ImpurityKind, min_label_entropy, split_entropy
from polytree.predicates import Polynomial
from polytree.prettify import left_side, round_coefficients
from polytree.tree import BuildConfig, Inner, build_tree, tree_stats, verify_tree

ROOT = Path(__file__).resolve().parent.parent
MLE = ImpurityKind.MIN_LABEL_ENTROPY
TARGET = {"v_e^2": -0.25, "v_f^2": 0.25, "v_e": -5.0, "v_f": 3.0, "d_r": 1.0}


class Record:
    detail = ""


@contextlib.contextmanager
def criterion(k: int, title: str):
    rec = Record()
    try:
        yield rec
    except BaseException as exc:
        line = f"criterion {k} FAIL  {title}: {rec.detail} {type(exc).__name__}: {exc}".strip()
        conftest.ACCEPTANCE[k] = line
        print(line)
        raise
    line = f"criterion {k} PASS  {title}: {rec.detail}"
    conftest.ACCEPTANCE[k] = line
    print(line)


@pytest.fixture(scope="module")
def axis_small(cruise_small):
    return {kind: build_tree(cruise_small, BuildConfig(impurity=kind)) for kind in ImpurityKind}


def _normalized_quadratics(tree):
    out = []
    for node in tree.nodes():
        if isinstance(node, Inner) and isinstance(node.predicate, Polynomial):
            p = node.predicate
            w = {monomial_name(m, tree.variable_names): a for m, a in zip(p.feature_map.monomials, p.coeffs)}
            if w.get("d_r", 0.0) != 0.0:
                out.append({k: w.get(k, 0.0) / w["d_r"] for k in TARGET})
    return out


def test_criterion_1_cruise_coefficients(cruise_poly_tree):
    with criterion(1, "cruise coefficients within 5% of (-0.25, 0.25, -5, 3, 1)") as rec:
        tree, secs = cruise_poly_tree
        best, best_err = None, np.inf
        for w in _normalized_quadratics(tree):
            err = max(abs(w[k] - t) / abs(t) for k, t in TARGET.items())
            if err < best_err:
                best, best_err = w, err
        assert best is not None, "no quadratic predicate with a d_r term"
        coeffs = ", ".join(f"{k} {best[k]:.4g}" for k in TARGET)
        rec.detail = f"best node ({coeffs}), max rel. error {best_err:.2%}, build {secs:.1f}s"
        assert best_err <= 0.05
        assert secs < 60.0


def test_criterion_2_tree_compactness(cruise_small, cruise_poly_tree, axis_small):
    with criterion(2, "poly tree <= 15 nodes, exact, <= 0.2 x axis tree") as rec:
        tree, _ = cruise_poly_tree
        n = tree_stats(tree)["total"]
        err = verify_tree(tree, cruise_small)
        axis = {k.value: tree_stats(t)["total"] for k, t in axis_small.items()}
        rec.detail = f"poly {n} nodes, error {err}, axis-aligned {axis}"
        assert n <= 15 and err == 0.0
        for kind, t in axis_small.items():
            assert verify_tree(t, cruise_small) == 0.0
            assert n <= 0.2 * axis[kind.value]


def test_criterion_3_min_size_bound(cruise_tiny, cruise_small, cruise_poly_tree, cruise_dk_tree, axis_small, thermostat):
    with criterion(3, "exact trees have >= 2|U|-1 nodes; thermostat reaches 9") as rec:
        trees = [(axis_small[k], cruise_small) for k in ImpurityKind]
        trees += [(cruise_poly_tree[0], cruise_small), (cruise_dk_tree, cruise_small)]
        for ds in (cruise_tiny, thermostat, bump_grid()):
            for kind in ImpurityKind:
                trees.append((build_tree(ds, BuildConfig(impurity=kind)), ds))
        trees.append((build_cruise_poly(cruise_tiny)[0], cruise_tiny))
        checked = 0
        for tree, ds in trees:
            assert verify_tree(tree, ds) == 0.0
            assert tree_stats(tree)["total"] >= label_statistics(ds)[1]
            checked += 1
        therm = tree_stats(build_tree(thermostat, BuildConfig(impurity=MLE)))["total"]
        bound = label_statistics(thermostat)[1]
        rec.detail = f"{checked} exact trees above the bound; thermostat {therm} nodes, bound {bound}"
        assert therm == bound == 9


def test_criterion_4_impurity_oracle():
    with criterion(4, "impurities match brute force on all tables |X|<=8, |B|<=3") as rec:
        worst = 0.0
        n = 0
        for lc, rc in count_tables(8, 3):
            ls, rs = expand(lc), expand(rc)
            worst = max(worst, abs(split_entropy(lc, rc) - brute_split_entropy(ls, rs)))
            worst = max(worst, abs(min_label_entropy(lc, rc) - brute_min_label_entropy(ls, rs)))
            n += 1
        isolating = min_label_entropy([2, 0, 0], [0, 3, 1])
        rec.detail = f"{n} tables, max deviation {worst:.2e}, isolating split H* = {isolating}"
        assert worst <= 1e-12
        assert isolating == 0.0


def test_criterion_5_prettify_safety():
    with criterion(5, "prettify never moves a row (10^4 fixtures); 8.165839->8, -2.935846->-3") as rec:
        t0 = time.monotonic()
        for seed in range(10_000):
            check_prettify_fixture(seed)
        Phi, h = rounding_fixture()
        r = round_coefficients(Phi, h)
        rec.detail = f"10000 fixtures in {time.monotonic() - t0:.0f}s, rounded w = {r.w.tolist()}"
        assert r.w.tolist() == [-3.0, 8.0]
        assert np.array_equal(left_side(r, Phi), left_side(h, Phi))


def test_criterion_6_svm_correctness():
    with criterion(6, "SVM reaches accuracy 1 on 100 separable fixtures, signs kept") as rec:
        for seed in range(100):
            check_separable_fixture(seed)
        rec.detail = "100 of 100"


def test_criterion_7_domain_knowledge_counts():
    with criterion(7, "pool counts: 66 exact, other gaps documented") as rec:
        kb = cruise_kb().with_values({"v_min": -6.0, "v_max": 8.0}).without("a_neu")
        n1 = generate_pool(kb, 1).counts[0]["raw"]
        n1s = generate_pool(kb, 1, with_sums=True).counts[0]["raw"]
        r2 = generate_pool(kb, 2).counts[1]
        note = (ROOT / "docs" / "pool_counts.md").read_text(encoding="utf-8")
        rec.detail = (
            f"n=1 {n1} (ref 66), n=1 sums {n1s} (ref 3604), "
            f"n=2 {r2['raw']} raw / {r2['numerically_unique']} unique (ref 10568 / 9634); see docs/pool_counts.md"
        )
        assert n1 == 66
        # Non-matching counts must be quantified in the committed note.
        for ours, ref in ((n1s, 3604), (r2["raw"], 10568)):
            if ours != ref:
                assert str(ours) in note and str(ref) in note


def test_criterion_8_fixpoint_oracle(cruise_tiny):
    with criterion(8, "tiny fixpoint equals exhaustive adversarial search") as rec:
        tiny = dict(v_min=-2, v_max=2, d_max=20, d_safe=5)
        ctrl = {
            tuple(int(v) for v in x): tuple(int(cruise_tiny.action_names[a]) for a in cruise_tiny.label_table[lab].actions)
            for x, lab in zip(cruise_tiny.X.tolist(), cruise_tiny.labels.tolist())
        }
        assert ctrl == solve_cruise_game(**tiny)
        n = 0
        for ve, vf, d in itertools.product((-2, 0, 2), (-2, 0, 2), range(21)):
            acts = tuple(
                a for a in (-2, 0, 2)
                if -2 <= ve + a <= 2 and not front_car_can_force_crash((ve, vf, d), a, horizon=60, **tiny)
            )
            assert ctrl.get((ve, vf, d), ()) == acts, (ve, vf, d)
            n += 1
        rec.detail = f"{len(ctrl)} safe states, {n} states compared action-for-action"


def test_criterion_9_determinism_and_exports(tmp_path, cruise_small, cruise_poly_tree, cruise_dk_tree, thermostat):
    with criterion(9, "byte-identical reruns, lossless JSON, C export verifies") as rec:
        again, _ = build_cruise_poly(cruise_small)
        for fmt in ("json", "dot", "c"):
            assert export_tree(again, fmt) == export_tree(cruise_poly_tree[0], fmt)
        cases = [(cruise_poly_tree[0], cruise_small, "poly"), (cruise_dk_tree, cruise_small, "dk")]
        cases.append((build_tree(thermostat, BuildConfig(impurity=MLE)), thermostat, "thermostat"))
        for tree, ds, tag in cases:
            data = export_tree(tree, "json")
            back = tree_from_json(data)
            assert export_tree(back, "json") == data
            assert tree_to_json(back) == tree_to_json(tree)
            assert verify_tree(back, ds) == 0.0
            work = tmp_path / tag
            work.mkdir()
            predict = compile_c(export_tree(tree, "c"), work)
            wrong = sum(predict(x) != ds.label_table[lab].actions for x, lab in zip(ds.X.tolist(), ds.labels.tolist()))
            assert wrong == 0, f"{tag}: C export misclassifies {wrong} states"
        rec.detail = f"{len(cases)} trees round-tripped and compiled; C error rate 0 on every training state"
