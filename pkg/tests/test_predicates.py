import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polytree.dataset import dataset_from_pairs
from polytree.impurity import ImpurityKind
from polytree.predicates import (
    Algebraic,
    AxisAligned,
    DimensionError,
    Generator,
    Linear,
    Polynomial,
    SplitCandidate,
    axis_aligned_candidates,
    best_axis_split,
    best_threshold,
    evaluate,
    evaluate_many,
    parse,
    render,
)
from polytree.domainkb.expr import parse_expr

CRUISE = ["v_e", "v_f", "d_r"]
CAN_ACCEL_POLY = Polynomial(3, (-5.0, 3.0, 1.0, 0.0, 0.0, 0.0, -0.25, 0.25, 0.0), -19.5)


def _view(values):
    return dataset_from_pairs(["v"], [((v,), "a") for v in values]).view()


def test_boundary_is_true_for_every_kind():
    assert evaluate(AxisAligned(0, 2.0), [2.0, 9.0])
    assert evaluate(CAN_ACCEL_POLY, [0.0, 0.0, -19.5])
    assert evaluate(Linear((2.0, -1.0), 1.0), [1.0, 2.0])
    assert evaluate(Linear((2.0, -1.0), 0.0), [1.0, 2.0])
    assert evaluate(Algebraic(parse_expr("x * y"), 6.0, ("x", "y")), [2.0, 3.0])


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        evaluate(CAN_ACCEL_POLY, [1.0, 2.0])
    with pytest.raises(DimensionError):
        evaluate(AxisAligned(3, 0.0), [1.0, 2.0])


def test_coefficient_contract():
    with pytest.raises(ValueError):
        Linear((0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        Linear((1e8, 1.0), 1.0)
    with pytest.raises(ValueError):
        Linear((1e-9, 1.0), 1.0)
    with pytest.raises(ValueError):
        Polynomial(2, (1.0, 0.0), 0.0)  # wrong length for a 2-variable quadratic
    with pytest.raises(ValueError):
        AxisAligned(0, float("nan"))


def test_nan_evaluates_false():
    p = Algebraic(parse_expr("sqrt(x)"), 10.0, ("x",))
    assert evaluate_many(p, np.array([[-1.0], [4.0]])).tolist() == [False, True]


def test_axis_candidates():
    assert axis_aligned_candidates(_view([1, 2, 3]), 0) == [1.5, 2.5]
    assert axis_aligned_candidates(_view([4]), 0) == []
    assert len(axis_aligned_candidates(_view(range(-6, 21, 2)), 0)) == 13
    with pytest.raises(DimensionError):
        axis_aligned_candidates(_view([1, 2]), 1)


def test_render_examples():
    assert render(AxisAligned(0, 2.0), ["x"]) == "x <= 2"
    assert render(CAN_ACCEL_POLY, CRUISE) == "-0.25*v_e^2 + 0.25*v_f^2 - 5*v_e + 3*v_f + d_r + 19.5 <= 0"
    assert render(Linear((2.0, 0.0), 1.0), ["x", "y"]) == "2*x <= 1"
    assert render(Linear((2.0, -1.0), -0.5), ["x", "y"]) == "2*x - y <= -0.5"
    assert render(Algebraic(parse_expr("x * y"), 6.0, ("x", "y")), ["x", "y"]) == "x * y <= 6"


def test_parse_inverts_render_examples():
    assert parse(render(CAN_ACCEL_POLY, CRUISE), CRUISE) == CAN_ACCEL_POLY
    assert parse("x <= 2", ["x"]) == AxisAligned(0, 2.0)


_coef = st.one_of(st.just(0.0), st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3))


@settings(max_examples=150, deadline=None)
@given(st.lists(_coef, min_size=9, max_size=9), st.floats(-1e4, 1e4), st.integers(0, 2**31))
def test_render_parse_round_trip_on_grid(coeffs, c, seed):
    if not any(coeffs):
        coeffs[0] = 1.0
    p = Polynomial(3, tuple(coeffs), c)
    q = parse(render(p, CRUISE), CRUISE)
    X = np.random.default_rng(seed).uniform(-20, 20, size=(1000, 3))
    assert np.array_equal(evaluate_many(p, X), evaluate_many(q, X))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=2, max_size=20))
def test_thresholds_are_never_vacuous_and_interval_invariant(values):
    pairs = [((float(v),), "a") for v in sorted(set(values))]
    view = dataset_from_pairs(["v"], pairs).view()
    x = view.X[:, 0]
    u = np.unique(x)
    for k, c in enumerate(axis_aligned_candidates(view, 0)):
        mask = x <= c
        assert mask.any() and not mask.all()
        for c2 in np.linspace(u[k], u[k + 1], 7)[1:-1]:
            assert np.array_equal(mask, x <= c2)


def test_best_threshold_prefers_smallest_on_ties():
    values = np.array([0.0, 1.0, 2.0, 3.0])
    labels = np.array([0, 1, 1, 0])
    c, s = best_threshold(values, labels, 2, ImpurityKind.MIN_LABEL_ENTROPY)
    # 0.5 and 2.5 score the same by symmetry; the smaller threshold wins.
    assert c == 0.5
    assert s == pytest.approx(0.2924812503605781, abs=1e-12)
    assert best_threshold(np.ones(3), np.zeros(3, dtype=int), 1, ImpurityKind.ENTROPY) is None


def test_best_axis_split_matches_exhaustive(bump):
    view = bump.view()
    cand = best_axis_split(view, ImpurityKind.ENTROPY)
    from polytree.impurity import score_mask

    best = min(
        score_mask(ImpurityKind.ENTROPY, view.labels, view.X[:, f] <= c, bump.n_labels)
        for f in range(2)
        for c in axis_aligned_candidates(view, f)
    )
    assert cand.score == pytest.approx(best, abs=1e-12)
    assert cand.generator is Generator.AXIS


def test_split_candidate_ordering():
    axis = SplitCandidate(AxisAligned(0, 0.0), 0.4, 1.0, Generator.AXIS)
    poly = SplitCandidate(CAN_ACCEL_POLY, 0.25, 0.5, Generator.SVM_POLY)
    assert min([poly, axis], key=SplitCandidate.sort_key) is axis
    perfect = SplitCandidate(CAN_ACCEL_POLY, 0.0, 0.1, Generator.SVM_POLY)
    almost = SplitCandidate(AxisAligned(0, 0.0), 0.01, 1.0, Generator.AXIS)
    assert min([almost, perfect], key=SplitCandidate.sort_key) is perfect
    tie = SplitCandidate(CAN_ACCEL_POLY, 0.4, 1.0, Generator.SVM_POLY)
    assert min([tie, axis], key=SplitCandidate.sort_key) is axis
    with pytest.raises(ValueError):
        SplitCandidate(CAN_ACCEL_POLY, 0.1, 0.0, Generator.SVM_POLY)
