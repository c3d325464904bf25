import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_separable
from polytree.dataset import dataset_from_pairs
from polytree.featuremap import FeatureMap, destandardize_hyperplane, fit_standardizer, left_side, quadratic_map
from polytree.impurity import ImpurityKind
from polytree.predicates import Polynomial, evaluate_many
from polytree.svm import (
    RawTrainer,
    SvmConfig,
    SvmError,
    augment_control_samples,
    linear_candidate,
    one_vs_rest_encode,
    polynomial_candidate,
    train_linear_svm,
)


def _std(X):
    return fit_standardizer(X).transform(X)


def test_one_dimensional_separable():
    res = train_linear_svm(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]))
    assert res.hyperplane.w[0] > 0
    assert res.accuracy == 1.0 and res.converged


def test_xor_is_not_linearly_separable():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    res = train_linear_svm(_std(X), y, escalate=True)
    assert res.accuracy < 1.0
    assert res.converged
    assert res.C == 1.0  # falls back to the base penalty


def test_bump_grid_quadratic_separable(bump):
    Phi = quadratic_map(bump.X)
    y = np.where(bump.labels == 1, 1.0, -1.0)
    res = train_linear_svm(_std(Phi), y, escalate=True)
    assert res.accuracy == 1.0


def test_bump_grid_single_quadratic_predicate(bump):
    cand = polynomial_candidate(bump.view(), ImpurityKind.ENTROPY)
    assert isinstance(cand.predicate, Polynomial)
    assert cand.score == 0.0
    mask = evaluate_many(cand.predicate, bump.X)
    assert np.array_equal(mask, cand.mask)
    assert len(set(bump.labels[mask])) == 1 and len(set(bump.labels[~mask])) == 1


def test_input_errors():
    with pytest.raises(SvmError):
        train_linear_svm(np.ones((3, 2)), np.ones(3))
    with pytest.raises(SvmError):
        train_linear_svm(np.array([[np.nan], [1.0]]), np.array([1.0, -1.0]))
    with pytest.raises(SvmError):
        train_linear_svm(np.ones((2, 2)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        SvmConfig(C=0.0)
    with pytest.raises(ValueError):
        SvmConfig(tol=0.0)


def test_one_vs_rest_encode():
    ds = dataset_from_pairs(["x"], [((0,), "a"), ((1,), "b"), ((2,), "a")])
    assert one_vs_rest_encode(ds.view(), 0).tolist() == [1.0, -1.0, 1.0]
    with pytest.raises(ValueError):
        one_vs_rest_encode(ds.view().subset(np.array([True, False, True])), 1)


def test_one_vs_rest_cruise_majority(cruise_small):
    counts = np.bincount(cruise_small.labels)
    majority = int(np.argmax(counts))
    assert cruise_small.label_table[majority].actions == (0, 1, 2)
    y = one_vs_rest_encode(cruise_small.view(), majority)
    assert int((y > 0).sum()) == counts.max()


def test_control_sample_shape_and_weight():
    X = np.zeros((5, 9))
    Xa, ya, wa = augment_control_samples(X, np.ones(5), np.ones(5))
    assert Xa.shape == (23, 9) and ya.shape == (23,)
    assert wa[5:].tolist() == [0.001] * 18
    assert np.array_equal(Xa[5:14], np.eye(9)) and ya[5:14].tolist() == [1.0] * 9


def test_control_samples_shrink_exploding_coefficient():
    rng = np.random.default_rng(0)
    x1 = rng.uniform(-1, 1, 60)
    x1 = x1[np.abs(x1) > 0.1]
    X = np.c_[x1, rng.normal(size=x1.size) * 1e-9]  # a nearly free direction
    y = np.where(x1 > 0, 1.0, -1.0)
    trainer = RawTrainer(X, y, SvmConfig())
    before = np.max(np.abs(trainer().w))
    trainer.control_samples = True
    after = np.max(np.abs(trainer().w))
    assert before > 1e7
    assert after < before


def test_deterministic_bitwise():
    rng = np.random.default_rng(11)
    X, y = random_separable(rng, 150, 6)
    a = train_linear_svm(_std(X), y)
    b = train_linear_svm(_std(X), y)
    assert a.hyperplane.w.tobytes() == b.hyperplane.w.tobytes() and a.hyperplane.b == b.hyperplane.b


def test_weights_validated():
    with pytest.raises(SvmError):
        train_linear_svm(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]), weights=np.array([1.0, 0.0]))


def check_separable_fixture(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 201))
    d = int(rng.integers(1, 10))
    X, y = random_separable(rng, n, d)
    s = fit_standardizer(X)
    Z = s.transform(X)
    res = train_linear_svm(Z, y, escalate=True)
    assert res.accuracy == 1.0, (seed, res)
    dz = res.hyperplane.decision(Z)
    dr = destandardize_hyperplane(res.hyperplane, s).decision(X)
    keep = np.abs(dz) > 1e-9
    assert np.array_equal(np.sign(dz[keep]), np.sign(dr[keep]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separable_fixtures_reach_full_accuracy(seed):
    check_separable_fixture(seed)


def test_feature_scaling_is_absorbed(bump):
    view = bump.view()
    a = polynomial_candidate(view, ImpurityKind.ENTROPY)
    X2 = bump.X.copy()
    X2[:, 0] *= 2.0
    ds2 = dataset_from_pairs(
        ["x", "y"],
        [((x, y), bump.action_names[bump.label_table[l].actions[0]]) for (x, y), l in zip(X2.tolist(), bump.labels)],
    )
    b = polynomial_candidate(ds2.view(), ImpurityKind.ENTROPY)
    assert np.array_equal(a.mask, b.mask)


def test_candidate_consistency_and_single_label(cruise_small):
    view = cruise_small.view()
    cand = linear_candidate(view, ImpurityKind.MIN_LABEL_ENTROPY)
    assert np.array_equal(evaluate_many(cand.predicate, view.X), cand.mask)
    pure = view.subset(view.labels == 0)
    assert polynomial_candidate(pure, ImpurityKind.ENTROPY) is None


def test_threads_do_not_change_result(bump):
    a = polynomial_candidate(bump.view(), ImpurityKind.ENTROPY, threads=1)
    b = polynomial_candidate(bump.view(), ImpurityKind.ENTROPY, threads=4)
    assert a.predicate == b.predicate


def test_cruise_can_accelerate_coefficients(cruise_small):
    """Inner velocity states: the learned must-not-accelerate boundary is the known quadratic."""
    X = cruise_small.X
    inner = (X[:, 0] > -6) & (X[:, 0] < 8)
    ds = cruise_small
    Phi = FeatureMap(3).transform(X[inner])
    can_acc = np.array([2 in ds.label_table[l].actions for l in ds.labels[inner]])
    from polytree.svm import fit_label_predicate

    h = fit_label_predicate(Phi, ~can_acc, SvmConfig())
    assert np.array_equal(left_side(h, Phi), ~can_acc)
    w = h.w / h.w[2]
    # Every exact separator of these states with d_r coefficient 1 lies in this box
    # (bounds from a linear program over the same states, computed offline).
    box = {6: (-0.295, -0.205), 7: (0.226, 0.274), 0: (-5.19, -4.81), 1: (2.875, 3.125)}
    for d, (lo, hi) in box.items():
        assert lo <= w[d] <= hi
    assert w[3] == w[4] == w[5] == w[8] == 0.0
