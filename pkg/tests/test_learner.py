import math

import numpy as np
import pytest
from sklearn.model_selection import StratifiedKFold, cross_val_score

from graphids.errors import LearnerError, ModelFormatError
from graphids.services.learner import (
    RbfSvmClassifier,
    SvmModel,
    apply_scaler,
    decision_function,
    fit_scaler,
    kkt_violation,
    load_model,
    predict,
    rbf,
    save_model,
    train,
)

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1, -1, 1, 1])


def blobs(seed, n=40, dim=2, spread=0.6):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(-1.0, spread, (n // 2, dim)), rng.normal(1.0, spread, (n - n // 2, dim))])
    y = np.r_[-np.ones(n // 2, dtype=int), np.ones(n - n // 2, dtype=int)]
    return x, y


def test_scaler_standardises_masked_columns():
    x = np.array([[0.0, 0.25], [2.0, 0.75]])
    s = fit_scaler(x, [True, False])

    out = apply_scaler(s, x)
    assert out[:, 0].tolist() == [-1.0, 1.0]
    # closeness-style column left as it was
    assert out[:, 1].tolist() == [0.25, 0.75]


def test_scaler_passes_constant_columns_through():
    x = np.array([[3.0, 1.0], [3.0, 2.0]])
    s = fit_scaler(x, [True, True])
    assert not s.scaled[0]
    assert apply_scaler(s, x)[:, 0].tolist() == [3.0, 3.0]


def test_scaler_errors():
    with pytest.raises(LearnerError):
        fit_scaler(np.empty((0, 2)), [True, True])
    with pytest.raises(LearnerError):
        fit_scaler(np.ones((2, 2)), [True])
    s = fit_scaler(np.ones((2, 2)), [True, True])
    with pytest.raises(LearnerError):
        apply_scaler(s, np.ones((2, 3)))


def test_rbf_values():
    assert rbf([0, 0], [1, 1], 1.0) == pytest.approx(math.exp(-2))
    assert rbf([0.5, 2], [0.5, 2], 3.0) == 1.0
    assert rbf([1, 2], [3, 5], 0.5) == rbf([3, 5], [1, 2], 0.5)
    assert rbf([0], [1], 1.0) > rbf([0], [2], 1.0)


def test_rbf_rejects_bad_input():
    with pytest.raises(LearnerError):
        rbf([0, 0], [1], 1.0)
    with pytest.raises(LearnerError):
        rbf([0], [1], 0.0)


def test_two_point_problem_has_closed_form():
    x = np.array([[0.0], [1.0]])
    m = train(x, np.array([-1, 1]), c=10.0, gamma=1.0)

    alpha = 1 / (1 - math.exp(-1))
    assert m.dual_coefs.tolist() == pytest.approx([-alpha, alpha])
    assert m.bias == pytest.approx(0.0, abs=1e-12)
    assert decision_function(m, x).tolist() == pytest.approx([-1.0, 1.0])
    assert m.converged


def test_xor_is_learned():
    m = train(XOR_X, XOR_Y, c=100.0, gamma=1.0)
    assert predict(m, XOR_X).tolist() == XOR_Y.tolist()


def test_contradictory_duplicates_stay_in_the_box():
    m = train(np.array([[0.0], [0.0]]), np.array([-1, 1]), c=1.0, gamma=1.0)
    assert sorted(m.dual_coefs.tolist()) == [-1.0, 1.0]
    # Decision value 0 counts as malicious
    assert predict(m, [[0.0]]).tolist() == [1]


def test_solutions_are_feasible_and_satisfy_kkt():
    rng = np.random.default_rng(99)
    for trial in range(50):
        n = int(rng.integers(6, 40))
        x = rng.normal(size=(n, 3))
        y = np.where(rng.random(n) < 0.5, -1, 1)
        y[0], y[1] = -1, 1
        c = float(rng.choice([0.1, 1.0, 10.0]))
        gamma = float(rng.choice([0.1, 0.5, 1.0]))

        m = train(x, y, c=c, gamma=gamma, tol=1e-3)
        assert m.converged, trial
        assert np.all(np.abs(m.dual_coefs) <= c + 1e-12), trial
        assert abs(m.dual_coefs.sum()) < 1e-8, trial
        assert kkt_violation(x, y, m) < 1e-3 + 1e-8, trial


def test_free_support_vectors_sit_on_the_margin():
    x, y = blobs(3, spread=1.2)
    m = train(x, y, c=1.0, gamma=0.5, tol=1e-6)
    alpha = np.abs(m.dual_coefs)
    free = (alpha > 1e-9) & (alpha < m.c - 1e-9)
    assert free.any()

    sv = m.support_vectors[free]
    labels = np.sign(m.dual_coefs[free])
    assert decision_function(m, sv) == pytest.approx(labels, abs=1e-5)


def test_single_support_vector_model():
    m = SvmModel(support_vectors=np.array([[0.0, 0.0]]), dual_coefs=np.array([1.0]), bias=-1.0, gamma=1.0, c=1.0)
    assert decision_function(m, [[0.0, 0.0]]).tolist() == [0.0]
    assert predict(m, [[0.0, 0.0], [1.0, 0.0]]).tolist() == [1, -1]
    assert decision_function(m, [[1.0, 0.0]])[0] == pytest.approx(math.exp(-1) - 1)


def test_training_order_does_not_change_the_decision_function():
    x, y = blobs(5, spread=1.0)
    order = np.random.default_rng(1).permutation(len(y))

    a = train(x, y, c=5.0, gamma=0.5, tol=1e-6)
    b = train(x[order], y[order], c=5.0, gamma=0.5, tol=1e-6)
    points = np.random.default_rng(2).normal(size=(30, 2))
    assert decision_function(a, points) == pytest.approx(decision_function(b, points), abs=1e-3)


def test_cached_kernel_rows_match_precomputed_gram():
    x, y = blobs(8, n=60)
    full = train(x, y, c=1.0, gamma=1.0, tol=1e-8)
    cached = train(x, y, c=1.0, gamma=1.0, tol=1e-8, cache_bytes=2048)

    points = np.random.default_rng(4).normal(size=(20, 2))
    assert decision_function(cached, points) == pytest.approx(decision_function(full, points), abs=1e-4)


def test_save_and_load(tmp_path):
    x, y = blobs(11)
    scaler = fit_scaler(x, [True, False])
    m = train(apply_scaler(scaler, x), y, c=2.0, gamma=0.5, scaler=scaler,
              feature_mask=(0, 9), feature_names=("src_dc", "dst_dc"))

    path = tmp_path / "model.npz"
    save_model(m, path)
    back = load_model(path)

    assert back.feature_mask == (0, 9)
    assert back.feature_names == ("src_dc", "dst_dc")
    assert back.scaler.mask.tolist() == [True, False]
    assert np.array_equal(back.support_indices, m.support_indices)
    assert np.allclose(decision_function(back, x), decision_function(m, x), atol=1e-12)


def test_saving_is_byte_deterministic(tmp_path):
    m = train(XOR_X, XOR_Y, c=100.0, gamma=1.0)
    save_model(m, tmp_path / "a.npz")
    save_model(m, tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_loading_garbage_fails(tmp_path):
    path = tmp_path / "model.npz"
    path.write_bytes(b"definitely not a model")
    with pytest.raises(ModelFormatError):
        load_model(path)
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing.npz")


@pytest.mark.parametrize("x,y", [
    (np.zeros((3, 2)), np.array([1, 1, 1])),
    (np.array([[0.0, np.nan], [1.0, 1.0]]), np.array([-1, 1])),
    (np.zeros((2, 2)), np.array([0, 1])),
    (np.zeros((2, 2)), np.array([-1, 1, 1])),
    (np.zeros((0, 2)), np.zeros(0)),
])
def test_training_input_is_validated(x, y):
    with pytest.raises(LearnerError):
        train(x, y, c=1.0, gamma=1.0)


def test_bad_hyperparameters_rejected():
    with pytest.raises(LearnerError):
        train(XOR_X, XOR_Y, c=0.0, gamma=1.0)
    with pytest.raises(LearnerError):
        train(XOR_X, XOR_Y, c=1.0, gamma=-1.0)


def test_decision_function_checks_dimension():
    m = train(XOR_X, XOR_Y, c=1.0, gamma=1.0)
    with pytest.raises(LearnerError):
        decision_function(m, np.zeros((1, 3)))


def test_classifier_works_with_cross_validation():
    x, y = blobs(21, n=60)
    cv = StratifiedKFold(n_splits=3, shuffle=True, random_state=0)
    scores = cross_val_score(RbfSvmClassifier(C=1.0, gamma=0.5), x, y, cv=cv, scoring="f1")
    assert scores.shape == (3,)
    assert scores.min() > 0.8

    clf = RbfSvmClassifier(C=1.0, gamma=0.5).fit(x, y)
    assert clf.n_support_.sum() == clf.model_.n_support
    assert clf.get_params()["C"] == 1.0
