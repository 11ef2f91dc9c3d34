import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_bitstrings
from fullset import mps as M
from fullset.classify import (
    UNCLASSIFIABLE,
    ClassifierEnsemble,
    best_threshold,
    calibrate_threshold,
    classify,
    indicator,
)
from fullset.errors import InputError, ParseError
from fullset.mps import MPS

XA = np.array([1, 0, 1, 1, 0])
XB = np.array([0, 0, 1, 0, 1])


def delta_ensemble():
    return ClassifierEnsemble({4: MPS.basis_state(XA), 7: MPS.basis_state(XB)})


def test_delta_ensemble():
    ens = delta_ensemble()
    assert classify(ens, XA) == 4
    assert classify(ens, XB) == 7
    np.testing.assert_array_equal(classify(ens, np.stack([XB, XA])), [7, 4])


def test_unclassifiable_and_ties():
    ens = delta_ensemble()
    assert classify(ens, np.array([1, 1, 1, 1, 1])) == UNCLASSIFIABLE
    uni = MPS.product([[2**-0.5, 2**-0.5]] * 5).with_center(0)
    tie = ClassifierEnsemble({3: uni, 1: uni.copy()})
    assert classify(tie, XA) == 1


def test_argmax_matches_normalized_probabilities():
    models = {k: MPS.random(6, 3, seed=k) for k in range(4)}
    ens = ClassifierEnsemble(models)
    X = all_bitstrings(6)
    lp = ens.log_probs(X)
    p = np.exp(lp)
    normed = p / p.sum(axis=1, keepdims=True)
    np.testing.assert_array_equal(classify(ens, X), np.argmax(normed, axis=1))


def test_argmax_invariant_under_shared_scale():
    models = {k: MPS.random(6, 3, seed=10 + k) for k in range(3)}
    scaled = {}
    for k, m in models.items():
        t = [x.copy() for x in m.tensors]
        t[2] = t[2] * 1e3
        scaled[k] = MPS(t, m.bond_cap)
    X = all_bitstrings(6)
    np.testing.assert_array_equal(classify(ClassifierEnsemble(models), X), classify(ClassifierEnsemble(scaled), X))


def test_ensemble_requires_shared_length():
    with pytest.raises(InputError):
        ClassifierEnsemble({0: MPS.random(4, 2, seed=0), 1: MPS.random(5, 2, seed=0)})


def test_indicator_basic():
    d = MPS.basis_state(XA)
    assert indicator(d, 0.5, XA) == 1
    assert indicator(d, 0.5, XB) == 0
    tiny = np.nextafter(0, 1)
    m = MPS.random(6, 3, seed=1)
    np.testing.assert_array_equal(indicator(m, tiny, all_bitstrings(6)), 1)


@settings(max_examples=40, deadline=None)
@given(st.floats(-30, 0), st.floats(0, 10))
def test_indicator_monotone(log_eps, step):
    m = MPS.random(6, 3, seed=2)
    X = all_bitstrings(6)
    lo = indicator(m, None, X, log_threshold=log_eps)
    hi = indicator(m, None, X, log_threshold=log_eps + step)
    assert np.all(hi <= lo)


def test_calibration_perfect_separation():
    rep = best_threshold([-1.0, -2.0, -1.5], [-5.0, -6.0])
    assert rep.balanced_accuracy == 1.0
    assert rep.log_threshold == -2.0
    np.testing.assert_array_equal(rep.confusion, [[3, 0], [0, 2]])
    assert rep.tpr == 1.0 and rep.tnr == 1.0


def test_calibration_identical_distributions():
    rng = np.random.default_rng(0)
    rep = best_threshold(rng.normal(size=2000), rng.normal(size=2000))
    assert 0.5 <= rep.balanced_accuracy < 0.56


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 0), min_size=1, max_size=20), st.lists(st.floats(-100, 0), min_size=1, max_size=20))
def test_calibration_beats_trivial(pos, neg):
    rep = best_threshold(pos, neg)
    assert rep.balanced_accuracy >= 0.5
    tpr = np.mean(np.asarray(pos) >= rep.log_threshold)
    tnr = np.mean(np.asarray(neg) < rep.log_threshold)
    assert rep.balanced_accuracy == pytest.approx(0.5 * (tpr + tnr))


def test_calibrate_threshold_on_model():
    m = MPS.basis_state(XA)
    uni = MPS.product([[2**-0.5, 2**-0.5]] * 5).with_center(0)
    rep = calibrate_threshold(m, XA[None, :], XB[None, :])
    assert rep.balanced_accuracy == 1.0
    rep = calibrate_threshold(uni, np.stack([XA, XB]), np.stack([XB, XA]))
    assert rep.balanced_accuracy == 0.5
    with pytest.raises(InputError):
        best_threshold([], [1.0])


def test_ensemble_save_load(tmp_path):
    ens = ClassifierEnsemble({k: MPS.random(5, 2, seed=k) for k in range(3)}, {0: -3.5, 2: math.log(1e-4)})
    ens.save(tmp_path / "ens")
    files = sorted(p.name for p in (tmp_path / "ens").iterdir())
    assert files == ["model_0.mpsw", "model_1.mpsw", "model_2.mpsw", "thresholds.json"]
    back = ClassifierEnsemble.load(tmp_path / "ens")
    assert back.labels == [0, 1, 2]
    assert back.log_thresholds == ens.log_thresholds
    assert back.thresholds[2] == pytest.approx(1e-4)
    for k in range(3):
        assert M.to_bytes(back.models[k]) == M.to_bytes(ens.models[k])


def test_ensemble_load_errors(tmp_path):
    with pytest.raises(ParseError):
        ClassifierEnsemble.load(tmp_path)
    M.save(MPS.random(3, 2, seed=0), tmp_path / "model_0.mpsw")
    (tmp_path / "thresholds.json").write_text("{not json")
    with pytest.raises(ParseError):
        ClassifierEnsemble.load(tmp_path)
