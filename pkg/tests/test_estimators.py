import numpy as np
import pytest
from sklearn.base import clone

from conftest import all_bitstrings, bars_and_stripes
from fullset.classify import ClassifierEnsemble
from fullset.errors import InputError
from fullset.estimators import BornMachine, MPSClassifier
from fullset.mps import MPS
from fullset.validation import check_bits, image_shape


def test_check_bits():
    out = check_bits([[0, 1], [1, 1]])
    assert out.dtype == np.uint8
    with pytest.raises(InputError):
        check_bits([[0, 2]])
    with pytest.raises(InputError):
        check_bits([[0, 1]], n_features=3)
    with pytest.raises(ValueError):
        check_bits([[0, np.nan]])


@pytest.mark.parametrize("n, shape, expected", [(784, None, (28, 28)), (16, None, (4, 4)), (6, None, (1, 6)),
                                                (6, (2, 3), (2, 3))])
def test_image_shape(n, shape, expected):
    assert image_shape(n, shape) == expected


def test_params_and_clone():
    est = BornMachine(bond_dim=7, max_epochs=3)
    c = clone(est)
    assert c.get_params()["bond_dim"] == 7 and c.get_params()["max_epochs"] == 3
    assert clone(MPSClassifier(bond_dim=5)).bond_dim == 5


def test_born_machine_fit_and_scores():
    X, y = bars_and_stripes(200, noise=0.0, seed=1)
    bm = BornMachine(bond_dim=6, max_epochs=3, early_stop=False, random_state=0).fit(X[y == 0])
    lp = bm.score_samples(all_bitstrings(16))
    assert abs(np.exp(lp).sum() - 1) < 1e-8
    np.testing.assert_allclose(bm.transform(X[:5])[:, 0], -bm.score_samples(X[:5]))
    assert bm.score(X[y == 0]) > bm.score(X[y == 1])
    draws = bm.sample(50, random_state=3)
    assert draws.shape == (50, 16)
    assert bm.e0(X[y == 0]) <= -bm.score(X[y == 0]) + 1e-12


def test_born_machine_calibration_and_predict():
    X, y = bars_and_stripes(300, noise=0.02, seed=2)
    bm = BornMachine(bond_dim=6, max_epochs=4, random_state=1, patience=2)
    bm.fit(X[y == 0][:100], X_val=X[y == 0][100:], X_neg=X[y == 1])
    assert bm.report_.balanced_accuracy > 0.9
    pred = bm.predict(X)
    assert set(np.unique(pred)) <= {0, 1}
    assert np.mean(pred[y == 0]) > np.mean(pred[y == 1])


def test_born_machine_unfitted():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        BornMachine().score_samples([[0, 1]])


def test_classifier_toy():
    X, y = bars_and_stripes(400, noise=0.03, seed=3)
    clf = MPSClassifier(bond_dim=6, max_epochs=4, random_state=0).fit(X[:300], y[:300])
    assert list(clf.classes_) == [0, 1]
    assert clf.score(X[300:], y[300:]) >= 0.95
    proba = clf.predict_proba(X[300:])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(np.argmax(proba, axis=1), clf.predict(X[300:]))
    assert set(clf.ensemble_.log_thresholds) == {0, 1}
    assert clf.trace_.best_epoch is not None


def test_classifier_lockstep_is_deterministic():
    X, y = bars_and_stripes(120, seed=4)
    a = MPSClassifier(bond_dim=4, max_epochs=2, random_state=2, early_stop=False).fit(X, y)
    b = MPSClassifier(bond_dim=4, max_epochs=2, random_state=2, early_stop=False).fit(X, y)
    np.testing.assert_array_equal(a.predict_log_proba(X), b.predict_log_proba(X))


def test_classifier_rejects_bad_labels():
    with pytest.raises(InputError):
        MPSClassifier().fit(np.zeros((4, 3), int), [0, 1])


def test_from_ensemble():
    xa, xb = np.array([1, 0, 1]), np.array([0, 1, 1])
    ens = ClassifierEnsemble({2: MPS.basis_state(xa), 5: MPS.basis_state(xb)})
    clf = MPSClassifier.from_ensemble(ens)
    np.testing.assert_array_equal(clf.predict(np.stack([xa, xb])), [2, 5])
    np.testing.assert_allclose(clf.predict_proba(xa[None, :]), [[1.0, 0.0]])
