"""scikit-learn style wrappers around training, sampling and classification."""

from __future__ import annotations

import copy
import math

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin, DensityMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import mps as mpslib
from .classify import ClassifierEnsemble, calibrate_threshold, classify
from .errors import InputError
from .sampling import sample_many
from .training import DEFAULT_ETA, EpochRecord, SweepTrainer, TrainConfig, TrainTrace, e0_from_log_probs
from .validation import check_bits


def _config(est, seed):
    return TrainConfig(
        bond_cap=est.bond_dim,
        eta=est.eta,
        max_epochs=est.max_epochs,
        batch_size=est.batch_size,
        seed=seed,
        early_stop=est.early_stop,
        svd_cutoff=est.svd_cutoff,
        patience=est.patience,
        plateau=est.plateau,
    )


class BornMachine(DensityMixin, TransformerMixin, BaseEstimator):
    """Single MPS density model ``p(x) = |psi(x)|^2`` over bit vectors.

    ``transform`` maps images to their energies ``-ln p(x)``; ``predict``
    is the full-set indicator once a threshold is calibrated.
    """

    def __init__(self, bond_dim=100, eta=DEFAULT_ETA, max_epochs=10, batch_size="full", random_state=0,
                 early_stop=True, svd_cutoff=1e-12, patience=2, plateau=(200, 600)):
        self.bond_dim = bond_dim
        self.eta = eta
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.early_stop = early_stop
        self.svd_cutoff = svd_cutoff
        self.patience = patience
        self.plateau = plateau

    def fit(self, X, y=None, X_val=None, X_neg=None):
        """Train on ``X``; with ``X_val`` and ``X_neg`` early-stop on discrimination."""
        from .training import train

        X = check_bits(X)
        self.n_features_in_ = X.shape[1]
        monitor = None
        if X_val is not None and X_neg is not None:
            pos = check_bits(X_val, self.n_features_in_)
            neg = check_bits(X_neg, self.n_features_in_)
            monitor = lambda m: calibrate_threshold(m, pos, neg).balanced_accuracy  # noqa: E731
        init = mpslib.MPS.random(self.n_features_in_, self.bond_dim, seed=self.random_state)
        self.mps_, self.trace_ = train(init, X, _config(self, self.random_state), monitor=monitor)
        if monitor is not None:
            self.calibrate(pos, neg)
        return self

    def calibrate(self, positives, negatives):
        check_is_fitted(self, "mps_")
        self.report_ = calibrate_threshold(self.mps_, check_bits(positives), check_bits(negatives))
        self.log_threshold_ = self.report_.log_threshold
        return self

    def score_samples(self, X):
        check_is_fitted(self, "mps_")
        return mpslib.log_prob(self.mps_, check_bits(X, self.n_features_in_))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def transform(self, X):
        return -self.score_samples(X)[:, None]

    def decision_function(self, X):
        check_is_fitted(self, "log_threshold_")
        return self.score_samples(X) - self.log_threshold_

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(np.uint8)

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "mps_")
        return sample_many(self.mps_, n_samples, random_state)

    def e0(self, X):
        return e0_from_log_probs(self.score_samples(X))


class MPSClassifier(ClassifierMixin, BaseEstimator):
    """Ten-state (one per class) generative classifier: argmax ``|psi_i(x)|^2``.

    All per-class models are trained epoch by epoch in lockstep; with
    ``early_stop`` the ensemble snapshot with the best validation accuracy is
    kept. Per-class discrimination thresholds are calibrated on the
    validation data (class ``i`` against all other classes).
    """

    def __init__(self, bond_dim=100, eta=DEFAULT_ETA, max_epochs=10, batch_size="full", random_state=0,
                 early_stop=True, svd_cutoff=1e-12, patience=2, plateau=(200, 600), validation_fraction=0.1,
                 verbose=False):
        self.bond_dim = bond_dim
        self.eta = eta
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.early_stop = early_stop
        self.svd_cutoff = svd_cutoff
        self.patience = patience
        self.plateau = plateau
        self.validation_fraction = validation_fraction
        self.verbose = verbose

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_bits(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise InputError("y must hold one label per row of X")
        self.n_features_in_ = X.shape[1]
        if X_val is None and self.early_stop and self.validation_fraction:
            perm = np.random.default_rng(self.random_state).permutation(X.shape[0])
            cut = int(round((1 - self.validation_fraction) * X.shape[0]))
            X, y, X_val, y_val = X[perm[:cut]], y[perm[:cut]], X[perm[cut:]], y[perm[cut:]]
        if X_val is not None:
            X_val = check_bits(X_val, self.n_features_in_)
            y_val = np.asarray(y_val)
        self.classes_ = np.unique(y)
        trainers = {}
        for c in self.classes_:
            seed = int(self.random_state) * 1000 + int(c)
            init = mpslib.MPS.random(self.n_features_in_, self.bond_dim, seed=seed)
            trainers[c] = SweepTrainer(init, X[y == c], _config(self, seed))
        self.trace_ = TrainTrace()
        best, best_acc, stale = None, -math.inf, 0
        for _ in range(self.max_epochs):
            for c in self.classes_:
                trainers[c].run_epoch()
            ens = ClassifierEnsemble({int(c): trainers[c].model for c in self.classes_})
            acc = None
            if X_val is not None and len(X_val):
                acc = float(np.mean(classify(ens, X_val) == y_val))
            losses = [float(-mpslib.log_prob(t.model, t.bits).mean()) for t in trainers.values()]
            e0s = [e0_from_log_probs(mpslib.log_prob(t.model, t.bits)) for t in trainers.values()]
            epoch = trainers[self.classes_[0]].epoch
            self.trace_.append(EpochRecord(epoch, float(np.mean(losses)), float(np.mean(e0s)), acc))
            if self.verbose:
                print(f"epoch {epoch}: mean loss {np.mean(losses):.3f} val acc {acc}", flush=True)
            if acc is None or not self.early_stop:
                continue
            if acc > best_acc:
                best, best_acc, stale = copy.deepcopy(ens), acc, 0
                self.trace_.best_epoch = epoch
            else:
                stale += 1
                if stale >= self.patience:
                    break
        if best is None:
            best = ClassifierEnsemble({int(c): trainers[c].model.copy() for c in self.classes_})
            self.trace_.best_epoch = trainers[self.classes_[0]].epoch
        self.ensemble_ = best
        if X_val is not None and len(X_val):
            self._calibrate(X_val, y_val)
        return self

    def _calibrate(self, X_val, y_val):
        self.reports_ = {}
        for c in self.ensemble_.labels:
            pos, neg = X_val[y_val == c], X_val[y_val != c]
            if len(pos) and len(neg):
                rep = calibrate_threshold(self.ensemble_.models[c], pos, neg)
                self.reports_[c] = rep
                self.ensemble_.log_thresholds[c] = rep.log_threshold

    def predict_log_proba(self, X):
        """Log of ``p_i = |psi_i|^2 / sum_j |psi_j|^2``."""
        check_is_fitted(self, "ensemble_")
        lp = self.ensemble_.log_probs(check_bits(X, self.n_features_in_))
        with np.errstate(invalid="ignore"):
            out = lp - logsumexp(lp, axis=1, keepdims=True)
        return out

    def predict_proba(self, X):
        return np.nan_to_num(np.exp(self.predict_log_proba(X)), nan=0.0)

    def predict(self, X):
        check_is_fitted(self, "ensemble_")
        return classify(self.ensemble_, check_bits(X, self.n_features_in_))

    @classmethod
    def from_ensemble(cls, ensemble, **params):
        est = cls(**params)
        est.ensemble_ = ensemble
        est.classes_ = np.asarray(ensemble.labels)
        est.n_features_in_ = next(iter(ensemble.models.values())).n_sites
        return est

