"""Argmax classification over per-label states and threshold discrimination."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mps as mpslib
from .errors import InputError, ParseError

UNCLASSIFIABLE = -1


@dataclass
class ClassifierEnsemble:
    """One state per label; thresholds are stored as ``ln epsilon``."""

    models: dict
    log_thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = {m.n_sites for m in self.models.values()}
        if len(sizes) > 1:
            raise InputError("all models must share n_sites")

    @property
    def labels(self):
        return sorted(self.models)

    @property
    def thresholds(self):
        """Probability-scale thresholds (may underflow to 0 for long chains)."""
        return {k: math.exp(v) for k, v in self.log_thresholds.items()}

    def log_probs(self, X):
        X = np.asarray(X)
        return np.stack([mpslib.log_prob(self.models[k], X) for k in self.labels], axis=1)

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for k, m in self.models.items():
            mpslib.save(m, d / f"model_{k}.mpsw")
        payload = {
            str(k): {"epsilon": math.exp(v), "log_epsilon": v} for k, v in sorted(self.log_thresholds.items())
        }
        (d / "thresholds.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        models = {}
        for p in sorted(d.glob("model_*.mpsw")):
            try:
                label = int(p.stem.split("_", 1)[1])
            except ValueError as exc:
                raise ParseError(f"unexpected model file name {p.name}") from exc
            models[label] = mpslib.load(p)
        if not models:
            raise ParseError(f"no model_*.mpsw files in {d}")
        thr = {}
        tp = d / "thresholds.json"
        if tp.exists():
            try:
                raw = json.loads(tp.read_text())
                for k, v in raw.items():
                    thr[int(k)] = float(v["log_epsilon"]) if "log_epsilon" in v else math.log(float(v["epsilon"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed thresholds.json: {exc}") from exc
        return cls(models, thr)


def classify(ensemble, X):
    """Label maximizing ``|psi_i(x)|^2`` per row; smallest label wins ties.

    Rows where every model gives zero amplitude get ``UNCLASSIFIABLE``.
    """
    X = np.asarray(X)
    single = X.ndim == 1
    lp = ensemble.log_probs(X[None, :] if single else X)
    labels = np.asarray(ensemble.labels)
    out = labels[np.argmax(lp, axis=1)]
    out = np.where(np.isneginf(lp).all(axis=1), UNCLASSIFIABLE, out)
    return int(out[0]) if single else out


def indicator(model, threshold, X, log_threshold=None):
    """1 where ``|psi(x)|^2 >= threshold``; pass ``log_threshold`` to avoid underflow."""
    if log_threshold is None:
        if threshold < 0:
            raise InputError("threshold must be non-negative")
        log_threshold = -math.inf if threshold == 0 else math.log(threshold)
    X = np.asarray(X)
    single = X.ndim == 1
    lp = mpslib.log_prob(model, X[None, :] if single else X)
    out = (lp >= log_threshold).astype(np.uint8)
    return int(out[0]) if single else out


@dataclass
class DiscriminationReport:
    log_threshold: float
    balanced_accuracy: float
    confusion: np.ndarray  # [[TP, FN], [FP, TN]]

    @property
    def threshold(self):
        return math.exp(self.log_threshold)

    @property
    def tpr(self):
        tp, fn = self.confusion[0]
        return tp / (tp + fn)

    @property
    def tnr(self):
        fp, tn = self.confusion[1]
        return tn / (fp + tn)

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "log_threshold": self.log_threshold,
            "balanced_accuracy": self.balanced_accuracy,
            "confusion": {"tp": int(self.confusion[0, 0]), "fn": int(self.confusion[0, 1]),
                          "fp": int(self.confusion[1, 0]), "tn": int(self.confusion[1, 1])},
        }


def best_threshold(pos_scores, neg_scores):
    """Maximize balanced accuracy of ``score >= t`` over observed scores.

    Ties go to the smallest threshold. Scores are log-probabilities.
    """
    pos = np.sort(np.asarray(pos_scores, dtype=np.float64))
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise InputError("both score sets must be nonempty")
    cand = np.unique(np.concatenate([pos, neg]))
    tpr = 1.0 - np.searchsorted(pos, cand, side="left") / pos.size
    tnr = np.searchsorted(neg, cand, side="left") / neg.size
    ba = 0.5 * (tpr + tnr)
    j = int(np.argmax(ba))
    t = float(cand[j])
    tp = int(np.count_nonzero(pos >= t))
    tn = int(np.count_nonzero(neg < t))
    confusion = np.array([[tp, pos.size - tp], [neg.size - tn, tn]])
    return DiscriminationReport(t, float(ba[j]), confusion)


def calibrate_threshold(model, positives, negatives):
    """Threshold on ``|psi|^2`` maximizing balanced accuracy on the two sets."""
    pos = getattr(positives, "bits", positives)
    neg = getattr(negatives, "bits", negatives)
    return best_threshold(mpslib.log_prob(model, pos), mpslib.log_prob(model, neg))
