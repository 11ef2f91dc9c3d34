"""Negative log-likelihood training with two-site sweeps and TSGO steps.

The state is kept in mixed canonical form around the pair being updated, so
``<psi|psi>`` equals the squared norm of the merged two-site tensor and the
analytic gradient ``2 psi - (2/N) sum |x> / <x|psi>`` only needs the
per-sample left/right environment vectors.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import mps as mpslib
from .errors import DegenerateStateError, DivergenceError, InputError
from .mps import MPS

logger = logging.getLogger(__name__)

DEFAULT_ETA = math.pi / 36


@dataclass
class TrainConfig:
    bond_cap: int = 100
    eta: float = DEFAULT_ETA
    max_epochs: int = 10
    batch_size: int | str = "full"
    seed: int = 0
    early_stop: bool = True
    svd_cutoff: float = 1e-12
    patience: int = 2
    plateau: tuple[int, int] = (200, 600)

    def validate(self):
        if self.bond_cap < 2:
            raise InputError("bond_cap must be at least 2")
        if not 0.0 < self.eta < math.pi / 2:
            raise InputError("eta must lie in (0, pi/2)")
        if self.max_epochs < 1:
            raise InputError("max_epochs must be positive")
        if self.batch_size != "full" and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise InputError("batch_size must be a positive integer or 'full'")
        if self.svd_cutoff < 0:
            raise InputError("svd_cutoff must be non-negative")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    e0_train: float
    class_quality: float | None = None
    sampling_quality: float | None = None
    plateau_entropy: float | None = None


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def append(self, rec):
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise InputError("epochs must be strictly increasing")
        self.records.append(rec)

    def to_csv(self):
        lines = ["epoch,loss,e0,class_quality,entropy_plateau"]
        for r in self.records:
            cells = [r.epoch, r.mean_loss, r.e0_train, r.class_quality, r.plateau_entropy]
            lines.append(",".join("" if c is None else repr(float(c)) if isinstance(c, float) else str(c) for c in cells))
        return "\n".join(lines) + "\n"


def _bits(batch):
    bits = getattr(batch, "bits", batch)
    bits = np.asarray(bits)
    if bits.ndim == 1:
        bits = bits[None, :]
    return bits.astype(np.intp, copy=False)


def nll_loss(mps, batch):
    """``-(1/N) sum ln |<x|psi>|^2`` for a normalized state.

    Returns ``inf`` when some sample has zero amplitude; check with
    :func:`math.isinf` rather than expecting a clamp.
    """
    bits = _bits(batch)
    if bits.shape[0] == 0:
        raise InputError("empty batch")
    lp = mpslib.log_prob(mps, bits)
    if np.isneginf(lp).any():
        return math.inf
    return float(-lp.mean())


def e0_from_log_probs(log_probs):
    from scipy.special import logsumexp

    lp = np.asarray(log_probs, dtype=np.float64)
    return float(-(logsumexp(lp) - math.log(lp.size)))


def left_environments(mps, bits, upto):
    """Row-normalized ``A_0[x_0] ... A_{i-1}[x_{i-1}]`` for ``i = 0..upto``."""
    N = bits.shape[0]
    envs = [np.ones((N, 1))]
    for i in range(upto):
        envs.append(_push_left(envs[-1], mps.tensors[i], bits[:, i]))
    return envs


def right_environments(mps, bits, downto):
    """Row-normalized ``A_{i+1}[x_{i+1}] ... A_{n-1}[x_{n-1}]`` keyed by ``i``."""
    n = mps.n_sites
    N = bits.shape[0]
    envs = {n - 1: np.ones((N, 1))}
    for i in range(n - 1, downto, -1):
        envs[i - 1] = _push_right(envs[i], mps.tensors[i], bits[:, i])
    return envs


def _normalize_rows(v):
    norms = np.sqrt(np.einsum("nr,nr->n", v, v))
    nz = norms > 0
    v[nz] /= norms[nz, None]
    return v


def _push_left(env, t, x):
    w0 = env @ t[:, 0, :]
    w1 = env @ t[:, 1, :]
    return _normalize_rows(np.where(x[:, None] == 0, w0, w1))


def _push_right(env, t, x):
    w0 = env @ t[:, 0, :].T
    w1 = env @ t[:, 1, :].T
    return _normalize_rows(np.where(x[:, None] == 0, w0, w1))


def merged_gradient(merged, left_env, right_env, xa, xb):
    """Gradient of ``||M||^2 - (1/N) sum ln <x|psi>^2`` w.r.t. the merged tensor.

    Args:
        merged: ``(l, 2, 2, r)`` two-site tensor at the orthogonality center.
        left_env: ``(N, l)`` left environments (any positive row scaling).
        right_env: ``(N, r)`` right environments.
        xa, xb: Bits of the two merged sites per sample.

    Returns:
        ``(gradient, psi)`` where ``psi`` are the scaled amplitudes.

    Raises:
        DivergenceError: a sample has zero amplitude.
    """
    N = left_env.shape[0]
    grad = 2.0 * merged
    psi = np.empty(N)
    code = 2 * np.asarray(xa) + np.asarray(xb)
    for a in (0, 1):
        for b in (0, 1):
            idx = np.flatnonzero(code == 2 * a + b)
            if idx.size == 0:
                continue
            L = left_env[idx]
            R = right_env[idx]
            p = np.einsum("nr,nr->n", L @ merged[:, a, b, :], R)
            psi[idx] = p
            bad = p == 0
            if bad.any():
                raise DivergenceError("zero amplitude for training samples", idx[bad].tolist())
            grad[:, a, b, :] -= (2.0 / N) * (L.T @ (R / p[:, None]))
    return grad, psi


def two_site_gradient(mps, site, batch):
    """Gradient w.r.t. the merged tensor of ``(site, site + 1)``.

    The center must sit on ``site`` or ``site + 1``.
    """
    if mps.center not in (site, site + 1):
        raise InputError("orthogonality center must be on one of the merged sites")
    if not 0 <= site < mps.n_sites - 1:
        raise InputError(f"site {site} has no right neighbour")
    bits = _bits(batch)
    if bits.shape[0] == 0:
        raise InputError("empty batch")
    merged = np.tensordot(mps.tensors[site], mps.tensors[site + 1], axes=(2, 0))
    left = left_environments(mps, bits, site)[site]
    right = right_environments(mps, bits, site + 1)[site + 1]
    grad, _ = merged_gradient(merged, left, right, bits[:, site], bits[:, site + 1])
    return grad


def tsgo_step(merged, gradient, eta):
    """Rotate ``merged`` away from the tangent-projected gradient by angle ``eta``."""
    A = np.asarray(merged, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    a2 = float(np.vdot(A, A))
    if a2 == 0.0:
        raise InputError("tsgo_step needs a nonzero tensor")
    g_perp = g - (float(np.vdot(g, A)) / a2) * A
    gn = float(np.linalg.norm(g_perp))
    if gn == 0.0:
        return A.copy()
    return math.cos(eta) * A - math.sin(eta) * math.sqrt(a2) * (g_perp / gn)


def split_truncate(merged, direction, bond_cap, cutoff=1e-12):
    """SVD split of a ``(l, 2, 2, r)`` tensor into two site tensors.

    Keeps at most ``bond_cap`` singular values and drops those below
    ``cutoff * s_max``; the kept spectrum is renormalized to unit norm and
    absorbed on the right (``direction="right"``) or left side.
    """
    if direction not in ("left", "right"):
        raise InputError("direction must be 'left' or 'right'")
    l, _, _, r = merged.shape
    u, s, vt = mpslib._svd(merged.reshape(l * 2, 2 * r))
    if s.size == 0 or s[0] <= 0 or not np.isfinite(s[0]):
        raise DegenerateStateError("all singular values vanish")
    keep = min(int(bond_cap), int(np.count_nonzero(s > cutoff * s[0])))
    keep = max(keep, 1)
    s = s[:keep] / np.linalg.norm(s[:keep])
    u = u[:, :keep]
    vt = vt[:keep]
    if direction == "right":
        return u.reshape(l, 2, keep), (s[:, None] * vt).reshape(keep, 2, r)
    return (u * s).reshape(l, 2, keep), vt.reshape(keep, 2, r)


class SweepTrainer:
    """Stateful two-site sweeper; one :meth:`run_epoch` is a right then left sweep.

    The model is mutated in place and ends every epoch right-canonical
    (center on site 0), the form the sampler expects.
    """

    def __init__(self, model, bits, config):
        config.validate()
        bits = _bits(bits)
        if bits.shape[1] != model.n_sites:
            raise InputError(f"data has {bits.shape[1]} pixels, model has {model.n_sites} sites")
        if bits.shape[0] == 0:
            raise InputError("empty training set")
        self.config = config
        self.bits = bits
        self.model = mpslib.canonicalize(model, 0)
        self.model.bond_cap = max(self.model.bond_cap, config.bond_cap)
        self.rng = np.random.default_rng(config.seed)
        self.epoch = 0

    def _batch_rows(self):
        N = self.bits.shape[0]
        bs = self.config.batch_size
        if bs == "full" or bs >= N:
            return None
        return np.sort(self.rng.choice(N, size=bs, replace=False))

    def _update(self, i, left, right, direction):
        t = self.model.tensors
        merged = np.tensordot(t[i], t[i + 1], axes=(2, 0))
        rows = self._batch_rows()
        bits = self.bits if rows is None else self.bits[rows]
        L = left if rows is None else left[rows]
        R = right if rows is None else right[rows]
        grad, _ = merged_gradient(merged, L, R, bits[:, i], bits[:, i + 1])
        merged = tsgo_step(merged, grad, self.config.eta)
        t[i], t[i + 1] = split_truncate(merged, direction, self.config.bond_cap, self.config.svd_cutoff)

    def run_epoch(self):
        n = self.model.n_sites
        bits = self.bits
        t = self.model.tensors
        if n == 1:
            raise InputError("two-site training needs at least two sites")
        right = right_environments(self.model, bits, 0)
        left = [np.ones((bits.shape[0], 1))]
        for i in range(n - 1):
            self._update(i, left[i], right[i + 1], "right")
            left.append(_push_left(left[i], t[i], bits[:, i]))
            del right[i]
        self.model.center = n - 1
        right = {n - 1: np.ones((bits.shape[0], 1))}
        for i in range(n - 2, -1, -1):
            self._update(i, left[i], right[i + 1], "left")
            right[i] = _push_right(right[i + 1], t[i + 1], bits[:, i + 1])
            left.pop()
        self.model.center = 0
        self.epoch += 1
        return self.model


def train(model, train_set, config, monitor=None, callback=None):
    """Fit ``model`` to ``train_set`` by NLL minimization.

    Args:
        model: Initial state (any gauge).
        train_set: ``Dataset`` or ``(N, n)`` bit matrix.
        config: :class:`TrainConfig`.
        monitor: Optional ``model -> quality`` callable evaluated after each
            epoch. With ``config.early_stop`` the best snapshot is returned and
            training halts after ``config.patience`` epochs without improvement.
        callback: Optional ``(epoch, model, record)`` hook.

    Returns:
        ``(model, trace)``.
    """
    from .analysis import page_curve

    trainer = SweepTrainer(model, train_set, config)
    trace = TrainTrace()
    best, best_q, stale = None, -math.inf, 0
    for _ in range(config.max_epochs):
        m = trainer.run_epoch()
        lp = mpslib.log_prob(m, trainer.bits)
        loss = math.inf if np.isneginf(lp).any() else float(-lp.mean())
        quality = None if monitor is None else float(monitor(m))
        rec = EpochRecord(
            epoch=trainer.epoch,
            mean_loss=loss,
            e0_train=e0_from_log_probs(lp),
            class_quality=quality,
            plateau_entropy=_plateau_or_none(page_curve, m, config.plateau),
        )
        trace.append(rec)
        logger.info("epoch %d loss %.4f quality %s", rec.epoch, loss, quality)
        if callback is not None:
            callback(trainer.epoch, m, rec)
        if monitor is None or not config.early_stop:
            continue
        if quality > best_q:
            best, best_q, stale = copy.deepcopy(m), quality, 0
            trace.best_epoch = trainer.epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best is not None:
        return best, trace
    trace.best_epoch = trainer.epoch
    return trainer.model.copy(), trace


def _plateau_or_none(page_curve, m, plateau):
    if m.n_sites < 2:
        return None
    return page_curve(m, plateau).s_bar
