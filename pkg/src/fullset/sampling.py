"""Exact sequential Born-rule sampling, optionally with clamped pixels.

Pixels are drawn in chain order. With the state right-canonical the
remaining chain is an isometry, so the marginal of the next bit given the
prefix is the squared norm of the propagated prefix vector; clamps further
along the chain are folded into precomputed right density matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mps as mpslib
from .dataio import Dataset
from .errors import ImpossibleConditionError, InfeasibleWindowError, InputError, NumericError

CONSISTENCY_TOL = 1e-6
MIN_LOG_SLICE_PROB = math.log(1e-300)
# energies are recomputed in the log domain; bounds are widened by this relative slack
WINDOW_SLACK = 1e-9


@dataclass
class SampleRequest:
    count: int
    seed: int = 0
    clamped: dict[int, int] | None = None
    energy_window: tuple[float, float] | None = None
    chunk: int = 1024
    probe_budget: int = 100_000
    min_acceptance: float = 1e-6

    def validate(self, n_sites):
        if self.count < 0:
            raise InputError("count must be non-negative")
        _check_clamps(self.clamped, n_sites)
        if self.energy_window is not None:
            lo, hi = self.energy_window
            if lo > hi:
                raise InputError("energy window needs lo <= hi")


def _check_clamps(clamped, n_sites):
    for site, bit in (clamped or {}).items():
        if not 0 <= int(site) < n_sites:
            raise InputError(f"clamped site {site} out of range")
        if bit not in (0, 1):
            raise InputError(f"clamped value {bit} at site {site} is not a bit")


def _right_canonical(mps):
    if mps.center is None:
        return mpslib.canonicalize(mps, 0)
    if mps.center != 0:
        return mpslib.move_center(mps, 0)
    return mps


def _clamp_environments(mps, clamped):
    """Trace-normalized ``sum_{allowed suffix} R R^T`` per site, plus log slice mass."""
    n = mps.n_sites
    envs = [None] * (n + 1)
    envs[n] = np.ones((1, 1))
    log_mass = 0.0
    last_clamp = max(clamped) if clamped else -1
    for i in range(n - 1, -1, -1):
        if i > last_clamp:
            envs[i] = None  # suffix is unconstrained: identity by right-orthogonality
            continue
        t = mps.tensors[i]
        nxt = envs[i + 1] if envs[i + 1] is not None else np.eye(t.shape[2])
        bits = (clamped[i],) if i in clamped else (0, 1)
        e = sum(t[:, b, :] @ nxt @ t[:, b, :].T for b in bits)
        tr = float(np.trace(e))
        if not tr > 0:
            raise ImpossibleConditionError("clamped slice has zero probability")
        envs[i] = e / tr
        log_mass += math.log(tr)
    return envs, log_mass


def _draw(mps, n_samples, rng, clamped=None):
    clamped = {int(k): int(v) for k, v in (clamped or {}).items()}
    n = mps.n_sites
    envs, log_mass = _clamp_environments(mps, clamped) if clamped else ([None] * (n + 1), 0.0)
    if clamped and log_mass < MIN_LOG_SLICE_PROB:
        raise ImpossibleConditionError(f"clamped slice probability e^{log_mass:.1f} below threshold")
    u = rng.random((n_samples, n))
    out = np.zeros((n_samples, n), dtype=np.uint8)
    v = np.ones((n_samples, 1))
    for i, t in enumerate(mps.tensors):
        w0 = v @ t[:, 0, :]
        w1 = v @ t[:, 1, :]
        env = envs[i + 1]
        if env is None:
            p0 = np.einsum("nr,nr->n", w0, w0)
            p1 = np.einsum("nr,nr->n", w1, w1)
        else:
            p0 = np.einsum("nr,rs,ns->n", w0, env, w0)
            p1 = np.einsum("nr,rs,ns->n", w1, env, w1)
        if i in clamped:
            if clamped[i] == 0:
                p1 = np.zeros_like(p1)
            else:
                p0 = np.zeros_like(p0)
        tot = p0 + p1
        if np.any(tot <= 0) or not np.all(np.isfinite(tot)):
            raise ImpossibleConditionError(f"conditional mass vanished at site {i}")
        if not clamped and np.max(np.abs(tot - 1.0)) > CONSISTENCY_TOL:
            raise NumericError(f"marginals at site {i} sum to {tot.max():.3g}; state is not right-canonical")
        bit = u[:, i] >= p0 / tot
        out[:, i] = bit
        v = np.where(bit[:, None], w1, w0)
        v /= np.sqrt(np.where(bit, p1, p0))[:, None] if env is None else np.linalg.norm(v, axis=1)[:, None]
    return out


def sample_one(mps, rng=None):
    """One exact draw from ``|psi(x)|^2``; ``rng`` is a seed or ``Generator``."""
    return _draw(_right_canonical(mps), 1, np.random.default_rng(rng))[0]


def sample_conditional(mps, clamped, rng=None, count=1):
    """Draw with ``clamped`` sites fixed, from ``|psi|^2`` restricted to that slice."""
    _check_clamps(clamped, mps.n_sites)
    out = _draw(_right_canonical(mps), count, np.random.default_rng(rng), clamped)
    return out[0] if count == 1 else out


def sample_many(mps, count, rng=None, clamped=None):
    """``(count, n)`` exact draws in one vectorized pass."""
    if clamped:
        _check_clamps(clamped, mps.n_sites)
    return _draw(_right_canonical(mps), count, np.random.default_rng(rng), clamped)


def sample_batch(mps, request, height=None, width=None):
    """Draw ``request.count`` samples as a ``sampled`` dataset with energies.

    Energy windows are enforced by rejection. After ``probe_budget`` draws
    an acceptance rate under ``min_acceptance`` aborts with
    :class:`InfeasibleWindowError`.
    """
    state = _right_canonical(mps)
    n = state.n_sites
    request.validate(n)
    if height is None or width is None:
        height, width = 1, n
    rng = np.random.default_rng(request.seed)
    kept_bits, kept_e = [], []
    have = drawn = 0
    while have < request.count:
        chunk = request.chunk if request.energy_window is not None else request.count - have
        bits = _draw(state, chunk, rng, request.clamped)
        energies = -2.0 * mpslib.log_amplitude(state, bits)[1]
        drawn += chunk
        if request.energy_window is not None:
            lo, hi = request.energy_window
            slack = WINDOW_SLACK * max(1.0, abs(lo), abs(hi))
            keep = (energies >= lo - slack) & (energies <= hi + slack)
            bits, energies = bits[keep], energies[keep]
            if drawn >= request.probe_budget and (have + keep.sum()) / drawn < request.min_acceptance:
                raise InfeasibleWindowError(
                    f"window [{lo}, {hi}] accepted {have + int(keep.sum())} of {drawn} draws"
                )
        take = min(request.count - have, bits.shape[0])
        kept_bits.append(bits[:take])
        kept_e.append(energies[:take])
        have += take
    bits = np.concatenate(kept_bits) if kept_bits else np.zeros((0, n), np.uint8)
    energies = np.concatenate(kept_e) if kept_e else np.zeros(0)
    meta = {"seed": request.seed, "drawn": drawn}
    return Dataset(bits, height, width, None, "sampled", energies, meta)
