"""Full-set characteristics of a trained state and of image sets.

Energies are ``E(x) = -ln |psi(x)|^2`` in nats throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from . import mps as mpslib
from .errors import InputError, NoScalingError, ThresholdNotFoundError
from .sampling import SampleRequest, sample_batch

LN2 = math.log(2.0)


def _bits(data):
    bits = np.asarray(getattr(data, "bits", data))
    if bits.ndim == 1:
        bits = bits[None, :]
    return bits


def energy(mps, x):
    """Energy of one image; ``inf`` when the amplitude is exactly zero."""
    return float(energies(mps, np.asarray(x)[None, :])[0])


def energies(mps, X):
    """Energies of a batch, evaluated in the log domain (no underflow)."""
    return -2.0 * mpslib.log_amplitude(mps, _bits(X))[1]


def e0(values):
    """Soft minimum ``-ln <e^{-E}>`` via log-sum-exp."""
    e = np.asarray(values, dtype=np.float64).ravel()
    if e.size == 0:
        raise InputError("e0 needs at least one energy")
    return float(-(logsumexp(-e) - math.log(e.size)))


@dataclass
class EnergyStats:
    energies: np.ndarray
    e0: float
    e_ground: float
    mean_e: float
    set_tag: str = ""
    n_infinite: int = 0

    @classmethod
    def from_energies(cls, values, set_tag=""):
        e = np.asarray(values, dtype=np.float64).ravel()
        if e.size == 0:
            raise InputError("no energies")
        finite = e[np.isfinite(e)]
        mean_e = float(finite.mean()) if finite.size == e.size else math.inf
        return cls(e, e0(e), float(e.min()), mean_e, set_tag, int(e.size - finite.size))

    def to_dict(self):
        return {
            "set_tag": self.set_tag,
            "count": int(self.energies.size),
            "e0": self.e0,
            "e_ground": self.e_ground,
            "mean_e": self.mean_e,
            "V_bits": self.e0 / LN2,
            "n_infinite": self.n_infinite,
        }


def energy_stats(mps, data, set_tag=""):
    return EnergyStats.from_energies(energies(mps, data), set_tag or getattr(data, "split_tag", ""))


@dataclass
class FullSetSize:
    V: float
    N_F_log: float
    epsilon_star: float | None
    delta_E: float
    correction: float

    def to_dict(self):
        return {
            "V": self.V,
            "N_F_log": self.N_F_log,
            "N_F_log_leading": self.V * LN2,
            "correction": self.correction,
            "epsilon_star": self.epsilon_star,
            "delta_E": self.delta_E,
        }


def full_set_size(e0_value, rho_at_e0, delta_E, epsilon_star=None):
    """Leading size ``V = E0 / ln 2`` and corrected ``ln N_F = E0 + ln(rho dE)``."""
    if delta_E <= 0:
        raise InputError("delta_E must be positive")
    if rho_at_e0 <= 0:
        raise InputError("density at E0 must be positive")
    corr = math.log(rho_at_e0 * delta_E)
    return FullSetSize(e0_value / LN2, e0_value + corr, epsilon_star, delta_E, corr)


class KDE:
    """Gaussian kernel density estimate of a 1-d sample.

    The default bandwidth is Silverman's rule ``(4/3)^{1/5} sigma n^{-1/5}``.
    A zero-variance sample falls back to ``1e-6 * max(1, |mean|)``.
    """

    def __init__(self, values, bandwidth=None):
        x = np.asarray(values, dtype=np.float64).ravel()
        x = x[np.isfinite(x)]
        if x.size < 2:
            raise InputError("KDE needs at least two finite points")
        if bandwidth is None:
            sigma = x.std(ddof=1)
            bandwidth = (4.0 / 3.0) ** 0.2 * sigma * x.size ** -0.2
            if not bandwidth > 0:
                bandwidth = 1e-6 * max(1.0, abs(float(x.mean())))
                warnings.warn("zero-variance sample; using degenerate KDE bandwidth", RuntimeWarning, stacklevel=2)
        if bandwidth <= 0:
            raise InputError("bandwidth must be positive")
        self.data = x
        self.bandwidth = float(bandwidth)

    def __call__(self, points):
        pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
        out = np.empty(pts.shape)
        h = self.bandwidth
        norm = 1.0 / (self.data.size * h * math.sqrt(2 * math.pi))
        for start in range(0, pts.size, 512):
            z = (pts.ravel()[start:start + 512, None] - self.data[None, :]) / h
            out.ravel()[start:start + 512] = norm * np.exp(-0.5 * z * z).sum(axis=1)
        return out


def kde(values, bandwidth=None):
    return KDE(values, bandwidth)


@dataclass
class HammingStats:
    mean_pairwise: float
    std_pairwise: float
    mean_black_pixels: float
    std_black_pixels: float
    random_baseline: float
    n_pairs: int

    def to_dict(self):
        return dict(self.__dict__)


def pairwise_hamming(A, B):
    """Full ``(len(A), len(B))`` Hamming distance matrix."""
    A = np.asarray(A, dtype=np.float32)
    B = np.asarray(B, dtype=np.float32)
    d = A.sum(1)[:, None] + B.sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.rint(d).astype(np.int64)


def hamming_stats(data, pair_budget=100_000, seed=0):
    """Mean/std Hamming distance over all pairs or ``pair_budget`` random pairs."""
    bits = _bits(data).astype(np.int8)
    N, n = bits.shape
    if N < 2:
        raise InputError("need at least two images")
    total = N * (N - 1) // 2
    if total <= pair_budget:
        d = pairwise_hamming(bits, bits)[np.triu_indices(N, 1)]
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, N, pair_budget)
        j = rng.integers(0, N - 1, pair_budget)
        j = j + (j >= i)
        d = np.count_nonzero(bits[i] != bits[j], axis=1)
    black = bits.sum(axis=1)
    q = black.mean() / n
    return HammingStats(
        float(d.mean()),
        float(d.std()),
        float(black.mean()),
        float(black.std()),
        float(2 * q * (1 - q) * n),
        int(d.size),
    )


@dataclass
class FractalFit:
    k_values: np.ndarray
    d_values: np.ndarray
    slope: float
    intercept: float
    delta: float
    delta_powerlaw: float
    fit_r2: float
    cube_residual: float

    def to_dict(self):
        return {
            "k_values": self.k_values.tolist(),
            "d_values": self.d_values.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "delta": self.delta,
            "delta_powerlaw": self.delta_powerlaw,
            "fit_r2": self.fit_r2,
            "cube_residual": self.cube_residual,
        }


def mean_nearest_distance(bits, block=2048):
    """``<min_{b != a} d(x_a, x_b)>`` over the set (duplicates count as 0)."""
    X = np.asarray(bits, dtype=np.float32)
    K = X.shape[0]
    sq = X.sum(1)
    best = np.empty(K)
    for s in range(0, K, block):
        d = sq[s:s + block, None] + sq[None, :] - 2.0 * (X[s:s + block] @ X.T)
        d[np.arange(d.shape[0]), np.arange(s, s + d.shape[0])] = np.inf
        best[s:s + block] = d.min(axis=1)
    return float(np.rint(best).mean())


def cube_nearest_distance(K, m):
    """Expected nearest-neighbour Hamming distance of ``K`` uniform points on ``{0,1}^m``."""
    r = np.arange(1, m + 1)
    outside = binom.sf(r - 1, m, 0.5)  # P(a fixed other point lies at distance >= r)
    return float(np.sum(outside ** (K - 1)))


def fractal_dimension(data, k_schedule, seed=0, repeats=3):
    """Effective dimension from how the mean nearest-neighbour distance shrinks.

    For each ``K`` the mean of ``d_min`` over ``repeats`` seeded subsamples is
    recorded. Two readings are reported: ``delta_powerlaw = -1/slope`` of the
    log-log least-squares line, and ``delta``, the dimension ``m`` of the
    uniform Hamming cube whose expected ``d_min(K)`` curve best matches the
    measurements in log space (searched over integers ``1..n``).

    Raises:
        NoScalingError: distances do not decrease with ``K``.
    """
    bits = _bits(data)
    N, n = bits.shape
    ks = np.asarray(sorted(int(k) for k in k_schedule))
    if ks.size < 3:
        raise InputError("need at least three sample sizes")
    if np.any(np.diff(ks) <= 0) or ks[0] < 2:
        raise InputError("sample sizes must be distinct and >= 2")
    if ks[-1] > N:
        raise InputError(f"largest K={ks[-1]} exceeds set size {N}")
    rng = np.random.default_rng(seed)
    d = np.array([
        np.mean([mean_nearest_distance(bits[rng.choice(N, k, replace=False)]) for _ in range(repeats)])
        for k in ks
    ])
    pos = d > 0
    diag = {"k_values": ks.tolist(), "d_values": d.tolist()}
    if pos.sum() < 2:
        raise NoScalingError("nearest-neighbour distances vanish", diag)
    lk, ld = np.log(ks[pos]), np.log(d[pos])
    slope, intercept = np.polyfit(lk, ld, 1)
    if slope >= 0:
        raise NoScalingError(f"non-negative log-log slope {slope:.3g}", diag)
    resid = ld - (slope * lk + intercept)
    ss_tot = np.sum((ld - ld.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    best_m, best_err = 1, math.inf
    for m in range(1, n + 1):
        model = np.array([cube_nearest_distance(k, m) for k in ks[pos]])
        with np.errstate(divide="ignore"):
            err = float(np.sum((ld - np.log(model)) ** 2))
        if err < best_err:
            best_m, best_err = m, err
    return FractalFit(ks, d, float(slope), float(intercept), float(best_m), float(-1.0 / slope), float(r2), best_err)


def doubling_schedule(size, start=8):
    ks = []
    k = start
    while k <= size:
        ks.append(k)
        k *= 2
    return ks


@dataclass
class PageCurve:
    s_k: np.ndarray
    plateau_range: tuple[int, int]
    s_bar: float

    def to_dict(self):
        return {"s_k": self.s_k.tolist(), "plateau_range": list(self.plateau_range), "s_bar": self.s_bar}

    def to_csv(self):
        rows = ["k,S_k"] + [f"{k},{s!r}" for k, s in enumerate(self.s_k.tolist(), start=1)]
        return "\n".join(rows) + "\n"


def page_curve(mps, plateau=(200, 600)):
    """Entropy at every cut and its mean over the (clipped) plateau ``[k_lo, k_hi]``."""
    s = mpslib.bond_entropies(mps)
    n = mps.n_sites
    lo, hi = max(1, int(plateau[0])), min(n - 1, int(plateau[1]))
    if lo > hi:
        lo, hi = 1, n - 1
    if lo > hi:
        raise InputError("chain too short for a Page curve")
    return PageCurve(s, (lo, hi), float(s[lo - 1:hi].mean()))


def ensemble_quality_oracle(ensemble, label):
    """Normalized ensemble probability ``|psi_label|^2 / sum_j |psi_j|^2`` as quality."""
    labels = sorted(ensemble.models)
    col = labels.index(label)

    def oracle(X):
        lp = np.stack([mpslib.log_prob(ensemble.models[k], _bits(X)) for k in labels], axis=1)
        with np.errstate(invalid="ignore"):
            q = np.exp(lp[:, col] - logsumexp(lp, axis=1))
        return np.nan_to_num(q, nan=0.0)

    return oracle


@dataclass
class QualityBin:
    energy: float
    mean: float
    std: float
    count: int

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class NeatThreshold:
    epsilon_star: float
    profile: list = field(default_factory=list)

    def to_dict(self):
        return {"epsilon_star": self.epsilon_star, "profile": [b.to_dict() for b in self.profile]}


def neat_threshold(mps, oracle, e_grid, samples_per_bin, seed=0, half_width=None, height=None, width=None,
                   probe_budget=100_000):
    """Smallest grid energy whose sample quality drops a standard deviation below the base bin.

    Samples for grid point ``E`` come from the window ``[E - h, E + h]``;
    ``h`` defaults to half the smallest grid spacing. The first grid point
    is the reference (``E ~ E0``).

    Raises:
        ThresholdNotFoundError: no grid point separates; ``profile`` attached.
    """
    grid = np.asarray(e_grid, dtype=np.float64)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InputError("energy grid needs at least two increasing points")
    if half_width is None:
        half_width = 0.5 * float(np.min(np.diff(grid)))
    profile = []
    for j, e in enumerate(grid):
        req = SampleRequest(samples_per_bin, seed=seed + j, energy_window=(e - half_width, e + half_width),
                            probe_budget=probe_budget)
        ds = sample_batch(mps, req, height, width)
        q = np.asarray(oracle(ds.bits), dtype=np.float64)
        if np.any((q < 0) | (q > 1)):
            raise InputError("oracle scores must lie in [0, 1]")
        profile.append(QualityBin(float(e), float(q.mean()), float(q.std()), int(q.size)))
        base = profile[0]
        if j > 0 and profile[-1].mean < base.mean - base.std:
            return NeatThreshold(float(e), profile)
    raise ThresholdNotFoundError("no grid energy separates from the reference bin", [b.to_dict() for b in profile])
