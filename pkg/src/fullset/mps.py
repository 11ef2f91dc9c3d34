"""Real matrix product states over bit strings.

Site tensors have shape ``(left_bond, 2, right_bond)``. Sites are indexed
from 0 in the Python API; the orthogonality center is ``None`` or a site
index. A bipartition cut ``k`` puts sites ``0..k-1`` in the left block.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DegenerateStateError, InputError, ParseError

PHYS_DIM = 2
MAGIC = b"MPSW"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIIIi")
_SITE = struct.Struct("<II")


class MPS:
    """Open-boundary matrix product state with physical dimension 2.

    Args:
        tensors: Site tensors, site ``i`` shaped ``(l_i, 2, r_i)`` with
            ``l_0 = r_{n-1} = 1`` and ``r_i = l_{i+1}``.
        bond_cap: Maximal bond dimension ``D``. Defaults to the largest bond.
        center: Orthogonality center, or ``None`` if the gauge is unknown.
            The caller is responsible for this being true.
    """

    def __init__(self, tensors, bond_cap=None, center=None):
        tensors = [np.asarray(t, dtype=np.float64) for t in tensors]
        if not tensors:
            raise InputError("an MPS needs at least one site")
        for i, t in enumerate(tensors):
            if t.ndim != 3 or t.shape[1] != PHYS_DIM:
                raise InputError(f"site {i} has shape {t.shape}, expected (l, 2, r)")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise InputError("boundary bonds must have dimension 1")
        for i in range(len(tensors) - 1):
            if tensors[i].shape[2] != tensors[i + 1].shape[0]:
                raise InputError(f"bond mismatch between sites {i} and {i + 1}")
        largest = max(t.shape[2] for t in tensors)
        if bond_cap is None:
            bond_cap = max(largest, 1)
        if largest > bond_cap:
            raise InputError(f"bond dimension {largest} exceeds cap {bond_cap}")
        if center is not None and not 0 <= center < len(tensors):
            raise InputError(f"center {center} out of range")
        self.tensors = tensors
        self.bond_cap = int(bond_cap)
        self.center = None if center is None else int(center)

    @property
    def n_sites(self):
        return len(self.tensors)

    @property
    def phys_dim(self):
        return PHYS_DIM

    @property
    def bond_dims(self):
        """Dimensions of the ``n - 1`` internal bonds."""
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self):
        return MPS([t.copy() for t in self.tensors], self.bond_cap, self.center)

    def __repr__(self):
        return (
            f"MPS(n_sites={self.n_sites}, bond_cap={self.bond_cap}, "
            f"max_bond={max(self.bond_dims, default=1)}, center={self.center})"
        )

    @classmethod
    def random(cls, n_sites, bond_cap, seed=None, center=0):
        """Uniform(-1, 1) entries at bond ``min(D, 2**min(i, n - i))``, canonicalized."""
        if n_sites < 1 or bond_cap < 1:
            raise InputError("n_sites and bond_cap must be positive")
        rng = np.random.default_rng(seed)
        bonds = [1] + [min(bond_cap, 2 ** min(i, n_sites - i)) for i in range(1, n_sites)] + [1]
        tensors = [
            rng.uniform(-1.0, 1.0, size=(bonds[i], PHYS_DIM, bonds[i + 1]))
            for i in range(n_sites)
        ]
        return canonicalize(cls(tensors, bond_cap), center)

    @classmethod
    def product(cls, site_vectors, bond_cap=1):
        """Unentangled state from per-site 2-vectors (not normalized)."""
        tensors = [np.asarray(v, dtype=np.float64).reshape(1, PHYS_DIM, 1) for v in site_vectors]
        return cls(tensors, bond_cap)

    @classmethod
    def basis_state(cls, bits, bond_cap=1):
        """The delta state concentrated on one bit string."""
        vectors = []
        for b in bits:
            v = np.zeros(PHYS_DIM)
            v[int(b)] = 1.0
            vectors.append(v)
        return cls.product(vectors, bond_cap).with_center(0)

    def with_center(self, center):
        """Declare the gauge without touching tensors (caller guarantees it)."""
        out = self.copy()
        out.center = center
        return out


def _as_bits(mps, x):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != mps.n_sites:
        raise InputError(f"expected {mps.n_sites} bits, got shape {x.shape}")
    return x.astype(np.intp)


def _as_bit_matrix(mps, X):
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != mps.n_sites:
        raise InputError(f"expected rows of {mps.n_sites} bits, got shape {X.shape}")
    return X.astype(np.intp, copy=False)


def amplitude(mps, x):
    """Plain contraction of ``<x|psi>`` for a single bit string.

    Underflows for long chains; use :func:`log_amplitude` there.
    """
    x = _as_bits(mps, x)
    v = np.ones(1)
    for t, b in zip(mps.tensors, x):
        v = v @ t[:, b, :]
    return float(v[0])


def log_amplitude(mps, X):
    """Signed log-amplitudes for a batch of bit strings.

    Args:
        mps: State.
        X: ``(N, n)`` bits (or a single row).

    Returns:
        ``(sign, log_abs)`` arrays of length N. Zero amplitudes give sign 0
        and ``log_abs = -inf``.
    """
    X = _as_bit_matrix(mps, X)
    N = X.shape[0]
    v = np.ones((N, 1))
    log_scale = np.zeros(N)
    for i, t in enumerate(mps.tensors):
        w0 = v @ t[:, 0, :]
        w1 = v @ t[:, 1, :]
        v = np.where(X[:, i, None] == 0, w0, w1)
        norms = np.sqrt(np.einsum("nr,nr->n", v, v))
        nz = norms > 0
        v[nz] /= norms[nz, None]
        with np.errstate(divide="ignore"):
            log_scale += np.log(norms)
    sign = np.sign(v[:, 0])
    with np.errstate(divide="ignore"):
        log_abs = log_scale + np.log(np.abs(v[:, 0]))
    log_abs[sign == 0] = -np.inf
    return sign, log_abs


def log_prob(mps, X):
    """``ln |<x|psi>|^2`` per row; assumes the state is normalized."""
    return 2.0 * log_amplitude(mps, X)[1]


def norm_squared(mps):
    """``<psi|psi>`` by transfer-matrix contraction (any gauge)."""
    env = np.ones((1, 1))
    for t in mps.tensors:
        env = np.einsum("ab,asc,bsd->cd", env, t, t)
    return float(env[0, 0])


def _left_qr(t):
    l, d, r = t.shape
    q, rr = np.linalg.qr(t.reshape(l * d, r))
    return q.reshape(l, d, q.shape[1]), rr


def _right_qr(t):
    l, d, r = t.shape
    q, rr = np.linalg.qr(t.reshape(l, d * r).T)
    return q.T.reshape(q.shape[1], d, r), rr.T


def canonicalize(mps, center=0):
    """Bring the state to mixed canonical form around ``center`` and normalize.

    Sites left of the center become left-orthogonal and sites right of it
    right-orthogonal, via QR sweeps from both ends. The intermediate
    triangular factors are rescaled to stay in floating-point range.

    Raises:
        DegenerateStateError: the state is numerically zero.
    """
    n = mps.n_sites
    if not 0 <= center < n:
        raise InputError(f"center {center} out of range for {n} sites")
    tensors = [t.copy() for t in mps.tensors]
    for i in range(center):
        q, r = _left_qr(tensors[i])
        tensors[i] = q
        tensors[i + 1] = np.tensordot(_rescale(r), tensors[i + 1], axes=(1, 0))
    for i in range(n - 1, center, -1):
        q, r = _right_qr(tensors[i])
        tensors[i] = q
        tensors[i - 1] = np.tensordot(tensors[i - 1], _rescale(r), axes=(2, 0))
    c = tensors[center]
    nrm = np.linalg.norm(c)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise DegenerateStateError("cannot normalize a zero state")
    tensors[center] = c / nrm
    return MPS(tensors, mps.bond_cap, center)


def _rescale(r):
    nrm = np.linalg.norm(r)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise DegenerateStateError("cannot normalize a zero state")
    return r / nrm


def move_center(mps, to):
    """Shift the orthogonality center with QR steps; the state is unchanged."""
    if mps.center is None:
        raise InputError("move_center needs an MPS with a known orthogonality center")
    if not 0 <= to < mps.n_sites:
        raise InputError(f"target site {to} out of range for {mps.n_sites} sites")
    out = mps.copy()
    _move_center_inplace(out, to)
    return out


def _move_center_inplace(mps, to):
    t = mps.tensors
    c = mps.center
    while c < to:
        q, r = _left_qr(t[c])
        t[c] = q
        t[c + 1] = np.tensordot(r, t[c + 1], axes=(1, 0))
        c += 1
    while c > to:
        q, r = _right_qr(t[c])
        t[c] = q
        t[c - 1] = np.tensordot(t[c - 1], r, axes=(2, 0))
        c -= 1
    mps.center = c


def orthogonality_residuals(mps):
    """Max deviation from isometry per site, given the declared center.

    The center site itself reports ``| ||A_c||^2 - 1 |``.
    """
    if mps.center is None:
        raise InputError("no orthogonality center declared")
    out = []
    for i, t in enumerate(mps.tensors):
        if i < mps.center:
            g = np.einsum("asb,asc->bc", t, t)
            out.append(float(np.abs(g - np.eye(g.shape[0])).max()))
        elif i > mps.center:
            g = np.einsum("asb,csb->ac", t, t)
            out.append(float(np.abs(g - np.eye(g.shape[0])).max()))
        else:
            out.append(abs(float(np.sum(t * t)) - 1.0))
    return out


@dataclass(frozen=True)
class Bipartition:
    """Cut after ``cut_k`` sites: part A holds the first ``cut_k`` sites."""

    cut_k: int

    def validate(self, n_sites):
        if not 1 <= self.cut_k <= n_sites - 1:
            raise InputError(f"cut {self.cut_k} outside 1..{n_sites - 1}")


def _svd(a):
    try:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def schmidt_spectrum(mps, cut):
    """Descending Schmidt coefficients across ``cut``.

    The center is moved to the last site of part A; its tensor, reshaped to
    ``(l * 2, r)``, then has the Schmidt values as singular values.
    """
    k = cut.cut_k if isinstance(cut, Bipartition) else int(cut)
    Bipartition(k).validate(mps.n_sites)
    state = mps if mps.center is not None else canonicalize(mps, k - 1)
    state = move_center(state, k - 1)
    c = state.tensors[k - 1]
    s = scipy.linalg.svdvals(c.reshape(-1, c.shape[2]))
    return np.sort(s)[::-1]


def entanglement_entropy(spectrum):
    """Von Neumann entropy ``-sum l^2 ln l^2`` in nats; zero terms drop out."""
    p = np.asarray(spectrum, dtype=np.float64) ** 2
    p = p[p > 0]
    return float(max(-np.sum(p * np.log(p)), 0.0))


def bond_entropies(mps):
    """Entropy at every cut ``k = 1..n-1`` from one left-to-right SVD sweep."""
    state = canonicalize(mps, 0) if mps.center is None else move_center(mps, 0)
    t = state.tensors
    out = np.zeros(max(mps.n_sites - 1, 0))
    for i in range(mps.n_sites - 1):
        l, d, r = t[i].shape
        u, s, vt = _svd(t[i].reshape(l * d, r))
        out[i] = entanglement_entropy(s)
        t[i] = u.reshape(l, d, -1)
        t[i + 1] = np.tensordot(s[:, None] * vt, t[i + 1], axes=(1, 0))
    return out


def save(mps, path):
    Path(path).write_bytes(to_bytes(mps))


def load(path):
    return from_bytes(Path(path).read_bytes())


def to_bytes(mps):
    center = 0 if mps.center is None else mps.center + 1
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, mps.n_sites, PHYS_DIM, mps.bond_cap, center)]
    for t in mps.tensors:
        parts.append(_SITE.pack(t.shape[0], t.shape[2]))
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(buf):
    """Inverse of :func:`to_bytes`; the stored center is 1-based, 0 = none."""
    if len(buf) < _HEADER.size:
        raise ParseError("truncated MPS header", 0)
    magic, version, n_sites, phys, cap, center = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", 4)
    if phys != PHYS_DIM:
        raise ParseError(f"unsupported physical dimension {phys}", 12)
    off = _HEADER.size
    tensors = []
    for _ in range(n_sites):
        if off + _SITE.size > len(buf):
            raise ParseError("truncated site record", off)
        lb, rb = _SITE.unpack_from(buf, off)
        off += _SITE.size
        nbytes = lb * PHYS_DIM * rb * 8
        if off + nbytes > len(buf):
            raise ParseError("truncated site payload", off)
        arr = np.frombuffer(buf, dtype="<f8", count=lb * PHYS_DIM * rb, offset=off)
        tensors.append(arr.reshape(lb, PHYS_DIM, rb).astype(np.float64))
        off += nbytes
    if off != len(buf):
        raise ParseError("trailing bytes after last site", off)
    try:
        return MPS(tensors, cap, None if center == 0 else center - 1)
    except InputError as exc:
        raise ParseError(f"inconsistent MPS record: {exc}", _HEADER.size) from exc
