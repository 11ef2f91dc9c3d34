import itertools
import os
from pathlib import Path

import numpy as np
import pytest

from fullset.mps import MPS

MNIST_DIR = Path(os.environ.get("FULLSET_DATA_DIR", "/root/data/mnist"))


def dense_state(mps):
    """Brute-force 2**n amplitude vector, index = bits read big-endian (site 0 first)."""
    vec = mps.tensors[0][0]  # (2, r)
    for t in mps.tensors[1:]:
        vec = np.einsum("ar,rsb->asb", vec, t).reshape(-1, t.shape[2])
    return vec[:, 0]


def all_bitstrings(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)


def bits_to_index(bits):
    idx = 0
    for b in bits:
        idx = 2 * idx + int(b)
    return idx


def random_raw_mps(n, D, seed, scale=1.0):
    """Non-canonical random MPS (no gauge declared)."""
    rng = np.random.default_rng(seed)
    bonds = [1] + [min(D, 2 ** min(i, n - i)) for i in range(1, n)] + [1]
    return MPS([scale * rng.normal(size=(bonds[i], 2, bonds[i + 1])) for i in range(n)], D)


def bell_pair():
    a = np.zeros((1, 2, 2))
    a[0, 0, 0] = a[0, 1, 1] = 2 ** -0.5
    b = np.zeros((2, 2, 1))
    b[0, 0, 0] = b[1, 1, 0] = 1.0
    return MPS([a, b], 2, center=0)


def mnist_available():
    return (MNIST_DIR / "train-images-idx3-ubyte").exists() or (MNIST_DIR / "train-images-idx3-ubyte.gz").exists()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bars_and_stripes(count, noise=0.05, seed=0, side=4):
    """Two-class toy set: class 0 has constant columns (bars), class 1 constant rows (stripes).

    Each image picks random on/off lines (never all-equal) and flips pixels with
    probability ``noise``.
    """
    rng = np.random.default_rng(seed)
    X = np.empty((count, side * side), np.uint8)
    y = rng.integers(0, 2, count)
    for i in range(count):
        while True:
            lines = rng.integers(0, 2, side)
            if 0 < lines.sum() < side:
                break
        grid = np.tile(lines, (side, 1)) if y[i] == 0 else np.tile(lines[:, None], (1, side))
        X[i] = grid.ravel()
    flips = rng.random(X.shape) < noise
    return np.where(flips, 1 - X, X).astype(np.uint8), y


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
