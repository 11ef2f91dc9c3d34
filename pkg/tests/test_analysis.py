import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_bitstrings, bell_pair, dense_state
from fullset import analysis as A
from fullset import mps as M
from fullset.errors import InputError, NoScalingError, ThresholdNotFoundError
from fullset.mps import MPS


def test_energy_delta_and_uniform():
    x0 = np.array([0, 1, 1, 0])
    assert A.energy(MPS.basis_state(x0), x0) == 0.0
    assert A.energy(MPS.basis_state(x0), [1, 1, 1, 0]) == math.inf
    uni = MPS.product([[2**-0.5, 2**-0.5]] * 784).with_center(0)
    assert A.energy(uni, np.zeros(784, int)) == pytest.approx(784 * math.log(2), rel=1e-12)


def test_energies_match_enumeration():
    m = MPS.random(6, 3, seed=2)
    ref = -np.log(dense_state(m) ** 2)
    np.testing.assert_allclose(A.energies(m, all_bitstrings(6)), ref, atol=1e-10)


def test_e0_arithmetic():
    assert A.e0([3.7] * 5) == pytest.approx(3.7, abs=1e-14)
    assert A.e0([0.0, math.log(2)]) == pytest.approx(-math.log(0.75), abs=1e-14)
    assert A.e0([1e4, 1e4 + 1]) == pytest.approx(1e4 - math.log((1 + math.exp(-1)) / 2), abs=1e-9)
    with pytest.raises(InputError):
        A.e0([])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-50, 800, allow_nan=False), min_size=1, max_size=30), st.randoms(use_true_random=False))
def test_e0_jensen_permutation_duplication(values, rnd):
    e = np.array(values)
    e0 = A.e0(e)
    tol = 1e-9 * max(1.0, np.abs(e).max())
    assert e.min() - tol <= e0 <= e.mean() + tol
    perm = list(values)
    rnd.shuffle(perm)
    assert A.e0(perm) == pytest.approx(e0, abs=tol)
    assert A.e0(np.concatenate([e, e])) == pytest.approx(e0, abs=tol)


def test_energy_stats_ordering():
    m = MPS.random(7, 3, seed=4)
    X = np.random.default_rng(0).integers(0, 2, size=(40, 7))
    st_ = A.energy_stats(m, X, "train")
    assert st_.e_ground <= st_.e0 <= st_.mean_e
    d = st_.to_dict()
    assert d["V_bits"] == pytest.approx(st_.e0 / math.log(2))


def test_full_set_size():
    fs = A.full_set_size(72 * math.log(2), 1.0, 1.0)
    assert fs.V == pytest.approx(72.0, abs=1e-12)
    assert fs.correction == 0.0
    fs = A.full_set_size(50.0, 0.2, 3.0, epsilon_star=60.0)
    assert fs.N_F_log == pytest.approx(50.0 + math.log(0.6))
    for rho, de in [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)]:
        with pytest.raises(InputError):
            A.full_set_size(10.0, rho, de)


def test_kde_standard_normal():
    x = np.random.default_rng(1).normal(size=10_000)
    f = A.kde(x)
    assert abs(f(0.0)[0] - 1 / math.sqrt(2 * math.pi)) < 0.1 / math.sqrt(2 * math.pi)
    grid = np.linspace(-8, 8, 4001)
    assert abs(np.trapezoid(f(grid), grid) - 1) < 1e-3
    expected_h = (4 / 3) ** 0.2 * x.std(ddof=1) * x.size ** -0.2
    assert f.bandwidth == pytest.approx(expected_h)


def test_kde_degenerate_fallback():
    with pytest.warns(RuntimeWarning):
        f = A.kde([5.0] * 10)
    assert f.bandwidth == pytest.approx(5e-6)
    vals = f(np.array([5.0, 5.001, 4.9]))
    assert vals[0] > 1e4 and vals[0] > vals[1] and vals[0] > vals[2]
    with pytest.raises(InputError):
        A.kde([1.0])


def test_hamming_definition():
    assert A.pairwise_hamming([[0, 0, 1]], [[0, 1, 1]])[0, 0] == 1
    h = A.hamming_stats(np.array([[1, 0, 1, 1]] * 4))
    assert h.mean_pairwise == 0.0 and h.n_pairs == 6
    with pytest.raises(InputError):
        A.hamming_stats(np.zeros((1, 4)))


def test_hamming_random_strings_converge():
    n = 64
    X = np.random.default_rng(2).integers(0, 2, size=(3000, n))
    h = A.hamming_stats(X, pair_budget=20_000, seed=1)
    assert h.n_pairs == 20_000
    assert abs(h.mean_pairwise - n / 2) < 3 * h.std_pairwise / math.sqrt(h.n_pairs)
    assert h.random_baseline == pytest.approx(n / 2, rel=0.01)
    assert 0 <= h.mean_pairwise <= n


def test_hamming_all_pairs_matches_brute_force():
    X = np.random.default_rng(3).integers(0, 2, size=(30, 11))
    d = [np.sum(X[a] != X[b]) for a in range(30) for b in range(a + 1, 30)]
    h = A.hamming_stats(X)
    assert h.mean_pairwise == pytest.approx(np.mean(d))
    assert h.std_pairwise == pytest.approx(np.std(d))


def subcube(m, n, size, seed):
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 2, n)
    X = np.tile(base, (size, 1))
    free = rng.choice(n, m, replace=False)
    X[:, free] = rng.integers(0, 2, size=(size, m))
    return X


def test_cube_nearest_distance_small_cases():
    # two uniform points on {0,1}^m are at mean distance m/2
    for m in (1, 4, 9):
        assert A.cube_nearest_distance(2, m) == pytest.approx(m / 2)
    # brute force for K = 3, m = 3
    pts = all_bitstrings(3)
    tot = 0.0
    for a in pts:
        for b in pts:
            for c in pts:
                tot += min(np.sum(a != b), np.sum(a != c))
    assert A.cube_nearest_distance(3, 3) == pytest.approx(tot / 8**3)


@pytest.mark.parametrize("m", [6, 10])
def test_fractal_recovers_subcube_dimension(m):
    X = subcube(m, 100, 10_000, seed=m)
    fit = A.fractal_dimension(X, A.doubling_schedule(10_000, 8), seed=0)
    assert abs(fit.delta - m) <= 0.2 * m
    assert fit.slope < 0 and fit.delta > 0
    assert np.all(np.diff(fit.k_values) > 0)


def test_fractal_duplicates_rejected():
    X = np.tile(np.array([1, 0, 1, 1, 0, 0]), (64, 1))
    with pytest.raises(NoScalingError) as exc:
        A.fractal_dimension(X, [4, 8, 16, 32])
    assert exc.value.diagnostics["d_values"] == [0.0] * 4


def test_fractal_input_checks():
    X = subcube(4, 10, 50, 0)
    with pytest.raises(InputError):
        A.fractal_dimension(X, [4, 8])
    with pytest.raises(InputError):
        A.fractal_dimension(X, [4, 8, 64])


def test_page_curve_product_state():
    m = M.canonicalize(MPS.product([[0.6, 0.8]] * 6), 0)
    pc = A.page_curve(m, (1, 5))
    np.testing.assert_allclose(pc.s_k, 0.0, atol=1e-12)
    assert pc.s_bar == pytest.approx(0.0, abs=1e-12)


def test_page_curve_bell_pairs_alternate():
    a, b = bell_pair().tensors
    m = MPS([a, b] * 4, 2, center=0)
    m = M.canonicalize(m, 0)
    pc = A.page_curve(m, (1, 7))
    expected = [math.log(2) if k % 2 else 0.0 for k in range(1, 8)]
    np.testing.assert_allclose(pc.s_k, expected, atol=1e-12)
    assert pc.to_csv().splitlines()[0] == "k,S_k"


def test_page_curve_plateau_clipped():
    m = MPS.random(10, 4, seed=0)
    # the default [200, 600] misses a 10-site chain entirely: fall back to every cut
    pc = A.page_curve(m)
    assert pc.plateau_range == (1, 9)
    assert A.page_curve(m, (4, 50)).plateau_range == (4, 9)
    assert np.all(pc.s_k >= -1e-15)
    assert np.all(pc.s_k <= np.log(m.bond_dims) + 1e-12)


def two_outcome_state(p_low):
    a = np.zeros((1, 2, 2))
    a[0, 0, 0], a[0, 1, 1] = math.sqrt(p_low), math.sqrt(1 - p_low)
    b = np.zeros((2, 2, 1))
    b[0, 0, 0] = b[1, 1, 0] = 1.0
    return MPS([a, b], 2, center=0)


def test_neat_threshold_constant_oracle_not_found():
    m = MPS.random(6, 3, seed=1)
    grid = np.linspace(2.0, 6.0, 5)
    with pytest.raises(ThresholdNotFoundError) as exc:
        A.neat_threshold(m, lambda X: np.ones(len(X)), grid, 30, seed=0, half_width=10.0)
    assert len(exc.value.profile) == 5


def test_neat_threshold_step_oracle():
    # random n=8 state; quality 1 below c and 0 above: E* is the first grid point >= c
    m = MPS.random(8, 4, seed=5)
    E = -np.log(dense_state(m) ** 2)
    c = float(np.median(E))
    # grid on the support itself so every narrow window is reachable
    grid = np.unique(E)
    h = 1e-6
    oracle = lambda X: (A.energies(m, X) < c).astype(float)  # noqa: E731
    res = A.neat_threshold(m, oracle, grid, 20, seed=0, half_width=h)
    assert res.epsilon_star == pytest.approx(grid[grid >= c][0])
    assert res.profile[0].mean == 1.0 and res.profile[0].std == 0.0


def test_ensemble_oracle_normalized():
    from fullset.classify import ClassifierEnsemble

    ens = ClassifierEnsemble({0: MPS.random(5, 2, seed=0), 1: MPS.random(5, 2, seed=1)})
    X = all_bitstrings(5)
    q0 = A.ensemble_quality_oracle(ens, 0)(X)
    q1 = A.ensemble_quality_oracle(ens, 1)(X)
    np.testing.assert_allclose(q0 + q1, 1.0, atol=1e-12)
