import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issm.discrepancy import KernelConfig, median_bandwidth, mmd, rbf_kernel
from issm.exceptions import InsufficientDataError, ShapeError


def brute_force_mmd(P, Q, sigma):
    """Literal triple sum with scalar loops; shares no code with the library."""
    def k(a, b):
        return math.exp(-sum((x - y) ** 2 for x, y in zip(a, b)) / (2 * sigma ** 2))
    nl, nu = len(P), len(Q)
    a = sum(k(P[i], P[j]) for i in range(nl) for j in range(nl)) / nl ** 2
    b = sum(k(Q[i], Q[j]) for i in range(nu) for j in range(nu)) / nu ** 2
    c = sum(2 * k(P[i], Q[j]) for i in range(nl) for j in range(nu)) / (nl * nu)
    return a + b - c


def test_rbf_examples():
    assert rbf_kernel([3.7, -1], [3.7, -1], 1.0) == 1.0
    assert rbf_kernel([0], [2], math.sqrt(2)) == pytest.approx(math.exp(-1), rel=1e-15)
    assert rbf_kernel([0], [2], math.sqrt(2)) == pytest.approx(0.3678794, abs=5e-8)
    assert rbf_kernel([1, 1], [1, 1], 1e-3) == 1.0


def test_rbf_shape_error():
    with pytest.raises(ShapeError):
        rbf_kernel([1, 2], [1], 1.0)


def test_rbf_symmetric(rng):
    x, y = rng.normal(size=4), rng.normal(size=4)
    assert rbf_kernel(x, y, 0.7) == rbf_kernel(y, x, 0.7)


def test_median_bandwidth_examples():
    assert median_bandwidth([[0], [1], [3]]) == 2.0
    assert median_bandwidth([[5], [5]]) == 1.0
    assert median_bandwidth([[0], [0], [4]]) == 4.0
    # six zero distances and four of 3: median 0 falls back to the smallest nonzero
    assert median_bandwidth([[0], [0], [0], [0], [3]]) == 3.0


def test_median_bandwidth_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        median_bandwidth([[1.0, 2.0]])


def test_mmd_examples(rng):
    A = rng.normal(size=(7, 3))
    assert abs(mmd(A, A, KernelConfig())) <= 1e-12
    fixed = KernelConfig(sigma=1 / math.sqrt(2), bandwidth_mode="fixed")
    assert mmd([[0.0]], [[1.0]], fixed) == pytest.approx(2 - 2 * math.exp(-1), abs=1e-14)
    assert mmd([[0.0]], [[1.0]], fixed) == pytest.approx(1.2642411, abs=5e-8)


def test_mmd_matches_brute_force(rng):
    for _ in range(30):
        nl, nu, m = rng.integers(1, 21), rng.integers(1, 21), rng.integers(1, 9)
        P, Q = rng.normal(size=(nl, m)), rng.normal(loc=0.5, size=(nu, m))
        sigma = float(rng.uniform(0.3, 3.0))
        got = mmd(P, Q, KernelConfig(sigma=sigma, bandwidth_mode="fixed"))
        assert got == pytest.approx(brute_force_mmd(P.tolist(), Q.tolist(), sigma), abs=1e-10)


def test_mmd_dimension_mismatch():
    with pytest.raises(ShapeError):
        mmd(np.zeros((2, 3)), np.zeros((2, 4)))


def test_mmd_subsamples_large_inputs(rng):
    A = rng.normal(size=(5000, 2))
    B = rng.normal(size=(10, 2))
    assert mmd(A, B, seed=3) == mmd(A, B, seed=3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_symmetry_nonnegativity_permutation(nl, nu, m, seed):
    r = np.random.default_rng(seed)
    A, B = r.normal(size=(nl, m)), r.normal(size=(nu, m)) * 2
    k = KernelConfig()
    ab = mmd(A, B, k)
    assert ab == mmd(B, A, k)
    assert ab >= -1e-12
    assert mmd(r.permutation(A), r.permutation(B), k) == pytest.approx(ab, abs=1e-12)


def test_translation_ramp_approaches_two(rng):
    A = rng.normal(size=(15, 2))
    B = rng.normal(size=(15, 2))
    cfg = KernelConfig(sigma=1.0, bandwidth_mode="fixed")
    direction = np.array([1.0, 0.0])
    values = [mmd(A, B + t * direction, cfg) for t in [0, 2, 4, 8, 16, 32, 64]]
    assert all(b > a for a, b in zip(values[:4], values[1:4]))
    assert all(b >= a for a, b in zip(values, values[1:]))
    # supremum is 2 minus the within-set off-diagonal averages; diagonals give at least 1/n each
    assert values[-1] <= 2.0
    assert values[-1] == pytest.approx(mmd(A, B + 1e6 * direction, cfg), abs=1e-9)
