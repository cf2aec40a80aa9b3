import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vqkan_gan.metrics import (
    SeedGroup,
    bonferroni_matrix,
    kid,
    mse,
    sliced_wasserstein,
    welch_t,
    write_matrix_csv,
)


def brute_force_kid(a, b):
    """Double-loop kernel sums, k(x, y) = (x.y / d + 1)^3, diagonal excluded within sets."""
    d = len(a[0])

    def k(x, y):
        return (sum(xi * yi for xi, yi in zip(x, y)) / d + 1.0) ** 3

    m, n = len(a), len(b)
    saa = sum(k(a[i], a[j]) for i in range(m) for j in range(m) if i != j)
    sbb = sum(k(b[i], b[j]) for i in range(n) for j in range(n) if i != j)
    sab = sum(k(x, y) for x in a for y in b)
    return saa / (m * (m - 1)) + sbb / (n * (n - 1)) - 2 * sab / (m * n)


def exact_w2_1d(u, v):
    """Optimal matching of two equal-size point sets on a line by enumerating permutations."""
    best = min(np.mean((np.asarray(u) - np.asarray(v)[list(perm)]) ** 2) for perm in itertools.permutations(range(len(v))))
    return best


# ---------------------------------------------------------------------------
# MSE
# ---------------------------------------------------------------------------


def test_mse_identical():
    a = np.random.default_rng(0).random((8, 16))
    assert mse(a, a) == 0.0


def test_mse_zeros_ones():
    assert mse(np.zeros((3, 4)), np.ones((3, 4))) == 1.0


def test_mse_single_pixel():
    assert mse([[0.2]], [[0.5]]) == pytest.approx(0.09)


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((2, 3)), np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# SWD
# ---------------------------------------------------------------------------


def test_swd_identical():
    a = np.random.default_rng(1).random((8, 64))
    assert sliced_wasserstein(a, a, 50, 0) < 1e-12


@pytest.mark.parametrize("delta", [0.1, 0.37])
def test_swd_constant_shift_single_image(delta):
    # a shift by delta in every pixel projects to delta * (theta . 1); one point per set
    a = np.random.default_rng(2).random((1, 16))
    b = a + delta
    dirs_seed = 5
    value = sliced_wasserstein(a, b, 200, dirs_seed)
    rng = np.random.default_rng(dirs_seed)
    dirs = rng.standard_normal((200, 16))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    expected = np.sqrt(np.mean([exact_w2_1d(a @ t, b @ t) for t in dirs]))
    assert value == pytest.approx(expected, rel=1e-12)
    # every projection moves the point by delta * (t . 1); the mean of (t.1)^2 over unit directions is 1
    assert value == pytest.approx(delta, rel=0.25)


def test_swd_matches_permutation_oracle():
    rng = np.random.default_rng(3)
    a, b = rng.random((5, 6)), rng.random((5, 6))
    dirs = np.random.default_rng(11).standard_normal((30, 6))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    expected = np.sqrt(np.mean([exact_w2_1d(a @ t, b @ t) for t in dirs]))
    assert sliced_wasserstein(a, b, 30, 11) == pytest.approx(expected, rel=1e-12)


def test_swd_permutation_invariant():
    rng = np.random.default_rng(4)
    a, b = rng.random((8, 10)), rng.random((8, 10))
    perm = rng.permutation(8)
    assert sliced_wasserstein(a[perm], b[perm], 50, 0) == pytest.approx(sliced_wasserstein(a, b, 50, 0), rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_swd_symmetric_non_negative(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((4, 9)), rng.random((4, 9))
    ab, ba = sliced_wasserstein(a, b, 20, 7), sliced_wasserstein(b, a, 20, 7)
    assert ab >= 0
    assert ab == pytest.approx(ba, rel=1e-12)


def test_swd_seed_stable():
    rng = np.random.default_rng(5)
    a, b = rng.random((8, 10)), rng.random((8, 10))
    assert sliced_wasserstein(a, b, 50, 3) == sliced_wasserstein(a, b, 50, 3)


def test_swd_w1_option():
    a, b = np.zeros((1, 4)), np.zeros((1, 4))
    assert sliced_wasserstein(a, b, 10, 0, p=1) == 0.0


# ---------------------------------------------------------------------------
# KID
# ---------------------------------------------------------------------------


def test_kid_identical_sets():
    # with a == b the estimator collapses to -(2/m) (mean diagonal kernel - mean off-diagonal kernel)
    a = np.random.default_rng(6).random((8, 16))
    k = (a @ a.T / 16 + 1) ** 3
    off = (k.sum() - np.trace(k)) / (8 * 7)
    value = kid(a, a)
    assert value <= 1e-9
    assert value == pytest.approx(-(2 / 8) * (np.trace(k) / 8 - off), abs=1e-12)


def test_kid_identical_constant_images_is_zero():
    a = np.full((8, 16), 0.4)
    assert abs(kid(a, a)) < 1e-9


def test_kid_orthogonal_unit_pixels():
    a = [[1.0, 0.0], [1.0, 0.0]]
    b = [[0.0, 1.0], [0.0, 1.0]]
    # within-set k = 1.5^3, cross-set k = 1: 3.375 + 3.375 - 2
    assert brute_force_kid(a, b) == pytest.approx(4.75)
    assert kid(a, b) == pytest.approx(4.75, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_kid_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((8, 16)), rng.random((8, 16))
    assert kid(a, b) == pytest.approx(brute_force_kid(a.tolist(), b.tolist()), abs=1e-12)


def test_kid_joint_pixel_permutation():
    rng = np.random.default_rng(7)
    a, b = rng.random((6, 12)), rng.random((6, 12))
    perm = rng.permutation(12)
    assert kid(a[:, perm], b[:, perm]) == pytest.approx(kid(a, b), abs=1e-12)


def test_kid_needs_two_images():
    with pytest.raises(ValueError):
        kid(np.zeros((1, 4)), np.zeros((3, 4)))


# ---------------------------------------------------------------------------
# Welch / Bonferroni
# ---------------------------------------------------------------------------


def test_welch_identical():
    x = [0.3, 0.5, 0.4, 0.8]
    assert welch_t(x, x) == (0.0, 1.0)


def test_welch_antisymmetric():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=12), rng.normal(0.4, 2, size=9)
    assert welch_t(x, y)[0] == -welch_t(y, x)[0]
    assert welch_t(x, y)[1] == welch_t(y, x)[1]


def test_welch_degenerate():
    t, p = welch_t([0, 0], [1, 1])
    assert t == -np.inf and p == 0.0
    assert welch_t([2, 2], [2, 2]) == (0.0, 1.0)


@pytest.mark.parametrize("seed", range(6))
def test_welch_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=int(rng.integers(2, 30))), rng.normal(0.5, 1.5, size=int(rng.integers(2, 30)))
    ref = stats.ttest_ind(x, y, equal_var=False)
    t, p = welch_t(x, y)
    assert t == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)


def groups16(rng):
    seeds = [42, 2, 10, 13, 0, 3407, 7120, 10000, 11111, 16384, 17171, 130000, 14480, 11668, 500001, 620000]
    return [SeedGroup(s, rng.normal(0.35 + 0.01 * i, 0.05, size=50)) for i, s in enumerate(seeds)]


def test_bonferroni_structure():
    res = bonferroni_matrix(groups16(np.random.default_rng(9)))
    assert res.t.shape == res.p.shape == (16, 16)
    np.testing.assert_array_equal(res.t, -res.t.T)
    np.testing.assert_array_equal(res.p, res.p.T)
    np.testing.assert_array_equal(np.diag(res.t), 0.0)
    np.testing.assert_array_equal(np.diag(res.p), 1.0)
    assert np.all((res.p >= 0) & (res.p <= 1))
    assert res.threshold == pytest.approx(0.05 / 240)


def test_bonferroni_identical_groups_not_significant():
    vals = np.random.default_rng(10).random(20)
    res = bonferroni_matrix([SeedGroup(1, vals), SeedGroup(2, vals)])
    assert not res.significant.any()


def test_bonferroni_divisor_one_is_plain_welch():
    rng = np.random.default_rng(11)
    a, b = rng.normal(size=30), rng.normal(0.6, size=30)
    res = bonferroni_matrix([SeedGroup(1, a), SeedGroup(2, b)], correction_divisor=1)
    p = welch_t(a, b)[1]
    assert res.significant[0, 1] == (p < 0.05)
    assert res.p[0, 1] == p


def test_matrix_csv_layout(tmp_path):
    res = bonferroni_matrix(groups16(np.random.default_rng(12))[:3])
    path = tmp_path / "t.csv"
    write_matrix_csv(path, res.seeds, res.t, "t value")
    lines = path.read_text().splitlines()
    assert lines[0] == "t value,42,2,10"
    assert lines[1].startswith("42,0.0,")
    assert len(lines) == 4
