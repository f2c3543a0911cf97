import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_psd
from dppal.errors import InputError, ParameterError, SingularConditioningError
from dppal.kernel import (
    build_kernel,
    check_psd,
    condition_kernel,
    condition_kernel_by_inverse,
    default_sigma,
    feature_similarity,
    gaussian_similarity,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_gaussian_hand_value():
    s = gaussian_similarity(np.array([[0.0, 0.0], [1.0, 0.0]]), 1.0)
    assert s.entries[0, 1] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert s.entries[0, 1] == pytest.approx(0.606531, abs=1e-6)


def test_gaussian_identical_rows():
    s = gaussian_similarity(np.array([[0.3, 0.7], [0.3, 0.7], [0.0, 1.0]]), 0.2)
    assert s.entries[0, 1] == 1.0
    assert np.all(np.diag(s.entries) == 1.0)


def test_gaussian_errors():
    with pytest.raises(InputError):
        gaussian_similarity(np.array([[0.0, np.nan]]), 1.0)
    with pytest.raises(ParameterError):
        gaussian_similarity(np.zeros((2, 2)), 0.0)
    with pytest.raises(ParameterError):
        gaussian_similarity(np.zeros((2, 2)), -1.0)


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)), elements=finite),
       st.floats(0.05, 5.0))
def test_gaussian_symmetric_unit_diag_psd(x, sigma):
    s = gaussian_similarity(x, sigma).entries
    assert np.array_equal(s, s.T)
    assert np.all(np.diag(s) == 1.0)
    assert np.all((s >= 0) & (s <= 1))
    assert check_psd(s)


@pytest.mark.invariant
@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 10), st.just(3)), elements=finite),
       st.randoms(use_true_random=False))
def test_gaussian_permutation_equivariant(x, r):
    perm = list(range(x.shape[0]))
    r.shuffle(perm)
    s = gaussian_similarity(x, 0.7).entries
    sp = gaussian_similarity(x[perm], 0.7).entries
    np.testing.assert_allclose(sp, s[np.ix_(perm, perm)], rtol=0, atol=1e-14)


def test_feature_similarity_unit_rows():
    phi = np.array([[3.0, 4.0], [1.0, 0.0]])
    s = feature_similarity(phi).entries
    np.testing.assert_allclose(s, [[1.0, 0.6], [0.6, 1.0]])


def _mean_distance_unit_square():
    # closed form for two uniform points in [0,1]^2
    return (2 + math.sqrt(2) + 5 * math.log(1 + math.sqrt(2))) / 15


def test_default_sigma_known_values():
    assert default_sigma(2, 1) == pytest.approx(1 / 3, abs=0.01)
    assert _mean_distance_unit_square() == pytest.approx(0.5214, abs=1e-4)
    assert default_sigma(2, 2) == pytest.approx(_mean_distance_unit_square(), abs=0.01)


def test_default_sigma_matches_independent_estimate():
    # brute-force estimate with a different generator and seed
    rng = np.random.default_rng(99)
    x = rng.random((20000, 15, 2))
    d = np.sqrt(((x[:, :, None] - x[:, None, :]) ** 2).sum(-1))
    d[:, np.arange(15), np.arange(15)] = np.inf
    ref = d.min(axis=(1, 2)).mean()
    assert default_sigma(15, 2) == pytest.approx(ref, abs=0.005)


def test_default_sigma_deterministic_and_validated():
    assert default_sigma(7, 3) == default_sigma(7, 3)
    with pytest.raises(ParameterError):
        default_sigma(1, 2)


def test_build_kernel_examples():
    s = np.array([[1.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(build_kernel(s, [2.0, 1.0], 1.0, 1.0).entries, [[4.0, 1.0], [1.0, 1.0]])
    q = np.array([0.3, 2.0])
    np.testing.assert_array_equal(build_kernel(s, q, 1.0, 0.0).entries, s)
    np.testing.assert_array_equal(build_kernel(s, np.ones(2), 1.0, 3.0).entries, s)
    np.testing.assert_array_equal(build_kernel(s, q, 0.0, 5.0).entries, s)


def test_build_kernel_errors():
    s = np.eye(2)
    with pytest.raises(InputError):
        build_kernel(s, [1.0, -0.1], 1.0, 1.0)
    with pytest.raises(InputError):
        build_kernel(s, [1.0], 1.0, 1.0)
    with pytest.raises(ParameterError):
        build_kernel(s, [1.0, 1.0], -1.0, 1.0)


def test_zero_score_zeroes_row():
    s = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    lk = build_kernel(s, [1.0, 0.0, 2.0], 2.0, 1.0).entries
    assert np.all(lk[1] == 0) and np.all(lk[:, 1] == 0)


@pytest.mark.invariant
@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.floats(0.1, 5.0), st.floats(0.0, 5.0), st.integers(0, 2**31))
def test_build_kernel_det_identity(n, alpha, gamma, seed):
    rng = np.random.default_rng(seed)
    s = random_psd(n, rng)
    q = rng.uniform(0.1, 2.0, n)
    lk = build_kernel(s, q, alpha, gamma).entries
    np.testing.assert_allclose(lk, lk.T, rtol=0, atol=1e-12)
    assert check_psd(lk)
    k = rng.integers(1, n + 1)
    for a in itertools.combinations(range(n), k):
        a = list(a)
        want = np.prod(q[a] ** (2 * gamma / alpha)) * np.linalg.det(s[np.ix_(a, a)])
        assert np.linalg.det(lk[np.ix_(a, a)]) == pytest.approx(want, rel=1e-7, abs=1e-12)


def test_condition_empty_is_identity(rng):
    lk = random_psd(5, rng)
    out, rest = condition_kernel(lk, [])
    np.testing.assert_array_equal(out.entries, lk)
    assert list(rest) == list(range(5))


def test_condition_diagonal():
    out, rest = condition_kernel(np.diag([2.0, 3.0, 5.0]), [0])
    np.testing.assert_allclose(out.entries, np.diag([3.0, 5.0]), atol=1e-15)
    assert list(rest) == [1, 2]


def _brute_conditional(lk, b, k):
    n = lk.shape[0]
    rest = [i for i in range(n) if i not in b]
    w = {}
    for a in itertools.combinations(rest, k - len(b)):
        idx = sorted(set(a) | set(b))
        w[a] = np.linalg.det(lk[np.ix_(idx, idx)])
    z = sum(w.values())
    return {a: v / z for a, v in w.items()}


def test_condition_n3_matches_enumeration(rng):
    lk = random_psd(3, rng)
    out, rest = condition_kernel(lk, [0])
    for k in (2, 3):
        want = _brute_conditional(lk, [0], k)
        got = {}
        for a in itertools.combinations(range(2), k - 1):
            got[tuple(int(rest[i]) for i in a)] = np.linalg.det(out.entries[np.ix_(a, a)])
        z = sum(got.values())
        for a in want:
            assert got[a] / z == pytest.approx(want[a], abs=1e-12)


@pytest.mark.invariant
@settings(max_examples=40, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**31))
def test_condition_schur_matches_inverse_route(n, seed):
    rng = np.random.default_rng(seed)
    lk = random_psd(n, rng, jitter=0.05)
    b = sorted(rng.choice(n, size=rng.integers(1, 3), replace=False).tolist())
    fast, r1 = condition_kernel(lk, b)
    slow, r2 = condition_kernel_by_inverse(lk, b)
    assert list(r1) == list(r2)
    np.testing.assert_allclose(fast.entries, slow, rtol=1e-7, atol=1e-9)


def test_condition_singular_raises():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    s = gaussian_similarity(x, 1.0)
    with pytest.raises(SingularConditioningError):
        condition_kernel(s, [0, 1])


def test_condition_out_of_range():
    with pytest.raises(InputError):
        condition_kernel(np.eye(3), [3])
