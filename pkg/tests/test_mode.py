import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import enumerate_dets, gaussian_instance, random_psd
from dppal.errors import DivergenceError, InputError, ParameterError, RankDeficiencyError
from dppal.mode import (
    SmdConfig,
    dpp_marginals,
    exhaustive_mode,
    generating_polynomial,
    greedy_mode,
    log_det_of,
    mcr_mode,
    smd_relaxation,
    solve_relaxation,
    transition_gradient,
)
from dppal.sampler import DppDistribution, brute_force_pmf


def brute_g(lk, k, v):
    return sum(d * np.prod(v[list(a)]) for a, d in enumerate_dets(lk, k).items())


def brute_marginals(lk, k, v):
    p = np.zeros(len(v))
    z = 0.0
    for a, d in enumerate_dets(lk, k).items():
        w = d * np.prod(v[list(a)])
        z += w
        p[list(a)] += w
    return p / z


def test_g_identity_is_binomial():
    for n, k in [(5, 2), (7, 3), (10, 4)]:
        assert math.exp(generating_polynomial(np.eye(n), k, np.ones(n))) == pytest.approx(math.comb(n, k))


def test_g_matches_enumeration(rng):
    lk = random_psd(5, rng)
    v = rng.uniform(0.1, 2.0, 5)
    assert math.exp(generating_polynomial(lk, 2, v)) == pytest.approx(brute_g(lk, 2, v), rel=1e-9)


def test_g_zero_coordinate_drops_item(rng):
    lk = random_psd(6, rng)
    v = rng.uniform(0.5, 1.5, 6)
    v[2] = 0.0
    keep = [0, 1, 3, 4, 5]
    want = generating_polynomial(lk[np.ix_(keep, keep)], 3, v[keep])
    assert generating_polynomial(lk, 3, v) == pytest.approx(want, rel=1e-12)


def test_g_rank_deficient_is_minus_inf(rng):
    assert generating_polynomial(random_psd(6, rng, rank=2), 3, np.ones(6)) == -np.inf


def test_g_rejects_bad_v(rng):
    with pytest.raises(InputError):
        generating_polynomial(np.eye(3), 1, np.array([1.0, -1.0, 1.0]))


def test_marginals_identity():
    p = dpp_marginals(np.eye(8), 3, np.ones(8))
    np.testing.assert_allclose(p, 3 / 8, atol=1e-12)


@pytest.mark.parametrize("method", ["exact", "enumerate"])
def test_marginals_match_enumeration(rng, method):
    lk = random_psd(7, rng)
    v = rng.uniform(0.2, 2.0, 7)
    p = dpp_marginals(lk, 3, v, method=method)
    np.testing.assert_allclose(p, brute_marginals(lk, 3, v), atol=1e-10)
    assert p.sum() == pytest.approx(3, abs=1e-8)


def test_marginals_mcmc_estimate(rng):
    lk = random_psd(6, rng)
    v = rng.uniform(0.5, 1.5, 6)
    p = dpp_marginals(lk, 2, v, method="mcmc", n_steps=200_000, seed=3)
    np.testing.assert_allclose(p, brute_marginals(lk, 2, v), atol=0.02)


def test_marginals_zero_coordinate(rng):
    lk = random_psd(6, rng)
    v = np.ones(6)
    v[4] = 0.0
    assert dpp_marginals(lk, 2, v)[4] == 0.0


@pytest.mark.invariant
@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31))
def test_gradient_identity(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n))
    lk = random_psd(n, rng, jitter=0.05)
    v = rng.uniform(0.3, 2.0, n)
    p = dpp_marginals(lk, k, v)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd = (generating_polynomial(lk, k, v + e) - generating_polynomial(lk, k, v - e)) / (2 * h)
        assert fd == pytest.approx(p[i] / v[i], rel=1e-4)


@pytest.mark.invariant
@settings(max_examples=30, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**31))
def test_log_g_midpoint_concave(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, min(n, 5)))
    lk = random_psd(n, rng)
    v = rng.dirichlet(np.ones(n)) * k
    w = rng.dirichlet(np.ones(n)) * k
    mid = generating_polynomial(lk, k, (v + w) / 2)
    assert mid >= (generating_polynomial(lk, k, v) + generating_polynomial(lk, k, w)) / 2 - 1e-9


def test_greedy_first_pick_is_max_diagonal(rng):
    lk = random_psd(9, rng)
    assert greedy_mode(lk, 4).order[0] == int(np.argmax(np.diag(lk)))


def test_greedy_diagonal_example():
    res = greedy_mode(np.diag([5.0, 4.0, 3.0, 2.0]), 2)
    assert res.subset == (0, 1)
    assert res.log_det == pytest.approx(math.log(20))


def test_greedy_ties_lowest_index():
    assert greedy_mode(np.eye(5), 2).order == (0, 1)


def test_greedy_rank_error(rng):
    with pytest.raises(RankDeficiencyError):
        greedy_mode(random_psd(6, rng, rank=2), 3)


def test_greedy_within_loose_bound(rng):
    for _ in range(30):
        n = int(rng.integers(5, 11))
        k = int(rng.integers(1, 5))
        lk = gaussian_instance(n, rng, sigma=0.5)
        g = greedy_mode(lk, k)
        best = exhaustive_mode(lk, k)
        assert g.log_det >= best.log_det - 2 * k * math.log(max(k, 2))
        assert g.log_det == pytest.approx(log_det_of(lk, g.subset), abs=1e-8)


def test_greedy_matches_naive_schur_search(rng):
    # reference: pick argmax det(L_{A+j}) directly at each step
    lk = random_psd(9, rng)
    chosen = []
    for _ in range(4):
        dets = [np.linalg.det(lk[np.ix_(chosen + [j], chosen + [j])]) if j not in chosen else -1
                for j in range(9)]
        chosen.append(int(np.argmax(dets)))
    assert greedy_mode(lk, 4).order == tuple(chosen)


def test_smd_identity_converges_to_uniform():
    pt = smd_relaxation(np.eye(10), 3, eta=0.1, n_iters=2000, seed=0)
    assert np.max(np.abs(pt.last - 0.3)) < 0.02
    assert pt.last.sum() == pytest.approx(3, abs=1e-9)
    assert np.all(pt.last >= 0)


def test_smd_constant_step_single_chain_runs(rng):
    lk = random_psd(6, rng)
    pt = smd_relaxation(lk, 2, n_iters=300, seed=0, n_chains=1, inner_steps=1, decay=0.0,
                        all_slots=False)
    assert pt.last.sum() == pytest.approx(2, abs=1e-9)
    assert np.isfinite(pt.log_g)


def test_smd_near_exact_optimum(rng):
    lk = random_psd(8, rng)
    exact = solve_relaxation(lk, 3)
    pt = smd_relaxation(lk, 3, n_iters=2000, seed=1)
    final = generating_polynomial(lk, 3, pt.last)
    assert final >= exact.log_g - 0.01 * abs(exact.log_g)


def test_exact_solver_beats_fine_grid():
    # N=3, k=1: log g = log(v . diag) is linear; N=3, k=2 checked against a fine simplex grid
    rng = np.random.default_rng(5)
    lk = random_psd(3, rng)
    best = -np.inf
    for a in np.linspace(0, 2, 401):
        for b in np.linspace(0, 2 - a, max(2, int((2 - a) * 200) + 1)):
            v = np.array([a, b, 2 - a - b])
            g = brute_g(lk, 2, v)
            if g > 0:
                best = max(best, math.log(g))
    assert solve_relaxation(lk, 2).log_g >= best - 1e-9


@pytest.mark.parametrize("sigma", [1.0, 0.3])
def test_low_rank_route_matches_dense(rng, sigma):
    # the relaxation solver works through a rank-r factor; check it against
    # the dense n x n spectrum and against enumeration on a small case
    from dppal.mode import _Factored, _spectral_marginals

    for n, k in ((60, 3), (9, 2)):
        lk = gaussian_instance(n, rng, sigma=sigma)
        fac = _Factored(lk, k)
        v = rng.uniform(0.1, 1.0, n)
        v *= k / v.sum()
        assert fac.log_g(v) == pytest.approx(generating_polynomial(lk, k, v), abs=1e-9)
        np.testing.assert_allclose(fac.marginals(v), _spectral_marginals(lk, k, v), atol=1e-10)
        if n == 9:
            np.testing.assert_allclose(fac.marginals(v), brute_marginals(lk, k, v), atol=1e-10)


def test_smd_sum_preserved_each_iteration(rng):
    lk = random_psd(7, rng)
    for n_iters in (1, 7, 50):
        pt = smd_relaxation(lk, 3, n_iters=n_iters, seed=2, n_checkpoints=n_iters)
        assert pt.v.sum() == pytest.approx(3, abs=1e-12)


def test_smd_validation(rng):
    with pytest.raises(ParameterError):
        smd_relaxation(np.eye(4), 2, eta=0.0)
    with pytest.raises(ParameterError):
        smd_relaxation(np.eye(4), 2, grad_variant="other")


def test_smd_divergence_reports_iteration():
    with pytest.raises(DivergenceError) as info:
        smd_relaxation(np.eye(5), 2, eta=np.inf, n_iters=20, warmup=0, seed=0)
    assert info.value.iteration == 0


def test_transition_gradient_k1_is_marginal(rng):
    lk = random_psd(6, rng)
    v = rng.uniform(0.5, 1.5, 6)
    x = transition_gradient(lk, 1, v, (3,), seed=0)
    np.testing.assert_allclose(x, dpp_marginals(lk, 1, v), atol=1e-12)


def test_transition_gradient_sums_to_k(rng):
    lk = random_psd(8, rng)
    x = transition_gradient(lk, 3, np.ones(8), (1, 4, 6), seed=5)
    assert x.sum() == pytest.approx(3, abs=1e-12)
    assert np.all(x >= 0)


def _stationary_draws(lk, k, v, n, rng):
    w = np.sqrt(v)
    pmf = brute_force_pmf(DppDistribution(w[:, None] * lk * w[None, :], k))
    keys = list(pmf)
    idx = rng.choice(len(keys), size=n, p=np.array([pmf[a] for a in keys]))
    return [keys[i] for i in idx]


def test_transition_gradient_unbiased(rng):
    lk = random_psd(6, rng)
    v = rng.uniform(0.5, 1.5, 6)
    draws = _stationary_draws(lk, 2, v, 100_000, rng)
    seeds = rng.integers(0, 2**31, size=len(draws))
    mean = np.mean([transition_gradient(lk, 2, v, a, seed=int(s)) for a, s in zip(draws, seeds)], axis=0)
    np.testing.assert_allclose(mean, dpp_marginals(lk, 2, v), atol=0.01)


def test_transition_variance_below_indicator(rng):
    lk = random_psd(8, rng)
    v = rng.uniform(0.5, 1.5, 8)
    draws = _stationary_draws(lk, 3, v, 1000, rng)
    ind = np.zeros((len(draws), 8))
    for r, a in enumerate(draws):
        ind[r, list(a)] = 1.0
    tr = np.array([transition_gradient(lk, 3, v, a, seed=r) for r, a in enumerate(draws)])
    assert tr.var(axis=0).sum() <= ind.var(axis=0).sum()


def test_mcr_k1_is_max_diagonal(rng):
    lk = random_psd(9, rng)
    assert mcr_mode(lk, 1).subset == (int(np.argmax(np.diag(lk))),)


def test_mcr_theorem_bound_small_instances(rng):
    for _ in range(25):
        lk = gaussian_instance(8, rng, sigma=1.0)
        m = mcr_mode(lk, 3)
        best = exhaustive_mode(lk, 3)
        assert m.log_det >= best.log_det - 3 - 1e-12
        assert m.log_det == pytest.approx(log_det_of(lk, m.subset), abs=1e-8)
        assert len(set(m.subset)) == 3


def test_mcr_smd_path(rng):
    # force the stochastic solver on a small instance
    lk = gaussian_instance(10, rng, sigma=0.5)
    m = mcr_mode(lk, 4, SmdConfig(exact_limit=0, seed=3))
    assert m.log_det >= exhaustive_mode(lk, 4).log_det - 4


def test_mcr_deterministic(rng):
    lk = gaussian_instance(30, rng, sigma=0.3)
    cfg = SmdConfig(exact_limit=0, seed=9)
    assert mcr_mode(lk, 5, cfg) == mcr_mode(lk, 5, cfg)


def test_first_order_optimality_at_relaxation(rng):
    for _ in range(10):
        lk = random_psd(7, rng, jitter=0.05)
        pt = solve_relaxation(lk, 3)
        grad = dpp_marginals(lk, 3, pt.v) / pt.v
        support = pt.v > 1e-6
        i = int(np.argmax(pt.v))
        assert grad[i] == pytest.approx(grad[support].max(), rel=1e-3)


def test_mode_ignores_alpha(rng):
    lk = random_psd(7, rng)
    best = exhaustive_mode(lk, 3).subset
    for alpha in (0.3, 1.0, 4.0):
        pmf = brute_force_pmf(DppDistribution(lk, 3, alpha))
        assert max(pmf, key=pmf.get) == best


def test_exhaustive_mode_oracle(rng):
    lk = random_psd(7, rng)
    dets = enumerate_dets(lk, 3)
    assert exhaustive_mode(lk, 3).subset == max(dets, key=dets.get)
