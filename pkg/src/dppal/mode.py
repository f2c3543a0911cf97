"""Approximate k-DPP mode finding.

Greedy volume maximisation, the concave relaxation max log g(v) s.t.
sum(v) = k (solved exactly for small ground sets and by stochastic mirror
ascent otherwise) and maximum coordinate rounding of that relaxation.

``g(v) = sum_{|A|=k} det(L_A) prod_{i in A} v_i`` is evaluated exactly as
the k-th elementary symmetric polynomial of the eigenvalues of
``diag(sqrt(v)) L diag(sqrt(v))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from dppal import _chain
from dppal._linalg import as_matrix, log_elementary_symmetric, logdet_psd, submatrix
from dppal.errors import (
    DegenerateDistributionError,
    DivergenceError,
    InputError,
    ParameterError,
    RankDeficiencyError,
)
from dppal.kernel import condition_kernel

EXACT_RELAXATION_LIMIT = 10**5
GRAD_VARIANTS = ("indicator", "transition")


@dataclass(frozen=True)
class ModeResult:
    subset: tuple
    log_det: float
    algorithm: str
    iterations: int = 0
    order: tuple = ()  # pick order, greedy only


@dataclass(frozen=True)
class RelaxationPoint:
    v: np.ndarray = field(repr=False)
    k: int
    log_g: float
    iterations: int = 0
    method: str = "exact"
    last: np.ndarray = field(default=None, repr=False)  # final SMD iterate


@dataclass(frozen=True)
class SmdConfig:
    """Settings for the stochastic mirror ascent used inside ``mcr_mode``.

    ``iters_per_item`` gives the per-level budget as
    ``ceil(iters_per_item * N / k)`` iterations. Rounding only needs the
    largest coordinate, so the defaults run a single chain with a constant
    step, which is much cheaper than the ``smd_relaxation`` defaults.
    """

    eta: float = 0.1
    iters_per_item: float = 200.0
    warmup: int = 50
    grad_variant: str = "transition"
    n_checkpoints: int = 10
    seed: int = 0
    exact_limit: int = EXACT_RELAXATION_LIMIT
    warm_start: bool = False
    n_chains: int = 1
    inner_steps: int = 1
    decay: float = 0.0
    all_slots: bool = False


def _check_v(v, n):
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != n:
        raise InputError(f"v has length {v.shape[0]}, kernel has {n} items")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise InputError("v must be finite and nonnegative")
    return v


def _weighted(lk, v):
    r = np.sqrt(v)
    return r[:, None] * lk * r[None, :]


def generating_polynomial(kernel, k, v):
    """log g(v); ``-inf`` when g vanishes."""
    lk = as_matrix(kernel)
    v = _check_v(v, lk.shape[0])
    if not 0 <= k <= lk.shape[0]:
        raise ParameterError(f"k={k} outside [0, {lk.shape[0]}]")
    lam = np.linalg.eigvalsh(_weighted(lk, v))
    # rounding noise on a rank-deficient kernel must not give g > 0
    scale = max(float(np.max(np.abs(lam))), 1.0) if lam.size else 1.0
    lam = np.where(lam > 1e-12 * scale, lam, 0.0)
    return float(log_elementary_symmetric(lam, k)[k])


def _clip_spectrum(lam):
    scale = max(float(np.max(np.abs(lam))), 1.0) if lam.size else 1.0
    return np.where(lam > 1e-13 * scale, lam, 0.0)


def _leave_one_out(lam, k):
    """log e_k(lam) and, for each m, log e_{k-1} of lam without lam_m."""
    n = lam.shape[0]
    with np.errstate(divide="ignore"):
        loglam = np.log(lam)
    pre = np.full((n + 1, k + 1), -np.inf)
    suf = np.full((n + 1, k + 1), -np.inf)
    pre[0, 0] = 0.0
    suf[n, 0] = 0.0
    for m in range(n):
        pre[m + 1] = pre[m]
        pre[m + 1, 1:] = np.logaddexp(pre[m, 1:], pre[m, :-1] + loglam[m])
        r = n - 1 - m
        suf[r] = suf[r + 1]
        suf[r, 1:] = np.logaddexp(suf[r + 1, 1:], suf[r + 1, :-1] + loglam[r])
    log_ek = pre[n, k]
    if not np.isfinite(log_ek):
        raise DegenerateDistributionError("g(v) = 0: no size-k subset has positive weight")
    j = np.arange(k)
    return log_ek, logsumexp(pre[:n, j] + suf[1:, k - 1 - j], axis=1)


def _spectral_marginals(lk, k, v):
    lam, vecs = np.linalg.eigh(_weighted(lk, v))
    lam = _clip_spectrum(lam)
    log_ek, leave_out = _leave_one_out(lam, k)
    with np.errstate(divide="ignore"):
        incl = np.exp(np.log(lam) + leave_out - log_ek)
    p = (vecs * vecs) @ incl
    p = np.clip(p, 0.0, 1.0)
    p[v == 0] = 0.0
    return p


class _Factored:
    """log g and marginals through L = B B^T with B of numerical rank r.

    diag(sqrt v) L diag(sqrt v) shares its nonzero spectrum with the r x r
    matrix B^T diag(v) B = W diag(lam) W^T, and p_i = v_i sum_m (B W)_im^2
    e_{k-1}(lam without m) / e_k(lam). Costs O(n r^2) per call instead of
    O(n^3); Gaussian kernels on low-dimensional points have r << n.
    """

    def __init__(self, lk, k):
        mu, q = np.linalg.eigh(lk)
        keep = mu > 1e-13 * max(float(mu[-1]), 1.0)
        self.b = q[:, keep] * np.sqrt(mu[keep])
        self.k = k

    def log_g(self, v):
        lam, w = np.linalg.eigh(self.b.T @ (v[:, None] * self.b))
        self._last = (v, _clip_spectrum(lam), w)
        return float(log_elementary_symmetric(self._last[1], self.k)[self.k])

    def marginals(self, v):
        if self._last[0] is not v:
            self.log_g(v)
        _, lam, w = self._last
        log_ek, leave_out = _leave_one_out(lam, self.k)
        weight = np.where(lam > 0, np.exp(leave_out - log_ek), 0.0)
        p = v * (np.square(self.b @ w) @ weight)
        return np.clip(p, 0.0, 1.0)


def _enumerated_marginals(lk, k, v):
    from dppal.sampler import subset_log_dets

    subsets, logdets = subset_log_dets(lk, k)
    with np.errstate(divide="ignore"):
        logw = logdets + np.log(v)[subsets].sum(axis=1)
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateDistributionError("g(v) = 0: no size-k subset has positive weight")
    w = np.exp(logw - top)
    w /= w.sum()
    p = np.zeros(lk.shape[0])
    np.add.at(p, subsets.ravel(), np.repeat(w, k))
    return p


def _mcmc_marginals(lk, k, v, n_steps, seed):
    rng = np.random.default_rng(seed)
    members = np.array(greedy_mode(_weighted(lk, v), k).subset, dtype=np.int64)
    n = lk.shape[0]
    burn = 20 * n
    lw = np.ascontiguousarray(lk)
    counts = np.zeros(n)
    slots = rng.integers(0, k, size=burn + n_steps)
    unif = rng.random(burn + n_steps)
    for t in range(burn + n_steps):
        _chain.heat_bath_step(lw, v, members, slots[t], unif[t])
        if t >= burn:
            counts[members] += 1
    return counts / n_steps


def dpp_marginals(kernel, k, v, method="exact", n_steps=None, seed=0):
    """Inclusion probabilities p_i = P(i in A) with P(A) ~ det(L_A) prod v_i.

    ``method``: ``"exact"`` (spectral formula, any N), ``"enumerate"``
    (exhaustive, C(N, k) <= 10^6) or ``"mcmc"`` (indicator averages of the
    drop-and-add chain).
    """
    lk = as_matrix(kernel)
    v = _check_v(v, lk.shape[0])
    if k == 0:
        return np.zeros(lk.shape[0])
    if method == "exact":
        return _spectral_marginals(lk, k, v)
    if method == "enumerate":
        return _enumerated_marginals(lk, k, v)
    if method == "mcmc":
        steps = n_steps if n_steps is not None else 2000 * lk.shape[0]
        return _mcmc_marginals(lk, k, v, steps, seed)
    raise ParameterError(f"unknown marginal method {method!r}")


def greedy_mode(kernel, k):
    """Add, k times, the item with the largest Schur-complement gain.

    Implemented with an incremental Cholesky factor so the whole search is
    O(N k^2). Ties go to the lowest index.
    """
    lk = as_matrix(kernel)
    n = lk.shape[0]
    if not 0 <= k <= n:
        raise ParameterError(f"k={k} outside [0, {n}]")
    gains = np.diag(lk).astype(np.float64).copy()
    tol = 1e-12 * max(float(gains.max(initial=0.0)), np.finfo(float).tiny)
    factors = np.zeros((k, n))
    chosen = []
    for m in range(k):
        masked = gains.copy()
        masked[chosen] = -np.inf
        j = int(np.argmax(masked))
        if not masked[j] > tol:
            raise RankDeficiencyError(
                f"greedy gains vanished after {m} of {k} items; rank(L) < k"
            )
        chosen.append(j)
        if m + 1 == k:
            break
        e = (lk[j] - factors[:m, j] @ factors[:m]) / math.sqrt(gains[j])
        factors[m] = e
        gains = gains - e * e
    subset = tuple(sorted(chosen))
    return ModeResult(subset, log_det_of(lk, subset), "greedy", k, tuple(chosen))


def log_det_of(kernel, subset):
    return logdet_psd(submatrix(as_matrix(kernel), list(subset)))


def transition_gradient(kernel, k, v, subset, seed=None):
    """Stochastic gradient from one drop-and-add transition.

    Drops a uniformly chosen member of ``subset`` and returns k times the
    probabilities of adding each item back.
    """
    lk = np.ascontiguousarray(as_matrix(kernel))
    v = _check_v(v, lk.shape[0])
    members = np.array(sorted(subset), dtype=np.int64)
    if members.shape[0] != k:
        raise InputError(f"subset has {members.shape[0]} items, expected {k}")
    rng = np.random.default_rng(seed)
    probs = _chain.heat_bath_step(lk, v, members.copy(), int(rng.integers(k)), rng.random())
    if not np.all(np.isfinite(probs)):
        raise DegenerateDistributionError("subset has zero probability under v")
    return k * probs


def solve_relaxation(kernel, k, tol=1e-10, max_iter=5000, init=None):
    """Deterministic maximiser of log g over {v >= 0, sum v = k}.

    Multiplicative ascent v <- v * (grad log g)^rho, renormalised. With
    rho = 1 this is v <- p(v), which never decreases log g for a homogeneous
    polynomial with nonnegative coefficients; larger rho is tried first and
    kept only while it improves the objective.
    """
    lk = as_matrix(kernel)
    n = lk.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} outside [1, {n}]")
    v = np.full(n, k / n) if init is None else _check_v(init, n) * (k / np.sum(init))
    fac = _Factored(lk, k)
    f = fac.log_g(v)
    if not np.isfinite(f):
        raise RankDeficiencyError("g vanishes on the simplex interior: rank(L) < k")
    rho = 4.0
    it = 0
    for it in range(1, max_iter + 1):
        p = fac.marginals(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.log(v)
            logratio = np.where(v > 0, np.log(p) - logv, -np.inf)
        while True:
            # log space: large rho overflows ratio ** rho directly
            with np.errstate(invalid="ignore"):
                logt = np.where(v > 0, logv + rho * logratio, -np.inf)
            trial = np.exp(logt - np.max(logt))
            trial *= k / trial.sum()
            f_trial = fac.log_g(trial)
            if f_trial >= f or rho == 1.0:
                break
            rho = max(1.0, rho / 2)
        gain = f_trial - f
        v, f = trial, f_trial
        if rho < 64:
            rho *= 1.25
        if gain < tol and np.max(np.abs(p - v)) < 1e-7:
            break
    return RelaxationPoint(v, k, generating_polynomial(lk, k, v), it, "exact")


def smd_relaxation(kernel, k, eta=0.1, n_iters=None, seed=0, grad_variant="transition",
                   warmup=50, n_checkpoints=10, init=None, n_chains=16, inner_steps=2,
                   decay=50.0, all_slots=True):
    """Stochastic mirror ascent on log g with the negative-entropy mirror map.

    Each iteration advances ``n_chains`` drop-and-add chains targeting
    P(A) ~ prod v_i det(L_A) by ``inner_steps`` moves each, forms
    u = v + eta_t * X and projects back with v = k u / sum(u). ``X`` is the
    chain-averaged indicator of the states (``"indicator"``) or k times the
    add probabilities (``"transition"``, used after ``warmup`` indicator
    iterations). ``all_slots`` averages the transition vector over every
    drop slot. The step is eta for the first half of the run and
    eta * decay / (decay + t - n_iters // 2) after it; ``decay=0`` keeps it
    constant throughout.

    Constant-step ascent with one chain keeps fluctuating at the scale of
    eta around the optimum, and decaying from the start stalls along flat
    directions. The defaults converge at a constant step, then damp the
    noise, trading extra chain work for a final iterate that settles.

    The returned ``v`` is the best, by exact log g, among evenly spaced
    checkpoints, the final iterate and the average of the second half of
    the iterates; ``last`` is the final iterate itself.
    """
    lk = np.ascontiguousarray(as_matrix(kernel))
    n = lk.shape[0]
    if eta <= 0:
        raise ParameterError("eta must be positive")
    if decay < 0:
        raise ParameterError("decay must be >= 0")
    if n_chains < 1 or inner_steps < 1:
        raise ParameterError("n_chains and inner_steps must be >= 1")
    if grad_variant not in GRAD_VARIANTS:
        raise ParameterError(f"grad_variant must be one of {GRAD_VARIANTS}")
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} outside [1, {n}]")
    if n_iters is None:
        n_iters = math.ceil(200 * n / k)
    if n_iters < 1:
        raise ParameterError("n_iters must be >= 1")
    v0 = np.full(n, k / n) if init is None else _check_v(init, n) * (k / np.sum(init))
    start = np.array(greedy_mode(_weighted(lk, v0), k).subset, dtype=np.int64)
    members = np.tile(start, (n_chains, 1))
    rng = np.random.default_rng(seed)
    slots = rng.integers(0, k, size=(n_iters, n_chains, inner_steps))
    uniforms = rng.random((n_iters, n_chains, inner_steps))
    eval_every = max(1, n_iters // max(1, n_checkpoints))
    ckpts, v_last, v_avg, status = _chain.smd_loop(
        lk, k, v0, members, float(eta), float(decay), n_iters // 2, n_iters, warmup,
        grad_variant == "transition", bool(all_slots), slots, uniforms, eval_every,
        n_iters // 2,
    )
    if status >= 0:
        raise DivergenceError(status)
    best_v, best_f = None, -np.inf
    for cand in [*ckpts, v_last, v_avg]:
        if not np.all(np.isfinite(cand)) or cand.sum() <= 0:
            continue
        cand = cand * (k / cand.sum())
        f = generating_polynomial(lk, k, cand)
        if f > best_f:
            best_v, best_f = cand, f
    if best_v is None:
        raise DivergenceError(n_iters)
    return RelaxationPoint(best_v, k, best_f, n_iters, "smd", v_last)


def _solve_level(lk, k, cfg, seed, init):
    if math.comb(lk.shape[0], k) <= cfg.exact_limit:
        return solve_relaxation(lk, k, init=init)
    return smd_relaxation(
        lk, k, eta=cfg.eta, n_iters=math.ceil(cfg.iters_per_item * lk.shape[0] / k),
        seed=seed, grad_variant=cfg.grad_variant, warmup=cfg.warmup,
        n_checkpoints=cfg.n_checkpoints, init=init, n_chains=cfg.n_chains,
        inner_steps=cfg.inner_steps, decay=cfg.decay, all_slots=cfg.all_slots,
    )


def mcr_mode(kernel, k, config=None):
    """Maximum coordinate rounding of the relaxation.

    Solve the relaxation, take the item with the largest coordinate (lowest
    index on ties), condition the DPP on it and repeat with k - 1. With one
    item left the relaxation is linear and its maximiser is the largest
    diagonal entry of the conditioned kernel.
    """
    cfg = config or SmdConfig()
    lk = as_matrix(kernel)
    n = lk.shape[0]
    if not 0 <= k <= n:
        raise ParameterError(f"k={k} outside [0, {n}]")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(max(k, 1), dtype=np.uint64)
    current = lk
    index = np.arange(n)
    chosen = []
    iterations = 0
    warm = None
    for level in range(k):
        remaining = k - level
        if remaining == 1:
            i = int(np.argmax(np.diag(current)))
        else:
            point = _solve_level(current, remaining, cfg, int(seeds[level]), warm)
            iterations += point.iterations
            i = int(np.argmax(point.v))
            if cfg.warm_start:
                warm = np.delete(point.v, i)
                warm = np.maximum(warm, 1e-12)
        if not current[i, i] > 0:
            raise RankDeficiencyError(f"conditioned kernel vanished with {remaining} items left")
        chosen.append(int(index[i]))
        if remaining > 1:
            conditioned, rest = condition_kernel(current, [i])
            current = np.asarray(conditioned.entries)
            index = index[rest]
    subset = tuple(sorted(chosen))
    return ModeResult(subset, log_det_of(lk, subset), "mcr", iterations)


def exhaustive_mode(kernel, k):
    """Exact mode by enumeration (test oracle; C(N, k) <= 10^6)."""
    from dppal.sampler import subset_log_dets

    subsets, logdets = subset_log_dets(kernel, k)
    best = int(np.argmax(logdets))
    return ModeResult(tuple(int(i) for i in subsets[best]), float(logdets[best]), "exhaustive",
                      len(logdets))
