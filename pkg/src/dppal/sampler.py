"""Sampling from (exponentiated) k-DPPs.

Three routes: exhaustive enumeration (``brute_force_pmf``, a test oracle for
small ground sets), exact spectral sampling for ``alpha == 1`` and a
Metropolis swap chain for any ``alpha >= 0``.

Subsets are represented as sorted tuples of ints.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from dppal import _chain, _exact
from dppal._linalg import as_matrix, log_elementary_symmetric, logdet_psd, submatrix
from dppal.errors import (
    CapacityError,
    DegenerateDistributionError,
    InitializationError,
    ParameterError,
    RankDeficiencyError,
    UnsupportedExponentError,
)

MAX_ENUMERATION = 10**6
INIT_MODES = ("greedy-mode", "uniform-random")


@dataclass(frozen=True)
class DppDistribution:
    """k-DPP with P(A) proportional to det(L_A)^alpha over |A| = k."""

    kernel: object
    k: int
    alpha: float = 1.0

    def __post_init__(self):
        lk = self.matrix
        if lk.ndim != 2 or lk.shape[0] != lk.shape[1]:
            raise ParameterError("kernel must be a square matrix")
        if not 0 <= self.k <= lk.shape[0]:
            raise ParameterError(f"k={self.k} outside [0, {lk.shape[0]}]")
        if self.alpha < 0:
            raise ParameterError("alpha must be nonnegative")

    @property
    def matrix(self):
        return as_matrix(self.kernel)

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class McmcConfig:
    n_steps: int
    seed: int = 0
    init: str = "greedy-mode"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError("n_steps must be >= 1")
        if self.init not in INIT_MODES:
            raise ParameterError(f"init must be one of {INIT_MODES}")


def default_mcmc_steps(n, k):
    return 50 * n * k


def log_det_subset(kernel, subset):
    return logdet_psd(submatrix(as_matrix(kernel), list(subset)))


def _all_subsets(n, k):
    total = math.comb(n, k)
    if total > MAX_ENUMERATION:
        raise CapacityError(f"C({n},{k}) = {total} subsets exceeds {MAX_ENUMERATION}")
    return np.array(list(itertools.combinations(range(n), k)), dtype=np.intp).reshape(total, k)


def subset_log_dets(kernel, k):
    """All size-k subsets (rows) and their log det(L_A); -inf for det <= 0."""
    lk = as_matrix(kernel)
    subsets = _all_subsets(lk.shape[0], k)
    if k == 0:
        return subsets, np.zeros(1)
    logdets = np.empty(subsets.shape[0])
    for start in range(0, subsets.shape[0], 50_000):
        idx = subsets[start:start + 50_000]
        blocks = lk[idx[:, :, None], idx[:, None, :]]
        sign, ld = np.linalg.slogdet(blocks)
        ld[sign <= 0] = -np.inf
        logdets[start:start + 50_000] = ld
    return subsets, logdets


def brute_force_pmf(dist):
    """Exact pmf by enumerating every size-k subset (C(N, k) <= 10^6)."""
    subsets, logdets = subset_log_dets(dist.kernel, dist.k)
    if dist.alpha == 0:
        logw = np.zeros_like(logdets)
    else:
        logw = dist.alpha * logdets
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateDistributionError("every size-k subset has zero determinant")
    w = np.exp(logw - top)
    w /= w.sum()
    return {tuple(int(i) for i in s): float(p) for s, p in zip(subsets, w)}


def empirical_pmf(samples):
    counts = Counter(tuple(sorted(int(i) for i in s)) for s in samples)
    total = sum(counts.values())
    return {s: c / total for s, c in counts.items()}


def tv_distance(p, q):
    """Total variation distance between two pmfs given as dicts."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(s, 0.0) - q.get(s, 0.0)) for s in keys)


class _SpectralSampler:
    """Eigendecomposition cached for repeated exact k-DPP draws."""

    def __init__(self, lk, k):
        lam, vecs = np.linalg.eigh(lk)
        scale = max(float(np.max(np.abs(lam))), 1.0)
        lam = np.where(lam > 1e-12 * scale, lam, 0.0)
        if np.count_nonzero(lam) < k:
            raise RankDeficiencyError(f"rank(L) = {np.count_nonzero(lam)} < k = {k}")
        self.lam = lam
        self.vecs = vecs
        self.k = k
        n = lam.shape[0]
        with np.errstate(divide="ignore"):
            loglam = np.log(lam)
        # table[l, m] = log e_l(lam_0 .. lam_{m-1})
        table = np.full((k + 1, n + 1), -np.inf)
        table[0, :] = 0.0
        for m in range(1, n + 1):
            table[1:, m] = np.logaddexp(table[1:, m - 1], table[:-1, m - 1] + loglam[m - 1])
        self.table = table
        self.loglam = loglam

    def draw_many(self, rng, n_draws):
        rows = _exact.spectral_draws(self.vecs, self.loglam, self.table, self.k, n_draws, rng)
        return [tuple(sorted(int(i) for i in row)) for row in rows]

    def draw(self, rng):
        if self.k == 0:
            return ()
        return self.draw_many(rng, 1)[0]


def sample_exact(dist, seed=None, n_samples=None):
    """Exact spectral k-DPP sample(s); only ``alpha == 1`` is supported.

    Returns one subset, or a list of ``n_samples`` subsets sharing one
    eigendecomposition.
    """
    if dist.alpha != 1:
        raise UnsupportedExponentError("exact sampling requires alpha == 1; use sample_mcmc")
    rng = np.random.default_rng(seed)
    sampler = _SpectralSampler(dist.matrix, dist.k)
    if n_samples is None:
        return sampler.draw(rng)
    if dist.k == 0:
        return [()] * n_samples
    return sampler.draw_many(rng, n_samples)


def _uniform_start(lk, k, alpha, rng):
    n = lk.shape[0]
    members = np.sort(rng.choice(n, size=k, replace=False))
    if alpha == 0:
        return members
    rank = np.linalg.matrix_rank(submatrix(lk, members))
    for _ in range(n * k):
        if rank == k:
            return members
        p = rng.integers(k)
        outside = np.setdiff1d(np.arange(n), members)
        trial = members.copy()
        trial[p] = outside[rng.integers(outside.size)]
        r = np.linalg.matrix_rank(submatrix(lk, trial))
        if r > rank:
            members, rank = np.sort(trial), r
    if rank == k:
        return members
    raise InitializationError(f"no positive-determinant start found in {n * k} swaps")


def initial_state(lk, k, alpha, init, rng):
    if init == "greedy-mode":
        from dppal.mode import greedy_mode

        try:
            return np.array(greedy_mode(lk, k).subset, dtype=np.int64)
        except RankDeficiencyError:
            if alpha > 0:
                raise InitializationError("greedy start failed: rank(L) < k") from None
    return np.asarray(_uniform_start(lk, k, alpha, rng), dtype=np.int64)


def _chain_inputs(dist, cfg):
    lk = np.ascontiguousarray(dist.matrix)
    n, k = lk.shape[0], dist.k
    rng = np.random.default_rng(cfg.seed)
    members = initial_state(lk, k, dist.alpha, cfg.init, rng)
    outside = np.setdiff1d(np.arange(n), members).astype(np.int64)
    return lk, members, outside, rng


def sample_mcmc(dist, cfg):
    """State of the Metropolis swap chain after ``cfg.n_steps`` moves.

    Each move drops a uniformly chosen member, proposes a uniformly chosen
    non-member and accepts with probability min(1, det ratio ** alpha).
    """
    n, k = dist.n, dist.k
    if k == 0 or k == n:
        return tuple(range(n)) if k == n else ()
    lk, members, outside, rng = _chain_inputs(dist, cfg)
    _chain.swap_chain(lk, members, outside, float(dist.alpha), cfg.n_steps, rng)
    return tuple(sorted(int(i) for i in members))


def sample_mcmc_many(dist, cfg, n_samples):
    """``n_samples`` independent chains of ``cfg.n_steps`` moves from one start."""
    n, k = dist.n, dist.k
    if k == 0 or k == n:
        return [tuple(range(n)) if k == n else ()] * n_samples
    lk, members, outside, rng = _chain_inputs(dist, cfg)
    states = _chain.swap_chains(lk, members, outside, float(dist.alpha), n_samples, cfg.n_steps, rng)
    return [tuple(sorted(int(i) for i in row)) for row in states]


def log_elementary(kernel, k):
    """log e_k of the kernel's eigenvalues (log of the k-DPP normaliser)."""
    lam = np.linalg.eigvalsh(as_matrix(kernel))
    return float(log_elementary_symmetric(lam, k)[k])
