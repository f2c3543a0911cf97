"""Batch-selection policies for pool-based active learning.

Every selector returns a tuple of k distinct global indices that are not yet
in ``state.selected``. DPP selectors build the Gaussian similarity over the
whole pool and condition it on the already selected items, so a new batch is
repelled by earlier batches as well as internally diverse.

Scores are applied after conditioning. With L = D S D and D diagonal and
positive on the conditioning set B, the Schur complement of L on B equals
D_U (S / S_B) D_U, so both orders give the same kernel; conditioning S
first also keeps B well posed when some selected item has a zero score.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from dppal.errors import (
    BudgetError,
    ConditioningFallbackWarning,
    InputError,
    ParameterError,
    SingularConditioningError,
)
from dppal.kernel import (
    KernelMatrix,
    build_kernel,
    condition_kernel,
    default_sigma,
    gaussian_similarity,
)
from dppal.mode import greedy_mode
from dppal.sampler import DppDistribution, McmcConfig, default_mcmc_steps, sample_mcmc

log = logging.getLogger(__name__)

KINDS = ("uniform", "passive-dpp", "passive-dpp-mode", "eps-greedy", "active-dpp", "active-dpp-mode")
ACTIVE_KINDS = ("eps-greedy", "active-dpp", "active-dpp-mode")


@dataclass(frozen=True)
class PoolState:
    """Pool features plus every index chosen so far, in selection order."""

    features: np.ndarray = field(repr=False)
    selected: tuple = ()
    labels: tuple = ()  # revealed labels, aligned with ``selected``

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise InputError("pool features must be 2-D")
        sel = tuple(int(i) for i in self.selected)
        if len(set(sel)) != len(sel):
            raise InputError("selected indices must be unique")
        if sel and (min(sel) < 0 or max(sel) >= x.shape[0]):
            raise InputError("selected index out of range")
        if len(self.labels) > len(sel):
            raise InputError("more labels than selected items")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "selected", sel)
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def unselected(self):
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.selected)] = False
        return np.flatnonzero(mask)

    def with_batch(self, batch, labels=()):
        return PoolState(self.features, self.selected + tuple(batch), self.labels + tuple(labels))


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "uniform"
    alpha: float = 1.0
    gamma: float = 0.0
    sigma: float | None = None  # None: default_sigma(k, d)
    epsilon: float = 1.0 / 3.0
    mcmc_steps: int | None = None  # None: 50 N k over the current pool
    condition: bool = True  # condition DPP kernels on earlier picks

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"strategy kind must be one of {KINDS}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ParameterError("epsilon must lie in [0, 1]")
        if self.alpha < 0 or self.gamma < 0:
            raise ParameterError("alpha and gamma must be nonnegative")
        if self.sigma is not None and not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.mcmc_steps is not None and self.mcmc_steps < 1:
            raise ParameterError("mcmc_steps must be >= 1")

    @property
    def is_active(self):
        return self.kind in ACTIVE_KINDS


def split_counts(k, epsilon):
    """(exploit, explore) sizes: ceil((1 - eps) k) and the remainder."""
    # round first so that e.g. (2/3) * 15 = 10.000000000000002 stays 10
    exploit = math.ceil(round((1.0 - epsilon) * k, 9))
    exploit = min(max(exploit, 0), k)
    return exploit, k - exploit


def _check_budget(state, k):
    if k < 1:
        raise ParameterError("batch size must be >= 1")
    free = state.n - len(state.selected)
    if free < k:
        raise BudgetError(f"only {free} unselected items left for a batch of {k}")


def _rng(seed):
    return np.random.default_rng(seed)


def select_uniform(state, k, seed=None):
    _check_budget(state, k)
    pool = state.unselected
    return tuple(int(i) for i in _rng(seed).choice(pool, size=k, replace=False))


def _fallback(reason):
    msg = f"conditioning on earlier picks dropped: {reason}"
    log.warning(msg)
    warnings.warn(msg, ConditioningFallbackWarning, stacklevel=3)


def pool_similarity(state, sigma, condition=True):
    """Similarity over the unselected items, conditioned on the selected ones.

    Returns (kernel, pool) where row r of the kernel is global item pool[r].
    """
    s = gaussian_similarity(state.features, sigma)
    pool = state.unselected
    if condition and state.selected:
        try:
            cond, rest = condition_kernel(s, state.selected)
            return cond, rest
        except SingularConditioningError as exc:
            _fallback(str(exc))
    sub = s.entries[np.ix_(pool, pool)]
    return KernelMatrix(sub, 1.0, 0.0, sigma), pool


def _condition_local(kernel, given):
    """Condition a pool kernel on local rows ``given``; drop them on failure."""
    try:
        return condition_kernel(kernel, given)
    except SingularConditioningError as exc:
        _fallback(str(exc))
        keep = np.setdiff1d(np.arange(kernel.entries.shape[0]), given)
        return KernelMatrix(kernel.entries[np.ix_(keep, keep)], kernel.alpha, kernel.gamma,
                            kernel.sigma), keep


def _draw(kernel, k, alpha, mode_flag, seed, mcmc_steps):
    """k local indices: greedy mode (pick order) or an MCMC draw at exponent alpha."""
    if k == 0:
        return ()
    if mode_flag:
        return greedy_mode(kernel, k).order
    n = kernel.entries.shape[0]
    steps = mcmc_steps if mcmc_steps is not None else default_mcmc_steps(n, k)
    return sample_mcmc(DppDistribution(kernel, k, alpha), McmcConfig(steps, seed))


def _sigma(cfg, state, k):
    return cfg.sigma if cfg.sigma is not None else default_sigma(max(k, 2), state.features.shape[1])


def select_passive_dpp(state, k, cfg, mode_flag=False, seed=None):
    """Diversity-only batch: unit scores, conditioned on earlier picks."""
    _check_budget(state, k)
    s, pool = pool_similarity(state, _sigma(cfg, state, k), cfg.condition)
    local = _draw(s, k, cfg.alpha, mode_flag, seed, cfg.mcmc_steps)
    return tuple(int(pool[i]) for i in local)


def _pool_scores(q, state):
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape[0] != state.n:
        raise InputError(f"{q.shape[0]} uncertainty scores for a pool of {state.n}")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise InputError("uncertainty scores must be finite and nonnegative")
    return q


def select_eps_greedy(state, k, epsilon, q, seed=None):
    """Top-ceil((1-eps)k) by uncertainty (ties to the lowest index), rest uniform."""
    _check_budget(state, k)
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError("epsilon must lie in [0, 1]")
    q = _pool_scores(q, state)
    exploit, explore = split_counts(k, epsilon)
    pool = state.unselected
    order = pool[np.argsort(-q[pool], kind="stable")]
    top = order[:exploit]
    rest = order[exploit:]
    extra = _rng(seed).choice(rest, size=explore, replace=False) if explore else []
    return tuple(int(i) for i in top) + tuple(int(i) for i in extra)


def select_active_dpp(state, k, cfg, q, mode_flag=False, seed=None):
    """Uncertainty DPP for the exploit share, exploration DPP for the rest.

    The exploration draw is conditioned on the exploit batch from the same
    round as well as on earlier rounds.
    """
    _check_budget(state, k)
    q = _pool_scores(q, state)
    exploit, explore = split_counts(k, cfg.epsilon)
    s, pool = pool_similarity(state, _sigma(cfg, state, k), cfg.condition)
    ss = np.random.SeedSequence(seed).spawn(2) if seed is not None else (None, None)
    seeds = [None if c is None else int(c.generate_state(1)[0]) for c in ss]
    lu = build_kernel(s, q[pool], cfg.alpha, cfg.gamma)
    first = tuple(_draw(lu, exploit, cfg.alpha, mode_flag, seeds[0], cfg.mcmc_steps))
    batch = [int(pool[i]) for i in first]
    if explore:
        if first:
            s2, keep = _condition_local(s, list(first))
        else:
            s2, keep = s, np.arange(pool.size)
        second = _draw(s2, explore, cfg.alpha, mode_flag, seeds[1], cfg.mcmc_steps)
        batch += [int(pool[keep[i]]) for i in second]
    return tuple(batch)


def select_batch(state, k, cfg, q=None, seed=None):
    """Dispatch on ``cfg.kind``; active kinds fall back to uniform scores when q is None."""
    if cfg.kind == "uniform":
        return select_uniform(state, k, seed)
    if cfg.kind in ("passive-dpp", "passive-dpp-mode"):
        return select_passive_dpp(state, k, cfg, cfg.kind.endswith("mode"), seed)
    if q is None:
        q = np.ones(state.n)
    if cfg.kind == "eps-greedy":
        return select_eps_greedy(state, k, cfg.epsilon, q, seed)
    return select_active_dpp(state, k, cfg, q, cfg.kind.endswith("mode"), seed)
