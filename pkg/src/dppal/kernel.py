"""Similarity and L-ensemble kernel construction.

All kernels are plain symmetric matrices wrapped in small frozen records that
carry the hyperparameters they were built with. PSD-ness is not checked at
construction time (an eigen-decomposition is O(N^3)); call ``check_psd``
explicitly when it matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg as sla
from scipy.spatial.distance import cdist

from dppal._linalg import as_matrix
from dppal.errors import InputError, ParameterError, SingularConditioningError

PSD_SLACK = 1e-8
SIGMA_TRIALS = 10_000
SIGMA_SEED = 1906
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SimilarityMatrix:
    entries: np.ndarray = field(repr=False)
    sigma: float | None = None

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def n(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class KernelMatrix:
    entries: np.ndarray = field(repr=False)
    alpha: float = 1.0
    gamma: float = 0.0
    sigma: float | None = None

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def n(self):
        return self.entries.shape[0]


def check_psd(matrix, slack=PSD_SLACK):
    """True when the smallest eigenvalue is at least ``-slack``."""
    a = as_matrix(matrix)
    if a.size == 0:
        return True
    return bool(np.linalg.eigvalsh(a).min() >= -slack)


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def gaussian_similarity(features, sigma):
    """S_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)) with Euclidean distance."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InputError(f"features must be an N x d matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("features contain non-finite values")
    if not np.isfinite(sigma) or sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    d2 = cdist(x, x, "sqeuclidean")
    s = np.exp(-d2 / (2.0 * sigma * sigma))
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return SimilarityMatrix(_frozen(s), float(sigma))


def feature_similarity(phi):
    """S = Phi Phi^T after normalising every row of ``phi`` to unit length."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or not np.all(np.isfinite(phi)):
        raise InputError("similarity features must be a finite N x m matrix")
    norms = np.linalg.norm(phi, axis=1)
    if np.any(norms == 0):
        raise InputError("zero similarity feature vector cannot be normalised")
    phi = phi / norms[:, None]
    s = phi @ phi.T
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return SimilarityMatrix(_frozen(s))


@lru_cache(maxsize=64)
def _default_sigma(k, d, n_trials, seed):
    rng = np.random.default_rng(seed)
    total = 0.0
    chunk = 2_000
    done = 0
    while done < n_trials:
        m = min(chunk, n_trials - done)
        pts = rng.random((m, k, d))
        diff = pts[:, :, None, :] - pts[:, None, :, :]
        dist = np.sqrt(np.einsum("mijd,mijd->mij", diff, diff))
        dist[:, np.arange(k), np.arange(k)] = np.inf
        total += dist.min(axis=(1, 2)).sum()
        done += m
    return total / n_trials


def default_sigma(k, d, n_trials=SIGMA_TRIALS, seed=SIGMA_SEED):
    """Bandwidth heuristic: expected nearest-pair distance of k uniform points.

    Monte-Carlo estimate over ``n_trials`` draws of k points in [0, 1]^d with a
    fixed seed, so the value is reproducible across runs.
    """
    k, d = int(k), int(d)
    if k < 2:
        raise ParameterError("default_sigma needs k >= 2 (nearest neighbour undefined)")
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    return float(_default_sigma(k, d, int(n_trials), int(seed)))


def build_kernel(similarity, scores, alpha=1.0, gamma=0.0):
    """L_ij = q_i^(gamma/alpha) S_ij q_j^(gamma/alpha).

    With ``alpha == 0`` the exponent is undefined and every score is taken
    as 1, so L = S.
    """
    s = as_matrix(similarity)
    q = np.asarray(scores, dtype=np.float64).ravel()
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InputError("similarity must be square")
    if q.shape[0] != s.shape[0]:
        raise InputError(f"{q.shape[0]} scores for a {s.shape[0]}-item kernel")
    if not np.all(np.isfinite(q)):
        raise InputError("scores must be finite")
    if np.any(q < 0):
        raise InputError("scores must be nonnegative")
    if alpha < 0 or gamma < 0:
        raise ParameterError("alpha and gamma must be nonnegative")
    sigma = getattr(similarity, "sigma", None)
    if alpha == 0:
        return KernelMatrix(_frozen(s), float(alpha), float(gamma), sigma)
    w = q ** (gamma / alpha)
    lk = w[:, None] * s * w[None, :]
    lk = 0.5 * (lk + lk.T)
    return KernelMatrix(_frozen(lk), float(alpha), float(gamma), sigma)


def condition_kernel(kernel, given):
    """Kernel of the DPP conditioned on containing every index in ``given``.

    Returns ``(conditioned, remaining)`` where ``remaining`` maps rows of the
    conditioned kernel back to indices of ``kernel``. The transform
    ``((L + I_rest)^-1 restricted to rest)^-1 - I`` is evaluated through its
    closed form, the Schur complement ``L_rest - L_rest,B L_B^-1 L_B,rest``.
    """
    a = as_matrix(kernel)
    n = a.shape[0]
    b = np.unique(np.asarray(list(given), dtype=np.intp))
    if b.size and (b[0] < 0 or b[-1] >= n):
        raise InputError("conditioning index out of range")
    mask = np.ones(n, dtype=bool)
    mask[b] = False
    rest = np.flatnonzero(mask)
    meta = dict(
        alpha=getattr(kernel, "alpha", 1.0),
        gamma=getattr(kernel, "gamma", 0.0),
        sigma=getattr(kernel, "sigma", None),
    )
    if b.size == 0:
        return KernelMatrix(_frozen(a), **meta), rest
    lb = a[np.ix_(b, b)]
    w = np.linalg.eigvalsh(lb)
    if w[0] <= 0 or w[-1] / w[0] > CONDITION_LIMIT:
        raise SingularConditioningError(
            f"conditioning set has (near) zero probability: cond(L_B) = "
            f"{np.inf if w[0] <= 0 else w[-1] / w[0]:.3g}"
        )
    cross = a[np.ix_(b, rest)]
    c = sla.cho_factor(lb, lower=True, check_finite=False)
    schur = a[np.ix_(rest, rest)] - cross.T @ sla.cho_solve(c, cross, check_finite=False)
    schur = 0.5 * (schur + schur.T)
    return KernelMatrix(_frozen(schur), **meta), rest


def condition_kernel_by_inverse(kernel, given):
    """Literal two-inverse form of the conditioning transform (reference path)."""
    a = as_matrix(kernel)
    n = a.shape[0]
    b = np.unique(np.asarray(list(given), dtype=np.intp))
    mask = np.ones(n, dtype=bool)
    mask[b] = False
    rest = np.flatnonzero(mask)
    shifted = a + np.diag(mask.astype(np.float64))
    if np.linalg.cond(shifted) > CONDITION_LIMIT:
        raise SingularConditioningError("L + I_rest is numerically singular")
    inner = np.linalg.inv(shifted)[np.ix_(rest, rest)]
    out = np.linalg.inv(inner) - np.eye(rest.size)
    return 0.5 * (out + out.T), rest
