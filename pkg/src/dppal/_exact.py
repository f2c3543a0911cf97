"""Compiled spectral k-DPP draws (elementary-DPP selection + projection sampling)."""

import numpy as np
from numba import njit


@njit(cache=True, error_model="numpy")
def _pick(loglam, table, k, rng, chosen):
    remaining = k
    n = loglam.shape[0]
    c = 0
    for m in range(n, 0, -1):
        if remaining == 0:
            break
        if m == remaining:
            for i in range(m - 1, -1, -1):
                chosen[c] = i
                c += 1
            break
        logp = loglam[m - 1] + table[remaining - 1, m - 1] - table[remaining, m]
        if rng.random() < np.exp(min(logp, 0.0)):
            chosen[c] = m - 1
            c += 1
            remaining -= 1


@njit(cache=True, error_model="numpy")
def spectral_draws(vecs, loglam, table, k, n_draws, rng):
    """``n_draws`` k-subsets (rows, unsorted) from the k-DPP with kernel V diag(lam) V^T.

    After the eigenvector pick, items follow the projection DPP with kernel
    K = V_J V_J^T: the next item has probability proportional to the residual
    diagonal K_ii - K_iS K_S^-1 K_Si, tracked with an incremental Cholesky.
    """
    n = vecs.shape[0]
    out = np.empty((n_draws, k), dtype=np.int64)
    chosen = np.empty(k, dtype=np.int64)
    d = np.empty(n)
    e = np.empty((k, n))
    for r in range(n_draws):
        _pick(loglam, table, k, rng, chosen)
        for i in range(n):
            acc = 0.0
            for c in range(k):
                acc += vecs[i, chosen[c]] ** 2
            d[i] = acc
        for t in range(k):
            total = 0.0
            for i in range(n):
                if d[i] > 0.0:
                    total += d[i]
            target = rng.random() * total
            acc = 0.0
            pick = -1
            for i in range(n):
                if d[i] > 0.0:
                    pick = i
                    acc += d[i]
                    if target < acc:
                        break
            out[r, t] = pick
            scale = 1.0 / np.sqrt(d[pick])
            for i in range(n):
                kij = 0.0
                for c in range(k):
                    kij += vecs[i, chosen[c]] * vecs[pick, chosen[c]]
                for s in range(t):
                    kij -= e[s, i] * e[s, pick]
                e[t, i] = kij * scale
            for i in range(n):
                d[i] -= e[t, i] * e[t, i]
            d[pick] = 0.0
    return out
