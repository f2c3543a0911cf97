import itertools

import numpy as np
import pytest


def random_psd(n, rng, rank=None, jitter=0.0):
    r = n if rank is None else rank
    x = rng.normal(size=(n, r))
    return x @ x.T / r + jitter * np.eye(n)


def gaussian_instance(n, rng, sigma=1.0, d=2):
    x = rng.random((n, d))
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2 * sigma**2))


def enumerate_dets(lk, k):
    """{subset: det} by direct np.linalg.det; the slow reference everyone else is checked against."""
    n = lk.shape[0]
    return {a: float(np.linalg.det(lk[np.ix_(a, a)])) if a else 1.0
            for a in itertools.combinations(range(n), k)}


def pmf_from_dets(dets, alpha=1.0):
    w = {a: max(d, 0.0) ** alpha for a, d in dets.items()}
    z = sum(w.values())
    return {a: v / z for a, v in w.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
