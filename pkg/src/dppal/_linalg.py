import numpy as np
from scipy import linalg as sla


def as_matrix(obj):
    """Return the float64 ndarray behind a kernel-like object."""
    entries = getattr(obj, "entries", obj)
    return np.asarray(entries, dtype=np.float64)


def logdet_psd(a):
    """log det of a symmetric PSD matrix; ``-inf`` when singular.

    Cholesky first, eigenvalues as the fallback for numerically
    semidefinite inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] == 0:
        return 0.0
    try:
        c = sla.cholesky(a, lower=True, check_finite=False)
        d = np.diag(c)
        if np.all(d > 0):
            return float(2.0 * np.sum(np.log(d)))
    except sla.LinAlgError:
        pass
    w = np.linalg.eigvalsh(a)
    scale = max(float(np.max(np.abs(w))), 1.0)
    if np.any(w <= 1e-14 * scale):
        return -np.inf
    return float(np.sum(np.log(w)))


def submatrix(a, idx):
    idx = np.asarray(idx, dtype=np.intp)
    return a[np.ix_(idx, idx)]


def log_elementary_symmetric(lam, k):
    """log e_0..e_k of nonnegative values ``lam``.

    Uses the all-positive recursion e_j(x_1..x_n) = e_j(x_1..x_{n-1}) +
    x_n e_{j-1}(x_1..x_{n-1}), carried in log space.
    """
    lam = np.clip(np.asarray(lam, dtype=np.float64), 0.0, None)
    with np.errstate(divide="ignore"):
        loglam = np.log(lam)
    out = np.full(k + 1, -np.inf)
    out[0] = 0.0
    for ll in loglam:
        if ll == -np.inf:
            continue
        out[1:] = np.logaddexp(out[1:], out[:-1] + ll)
    return out
