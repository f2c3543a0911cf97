"""Compiled inner loops for the swap (exchange) Markov chains.

The chains keep the inverse of the current k x k kernel block and update it
in O(k^2) per accepted swap; the inverse is rebuilt from scratch every
``REFRESH`` accepted moves to stop round-off from accumulating.
"""

import functools

import numpy as np
from numba import njit

REFRESH = 256


@njit(cache=True, error_model="numpy")
def _gather(lk, members, j):
    k = members.shape[0]
    u = np.empty(k)
    for a in range(k):
        u[a] = lk[members[a], j]
    return u


@njit(cache=True, error_model="numpy")
def _block_inverse(lk, members):
    k = members.shape[0]
    sub = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            sub[a, b] = lk[members[a], members[b]]
    return np.ascontiguousarray(np.linalg.inv(sub))


@njit(cache=True, error_model="numpy")
def _ratio(lk, members, minv, p, j):
    # no scratch writes here: stores in the proposal path stall the loop
    k = members.shape[0]
    wp = 0.0
    uw = 0.0
    for a in range(k):
        acc = 0.0
        for b in range(k):
            acc += minv[a, b] * lk[j, members[b]]
        uw += lk[j, members[a]] * acc
        if a == p:
            wp = acc
    return wp * wp + minv[p, p] * (lk[j, j] - uw)


@njit(cache=True, error_model="numpy")
def _apply_swap(lk, members, minv, p, j, u, w, ratio):
    """In-place inverse update for replacing slot ``p`` by ``j``.

    With m = M[:, p] and w = M L[A, j], the new inverse is
    M - m m^T / M_pp + c c^T / s off slot p, -c / s on it and 1 / s at (p, p),
    where c = w - (w_p / M_pp) m and s = ratio / M_pp. ``u``/``w`` are
    length-k scratch buffers.
    """
    k = members.shape[0]
    mpp = minv[p, p]
    for a in range(k):
        u[a] = minv[a, p]
    for a in range(k):
        acc = 0.0
        for b in range(k):
            acc += minv[a, b] * lk[j, members[b]]
        w[a] = acc
    shift = w[p] / mpp
    for a in range(k):
        w[a] -= shift * u[a]
    inv_mpp = 1.0 / mpp
    inv_s = mpp / ratio
    for a in range(k):
        ua = u[a] * inv_mpp
        ca = w[a] * inv_s
        for b in range(k):
            minv[a, b] += ca * w[b] - ua * u[b]
    for a in range(k):
        minv[a, p] = -w[a] * inv_s
        minv[p, a] = -w[a] * inv_s
    minv[p, p] = inv_s
    members[p] = j


@njit(cache=True, error_model="numpy")
def swap_ratio(lk, members, minv, p, j):
    """det(L_{A - A[p] + j}) / det(L_A) from the inverse of L_A."""
    return _ratio(lk, members, minv, p, j)


@njit(cache=True, error_model="numpy")
def swap_inverse(lk, members, minv, p, j):
    """Inverse of L over ``members`` with slot ``p`` replaced by ``j``."""
    k = members.shape[0]
    u = np.empty(k)
    w = np.empty(k)
    r = _ratio(lk, members, minv, p, j)
    out = minv.copy()
    _apply_swap(lk, members.copy(), out, p, j, u, w, r)
    return out


@njit(cache=True, error_model="numpy")
def run_chain(lk, members, outside, alpha, n_steps, rng):
    """Metropolis swap chain; mutates ``members``/``outside`` in place.

    Each step draws one uniform to pick (slot, non-member) jointly, and a
    second one for the accept test only when the ratio is below 1.
    Returns the number of accepted moves.
    """
    k = members.shape[0]
    nout = outside.shape[0]
    span = k * nout
    if alpha == 0.0:
        for t in range(n_steps):
            s = int(rng.random() * span)
            p = s // nout
            q = s - p * nout
            tmp = members[p]
            members[p] = outside[q]
            outside[q] = tmp
        return n_steps
    unit = alpha == 1.0
    u = np.empty(k)
    w = np.empty(k)
    minv = _block_inverse(lk, members)
    accepted = 0
    since = 0
    for t in range(n_steps):
        s = int(rng.random() * span)
        p = s // nout
        q = s - p * nout
        j = outside[q]
        r = _ratio(lk, members, minv, p, j)
        if not r > 0.0:
            continue
        if r < 1.0:
            x = rng.random()
            if unit:
                if not x < r:
                    continue
            elif not np.log(x) < alpha * np.log(r):
                continue
        outside[q] = members[p]
        _apply_swap(lk, members, minv, p, j, u, w, r)
        accepted += 1
        since += 1
        if since >= REFRESH:
            minv[:, :] = _block_inverse(lk, members)
            since = 0
    return accepted


@njit(cache=True, error_model="numpy")
def run_many_chains(lk, start, outside0, alpha, n_chains, n_steps, rng):
    """Independent chains from a common start; returns final states row-wise."""
    k = start.shape[0]
    out = np.empty((n_chains, k), dtype=np.int64)
    for c in range(n_chains):
        members = start.copy()
        outside = outside0.copy()
        run_chain(lk, members, outside, alpha, n_steps, rng)
        out[c] = members
    return out


# Unrolled chains for small k. The generic loop above keeps the inverse in a
# k x k array; for k <= UNROLL_MAX the same moves run with the inverse held in
# scalar locals, which is several times faster for the tiny blocks used in
# enumeration-scale checks. Both routes consume the generator identically.
UNROLL_MAX = 4


def _unrolled_source(k):
    lines = []
    emit = lines.append

    def m(a, b):
        return f"m{min(a, b)}{max(a, b)}"

    emit("def chain(lk, members, outside, alpha, n_steps, rng):")
    emit("    nout = outside.shape[0]")
    emit(f"    span = {k} * nout")
    emit("    unit = alpha == 1.0")
    emit("    minv = _block_inverse(lk, members)")
    for a in range(k):
        emit(f"    a{a} = members[{a}]")
    for a in range(k):
        for b in range(a, k):
            emit(f"    {m(a, b)} = minv[{a}, {b}]")
    emit("    accepted = 0")
    emit("    since = 0")
    emit("    for t in range(n_steps):")
    emit("        s = int(rng.random() * span)")
    emit("        p = s // nout")
    emit("        q = s - p * nout")
    emit("        j = outside[q]")
    for b in range(k):
        emit(f"        u{b} = lk[a{b}, j]")
    for a in range(k):
        emit(f"        w{a} = " + " + ".join(f"{m(a, b)} * u{b}" for b in range(k)))
    emit("        sj = lk[j, j] - (" + " + ".join(f"u{b} * w{b}" for b in range(k)) + ")")
    for p in range(k):
        emit(f"        {'if' if p == 0 else 'elif'} p == {p}:")
        emit(f"            r = w{p} * w{p} + {m(p, p)} * sj")
        emit("            if not r > 0.0:")
        emit("                continue")
        emit("            if r < 1.0:")
        emit("                x = rng.random()")
        emit("                if unit:")
        emit("                    if not x < r:")
        emit("                        continue")
        emit("                elif not np.log(x) < alpha * np.log(r):")
        emit("                    continue")
        emit(f"            outside[q] = a{p}")
        emit(f"            a{p} = j")
        emit(f"            mpp = {m(p, p)}")
        emit(f"            h = w{p} / mpp")
        for a in range(k):
            emit(f"            g{a} = {m(a, p)}")
            emit(f"            c{a} = w{a} - h * g{a}")
        emit("            ip = 1.0 / mpp")
        emit("            isv = mpp / r")
        for a in range(k):
            for b in range(a, k):
                if p not in (a, b):
                    emit(f"            {m(a, b)} += c{a} * c{b} * isv - g{a} * g{b} * ip")
        for a in range(k):
            if a != p:
                emit(f"            {m(a, p)} = -c{a} * isv")
        emit(f"            {m(p, p)} = isv")
    emit("        accepted += 1")
    emit("        since += 1")
    emit("        if since >= REFRESH:")
    emit("            since = 0")
    for a in range(k):
        emit(f"            members[{a}] = a{a}")
    emit("            minv = _block_inverse(lk, members)")
    for a in range(k):
        for b in range(a, k):
            emit(f"            {m(a, b)} = minv[{a}, {b}]")
    for a in range(k):
        emit(f"    members[{a}] = a{a}")
    emit("    return accepted")
    emit("")
    emit("def many(lk, start, outside0, alpha, n_chains, n_steps, rng):")
    emit(f"    out = np.empty((n_chains, {k}), dtype=np.int64)")
    emit("    for c in range(n_chains):")
    emit("        members = start.copy()")
    emit("        outside = outside0.copy()")
    emit("        chain(lk, members, outside, alpha, n_steps, rng)")
    emit("        out[c] = members")
    emit("    return out")
    return "\n".join(lines)


@functools.lru_cache(maxsize=None)
def unrolled(k):
    """(chain, many) compiled for a fixed k in 1..UNROLL_MAX."""
    namespace = {"np": np, "_block_inverse": _block_inverse, "REFRESH": REFRESH}
    exec(compile(_unrolled_source(k), f"<swap-chain k={k}>", "exec"), namespace)
    namespace["chain"] = njit(error_model="numpy")(namespace["chain"])
    namespace["many"] = njit(error_model="numpy")(namespace["many"])
    return namespace["chain"], namespace["many"]


def swap_chain(lk, members, outside, alpha, n_steps, rng, unroll=True):
    k = members.shape[0]
    if unroll and alpha != 0.0 and 1 <= k <= UNROLL_MAX:
        return unrolled(k)[0](lk, members, outside, alpha, n_steps, rng)
    return run_chain(lk, members, outside, alpha, n_steps, rng)


def swap_chains(lk, start, outside0, alpha, n_chains, n_steps, rng, unroll=True):
    k = start.shape[0]
    if unroll and alpha != 0.0 and 1 <= k <= UNROLL_MAX:
        return unrolled(k)[1](lk, start, outside0, alpha, n_chains, n_steps, rng)
    return run_many_chains(lk, start, outside0, alpha, n_chains, n_steps, rng)


@njit(cache=True, error_model="numpy")
def heat_bath_step(lk, v, members, p, u):
    """One drop-and-add step of the v-weighted chain.

    Drops slot ``p``, computes the add probabilities
    P(j) proportional to v_j det(L_{A-p+j}), inserts the j selected by the
    uniform variate ``u`` into slot ``p`` and returns the probability vector.
    """
    n = lk.shape[0]
    k = members.shape[0]
    rest = np.empty(k - 1, dtype=np.int64)
    r = 0
    for a in range(k):
        if a != p:
            rest[r] = members[a]
            r += 1
    probs = np.empty(n)
    if k == 1:
        for j in range(n):
            probs[j] = v[j] * max(lk[j, j], 0.0)
    else:
        minv = _block_inverse(lk, rest)
        sub = np.empty((k - 1, n))
        for a in range(k - 1):
            for j in range(n):
                sub[a, j] = lk[rest[a], j]
        c = minv @ sub
        for j in range(n):
            s = lk[j, j]
            for a in range(k - 1):
                s -= sub[a, j] * c[a, j]
            probs[j] = v[j] * max(s, 0.0)
        for a in range(k - 1):
            probs[rest[a]] = 0.0
    total = 0.0
    for j in range(n):
        total += probs[j]
    if not total > 0.0:
        return probs * np.nan
    for j in range(n):
        probs[j] /= total
    target = u
    acc = 0.0
    chosen = -1
    last = -1
    for j in range(n):
        if probs[j] > 0.0:
            last = j
            acc += probs[j]
            if target < acc:
                chosen = j
                break
    if chosen < 0:
        chosen = last
    members[p] = chosen
    return probs


@njit(cache=True, error_model="numpy")
def smd_loop(lk, k, v0, members, eta, decay, decay_from, n_iters, warmup, use_transition, all_slots,
             slots, uniforms, eval_every, tail_start):
    """Stochastic mirror ascent on log g over the scaled simplex.

    ``members`` holds one chain state per row; ``slots`` and ``uniforms``
    have shape (n_iters, n_chains, inner). The gradient vector is averaged
    over the chains. With ``all_slots`` the transition vector sums the add
    probabilities of every drop slot instead of scaling the one just used.
    The step is eta up to iteration ``decay_from`` and
    eta * decay / (decay + t - decay_from) afterwards; decay <= 0 keeps it
    constant.

    Returns (checkpoints, final v, tail average, status) where status is -1
    on success or the index of the first iteration that produced a
    non-finite iterate.
    """
    n = lk.shape[0]
    n_chains = members.shape[0]
    inner = slots.shape[2]
    v = v0.copy()
    n_ck = n_iters // eval_every
    checkpoints = np.empty((n_ck, n))
    ck = 0
    avg = np.zeros(n)
    n_avg = 0
    x = np.empty(n)
    for t in range(n_iters):
        step = eta * decay / (decay + t - decay_from) if decay > 0 and t >= decay_from else eta
        x[:] = 0.0
        transition = use_transition and t >= warmup
        for c in range(n_chains):
            state = members[c]
            for s in range(inner):
                probs = heat_bath_step(lk, v, state, slots[t, c, s], uniforms[t, c, s])
                if not np.isfinite(probs[0]):
                    return checkpoints[:ck], v, avg, t
            if not transition:
                for a in range(k):
                    x[state[a]] += 1.0
            elif all_slots:
                for p in range(k):
                    probs = heat_bath_step(lk, v, state.copy(), p, 0.5)
                    for j in range(n):
                        x[j] += probs[j]
            else:
                for j in range(n):
                    x[j] += k * probs[j]
        total = 0.0
        for j in range(n):
            v[j] += step * x[j] / n_chains
            total += v[j]
        for j in range(n):
            v[j] = k * v[j] / total
            if not np.isfinite(v[j]):
                return checkpoints[:ck], v, avg, t
        if t >= tail_start:
            for j in range(n):
                avg[j] += v[j]
            n_avg += 1
        if (t + 1) % eval_every == 0 and ck < n_ck:
            checkpoints[ck] = v
            ck += 1
    if n_avg > 0:
        for j in range(n):
            avg[j] /= n_avg
    return checkpoints[:ck], v, avg, -1
