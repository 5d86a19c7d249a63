"""Compiled depth-first search for the box-constrained integer least-squares problem.

Minimizes ``||t + B c||^2`` over integer ``c`` with ``|c_i| <= radius``.
Each level is visited in zigzag order around its conditional optimum, with
partial norms from the QR factor of ``B`` as the pruning bound. The bound is
padded by a relative slack so rounding can never discard a candidate that
ties the optimum. Leaf values are evaluated directly from ``B`` and ``t``.
Near-ties (within ``TIE_RTOL``) go to the lexicographically smallest ``c``.
"""

import numpy as np
from numba import njit

TIE_RTOL = 1e-12
PRUNE_RTOL = 1e-8
PRUNE_ATOL = 1e-12
#: radius used for an unbounded search
UNBOUNDED = 1 << 40


@njit(cache=True, nogil=True)
def _leaf_value(b, t, c):
    n = t.shape[0]
    total = 0.0
    for i in range(n):
        acc = t[i]
        for j in range(n):
            acc += b[i, j] * c[j]
        total += acc * acc
    return total


@njit(cache=True, nogil=True)
def _lex_less(a, b):
    for i in range(a.shape[0]):
        if a[i] < b[i]:
            return True
        if a[i] > b[i]:
            return False
    return False


@njit(cache=True, nogil=True)
def _start_level(r, y, c, level, radius, center, lo, hi):
    n = y.shape[0]
    s = y[level]
    for j in range(level + 1, n):
        s += r[level, j] * c[j]
    rll = r[level, level]
    cen = -s / rll if rll != 0.0 else 0.0
    center[level] = cen
    base = np.floor(cen + 0.5)
    if base > radius:
        base = radius
    elif base < -radius:
        base = -radius
    c[level] = np.int64(base)
    lo[level] = c[level] - 1
    hi[level] = c[level] + 1


@njit(cache=True, nogil=True)
def _next_value(level, radius, center, lo, hi, c):
    """Advance ``c[level]`` to the next-closest in-box value; False when exhausted."""
    cen = center[level]
    has_lo = lo[level] >= -radius
    has_hi = hi[level] <= radius
    if not has_lo and not has_hi:
        return False
    if has_lo and (not has_hi or cen - lo[level] <= hi[level] - cen):
        c[level] = lo[level]
        lo[level] -= 1
    else:
        c[level] = hi[level]
        hi[level] += 1
    return True


@njit(cache=True, nogil=True)
def _search(r, y, b, t, radius, threshold, lexmin, scale, out):
    """One depth-first pass.

    ``lexmin=False``: find the minimum leaf value, starting from ``threshold``
    (use ``inf``). Returns ``(best, runner_up, leaves)``.
    ``lexmin=True``: among leaves with value <= ``threshold`` keep the
    lexicographically smallest in ``out``.
    """
    n = y.shape[0]
    c = np.zeros(n, dtype=np.int64)
    lo = np.zeros(n, dtype=np.int64)
    hi = np.zeros(n, dtype=np.int64)
    center = np.zeros(n)
    partial = np.zeros(n + 1)
    fresh = np.zeros(n, dtype=np.bool_)
    best = threshold
    runner = np.inf
    found = False
    leaves = 0
    atol = PRUNE_ATOL * scale

    level = n - 1
    _start_level(r, y, c, level, radius, center, lo, hi)
    fresh[level] = True
    while True:
        if fresh[level]:
            fresh[level] = False
        elif not _next_value(level, radius, center, lo, hi, c):
            level += 1
            if level == n:
                break
            continue
        diff = c[level] - center[level]
        d = partial[level + 1] + (r[level, level] * diff) ** 2
        if d > best * (1.0 + PRUNE_RTOL) + atol:
            # zigzag order is nondecreasing in the increment: level exhausted
            level += 1
            if level == n:
                break
            continue
        if level == 0:
            leaves += 1
            val = _leaf_value(b, t, c)
            if lexmin:
                if val <= threshold and (not found or _lex_less(c, out)):
                    out[:] = c
                    found = True
            elif val < best:
                if found:
                    runner = min(runner, best)
                best = val
                out[:] = c
                found = True
            else:
                runner = min(runner, val)
        else:
            partial[level] = d
            level -= 1
            _start_level(r, y, c, level, radius, center, lo, hi)
            fresh[level] = True
    return best, runner, leaves


@njit(cache=True, nogil=True)
def solve_one(b, t, radius, out):
    """Exact tie-broken minimizer written to ``out``; returns leaves examined."""
    q, r = np.linalg.qr(b)
    y = np.ascontiguousarray(q.T) @ t
    scale = 0.0
    for i in range(t.shape[0]):
        scale += t[i] * t[i]
    best, runner, leaves = _search(r, y, b, t, radius, np.inf, False, scale, out)
    threshold = best * (1.0 + TIE_RTOL)
    if runner <= threshold:
        tmp = out.copy()
        _, _, extra = _search(r, y, b, t, radius, threshold, True, scale, tmp)
        out[:] = tmp
        leaves += extra
    return leaves


@njit(cache=True, nogil=True)
def solve_batch(bs, ts, radius, outs, leaves):
    for p in range(bs.shape[0]):
        leaves[p] = solve_one(bs[p], ts[p], radius, outs[p])
