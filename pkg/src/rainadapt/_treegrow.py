"""Compiled depth-first CART grower used by every tree in ``baselines``."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _node_stats(y, rows):
    total = 0.0
    for r in rows:
        total += y[r]
    mean = total / rows.shape[0]
    sse = 0.0
    for r in rows:
        e = y[r] - mean
        sse += e * e
    return mean, sse


@njit(cache=True, nogil=True)
def grow(XT, y, order, max_depth, min_leaf, n_sub, keys, rtol):
    """Grow a tree over ``XT`` (d x n) and ``y``.

    ``order`` is (d x n): row indices sorted by each feature; it is permuted
    in place so every node owns a contiguous slice of each row. When
    ``n_sub < d`` the i-th node that tries to split considers the ``n_sub``
    features with the smallest entries of ``keys[i]``.

    Split choice: over candidate features in increasing index and midpoints in
    increasing order, take the first whose children SSE is within
    ``rtol * max(min SSE, node SSE)`` of the minimum.
    """
    d, n = XT.shape
    cap = 2 * n
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    sse = np.zeros(cap)
    lo_of = np.zeros(cap, np.int64)
    hi_of = np.zeros(cap, np.int64)
    depth_of = np.zeros(cap, np.int64)

    is_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)
    cols = np.arange(d)
    fbest = np.empty(d)

    value[0], sse[0] = _node_stats(y, order[0])
    count[0] = n
    hi_of[0] = n
    n_nodes = 1
    stack = np.empty(cap, np.int64)
    top = 0
    stack[top] = 0
    top += 1
    draw = 0

    while top > 0:
        top -= 1
        node = stack[top]
        lo, hi = lo_of[node], hi_of[node]
        m = hi - lo
        if depth_of[node] >= max_depth or m < 2 * min_leaf:
            continue
        # Constant targets can leave rounding-level SSE; treat those nodes as pure.
        if sse[node] <= 1e-24 * value[node] * value[node] * m or sse[node] <= 0.0:
            continue
        if n_sub < d:
            cols = np.sort(np.argsort(keys[draw])[:n_sub])
            draw += 1

        mu = value[node]
        total_sq = 0.0
        tot = 0.0
        for i in range(lo, hi):
            e = y[order[0, i]] - mu
            tot += e
            total_sq += e * e

        # Pass 1: minimum children SSE per candidate feature.
        best = np.inf
        for j in range(cols.shape[0]):
            f = cols[j]
            run = 0.0
            fmin = np.inf
            for i in range(lo, hi - 1):
                r = order[f, i]
                run += y[r] - mu
                nl = i - lo + 1
                nr = m - nl
                if nl >= min_leaf and nr >= min_leaf and XT[f, r] < XT[f, order[f, i + 1]]:
                    c = total_sq - run * run / nl - (tot - run) * (tot - run) / nr
                    if c < fmin:
                        fmin = c
            fbest[j] = fmin
            if fmin < best:
                best = fmin
        if best == np.inf:
            continue
        tol = rtol * max(abs(best), total_sq, 1e-300)

        # Pass 2: first candidate (feature, position) within tolerance.
        bf = -1
        bpos = -1
        bval = np.inf
        for j in range(cols.shape[0]):
            if fbest[j] > best + tol:
                continue
            f = cols[j]
            run = 0.0
            for i in range(lo, hi - 1):
                r = order[f, i]
                run += y[r] - mu
                nl = i - lo + 1
                nr = m - nl
                if nl >= min_leaf and nr >= min_leaf and XT[f, r] < XT[f, order[f, i + 1]]:
                    c = total_sq - run * run / nl - (tot - run) * (tot - run) / nr
                    if c <= best + tol:
                        bf, bpos, bval = f, i, c
                        break
            if bf >= 0:
                break

        child_sse = max(bval, 0.0)
        if not child_sse < sse[node] * (1.0 - rtol):
            continue

        a = XT[bf, order[bf, bpos]]
        b = XT[bf, order[bf, bpos + 1]]
        thr = (a + b) / 2.0
        if not (a < thr and thr <= b):
            thr = b

        for i in range(lo, bpos + 1):
            is_left[order[bf, i]] = True
        n_left = bpos + 1 - lo
        for g in range(d):
            wl = lo
            wr = 0
            for i in range(lo, hi):
                r = order[g, i]
                if is_left[r]:
                    order[g, wl] = r
                    wl += 1
                else:
                    buf[wr] = r
                    wr += 1
            for j in range(wr):
                order[g, wl + j] = buf[j]
        for i in range(lo, lo + n_left):
            is_left[order[0, i]] = False

        feature[node] = bf
        threshold[node] = thr
        lc, rc = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = lc, rc
        lo_of[lc], hi_of[lc] = lo, lo + n_left
        lo_of[rc], hi_of[rc] = lo + n_left, hi
        depth_of[lc] = depth_of[rc] = depth_of[node] + 1
        count[lc], count[rc] = n_left, m - n_left
        value[lc], sse[lc] = _node_stats(y, order[0, lo:lo + n_left])
        value[rc], sse[rc] = _node_stats(y, order[0, lo + n_left:hi])
        # Right pushed first so the left subtree is numbered first.
        stack[top] = rc
        top += 1
        stack[top] = lc
        top += 1

    k = n_nodes
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(),
            value[:k].copy(), count[:k].copy(), sse[:k].copy())


@njit(cache=True)
def resample_order(order, counts):
    """Sorted order of a resample, given the full sorted ``order`` and per-row draw ``counts``.

    The resample is taken to list rows in increasing index (``np.sort(idx)``),
    so the copies of row ``r`` occupy a contiguous block.
    """
    d, n = order.shape
    start = np.zeros(n, np.int64)
    acc = 0
    for r in range(n):
        start[r] = acc
        acc += counts[r]
    out = np.empty((d, acc), np.int64)
    for f in range(d):
        w = 0
        for i in range(n):
            r = order[f, i]
            for c in range(counts[r]):
                out[f, w] = start[r] + c
                w += 1
    return out
