"""Compiled inner loops for tree growth.

Randomness comes from a SplitMix64 stream (``state += gamma``, then the
output finalizer), so trees depend only on the integer seed handed in.
"""

import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
INV53 = 1.0 / 9007199254740992.0

CRIT_GINI = 0
CRIT_ENTROPY = 1
TOL = 1e-12


@njit(cache=True)
def next_u64(state):
    state[0] += GAMMA
    z = state[0]
    z = (z ^ (z >> S30)) * MIX1
    z = (z ^ (z >> S27)) * MIX2
    return z ^ (z >> S31)


@njit(cache=True)
def next_below(state, n):
    """Integer in ``[0, n)`` from the top 53 bits of the next output."""
    u = np.float64(next_u64(state) >> S11) * INV53
    k = np.int64(u * n)
    return k if k < n else n - 1


@njit(cache=True)
def bootstrap_rows(state, n):
    rows = np.empty(n, dtype=np.int64)
    for i in range(n):
        rows[i] = next_below(state, n)
    return rows


@njit(cache=True)
def _xlogx(v):
    return v * np.log2(v) if v > 0 else 0.0


@njit(cache=True)
def split_search(X, y, rows, start, end, features, n_features, n_classes, crit,
                 parent, hist, cum, allow_zero):
    """Best split of ``rows[start:end]`` over ``features[:n_features]``.

    Candidates are scanned in (feature, code) order; a later candidate wins
    only if it beats the incumbent by more than ``TOL``. Returns
    ``(found, feature, threshold, gain)``.
    """
    n = end - start
    nf = np.float64(n)
    parent_imp = 0.0
    if crit == CRIT_GINI:
        s = 0.0
        for c in range(n_classes):
            s += np.float64(parent[c]) * parent[c]
        parent_imp = 1.0 - s / (nf * nf)
    else:
        for c in range(n_classes):
            if parent[c] > 0:
                p = parent[c] / nf
                parent_imp -= p * np.log2(p)
    best_gain = -np.inf
    best_f = -1
    best_t = 0.0
    for fi in range(n_features):
        f = features[fi]
        hist[:, :] = 0
        top = 0
        for r in range(start, end):
            row = rows[r]
            k = X[row, f]
            hist[k, y[row]] += 1
            if k > top:
                top = k
        cum[:] = 0
        n_left = 0
        prev = -1
        for k in range(top + 1):
            nk = 0
            for c in range(n_classes):
                nk += hist[k, c]
            if nk == 0:
                continue
            if prev >= 0:
                n_right = n - n_left
                if crit == CRIT_GINI:
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        lc = np.float64(cum[c])
                        rc = np.float64(parent[c] - cum[c])
                        sl += lc * lc
                        sr += rc * rc
                    gain = parent_imp - 1.0 + (sl / n_left + sr / n_right) / nf
                else:
                    wl = _xlogx(np.float64(n_left))
                    wr = _xlogx(np.float64(n_right))
                    for c in range(n_classes):
                        wl -= _xlogx(np.float64(cum[c]))
                        wr -= _xlogx(np.float64(parent[c] - cum[c]))
                    gain = parent_imp - (wl + wr) / nf
                if gain > best_gain + TOL:
                    best_gain = gain
                    best_f = f
                    best_t = (prev + k) / 2.0
            for c in range(n_classes):
                cum[c] += hist[k, c]
            n_left += nk
            prev = k
    if best_f < 0:
        return False, -1, 0.0, 0.0
    if best_gain <= TOL:
        if not allow_zero:
            return False, -1, 0.0, 0.0
        best_gain = 0.0
    return True, best_f, best_t, best_gain


@njit(cache=True)
def grow(X, y, rows_in, n_classes, crit, max_depth, min_samples_split, subset_size, state,
         allow_zero):
    """Grow one tree, advancing the RNG ``state`` in place.

    Returns preorder arrays ``(feature, threshold, left, right, counts)``.
    """
    n = rows_in.shape[0]
    n_total_features = X.shape[1]
    rows = rows_in.copy()
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.int64)

    k_max = 0
    for i in range(n):
        for j in range(n_total_features):
            if X[rows[i], j] > k_max:
                k_max = X[rows[i], j]
    hist = np.zeros((k_max + 1, n_classes), dtype=np.int64)
    cum = np.zeros(n_classes, dtype=np.int64)
    pool = np.arange(n_total_features)
    features = np.empty(n_total_features, dtype=np.int64)
    scratch = np.empty(n, dtype=np.int64)

    # stack entries: start, end, depth, parent, is_left
    stack = np.empty((cap, 5), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    sp = 1
    n_nodes = 0
    while sp > 0:
        sp -= 1
        start = stack[sp, 0]
        end = stack[sp, 1]
        depth = stack[sp, 2]
        par = stack[sp, 3]
        node = n_nodes
        n_nodes += 1
        if par >= 0:
            if stack[sp, 4] == 1:
                left[par] = node
            else:
                right[par] = node
        distinct = 0
        for r in range(start, end):
            counts[node, y[rows[r]]] += 1
        for c in range(n_classes):
            if counts[node, c] > 0:
                distinct += 1
        size = end - start
        if distinct <= 1 or size < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue
        if subset_size >= n_total_features:
            for j in range(n_total_features):
                features[j] = j
            m = n_total_features
        else:
            # partial Fisher-Yates over a persistent pool, then sort the draw
            for j in range(subset_size):
                pick = j + next_below(state, n_total_features - j)
                tmp = pool[j]
                pool[j] = pool[pick]
                pool[pick] = tmp
            for j in range(subset_size):
                features[j] = pool[j]
            features[:subset_size].sort()
            m = subset_size
        found, f, thr, gain = split_search(X, y, rows, start, end, features, m, n_classes,
                                           crit, counts[node], hist, cum, allow_zero)
        if not found:
            continue
        feature[node] = f
        threshold[node] = thr
        # stable partition: rows going left keep their order, then rows going right
        n_l = 0
        n_r = 0
        for r in range(start, end):
            if X[rows[r], f] <= thr:
                rows[start + n_l] = rows[r]
                n_l += 1
            else:
                scratch[n_r] = rows[r]
                n_r += 1
        for r in range(n_r):
            rows[start + n_l + r] = scratch[r]
        mid = start + n_l
        # right pushed first so the left subtree is numbered first (preorder)
        stack[sp, 0] = mid
        stack[sp, 1] = end
        stack[sp, 2] = depth + 1
        stack[sp, 3] = node
        stack[sp, 4] = 0
        sp += 1
        stack[sp, 0] = start
        stack[sp, 1] = mid
        stack[sp, 2] = depth + 1
        stack[sp, 3] = node
        stack[sp, 4] = 1
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())
