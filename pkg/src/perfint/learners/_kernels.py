"""Compiled kernels for histogram-based tree growth and traversal.

Samples are pre-binned per feature (``codes``); a split ``(f, b)`` sends a
row left iff ``codes[row, f] <= b``. Both Gini (one-hot targets) and
squared-error criteria reduce to maximizing

    sum_q S_L[q]^2 / W_L + S_R[q]^2 / W_R - S[q]^2 / W

so a single grower serves classification forests and boosting.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _node_stats(idx, s, e, Y, w, ysum):
    m = Y.shape[1]
    for q in range(m):
        ysum[q] = 0.0
    W = 0.0
    energy = 0.0
    for i in range(s, e):
        r = idx[i]
        wr = w[r]
        W += wr
        for q in range(m):
            ysum[q] += Y[r, q]
            energy += Y[r, q] * Y[r, q] / wr
    return W, energy


@njit(cache=True)
def _best_split(codes, nbins, Y, w, idx, s, e, ysum, W, energy, depth,
                max_depth, min_samples_split, min_samples_leaf, max_features,
                perm, hs, hw, hc, sl):
    n = e - s
    d = codes.shape[1]
    m = Y.shape[1]
    if n < min_samples_split or n < 2 * min_samples_leaf:
        return -1, -1, 0.0
    if max_depth >= 0 and depth >= max_depth:
        return -1, -1, 0.0
    parent = 0.0
    for q in range(m):
        parent += ysum[q] * ysum[q] / W
    best_g = -np.inf
    best_f = -1
    best_b = -1
    visited = 0
    for t in range(d):
        if max_features < d:
            j = t + np.random.randint(d - t)
            tmp = perm[t]
            perm[t] = perm[j]
            perm[j] = tmp
        f = perm[t]
        B = nbins[f]
        if B < 2:
            continue
        for c in range(B):
            hc[c] = 0
            hw[c] = 0.0
            for q in range(m):
                hs[c, q] = 0.0
        for i in range(s, e):
            r = idx[i]
            c = codes[r, f]
            hc[c] += 1
            hw[c] += w[r]
            for q in range(m):
                hs[c, q] += Y[r, q]
        nonempty = 0
        for c in range(B):
            if hc[c] > 0:
                nonempty += 1
        if nonempty < 2:
            continue
        visited += 1
        nl = 0
        wl = 0.0
        for q in range(m):
            sl[q] = 0.0
        for c in range(B - 1):
            nl += hc[c]
            wl += hw[c]
            for q in range(m):
                sl[q] += hs[c, q]
            if hc[c] == 0:
                continue
            nr = n - nl
            if nl < min_samples_leaf:
                continue
            if nr < min_samples_leaf or nr == 0:
                break
            wr = W - wl
            if wl <= 0.0 or wr <= 0.0:
                continue
            g = -parent
            for q in range(m):
                g += sl[q] * sl[q] / wl + (ysum[q] - sl[q]) * (ysum[q] - sl[q]) / wr
            if g > best_g or (g == best_g and f < best_f):
                best_g = g
                best_f = f
                best_b = c
        if max_features < d and visited >= max_features:
            break
    if best_f < 0 or not best_g > 1e-12 * energy:
        return -1, -1, 0.0
    return best_f, best_b, best_g


@njit(cache=True)
def grow_tree(codes, nbins, Y, w, rows, max_depth, max_leaf_nodes,
              min_samples_split, min_samples_leaf, max_features, seed):
    """Best-first tree growth over the sample multiset ``rows``.

    Returns node arrays (feature, bin, left, right, value, weight, count,
    depth, gain) trimmed to the node count, plus the row permutation and
    per-node row ranges so callers can recompute leaf values.
    """
    np.random.seed(seed)
    n_rows = rows.shape[0]
    d = codes.shape[1]
    m = Y.shape[1]
    cap = 2 * n_rows + 1
    if max_leaf_nodes > 0 and 2 * max_leaf_nodes - 1 < cap:
        cap = 2 * max_leaf_nodes - 1
    feat = np.full(cap, -1, np.int32)
    sbin = np.full(cap, -1, np.int32)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros((cap, m))
    wsum = np.zeros(cap)
    energy = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    depth = np.zeros(cap, np.int32)
    gain = np.zeros(cap)
    start = np.zeros(cap, np.int64)
    end = np.zeros(cap, np.int64)
    bfeat = np.full(cap, -1, np.int32)
    bbin = np.full(cap, -1, np.int32)
    bgain = np.zeros(cap)
    open_nodes = np.zeros(cap, np.int64)

    idx = rows.copy()
    buf = np.empty(n_rows, np.int64)
    maxb = 2
    for f in range(d):
        if nbins[f] > maxb:
            maxb = nbins[f]
    hs = np.zeros((maxb, m))
    hw = np.zeros(maxb)
    hc = np.zeros(maxb, np.int64)
    sl = np.zeros(m)
    ysum = np.zeros(m)
    perm = np.arange(d)

    start[0] = 0
    end[0] = n_rows
    W, en = _node_stats(idx, 0, n_rows, Y, w, ysum)
    wsum[0] = W
    energy[0] = en
    count[0] = n_rows
    for q in range(m):
        value[0, q] = ysum[q] / W if W > 0 else 0.0
    f0, b0, g0 = _best_split(codes, nbins, Y, w, idx, 0, n_rows, ysum, W, en, 0,
                             max_depth, min_samples_split, min_samples_leaf,
                             max_features, perm, hs, hw, hc, sl)
    bfeat[0] = f0
    bbin[0] = b0
    bgain[0] = g0
    node_count = 1
    n_open = 1
    open_nodes[0] = 0
    n_leaves = 1

    while n_open > 0:
        if max_leaf_nodes > 0 and n_leaves >= max_leaf_nodes:
            break
        bi = -1
        for j in range(n_open):
            nd = open_nodes[j]
            if bfeat[nd] < 0:
                continue
            if bi < 0:
                bi = j
            else:
                cur = open_nodes[bi]
                if bgain[nd] > bgain[cur] or (bgain[nd] == bgain[cur] and nd < cur):
                    bi = j
        if bi < 0:
            break
        nd = open_nodes[bi]
        open_nodes[bi] = open_nodes[n_open - 1]
        n_open -= 1

        f = bfeat[nd]
        b = bbin[nd]
        s = start[nd]
        e = end[nd]
        nl = 0
        for i in range(s, e):
            r = idx[i]
            if codes[r, f] <= b:
                buf[nl] = r
                nl += 1
        k = nl
        for i in range(s, e):
            r = idx[i]
            if codes[r, f] > b:
                buf[k] = r
                k += 1
        for i in range(e - s):
            idx[s + i] = buf[i]

        feat[nd] = f
        sbin[nd] = b
        gain[nd] = bgain[nd]
        children = (node_count, node_count + 1)
        left[nd] = children[0]
        right[nd] = children[1]
        ranges = ((s, s + nl), (s + nl, e))
        for ci in range(2):
            c = children[ci]
            cs, ce = ranges[ci]
            start[c] = cs
            end[c] = ce
            depth[c] = depth[nd] + 1
            count[c] = ce - cs
            Wc, enc = _node_stats(idx, cs, ce, Y, w, ysum)
            wsum[c] = Wc
            energy[c] = enc
            for q in range(m):
                value[c, q] = ysum[q] / Wc if Wc > 0 else 0.0
            fc, bc, gc = _best_split(codes, nbins, Y, w, idx, cs, ce, ysum, Wc, enc,
                                     depth[c], max_depth, min_samples_split,
                                     min_samples_leaf, max_features, perm, hs, hw, hc, sl)
            bfeat[c] = fc
            bbin[c] = bc
            bgain[c] = gc
            open_nodes[n_open] = c
            n_open += 1
        node_count += 2
        n_leaves += 1

    nc = node_count
    return (feat[:nc].copy(), sbin[:nc].copy(), left[:nc].copy(), right[:nc].copy(),
            value[:nc].copy(), wsum[:nc].copy(), count[:nc].copy(), depth[:nc].copy(),
            gain[:nc].copy(), idx, start[:nc].copy(), end[:nc].copy())


@njit(cache=True)
def apply_codes(codes, feat, sbin, left, right):
    """Leaf index of every row of ``codes`` in a single (local-index) tree."""
    n = codes.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        nd = 0
        while feat[nd] >= 0:
            if codes[i, feat[nd]] <= sbin[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] = nd
    return out


@njit(cache=True)
def apply_packed(X, feat, thr, left, right, roots):
    """Global leaf index per (row, tree) for packed trees; ``x <= thr`` goes left."""
    n = X.shape[0]
    T = roots.shape[0]
    out = np.empty((n, T), np.int64)
    for i in range(n):
        for t in range(T):
            nd = roots[t]
            while feat[nd] >= 0:
                if X[i, feat[nd]] <= thr[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            out[i, t] = nd
    return out


@njit(cache=True)
def path_stats(X, feat, thr, left, right, roots, n_levels):
    """Per-level mean |x_f - threshold| along decision paths and node visit counts."""
    n = X.shape[0]
    T = roots.shape[0]
    dist_sum = np.zeros(n_levels)
    dist_cnt = np.zeros(n_levels)
    visits = np.zeros(feat.shape[0])
    for i in range(n):
        for t in range(T):
            nd = roots[t]
            level = 0
            visits[nd] += 1.0
            while feat[nd] >= 0:
                xv = X[i, feat[nd]]
                if level < n_levels:
                    dist_sum[level] += abs(xv - thr[nd])
                    dist_cnt[level] += 1.0
                if xv <= thr[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
                visits[nd] += 1.0
                level += 1
    return dist_sum, dist_cnt, visits


@njit(cache=True)
def leaf_lower_quantile(diff, idx, start, end, nodes, tau):
    """Lower empirical tau-quantile of ``diff`` over each node's row range."""
    out = np.empty(nodes.shape[0])
    for j in range(nodes.shape[0]):
        nd = nodes[j]
        s = start[nd]
        e = end[nd]
        vals = np.empty(e - s)
        for i in range(s, e):
            vals[i - s] = diff[idx[i]]
        vals.sort()
        k = int(np.ceil(tau * (e - s))) - 1
        if k < 0:
            k = 0
        out[j] = vals[k]
    return out
