"""Compiled inner loops for the tree learners, LWL and SMO.

Trees are grown over presorted index arrays: ``order[f, start:end]`` lists the
samples of the current node sorted by feature ``f``. Splitting a node stably
partitions every row of ``order`` in place, so no node ever re-sorts.
"""

import numpy as np
from numba import njit

REGRESSION = 0
GINI = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _rand_below(state, n):
    # 53-bit uniform in [0, 1) scaled down; the bias is far below anything observable
    u = np.float64(_next_u64(state) >> _S11) * (1.0 / 9007199254740992.0)
    k = np.int64(u * n)
    return k if k < n else n - 1


@njit(cache=True, nogil=True)
def _best_split_regression(XT, y, w, order, start, end, feats, n_feats, min_leaf, W, S, mean):
    """Best (feature, threshold, SSE reduction) among the given features.

    ``XT`` is the feature-major (transposed) data matrix.
    Targets are centred on the node mean before accumulation. Ties keep the first
    candidate met, i.e. the lowest feature index and then the lowest threshold.
    """
    best_f = -1
    best_t = 0.0
    best_gain = 0.0
    base = S * S / W
    for fi in range(n_feats):
        f = feats[fi]
        wl = 0.0
        sl = 0.0
        for p in range(start, end - 1):
            i = order[f, p]
            wl += w[i]
            sl += w[i] * (y[i] - mean)
            xa = XT[f, i]
            xb = XT[f, order[f, p + 1]]
            if xb <= xa:
                continue
            wr = W - wl
            if wl <= 0.0 or wr <= 0.0 or wl < min_leaf or wr < min_leaf:
                continue
            sr = S - sl
            gain = sl * sl / wl + sr * sr / wr - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                t = 0.5 * (xa + xb)
                best_t = t if t < xb else xa
    return best_f, best_t, best_gain


@njit(cache=True, nogil=True)
def _best_split_gini(XT, labels, w, order, start, end, feats, n_feats, min_leaf,
                     W, counts, n_classes, left, right):
    """Best split by weighted Gini decrease; same candidate rules as the regression search."""
    best_f = -1
    best_t = 0.0
    best_gain = 0.0
    sq_total = 0.0
    for c in range(n_classes):
        sq_total += counts[c] * counts[c]
    base = sq_total / W
    for fi in range(n_feats):
        f = feats[fi]
        for c in range(n_classes):
            left[c] = 0.0
            right[c] = counts[c]
        sq_l = 0.0
        sq_r = sq_total
        wl = 0.0
        for p in range(start, end - 1):
            i = order[f, p]
            c = labels[i]
            wi = w[i]
            sq_l += 2.0 * wi * left[c] + wi * wi
            sq_r += -2.0 * wi * right[c] + wi * wi
            left[c] += wi
            right[c] -= wi
            wl += wi
            xa = XT[f, i]
            xb = XT[f, order[f, p + 1]]
            if xb <= xa:
                continue
            wr = W - wl
            if wl <= 0.0 or wr <= 0.0 or wl < min_leaf or wr < min_leaf:
                continue
            gain = sq_l / wl + sq_r / wr - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                t = 0.5 * (xa + xb)
                best_t = t if t < xb else xa
    return best_f, best_t, best_gain


@njit(cache=True, nogil=True)
def grow_tree(XT, y, labels, w, order, criterion, n_classes, min_leaf, max_depth,
              n_sub, rng_seed):
    """Grow a binary tree over the samples listed in ``order`` (shape (d, m)).

    ``XT`` is the feature-major data matrix of shape (d, n).
    ``order`` is modified in place. ``n_sub < d`` evaluates ``n_sub`` uniformly drawn
    features per node. ``max_depth < 0`` means unlimited. Returns the node arrays
    ``(feature, threshold, left, right, value, weight, n_nodes)``; leaves have
    ``feature == -1``.
    """
    d, m = order.shape
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left_child = np.full(cap, -1, dtype=np.int64)
    right_child = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)

    perm = np.arange(d)
    feats = np.empty(d, dtype=np.int64)
    buf_left = np.empty(m + 1, dtype=order.dtype)
    buf_right = np.empty(m + 1, dtype=order.dtype)
    goes_left = np.zeros(XT.shape[1], dtype=np.int64)
    counts = np.zeros(max(n_classes, 1))
    cl = np.zeros(max(n_classes, 1))
    cr = np.zeros(max(n_classes, 1))
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(rng_seed)

    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0

    while top >= 0:
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        top -= 1

        W = 0.0
        S = 0.0
        if criterion == REGRESSION:
            for p in range(start, end):
                i = order[0, p]
                W += w[i]
                S += w[i] * y[i]
            mean = S / W
            S = 0.0
            sse = 0.0
            for p in range(start, end):
                i = order[0, p]
                r = y[i] - mean
                S += w[i] * r
                sse += w[i] * r * r
            sse -= S * S / W
            value[node] = mean + S / W
            pure = sse <= 1e-20 * W * (mean * mean + 1.0)
        else:
            for c in range(n_classes):
                counts[c] = 0.0
            for p in range(start, end):
                i = order[0, p]
                W += w[i]
                counts[labels[i]] += w[i]
            best_c = 0
            n_present = 0
            for c in range(n_classes):
                if counts[c] > counts[best_c]:
                    best_c = c
                if counts[c] > 0.0:
                    n_present += 1
            value[node] = best_c
            mean = 0.0
            sse = W
            pure = n_present <= 1
        weight[node] = W

        if pure or (max_depth >= 0 and depth >= max_depth) or W < 2.0 * min_leaf or end - start < 2:
            continue

        if n_sub < d:
            for k in range(n_sub):
                j = k + _rand_below(state, d - k)
                tmp = perm[k]
                perm[k] = perm[j]
                perm[j] = tmp
            for k in range(n_sub):
                feats[k] = perm[k]
            feats[:n_sub].sort()
            nf = n_sub
        else:
            for k in range(d):
                feats[k] = k
            nf = d

        if criterion == REGRESSION:
            bf, bt, gain = _best_split_regression(XT, y, w, order, start, end, feats, nf,
                                                  min_leaf, W, S, mean)
            if bf < 0 or not gain > 1e-12 * sse:
                continue
        else:
            bf, bt, gain = _best_split_gini(XT, labels, w, order, start, end, feats, nf,
                                            min_leaf, W, counts, n_classes, cl, cr)
            if bf < 0 or not gain > 1e-12 * W:
                continue

        for p in range(start, end):
            i = order[0, p]
            goes_left[i] = 1 if XT[bf, i] <= bt else 0
        n_left = 0
        for k in range(d):
            # branchless stable partition: every index is written to both buffers
            nl = 0
            nr = 0
            for p in range(start, end):
                i = order[k, p]
                g = goes_left[i]
                buf_left[nl] = i
                buf_right[nr] = i
                nl += g
                nr += 1 - g
            for q in range(nl):
                order[k, start + q] = buf_left[q]
            for q in range(nr):
                order[k, start + nl + q] = buf_right[q]
            n_left = nl

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = bf
        threshold[node] = bt
        left_child[node] = lc
        right_child[node] = rc
        # right pushed first so the left subtree is numbered first (preorder)
        top += 1
        stack_node[top] = rc
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lc
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1

    return feature, threshold, left_child, right_child, value, weight, n_nodes


@njit(cache=True, nogil=True)
def tree_apply(feature, threshold, left_child, right_child, X):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left_child[node]
            else:
                node = right_child[node]
        out[r] = node
    return out


@njit(cache=True, nogil=True)
def holdout_errors(feature, threshold, left_child, right_child, value, X, y):
    """Squared error every node would make on the holdout rows routed through it, as a leaf."""
    err = np.zeros(feature.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while True:
            diff = y[r] - value[node]
            err[node] += diff * diff
            if feature[node] < 0:
                break
            if X[r, feature[node]] <= threshold[node]:
                node = left_child[node]
            else:
                node = right_child[node]
    return err


@njit(cache=True, nogil=True)
def squared_distances(A, B):
    """Exact squared Euclidean distances, summed coordinate by coordinate."""
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            acc = 0.0
            for c in range(A.shape[1]):
                diff = A[i, c] - B[j, c]
                acc += diff * diff
            out[i, j] = acc
    return out


@njit(cache=True, nogil=True)
def nearest_index(Ztr, Q):
    """Index of the closest training row per query; the lowest index wins ties."""
    out = np.empty(Q.shape[0], dtype=np.int64)
    for q in range(Q.shape[0]):
        best = np.inf
        arg = 0
        for i in range(Ztr.shape[0]):
            acc = 0.0
            for c in range(Ztr.shape[1]):
                diff = Ztr[i, c] - Q[q, c]
                acc += diff * diff
                if acc >= best:
                    break
            if acc < best:
                best = acc
                arg = i
        out[q] = arg
    return out


@njit(cache=True, nogil=True)
def lwl_predict(Xtr, XT, y, order, Q):
    """Locally weighted stump prediction for every query row of ``Q``.

    Weights follow the linear kernel ``max(0, 1 - d / d_max)`` with ``d_max`` the
    distance to the farthest training row; if every weight vanishes (all rows
    equidistant, or a single row) they fall back to uniform.
    """
    n, d = Xtr.shape
    out = np.empty(Q.shape[0])
    dist = np.empty(n)
    w = np.empty(n)
    feats = np.arange(d)
    for q in range(Q.shape[0]):
        dmax = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(d):
                diff = Xtr[i, j] - Q[q, j]
                acc += diff * diff
            dist[i] = np.sqrt(acc)
            if dist[i] > dmax:
                dmax = dist[i]
        W = 0.0
        for i in range(n):
            wi = 1.0 - dist[i] / dmax if dmax > 0.0 else 0.0
            w[i] = wi if wi > 0.0 else 0.0
            W += w[i]
        if not W > 0.0:
            for i in range(n):
                w[i] = 1.0
            W = float(n)
        S = 0.0
        for i in range(n):
            S += w[i] * y[i]
        mean = S / W
        S = 0.0
        sse = 0.0
        for i in range(n):
            r = y[i] - mean
            S += w[i] * r
            sse += w[i] * r * r
        sse -= S * S / W
        bf, bt, gain = _best_split_regression(XT, y, w, order, 0, n, feats, d, 0.0, W, S, mean)
        if bf < 0 or not gain > 1e-12 * sse:
            out[q] = mean + S / W
            continue
        go_left = Q[q, bf] <= bt
        ws = 0.0
        ss = 0.0
        for i in range(n):
            if (Xtr[i, bf] <= bt) == go_left:
                ws += w[i]
                ss += w[i] * y[i]
        out[q] = ss / ws
    return out


@njit(cache=True, nogil=True)
def _pair_objective(delta, eta, dg, eps, bi, bj):
    return 0.5 * eta * delta * delta + dg * delta + eps * (abs(bi + delta) + abs(bj - delta))


@njit(cache=True, nogil=True)
def smo_solve(K, y, C, eps, tol, max_iter):
    """Solve the epsilon-insensitive SVR dual over ``beta = alpha - alpha*``.

    Minimises ``0.5 b'Kb - y'b + eps*sum|b|`` subject to ``sum b = 0`` and
    ``-C <= b <= C`` by repeatedly optimising the maximal violating pair exactly
    along ``e_i - e_j``. Returns ``(beta, gap, iterations)`` where ``gap`` is the
    final pair violation (converged iff ``gap < tol``).
    """
    n = y.shape[0]
    beta = np.zeros(n)
    g = -y.copy()  # gradient of the smooth part: K beta - y
    it = 0
    gap = 0.0
    cand = np.empty(4)
    while True:
        # moving beta_i up costs up_i, moving beta_j down gains dn_j
        i_up = -1
        j_dn = -1
        min_up = np.inf
        max_dn = -np.inf
        for k in range(n):
            if beta[k] < C:
                u = g[k] + (eps if beta[k] >= 0.0 else -eps)
                if u < min_up:
                    min_up = u
                    i_up = k
            if beta[k] > -C:
                v = g[k] - (eps if beta[k] <= 0.0 else -eps)
                if v > max_dn:
                    max_dn = v
                    j_dn = k
        gap = max_dn - min_up if (i_up >= 0 and j_dn >= 0) else 0.0
        if gap < tol or it >= max_iter:
            break
        i = i_up
        j = j_dn
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        dg = g[i] - g[j]
        bi = beta[i]
        bj = beta[j]
        lo = max(-C - bi, bj - C)
        hi = min(C - bi, bj + C)
        # breakpoints of |bi + delta| and |bj - delta|
        cand[0] = lo
        cand[1] = hi
        cand[2] = min(max(-bi, lo), hi)
        cand[3] = min(max(bj, lo), hi)
        cand.sort()
        best = 0.0
        best_val = _pair_objective(0.0, eta, dg, eps, bi, bj)
        for s in range(4):
            a = cand[s]
            va = _pair_objective(a, eta, dg, eps, bi, bj)
            if va < best_val:
                best_val = va
                best = a
            if s < 3 and eta > 0.0:
                b = cand[s + 1]
                if b > a:
                    mid = 0.5 * (a + b)
                    si = 1.0 if bi + mid > 0.0 else -1.0
                    sj = 1.0 if bj - mid > 0.0 else -1.0
                    t = -(dg + eps * (si - sj)) / eta
                    if t < a:
                        t = a
                    elif t > b:
                        t = b
                    vt = _pair_objective(t, eta, dg, eps, bi, bj)
                    if vt < best_val:
                        best_val = vt
                        best = t
        if best == 0.0:
            # no descent along this pair: numerical floor reached
            break
        beta[i] = bi + best
        beta[j] = bj - best
        # clean up values that should sit exactly on a bound or at zero
        for k in (i, j):
            if beta[k] > C - 1e-12 * C:
                beta[k] = C
            elif beta[k] < -C + 1e-12 * C:
                beta[k] = -C
            elif abs(beta[k]) < 1e-15 * C:
                beta[k] = 0.0
        di = beta[i] - bi
        dj = beta[j] - bj
        for k in range(n):
            g[k] += di * K[i, k] + dj * K[j, k]
        it += 1
    return beta, gap, it
