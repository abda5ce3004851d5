"""Compiled inner loops.

Summation order matters for exact reproducibility, so every kernel folds
left to right in ascending index order starting from ``0.0``.  The
subset kernel therefore returns bit-identical values to a naive
enumerator that evaluates each subset independently.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def column_fold(y):
    d, m = y.shape
    out = np.zeros(m)
    for i in range(d):
        for j in range(m):
            out[j] += y[i, j]
    return out


@njit(cache=True, nogil=True)
def truncated_sum(x, tau, nu):
    total = 0.0
    for j in range(x.shape[0]):
        v = x[j]
        if abs(v) > tau:
            total += v * v - nu
    return total


@njit(cache=True, nogil=True)
def _colex_less(partial, p, last, best):
    # compare (partial[:p] + [last]) against best, largest element first
    if last != best[p]:
        return last < best[p]
    for t in range(p - 1, -1, -1):
        if partial[t] != best[t]:
            return partial[t] < best[t]
    return False


@njit(cache=True, nogil=True, inline="always")
def _score_partial(y, base_row, extra_row, cols, n_cols, lo, scale, taus, nus, tmin, guard,
                   order, vals, suf_max, suf_min, comb, p, best, best_sub,
                   score, touched, touch_list, floor):
    """Score every completion ``i >= lo`` of one partial subset.

    ``cols`` lists the only columns where a completion can score a
    positive term; they bound the best completion.  The partial's column
    sums are ``base_row[j] + y[extra_row, j]`` (or ``base_row[j]`` when
    ``extra_row < 0``).
    """
    d, m = y.shape
    k_count = taus.shape[0]

    # upper bound on every completion's score, per threshold; computed as
    # u*u/s rather than (u/sqrt(s))**2, the margin covers the difference
    inv_s = 1.0 / (scale * scale)
    prune = True
    for q in range(k_count):
        bound = 0.0
        for c in range(n_cols):
            j = cols[c]
            pj = base_row[j] + y[extra_row, j] if extra_row >= 0 else base_row[j]
            ut = pj + suf_max[j, lo]
            ub = pj + suf_min[j, lo]
            u = ut if ut > -ub else -ub
            if u > 0.0:
                b = u * u * inv_s - nus[q]
                if b > 0.0:
                    bound += b
        if not bound * (1.0 + 1e-9) + 1e-9 < max(best[q], floor[q]):
            prune = False
            break
    if prune:
        return

    n_touched = 0
    for j in range(m):
        pj = base_row[j] + y[extra_row, j] if extra_row >= 0 else base_row[j]
        if pj + suf_max[j, lo] > guard:
            k = d - 1
            while k >= 0:
                u = pj + vals[j, k]
                if u <= guard:
                    break
                x = u / scale
                if x <= tmin:
                    break
                i = order[j, k]
                if i >= lo:
                    if not touched[i]:
                        touched[i] = True
                        touch_list[n_touched] = i
                        n_touched += 1
                    for q in range(k_count):
                        if x > taus[q]:
                            score[q, i] += x * x - nus[q]
                k -= 1
        if pj + suf_min[j, lo] < -guard:
            k = 0
            while k < d:
                u = pj + vals[j, k]
                if u >= -guard:
                    break
                x = u / scale
                if x >= -tmin:
                    break
                i = order[j, k]
                if i >= lo:
                    if not touched[i]:
                        touched[i] = True
                        touch_list[n_touched] = i
                        n_touched += 1
                    for q in range(k_count):
                        if -x > taus[q]:
                            score[q, i] += x * x - nus[q]
                k += 1

    first_free = -1
    if n_touched < d - lo:
        first_free = lo
        while touched[first_free]:
            first_free += 1
    for q in range(k_count):
        bv = -np.inf
        bi = -1
        for t in range(n_touched):
            i = touch_list[t]
            v = score[q, i]
            if v > bv or (v == bv and i < bi):
                bv = v
                bi = i
        if first_free >= 0 and (0.0 > bv or (0.0 == bv and first_free < bi)):
            bv = 0.0
            bi = first_free
        if bv > best[q] or (bv == best[q] and _colex_less(comb, p, bi, best_sub[q])):
            best[q] = bv
            for t in range(p):
                best_sub[q, t] = comb[t]
            best_sub[q, p] = bi
    for t in range(n_touched):
        i = touch_list[t]
        touched[i] = False
        for q in range(k_count):
            score[q, i] = 0.0


@njit(cache=True, nogil=True)
def _seed_floor(y, s, taus, nus, order):
    """Lower bounds on the maximum from the extreme rows of each column.

    Used only to prune; a small margin keeps pruned subsets strictly below
    the true maximum even if rounding differs from the enumeration.
    """
    d, m = y.shape
    k_count = taus.shape[0]
    scale = np.sqrt(float(s))
    floor = np.full(k_count, -np.inf)
    rows = np.empty(s, dtype=np.int64)
    sums = np.empty(m)
    for j in range(m):
        for side in range(2):
            for t in range(s):
                rows[t] = order[j, d - 1 - t] if side == 0 else order[j, t]
            rows.sort()
            for c in range(m):
                sums[c] = 0.0
            for t in range(s):
                for c in range(m):
                    sums[c] += y[rows[t], c]
            for q in range(k_count):
                total = 0.0
                for c in range(m):
                    x = sums[c] / scale
                    if abs(x) > taus[q]:
                        total += x * x - nus[q]
                total -= 1e-9 * (1.0 + abs(total))
                if total > floor[q]:
                    floor[q] = total
    return floor


@njit(cache=True, nogil=True)
def max_truncated_subset(y, s, taus, nus):
    """Exact max over row subsets of size ``s`` of the truncated sum.

    Every subset is accounted for.  Subsets are grouped by a prefix of
    their ``s - 2`` smallest rows, then by the next row (forming a partial
    of ``s - 1`` rows), and all completions of a partial are scored
    together.  Entries beyond the threshold are located by scanning sorted
    columns from their extremes; completions that touch no column score
    exactly ``0.0``, as a direct evaluation would give.

    Prefixes and partials whose score upper bound falls strictly below the
    current maximum are skipped, which changes neither the maximum nor the
    tie-break.  Only columns able to carry a positive term (beyond
    ``sqrt(nu) >= tau``) enter the bounds.

    Returns the maxima for each threshold and the colexicographically
    smallest maximising subset for each.
    """
    d, m = y.shape
    k_count = taus.shape[0]
    p = s - 1
    scale = np.sqrt(float(s))
    tmin = np.inf
    for q in range(k_count):
        if taus[q] < tmin:
            tmin = taus[q]

    best = np.full(k_count, -np.inf)
    best_sub = np.zeros((k_count, s), dtype=np.int64)
    if tmin == np.inf:
        for q in range(k_count):
            best[q] = 0.0
            for t in range(s):
                best_sub[q, t] = t
        return best, best_sub

    order = np.empty((m, d), dtype=np.int64)
    vals = np.empty((m, d))
    suf_max = np.full((m, d + 1), -np.inf)
    suf_min = np.full((m, d + 1), np.inf)
    # sums of the two largest / smallest entries among rows >= i
    top2 = np.full((m, d + 1), -np.inf)
    bot2 = np.full((m, d + 1), np.inf)
    for j in range(m):
        order[j] = np.argsort(y[:, j], kind="mergesort")
        for k in range(d):
            vals[j, k] = y[order[j, k], j]
        a1 = -np.inf
        a2 = -np.inf
        b1 = np.inf
        b2 = np.inf
        for i in range(d - 1, -1, -1):
            v = y[i, j]
            if v > a1:
                a2 = a1
                a1 = v
            elif v > a2:
                a2 = v
            if v < b1:
                b2 = b1
                b1 = v
            elif v < b2:
                b2 = v
            suf_max[j, i] = a1
            suf_min[j, i] = b1
            top2[j, i] = a1 + a2
            bot2[j, i] = b1 + b2
    # any unscaled sum at or below guard maps strictly below tmin
    guard = tmin * scale * (1.0 - 1e-12)

    floor = _seed_floor(y, s, taus, nus, order)
    score = np.zeros((k_count, d))
    touched = np.zeros(d, dtype=np.bool_)
    touch_list = np.empty(d, dtype=np.int64)
    comb = np.zeros(max(p, 1), dtype=np.int64)
    hot = np.empty(m, dtype=np.int64)

    if p == 0:
        for j in range(m):
            hot[j] = j
        _score_partial(y, np.zeros(m), -1, hot, m, 0, scale, taus, nus, tmin, guard,
                       order, vals, suf_max, suf_min, comb, p, best, best_sub,
                       score, touched, touch_list, floor)
        return best, best_sub

    # a positive term needs |x| > sqrt(nu); the slack absorbs rounding
    # from summing the two extra rows in a different order
    nu_min = np.inf
    for q in range(k_count):
        if nus[q] < nu_min:
            nu_min = nus[q]
    hot_guard = np.sqrt(nu_min) * scale * (1.0 - 1e-9)
    inv_s = 1.0 / float(s)
    r = p - 1
    prefix = np.zeros(max(r, 1), dtype=np.int64)
    prefix_sum = np.zeros((r + 1, m))
    for t in range(r):
        prefix[t] = t
        for j in range(m):
            prefix_sum[t + 1, j] = prefix_sum[t, j] + y[t, j]
    n_prefix_rows = d - 2  # rows left for t and the completion

    while True:
        base = prefix_sum[r]
        t_lo = prefix[r - 1] + 1 if r > 0 else 0
        # columns where some extension could score a positive term
        n_hot = 0
        for j in range(m):
            if base[j] + top2[j, t_lo] > hot_guard or base[j] + bot2[j, t_lo] < -hot_guard:
                hot[n_hot] = j
                n_hot += 1
        skip = True
        for q in range(k_count):
            bound = 0.0
            for c in range(n_hot):
                j = hot[c]
                ut = base[j] + top2[j, t_lo]
                ub = base[j] + bot2[j, t_lo]
                u = ut if ut > -ub else -ub
                if u > 0.0:
                    b = u * u * inv_s - nus[q]
                    if b > 0.0:
                        bound += b
            if not bound * (1.0 + 1e-9) + 1e-9 < max(best[q], floor[q]):
                skip = False
                break
        if not skip:
            for c in range(r):
                comb[c] = prefix[c]
            for t in range(t_lo, d - 1):
                comb[r] = t
                _score_partial(y, base, t, hot, n_hot, t + 1, scale, taus, nus, tmin, guard,
                               order, vals, suf_max, suf_min, comb, p, best, best_sub,
                               score, touched, touch_list, floor)

        if r == 0:
            break
        level = r - 1
        while level >= 0 and prefix[level] == n_prefix_rows - r + level:
            level -= 1
        if level < 0:
            break
        prefix[level] += 1
        for j in range(m):
            prefix_sum[level + 1, j] = prefix_sum[level, j] + y[prefix[level], j]
        for t in range(level + 1, r):
            prefix[t] = prefix[t - 1] + 1
            for j in range(m):
                prefix_sum[t + 1, j] = prefix_sum[t, j] + y[prefix[t], j]
    return best, best_sub
