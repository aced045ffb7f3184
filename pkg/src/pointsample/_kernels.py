"""JIT-compiled geometry kernels.

Every kernel accumulates distances in float64 from float32-derived
coordinate columns, with a fixed operand order (dx*dx + dy*dy + dz*dz)
so distance bits are identical across kernels and the numpy-based naive
oracles. fastmath stays off for that reason.

Kernels return the number of pair-distance evaluations they performed;
callers feed that into the core counter.
"""

import numpy as np
from numba import njit

_U64_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True, inline="always")
def _sm64(state):
    # splitmix64 step; mirrors core.Rng
    state = state + _U64_GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _U64_MIX1
    z = (z ^ (z >> np.uint64(27))) * _U64_MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


# ---------------------------------------------------------------------------
# farthest point sampling


@njit(cache=True, nogil=True)
def fps_loop(x, y, z, md, taken, out_idx, curve, k_start, n_total):
    """Run FPS iterations k_start..n_total-1 in place.

    On entry md holds squared distances to out_idx[:k_start-1] (+inf for a
    fresh run); each iteration folds in the most recent sample, then picks
    the argmax with ties broken toward the lowest index.  If the maximum is
    zero (every remaining point duplicates a sampled one) the lowest-index
    untaken point is selected so indices stay distinct.
    """
    N = x.shape[0]
    evals = 0
    for i in range(k_start, n_total):
        last = out_idx[i - 1]
        px = x[last]
        py = y[last]
        pz = z[last]
        best = -1.0
        bestj = -1
        for j in range(N):
            dx = x[j] - px
            dy = y[j] - py
            dz = z[j] - pz
            d = dx * dx + dy * dy + dz * dz
            if d < md[j]:
                md[j] = d
            if md[j] > best:
                best = md[j]
                bestj = j
        evals += N
        if best <= 0.0 or taken[bestj] == 1:
            for j in range(N):
                if taken[j] == 0:
                    bestj = j
                    best = md[j]
                    break
        out_idx[i] = bestj
        curve[i] = np.sqrt(best)
        taken[bestj] = 1
    return evals


@njit(cache=True, nogil=True)
def fps_update_chunk(x, y, z, px, py, pz, md, lo, hi):
    """Distance update + argmax for one slice; merged by the caller."""
    best = -1.0
    bestj = -1
    for j in range(lo, hi):
        dx = x[j] - px
        dy = y[j] - py
        dz = z[j] - pz
        d = dx * dx + dy * dy + dz * dz
        if d < md[j]:
            md[j] = d
        if md[j] > best:
            best = md[j]
            bestj = j
    return best, bestj


@njit(cache=True, nogil=True)
def first_untaken(taken):
    for j in range(taken.shape[0]):
        if taken[j] == 0:
            return j
    return -1


# ---------------------------------------------------------------------------
# fused exclusion-list construction
#
# The triangle of unordered pairs is split into balanced row-pair tasks:
# task k owns rows k and N-1-k, so every task covers ~N-1 pairs and chunks
# of tasks have even cost.  Each pair's distance is evaluated exactly once.


@njit(cache=True, nogil=True)
def excl_collect(x, y, z, klo, khi, r2max, cap_hint):
    """Collect edges (i, j, d2) with d2 < r2max for task range [klo, khi)."""
    N = x.shape[0]
    cap = cap_hint if cap_hint > 64 else 64
    ei = np.empty(cap, dtype=np.int32)
    ej = np.empty(cap, dtype=np.int32)
    ed = np.empty(cap, dtype=np.float64)
    cnt = 0
    evals = 0
    buf = np.empty(1024, dtype=np.float64)
    for k in range(klo, khi):
        for rep in range(2):
            i = k if rep == 0 else N - 1 - k
            if rep == 1 and i <= k:
                continue
            xi = x[i]
            yi = y[i]
            zi = z[i]
            j0 = i + 1
            while j0 < N:
                j1 = min(j0 + 1024, N)
                m = j1 - j0
                # grow once per block so the pair loop stays allocation-free
                if cnt + m > cap:
                    while cnt + m > cap:
                        cap *= 2
                    nei = np.empty(cap, dtype=np.int32)
                    nej = np.empty(cap, dtype=np.int32)
                    ned = np.empty(cap, dtype=np.float64)
                    nei[:cnt] = ei[:cnt]
                    nej[:cnt] = ej[:cnt]
                    ned[:cnt] = ed[:cnt]
                    ei = nei
                    ej = nej
                    ed = ned
                for t in range(m):
                    jj = j0 + t
                    dx = x[jj] - xi
                    dy = y[jj] - yi
                    dz = z[jj] - zi
                    buf[t] = dx * dx + dy * dy + dz * dz
                for t in range(m):
                    if buf[t] < r2max:
                        ei[cnt] = i
                        ej[cnt] = j0 + t
                        ed[cnt] = buf[t]
                        cnt += 1
                j0 = j1
                evals += m
    return ei[:cnt], ej[:cnt], ed[:cnt], evals


@njit(cache=True, nogil=True)
def csr_fill(ei, ej, ed, indptr, out_idx, out_d2):
    """Scatter undirected edges into both endpoint rows; self entries first."""
    N = indptr.shape[0] - 1
    cursor = indptr[:N].copy()
    for i in range(N):
        p = cursor[i]
        out_idx[p] = i
        out_d2[p] = 0.0
        cursor[i] = p + 1
    for e in range(ei.shape[0]):
        a = ei[e]
        b = ej[e]
        d = ed[e]
        p = cursor[a]
        out_idx[p] = b
        out_d2[p] = d
        cursor[a] = p + 1
        p = cursor[b]
        out_idx[p] = a
        out_d2[p] = d
        cursor[b] = p + 1


@njit(cache=True, nogil=True)
def csr_sort_rows(indptr, d2, idx):
    """Sort each row by (d2, index): argsort on d2, then order tie runs."""
    N = indptr.shape[0] - 1
    for r in range(N):
        lo = indptr[r]
        hi = indptr[r + 1]
        m = hi - lo
        if m < 2:
            continue
        order = np.argsort(d2[lo:hi])
        td = np.empty(m, dtype=np.float64)
        ti = np.empty(m, dtype=np.int64)
        for t in range(m):
            td[t] = d2[lo + order[t]]
            ti[t] = idx[lo + order[t]]
        s = 0
        while s < m:
            e = s + 1
            while e < m and td[e] == td[s]:
                e += 1
            for a in range(s + 1, e):
                key = ti[a]
                b = a - 1
                while b >= s and ti[b] > key:
                    ti[b + 1] = ti[b]
                    b -= 1
                ti[b + 1] = key
            s = e
        for t in range(m):
            d2[lo + t] = td[t]
            idx[lo + t] = ti[t]


@njit(cache=True, nogil=True)
def csr_level_counts(indptr, d2, r2_levels):
    """Per point and per threshold level, count entries with d2 < r2."""
    N = indptr.shape[0] - 1
    L = r2_levels.shape[0]
    counts = np.empty((L, N), dtype=np.int64)
    for r in range(N):
        lo = indptr[r]
        hi = indptr[r + 1]
        row = d2[lo:hi]
        for l in range(L):
            counts[l, r] = np.searchsorted(row, r2_levels[l], side="left")
    return counts


# ---------------------------------------------------------------------------
# bitmap sampling with predicted distances


@njit(cache=True, nogil=True)
def _clear_entries(bitmaps, seg_from, nseg, seg_level_rows, level_counts, indptr, nbr_idx, point):
    base = indptr[point]
    for l in range(seg_from, nseg):
        c = level_counts[seg_level_rows[l], point]
        for u in range(c):
            bitmaps[l, nbr_idx[base + u]] = 0
        bitmaps[l, point] = 0


@njit(cache=True, nogil=True)
def sample_predicted(
    indptr,
    nbr_idx,
    level_counts,
    seg_level_rows,
    boundaries,
    prefix_idx,
    n_total,
    N,
    state,
    pick_lowest,
):
    """Bitmap-driven sampling (one bitmap per segment, bits only flip 1->0).

    Picks are seeded-random among set bits via a lazily compacted candidate
    pool; a pick clears its exclusion entries in the current and all later
    segment bitmaps so transitions stay consistent.  Returns the index
    buffer, the count reached, whether the final segment was exhausted,
    how many segment pools were entered, and the advanced rng state.
    """
    nseg = boundaries.shape[0]
    bitmaps = np.ones((nseg, N), dtype=np.uint8)
    k0 = prefix_idx.shape[0]
    for t in range(k0):
        _clear_entries(bitmaps, 0, nseg, seg_level_rows, level_counts, indptr, nbr_idx, prefix_idx[t])

    out = np.full(n_total, -1, dtype=np.int64)
    for t in range(k0):
        out[t] = prefix_idx[t]

    pool = np.empty(N, dtype=np.int64)
    pool_len = 0
    scan_hint = 0

    i = k0
    seg = 0
    while seg < nseg and i >= boundaries[seg]:
        seg += 1
    if seg >= nseg:
        return out, k0, True, 0, state

    # build pool for current segment
    pool_len = 0
    for j in range(N):
        if bitmaps[seg, j] == 1:
            pool[pool_len] = j
            pool_len += 1
    scan_hint = 0
    entered = 1
    exhausted = False

    while i < n_total:
        if i >= boundaries[seg]:
            while i >= boundaries[seg]:
                seg += 1
            pool_len = 0
            for j in range(N):
                if bitmaps[seg, j] == 1:
                    pool[pool_len] = j
                    pool_len += 1
            scan_hint = 0
            entered += 1

        picked = -1
        if pick_lowest:
            for j in range(scan_hint, N):
                if bitmaps[seg, j] == 1:
                    picked = j
                    scan_hint = j + 1
                    break
        else:
            # stale entries (bits already cleared) are discarded on contact,
            # so each pool slot is touched at most once per segment
            while pool_len > 0:
                state, zv = _sm64(state)
                pos = zv % np.uint64(pool_len)
                cand = pool[pos]
                pool[pos] = pool[pool_len - 1]
                pool_len -= 1
                if bitmaps[seg, cand] == 1:
                    picked = cand
                    break

        if picked < 0:
            seg += 1
            if seg >= nseg:
                exhausted = True
                break
            pool_len = 0
            for j in range(N):
                if bitmaps[seg, j] == 1:
                    pool[pool_len] = j
                    pool_len += 1
            scan_hint = 0
            entered += 1
            continue

        out[i] = picked
        _clear_entries(bitmaps, seg, nseg, seg_level_rows, level_counts, indptr, nbr_idx, picked)
        i += 1

    return out, i, exhausted, entered, state


@njit(cache=True, nogil=True)
def earlyterm_scan(indptr, nbr_idx, d2, lvl1_counts, taken, md, lo, hi):
    """Seed FPS min-distances from stored level-1 entries of sampled points."""
    for i in range(lo, hi):
        base = indptr[i]
        c = lvl1_counts[i]
        best = md[i]
        for u in range(c):
            j = nbr_idx[base + u]
            if taken[j] == 1 and d2[base + u] < best:
                best = d2[base + u]
        md[i] = best
