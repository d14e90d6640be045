"""Compiled induced-chain kernels and the deterministic chunked worker pool.

Every kernel advances the first-return map to Y = [1/2, 1] with original-time
clocks. Work is cut into fixed chunks whose results are reassembled in chunk
order, so outputs do not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from .lsv import K_ITER, _step

#: Trials per work unit.
CHUNK = 512


def rng_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by (master seed, key...)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def kernel_seed(master_seed: int, *key: int) -> int:
    """32-bit seed for numba's per-thread generator, keyed like rng_stream."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint32)[0])


def run_chunked(fn, n_items: int, workers: int = 1, chunk: int = CHUNK) -> list:
    """fn(index, start, stop) over fixed chunks of range(n_items), results in chunk order."""
    bounds = [(j, i, min(i + chunk, n_items)) for j, i in enumerate(range(0, n_items, chunk))]
    if workers <= 1 or len(bounds) <= 1:
        return [fn(*b) for b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda b: fn(*b), bounds))


def table_args(params, table):
    return table.exact, params.p, params.a, table.phi_anchor


# --------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def occupation_kernel(y0, burn, n_steps, lo, hi, tab, p, a, phiK, seed):
    """Visits of the induced chain to each [lo_j, hi_j] over n_steps after burn-in.

    Returns (counts, restarts); a restart (fresh uniform point) happens only
    if the orbit lands exactly on 1/2, whose excursion never ends.
    """
    np.random.seed(seed)
    m = lo.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    restarts = 0
    y = y0
    for i in range(burn + n_steps):
        y2, r = _step(y, tab, p, a, phiK, 1e300, K_ITER)
        if y2 != y2:
            restarts += 1
            y2 = 0.5 + 0.5 * np.random.random()
        y = y2
        if i >= burn:
            for j in range(m):
                if lo[j] <= y and y <= hi[j]:
                    counts[j] += 1
    return counts, restarts


@njit(cache=True, nogil=True)
def darling_kac_kernel(y0s, n_grid, tab, p, a, phiK):
    """S_n = #{0 <= k < n : T^k y in Y} on a sorted grid of n, for each start y."""
    T = y0s.shape[0]
    G = n_grid.shape[0]
    out = np.zeros((T, G))
    n_max = n_grid[G - 1]
    for i in range(T):
        y = y0s[i]
        clock = 0.0
        visits = 0.0
        gi = 0
        while gi < G:
            while gi < G and n_grid[gi] <= clock:
                out[i, gi] = visits
                gi += 1
            if gi >= G:
                break
            visits += 1.0
            y, r = _step(y, tab, p, a, phiK, n_max - clock + 1.0, K_ITER)
            if y != y:
                break
            clock += r
        while gi < G:
            out[i, gi] = visits
            gi += 1
    return out


@njit(cache=True, nogil=True)
def wandering_kernel(y0, burn, n_steps, n_grid, e_hi, tab, p, a, phiK, seed):
    """Sums of min(r_Y, n) over a stationary stretch, and hitting-time sums for [0, c_n].

    The orbit enters [0, c_n] exactly one step after visiting
    E_n = [1/2, e_hi]; the hitting time from each chain position is the clock
    distance to the next such visit plus one. Returns
    (sum_min[G], steps, hit_sum, hit_count).
    """
    np.random.seed(seed)
    G = n_grid.shape[0]
    sums = np.zeros(G)
    y = y0
    clock = 0.0
    pend_n = 0.0
    pend_clock = 0.0
    hit_sum = 0.0
    hit_cnt = 0.0
    for i in range(burn + n_steps):
        counted = i >= burn
        if counted:
            pend_n += 1.0
            pend_clock += clock
            if y <= e_hi:
                # every pending position (including this one) hits at clock + 1
                hit_sum += pend_n * (clock + 1.0) - pend_clock
                hit_cnt += pend_n
                pend_n = 0.0
                pend_clock = 0.0
        y2, r = _step(y, tab, p, a, phiK, 1e300, K_ITER)
        if y2 != y2:
            y2 = 0.5 + 0.5 * np.random.random()
            r = 1e18
        if counted:
            for g in range(G):
                sums[g] += min(r, n_grid[g])
        y = y2
        clock += r
    return sums, n_steps, hit_sum, hit_cnt


@njit(cache=True, nogil=True)
def repp_kernel(y0s, lo, hi, horizon, merge_gap, n_buf, k_cap, tab, p, a, phiK):
    """Successive visits to [lo, hi] (inside Y) up to original time ``horizon``.

    Visits closer than ``merge_gap`` to the previous one join its cluster
    (the mark grows). Returns raw event clocks, marks, event counts, the raw
    first-return clock and a status per trial: 0 horizon reached, 1 excursion
    cap exceeded, 2 all n_buf clusters recorded and closed.
    """
    T = y0s.shape[0]
    times = np.full((T, n_buf), np.inf)
    marks = np.zeros((T, n_buf), dtype=np.int64)
    n_ev = np.zeros(T, dtype=np.int64)
    first = np.full(T, np.inf)
    status = np.zeros(T, dtype=np.int64)
    for i in range(T):
        y = y0s[i]
        clock = 0.0
        ne = 0
        last = -np.inf
        while True:
            rem = horizon - clock
            lim = min(k_cap, rem + 1.0)
            y2, r = _step(y, tab, p, a, phiK, lim, K_ITER)
            if y2 != y2:
                if k_cap < rem + 1.0:
                    status[i] = 1
                break
            clock += r
            if clock > horizon:
                break
            y = y2
            if ne == n_buf and clock - last > merge_gap:
                # the last requested cluster is complete
                status[i] = 2
                break
            if lo <= y and y <= hi:
                if first[i] == np.inf:
                    first[i] = clock
                if ne > 0 and clock - last <= merge_gap:
                    marks[i, ne - 1] += 1
                else:
                    if ne == n_buf:
                        status[i] = 2
                        break
                    times[i, ne] = clock
                    marks[i, ne] = 1
                    ne += 1
                last = clock
        n_ev[i] = ne
    return times, marks, n_ev, first, status


@njit(cache=True, nogil=True)
def tau_return_kernel(y0s, lo, hi, n, k_cap, tab, p, a, phiK):
    """Per start y in Y: tau_n = min{i >= n-1 : T^i y in Y} and the first return
    clock to [lo, hi] if it happens no later than tau_n (else inf)."""
    T = y0s.shape[0]
    tau = np.empty(T)
    fr = np.full(T, np.inf)
    for i in range(T):
        y = y0s[i]
        clock = 0.0
        ok = True
        while clock < n - 1:
            y, r = _step(y, tab, p, a, phiK, k_cap, K_ITER)
            if y != y:
                ok = False
                break
            clock += r
            if fr[i] == np.inf and lo <= y and y <= hi:
                fr[i] = clock
        tau[i] = clock if ok else np.inf
    return tau, fr


@njit(cache=True, nogil=True)
def first_return_point_kernel(y0s, lo, hi, limit, tab, p, a, phiK):
    """First entry clock and point in [lo, hi] (inf, nan when not reached by ``limit``)."""
    T = y0s.shape[0]
    clocks = np.full(T, np.inf)
    pts = np.full(T, np.nan)
    for i in range(T):
        y = y0s[i]
        clock = 0.0
        while True:
            y, r = _step(y, tab, p, a, phiK, limit - clock + 1.0, K_ITER)
            if y != y:
                break
            clock += r
            if clock > limit:
                break
            if lo <= y and y <= hi:
                clocks[i] = clock
                pts[i] = y
                break
    return clocks, pts


__all__ = [
    "CHUNK",
    "rng_stream",
    "kernel_seed",
    "run_chunked",
    "table_args",
    "occupation_kernel",
    "darling_kac_kernel",
    "wandering_kernel",
    "repp_kernel",
    "tau_return_kernel",
    "first_return_point_kernel",
]

