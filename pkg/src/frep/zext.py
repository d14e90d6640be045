"""Z-extension of a Bernoulli shift by a lazy nearest-neighbour walk.

States are (omega, a) with i.i.d. steps omega_k in {-1, 0, 1} and level a;
the map shifts omega and adds omega_0 to a. The target is a length-m cylinder
of steps at level 0. Away from level 0 the walk is skipped forward by exact
first-passage draws, so only zero visits cost work.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .chain import rng_stream, run_chunked
from .laws import LawSpec, distribution_distance
from .scaling import ScalingModel, gamma_scale

#: Size of the exact first-passage table; beyond it the k^{-3/2} tail is used.
FP_TABLE = 1 << 20
ZEXT_SCHEMA = "frep-report-v1"


@dataclass(frozen=True)
class StepLaw:
    """P(0) = q0 and P(+1) = P(-1) = (1 - q0)/2."""

    q0: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.q0 < 1.0):
            raise ValueError("q0 must lie in [0, 1)")

    @property
    def b(self) -> float:
        return 0.5 * (1.0 - self.q0)

    @property
    def variance(self) -> float:
        return 1.0 - self.q0

    def mass(self, s: int) -> float:
        return self.q0 if s == 0 else self.b

    def cylinder_measure(self, pattern) -> float:
        return float(np.prod([self.mass(int(s)) for s in pattern]))


def zext_scaling(law: StepLaw) -> ScalingModel:
    """a_n ~ sqrt(2n / (pi sigma^2)), so gamma(s) = 2 s^2 / (pi sigma^2)."""
    return ScalingModel(math.sqrt(2.0 / (math.pi * law.variance)), 0.5, False, 0.5)


@lru_cache(maxsize=8)
def first_passage_table(q0: float, K: int = FP_TABLE) -> tuple[np.ndarray, float]:
    """CDF of the first-passage time from 1 to 0 on 1..K, and the tail constant.

    The generating function is F(z) = (1 - q0 z - sqrt(Q(z))) / (2 b z) with
    Q(z) = (1 - q0 z)^2 - 4 b^2 z^2; the coefficients of sqrt(Q) follow from
    Q g' = Q' g / 2, a two-term recurrence.
    """
    law = StepLaw(q0)
    b = law.b
    q1 = -2.0 * q0
    q2 = q0 * q0 - 4.0 * b * b
    g = np.empty(K + 2)
    g[0] = 1.0
    g[1] = 0.5 * q1
    for n in range(1, K + 1):
        g[n + 1] = ((0.5 - n) * q1 * g[n] + (2.0 - n) * q2 * g[n - 1]) / (n + 1)
    pk = -g[2 : K + 2] / (2.0 * b)  # P(T = k), k = 1..K
    cdf = np.cumsum(pk)
    tail = 1.0 - cdf[-1]
    return cdf, tail


@njit(cache=True)
def _fp_draw(cdf, tail_K, K):
    u = np.random.random()
    if u < tail_K:
        # P(T > k) ~ tail_K sqrt(K / k)
        return math.floor(K * (tail_K / u) ** 2) + 1.0
    v = 1.0 - u
    lo, hi = 0, K - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo + 1.0


@njit(cache=True)
def _draw_step(q0):
    u = np.random.random()
    if u < q0:
        return 0
    return 1 if u < q0 + 0.5 * (1.0 - q0) else -1


@njit(cache=True)
def zext_kernel(seed, trials, pattern, q0, horizon, n_buf, start_in_target, cdf, tail_K):
    """Event times (trials x n_buf, inf if absent) of visits to [pattern] x {0}.

    A visit at time k means level 0 at k and steps k..k+m-1 equal to pattern.
    Steps are drawn lazily into a look-ahead buffer; with an empty buffer and
    a nonzero level the clock jumps by |level| first-passage draws.
    """
    np.random.seed(seed)
    m = pattern.shape[0]
    K = cdf.shape[0]
    out = np.full((trials, n_buf), np.inf)
    buf = np.empty(m + 1, dtype=np.int64)
    for i in range(trials):
        nbuf = 0
        if start_in_target:
            for j in range(m):
                buf[j] = pattern[j]
            nbuf = m
        else:
            # stationary-start surrogate: level 0, fresh steps
            nbuf = 0
        level = 0
        clock = 0.0
        ne = 0
        first = True
        while clock <= horizon and ne < n_buf:
            if level == 0 and not first:
                while nbuf < m:
                    buf[nbuf] = _draw_step(q0)
                    nbuf += 1
                hit = True
                for j in range(m):
                    if buf[j] != pattern[j]:
                        hit = False
                        break
                if hit:
                    out[i, ne] = clock
                    ne += 1
                    if ne >= n_buf:
                        break
            first = False
            if nbuf > 0:
                s = buf[0]
                for j in range(nbuf - 1):
                    buf[j] = buf[j + 1]
                nbuf -= 1
                level += s
                clock += 1.0
            elif level == 0:
                s = _draw_step(q0)
                level += s
                clock += 1.0
            else:
                n = abs(level)
                for _ in range(n):
                    clock += _fp_draw(cdf, tail_K, K)
                    if clock > horizon:
                        break
                level = 0
        for j in range(ne):
            if out[i, j] > horizon:
                out[i, j] = np.inf
    return out


@njit(cache=True)
def zero_return_kernel(seed, trials, q0, cdf, tail_K):
    """First return time to level 0 from level 0 (the first step is drawn)."""
    np.random.seed(seed)
    K = cdf.shape[0]
    out = np.empty(trials)
    for i in range(trials):
        s = _draw_step(q0)
        if s == 0:
            out[i] = 1.0
        else:
            out[i] = 1.0 + _fp_draw(cdf, tail_K, K)
    return out


@njit(cache=True)
def wandering_kernel_z(seed, trials, q0, n_grid, cdf, tail_K):
    """Sums and sums of squares over trials of min(r_0, n) for each n in n_grid."""
    np.random.seed(seed)
    K = cdf.shape[0]
    G = n_grid.shape[0]
    sums = np.zeros(G)
    sq = np.zeros(G)
    for i in range(trials):
        s = _draw_step(q0)
        r = 1.0 if s == 0 else 1.0 + _fp_draw(cdf, tail_K, K)
        for g in range(G):
            v = min(r, n_grid[g])
            sums[g] += v
            sq[g] += v * v
    return sums, sq


@dataclass
class ZextConfig:
    pattern: tuple = (1, 1, 0, 1)
    q0: float = 0.5
    trials: int = 10**5
    horizon: float = 20.0
    d_max: int = 1
    mode: str = "return"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.pattern = tuple(int(s) for s in self.pattern)
        if any(s not in (-1, 0, 1) for s in self.pattern):
            raise ValueError("pattern steps must lie in {-1, 0, 1}")
        if self.mode not in ("return", "hitting"):
            raise ValueError("mode must be return or hitting")
        nu = StepLaw(self.q0).cylinder_measure(self.pattern)
        if nu < 1e-6:
            raise ValueError(f"cylinder measure {nu:.3g} < 1e-6: returns infeasible at this scale")


@dataclass
class ZextReport:
    config: dict
    nu: float
    gamma: float
    censored: float
    ks: float
    lt: float
    wandering: dict
    zero_tail: dict
    flags: list
    samples: dict = field(default_factory=dict, repr=False)
    runtime: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("samples", "runtime")}
        d["schema"] = ZEXT_SCHEMA
        return d

    @property
    def ok(self) -> bool:
        return not self.flags


def wandering_rate(law: StepLaw, n_grid=(1e2, 1e3, 1e4), trials: int = 4 * 10**6, seed: int = 0) -> dict:
    """w_n / (sigma sqrt(n)) for the level-0 set, against 2 sqrt(2) / sqrt(pi)."""
    cdf, tail = first_passage_table(law.q0)
    n_grid = np.asarray(n_grid, dtype=float)
    sums, sq = wandering_kernel_z(seed & 0xFFFFFFFF, trials, law.q0, n_grid, cdf, tail)
    w = sums / trials
    se = np.sqrt((sq / trials - w**2) / trials)
    norm = math.sqrt(law.variance) * np.sqrt(n_grid)
    target = 2.0 * math.sqrt(2.0) / math.sqrt(math.pi)
    return {
        "n": n_grid.tolist(),
        "w": w.tolist(),
        "ratio": (w / norm).tolist(),
        "ratio_se": (se / norm).tolist(),
        "target": target,
        "rel_err": float(abs(w[-1] / norm[-1] / target - 1.0)),
    }


def zero_return_tail(law: StepLaw, ks, trials: int, seed: int) -> dict:
    """P(r_0 > k) sqrt(k) against sigma sqrt(2/pi)."""
    cdf, tail = first_passage_table(law.q0)
    r = zero_return_kernel(seed & 0xFFFFFFFF, trials, law.q0, cdf, tail)
    ks = np.asarray(ks, dtype=float)
    surv = np.array([np.mean(r > k) for k in ks])
    return {"k": ks.tolist(), "scaled": (surv * np.sqrt(ks)).tolist(),
            "target": math.sqrt(law.variance) * math.sqrt(2.0 / math.pi)}


def run_zext(config: ZextConfig) -> ZextReport:
    t0 = time.perf_counter()
    law = StepLaw(config.q0)
    nu = law.cylinder_measure(config.pattern)
    gamma = float(gamma_scale(zext_scaling(law), nu))
    cdf, tail = first_passage_table(law.q0)
    pat = np.array(config.pattern, dtype=np.int64)
    horizon_raw = config.horizon / gamma

    def work(j, a, b):
        seed = int(rng_stream(config.master_seed, 60, j).integers(0, 2**32 - 1))
        return zext_kernel(seed, b - a, pat, law.q0, horizon_raw, config.d_max, config.mode == "return", cdf, tail)

    ev = np.vstack(run_chunked(work, config.trials, config.workers)) * gamma
    first = ev[:, 0]
    spec = LawSpec("ML_H", 0.5, math.gamma(1.5))
    dist = distribution_distance(first, spec, horizon=config.horizon)
    censored = float(np.mean(~np.isfinite(first)))
    wand = wandering_rate(law, seed=int(rng_stream(config.master_seed, 61).integers(0, 2**32 - 1)))
    tail_chk = zero_return_tail(law, [1e2, 1e3, 1e4], 10**6, int(rng_stream(config.master_seed, 62).integers(0, 2**32 - 1)))
    flags = []
    if censored > 0.2:
        flags.append(f"censoring {censored:.3f} > 0.2")
    if dist.ks >= 0.05:
        flags.append(f"KS {dist.ks:.4f} >= 0.05")
    if wand["rel_err"] >= 0.05:
        flags.append(f"wandering rate off by {wand['rel_err']:.3f}")
    cfg = asdict(config)
    cfg["pattern"] = list(cfg["pattern"])
    return ZextReport(cfg, nu, gamma, censored, float(dist.ks), float(dist.lt), wand, tail_chk, flags,
                      samples={"events": ev, "first": first},
                      runtime={"total": time.perf_counter() - t0})


__all__ = [
    "StepLaw",
    "zext_scaling",
    "first_passage_table",
    "zext_kernel",
    "ZextConfig",
    "ZextReport",
    "run_zext",
    "wandering_rate",
    "zero_return_tail",
]
