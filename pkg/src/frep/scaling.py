"""Invariant-measure estimates on Y, the Darling-Kac normalizing sequence and
its regular-variation fit, the scaling function gamma, the excursion integral
and wandering rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .chain import (
    darling_kac_kernel,
    kernel_seed,
    rng_stream,
    run_chunked,
    table_args,
    occupation_kernel,
    wandering_kernel,
)
from .lsv import BoundaryTable, MapParams

BURN_IN = 10_000
BATCHES = 20
MIN_R2 = 0.99


class FitRejected(RuntimeError):
    """Regular-variation fit of a_n is too poor to be trusted."""


@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    std_error: float
    n_steps: int


@dataclass(frozen=True)
class ScalingModel:
    """a(n) = c n^alpha, or exp(log c + A log n + B log log n) when log_correction.

    ``alpha`` is the index used by gamma_scale; ``alpha_hat`` is the free fit.
    """

    c: float
    alpha_hat: float
    log_correction: bool = False
    alpha: float | None = None
    coef: tuple = ()
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.alpha_hat)

    def a(self, n):
        n = np.asarray(n, dtype=float)
        if self.log_correction:
            A, B = self.coef
            return self.c * n**A * np.log(n) ** B
        return self.c * n**self.alpha


def _check_sets(sets):
    out = []
    for lo, hi in sets:
        if not (0.5 <= lo <= hi <= 1.0):
            raise ValueError(f"set [{lo}, {hi}] is not inside Y = [1/2, 1]")
        out.append((float(lo), float(hi)))
    return out


def occupation_batches(
    params: MapParams,
    table: BoundaryTable,
    sets,
    chain_length: int,
    seed: int,
    burn_in: int = BURN_IN,
    batches: int = BATCHES,
    workers: int = 1,
) -> tuple[np.ndarray, int]:
    """Per-batch occupation fractions (batches x sets) and steps per batch.

    Each batch is an independent chain from a uniform start on Y with its own
    burn-in.
    """
    sets = _check_sets(sets)
    if chain_length < 10 * burn_in:
        raise ValueError(f"chain_length {chain_length} < 10 x burn-in {burn_in}")
    lo = np.array([s[0] for s in sets])
    hi = np.array([s[1] for s in sets])
    per = chain_length // batches
    args = table_args(params, table)

    def work(j, _a, _b):
        rng = rng_stream(seed, 0, j)
        counts, _ = occupation_kernel(0.5 + 0.5 * rng.random(), burn_in, per, lo, hi, *args, kernel_seed(seed, 1, j))
        return counts

    counts = np.array(run_chunked(work, batches, workers, chunk=1))
    return counts / per, per


def estimate_induced_measure(
    params: MapParams,
    table: BoundaryTable,
    sets,
    chain_length: int,
    seed: int,
    burn_in: int = BURN_IN,
    batches: int = BATCHES,
    workers: int = 1,
) -> list[MeasureEstimate]:
    """Occupation fractions of the induced chain; mu(Y) = 1 so these are mu(A),
    with batch-means standard errors."""
    sets = _check_sets(sets)
    frac, per = occupation_batches(params, table, sets, chain_length, seed, burn_in, batches, workers)
    out = []
    for j, (a, b) in enumerate(sets):
        if a == 0.5 and b == 1.0:
            out.append(MeasureEstimate(1.0, 0.0, per * batches))
            continue
        se = float(frac[:, j].std(ddof=1) / math.sqrt(batches))
        out.append(MeasureEstimate(float(frac[:, j].mean()), se, per * batches))
    return out


def darling_kac_means(
    params: MapParams, table: BoundaryTable, n_grid, trials: int, seed: int, workers: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of S_n 1_Y over Lebesgue-uniform starts on Y."""
    n_grid = np.sort(np.asarray(n_grid, dtype=float))
    args = table_args(params, table)

    def work(j, a, b):
        y0 = 0.5 + 0.5 * rng_stream(seed, 2, j).random(b - a)
        return darling_kac_kernel(y0, n_grid, *args)

    S = np.vstack(run_chunked(work, trials, workers))
    return S.mean(axis=0), S.std(axis=0, ddof=1) / math.sqrt(trials)


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return coef, r2, resid


def fit_scaling(n_grid, a_hat, p: float, fix_alpha: bool = True, min_r2: float = MIN_R2) -> ScalingModel:
    """Regular-variation fit of a(n) from Darling-Kac means.

    alpha_hat comes from a free log-log fit. For p > 1 the constant used by
    gamma_scale is fitted with the index fixed at 1/p (``fix_alpha``), which
    removes most of the fit's constant error. For p = 1 the model is
    log a = log c + A log n + B log log n.
    """
    n = np.asarray(n_grid, dtype=float)
    a = np.asarray(a_hat, dtype=float)
    if n.size < 3 or n.max() / n.min() < 100 - 1e-9:
        raise ValueError("n_grid must span at least two decades with >= 3 points")
    if np.any(a <= 0):
        raise ValueError("a_hat must be positive")
    ln, la = np.log(n), np.log(a)
    X = np.column_stack([np.ones_like(ln), ln])
    (b0, alpha_hat), r2, _ = _lstsq(X, la)
    diag = {"r2_power": r2, "n_min": float(n.min()), "n_max": float(n.max())}
    if p == 1.0:
        X3 = np.column_stack([np.ones_like(ln), ln, np.log(ln)])
        (lc, A, B), r2l, _ = _lstsq(X3, la)
        # a_n ∝ n / log n, i.e. the fit with A = 1, B = -1
        k = float(np.mean(la - ln + np.log(ln)))
        pred = k + ln - np.log(ln)
        r2_form = 1.0 - float(np.sum((la - pred) ** 2)) / float(np.sum((la - la.mean()) ** 2))
        diag.update(r2=r2l, r2_n_over_log=r2_form, c_n_over_log=math.exp(k), A=A, B=B)
        if r2l < min_r2:
            raise FitRejected(f"log-corrected fit R^2 = {r2l:.4f} < {min_r2}")
        return ScalingModel(math.exp(lc), float(min(alpha_hat, 1.0)), True, 1.0, (float(A), float(B)), diag)
    diag["r2"] = r2
    if r2 < min_r2:
        raise FitRejected(f"power-law fit R^2 = {r2:.4f} < {min_r2}")
    if fix_alpha:
        alpha = 1.0 / p
        c = float(np.exp(np.mean(la - alpha * ln)))
        diag["c_free"] = math.exp(b0)
    else:
        alpha, c = float(alpha_hat), math.exp(b0)
    return ScalingModel(c, float(alpha_hat), False, alpha, (), diag)


def estimate_normalizing_sequence(
    params: MapParams,
    table: BoundaryTable,
    n_grid,
    trials: int,
    seed: int,
    workers: int = 1,
    fix_alpha: bool = True,
) -> ScalingModel:
    """Darling-Kac estimate of a_n and its fit; the diagnostics include the
    half-grid alpha_hat difference and the raw means."""
    n_grid = np.sort(np.asarray(n_grid, dtype=float))
    means, se = darling_kac_means(params, table, n_grid, trials, seed, workers)
    model = fit_scaling(n_grid, means, params.p, fix_alpha)
    ln, la = np.log(n_grid), np.log(means)
    halves = []
    for idx in (slice(0, None, 2), slice(1, None, 2)):
        if ln[idx].size >= 2:
            halves.append(np.polyfit(ln[idx], la[idx], 1)[0])
    d = model.diagnostics
    d["half_grid_alpha_gap"] = float(abs(halves[0] - halves[1])) if len(halves) == 2 else float("nan")
    d["a_hat"] = means.tolist()
    d["a_se"] = se.tolist()
    d["n_grid"] = n_grid.tolist()
    d["trials"] = int(trials)
    return model


def gamma_scale(model: ScalingModel, s):
    """gamma(s) = 1/b(1/s) with b the inverse of the fitted a."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise ValueError("s must be > 0")
    if not model.log_correction:
        return (model.c * s_arr) ** (1.0 / model.alpha)
    out = np.vectorize(lambda v: 1.0 / _invert_a(model, 1.0 / v))(s_arr)
    return out if out.ndim else float(out)


def _invert_a(model: ScalingModel, target: float) -> float:
    """n with a(n) = target on the increasing branch (log n > e-ish region)."""
    A, B = model.coef
    lc = math.log(model.c)

    def f(x):  # x = log n
        return lc + A * x + B * math.log(x) - math.log(target)

    # a is increasing in log n once A x + B log x is, i.e. x > -B/A
    lo = max(1.0, -B / A * 1.01 if A > 0 and B < 0 else 1.0)
    hi = lo + 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e4:
            raise ValueError("a(n) cannot reach the requested level")
    if f(lo) > 0:
        return math.exp(lo)
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14))


def _lower_gap(x: float, p: float, a: float) -> float:
    """x - T_1^{-1}(x) without cancellation: solve d = a (x - d)^(p+1)."""
    d = a * x ** (p + 1)
    d = min(d, 0.5 * x)
    for _ in range(100):
        g = d - a * (x - d) ** (p + 1)
        dg = 1.0 + a * (p + 1) * (x - d) ** p
        nd = d - g / dg
        if nd <= 0:
            nd = 0.5 * d
        if abs(nd - d) <= 1e-16 * d:
            return nd
        d = nd
    return d


def excursion_integral(params: MapParams, eta: float) -> float:
    """I(eta) = int_eta^1 dx / (x - T_1^{-1}(x)).

    With u = x^{-p} the integrand is bounded and tends to 1/(p 2^p); that
    constant is integrated exactly and the remainder in log u.
    """
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    p, a = params.p, params.a
    lim = 1.0 / (p * a)

    def g(u):
        x = u ** (-1.0 / p)
        return (x ** (p + 1) / p) / _lower_gap(x, p, a)

    U = eta ** (-p)
    L = math.log(U)
    cuts = [c for c in np.arange(1.0, L, 2.0)] if L > 2 else []
    rem, _ = integrate.quad(
        lambda v: (g(math.exp(v)) - lim) * math.exp(v), 0.0, L, points=cuts or None, limit=500, epsabs=1e-13 * lim * U, epsrel=1e-11
    )
    return lim * (U - 1.0) + rem


@dataclass(frozen=True)
class WanderingStats:
    n: np.ndarray
    w: np.ndarray
    w_se: np.ndarray
    mean_hitting: float | None
    hitting_se: float | None
    n_steps: int


def wandering_stats(
    params: MapParams,
    table: BoundaryTable,
    n,
    trials: int,
    seed: int,
    hit_depth: int | None = None,
    burn_in: int = BURN_IN,
    batches: int = BATCHES,
    workers: int = 1,
) -> WanderingStats:
    """w_n = E_{mu_Y}[min(r_Y, n)] over ``trials`` induced steps (mu(Y) = 1).

    With ``hit_depth`` (default for p = 1: max n) also the mean first-entrance
    time to [0, c_depth] along the chain.
    """
    n_arr = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(n_arr < 1):
        raise ValueError("n must be >= 1")
    if hit_depth is None and params.p == 1.0:
        hit_depth = int(n_arr.max())
    e_hi = (1.0 + table.c(hit_depth)) / 2.0 if hit_depth else -1.0
    per = max(trials // batches, 1)
    args = table_args(params, table)

    def work(j, _a, _b):
        rng = rng_stream(seed, 3, j)
        return wandering_kernel(0.5 + 0.5 * rng.random(), burn_in, per, n_arr, e_hi, *args, kernel_seed(seed, 4, j))

    res = run_chunked(work, batches, workers, chunk=1)
    w_b = np.array([r[0] / r[1] for r in res])
    w = w_b.mean(axis=0)
    w_se = w_b.std(axis=0, ddof=1) / math.sqrt(batches)
    mh = hs = None
    if hit_depth:
        hb = np.array([r[2] / r[3] if r[3] > 0 else np.nan for r in res])
        mh = float(np.nanmean(hb))
        hs = float(np.nanstd(hb, ddof=1) / math.sqrt(np.sum(~np.isnan(hb))))
    return WanderingStats(n_arr, w, w_se, mh, hs, per * batches)


__all__ = [
    "BURN_IN",
    "BATCHES",
    "FitRejected",
    "MeasureEstimate",
    "ScalingModel",
    "occupation_batches",
    "estimate_induced_measure",
    "darling_kac_means",
    "fit_scaling",
    "estimate_normalizing_sequence",
    "gamma_scale",
    "excursion_integral",
    "WanderingStats",
    "wandering_stats",
]
