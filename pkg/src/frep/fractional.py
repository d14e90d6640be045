"""Riemann-Liouville integrals and Caputo derivatives by product integration,
the hitting-from-return transform and residuals of the fixed-point and
Kolmogorov-Feller equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .laws import LawSpec, renewal_event_times, sample_waiting


@dataclass(frozen=True)
class GridFunction:
    """Piecewise-linear function given by its values on an increasing grid from 0."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must start at 0 and be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)

    def is_cdf(self, tol: float = 1e-12) -> bool:
        v = self.values
        return bool(np.all(v >= -tol) and np.all(v <= 1 + tol) and np.all(np.diff(v) >= -tol))


def _rl_weights(x: np.ndarray, t: float, beta: float):
    """Moments of (t - x)^(beta-1) on each piece [x_j, x_{j+1}] within [0, t].

    Returns (A_j, B_j) with A_j = int (t-x)^(beta-1) dx and
    B_j = int (x - x_j)(t-x)^(beta-1) dx over the clipped piece.
    """
    a = x[:-1]
    b = np.minimum(x[1:], t)
    live = a < t
    a = a[live]
    b = b[live]
    ta = t - a
    tb = t - b
    A = (ta**beta - tb**beta) / beta
    C = (ta ** (beta + 1) - tb ** (beta + 1)) / (beta + 1)
    B = ta * A - C
    return live, A, B


def _rl_apply(grid: np.ndarray, values: np.ndarray, slopes: np.ndarray, beta: float, t_eval) -> np.ndarray:
    out = np.empty(len(t_eval))
    g = math.gamma(beta)
    for i, t in enumerate(t_eval):
        if t <= 0.0:
            out[i] = 0.0
            continue
        live, A, B = _rl_weights(grid, t, beta)
        out[i] = (np.dot(values[:-1][live], A) + np.dot(slopes[live], B)) / g
    return out


def rl_integral(f: GridFunction, beta: float, t_eval=None) -> GridFunction:
    """(I^beta f)(t) = 1/Gamma(beta) int_0^t f(x) (t-x)^(beta-1) dx.

    f is taken piecewise linear on its grid and the kernel is integrated
    exactly on every piece; beyond the last grid point f is held constant.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    t_eval = f.grid if t_eval is None else np.asarray(t_eval, dtype=float)
    grid, vals = f.grid, f.values
    if t_eval[-1] > grid[-1]:
        grid = np.append(grid, t_eval[-1])
        vals = np.append(vals, vals[-1])
    slopes = np.diff(vals) / np.diff(grid)
    out = _rl_apply(grid, vals, slopes, beta, t_eval)
    return GridFunction(_as_grid(t_eval), out)


def _as_grid(t):
    t = np.asarray(t, dtype=float)
    if t[0] != 0.0:
        raise ValueError("evaluation grid must start at 0")
    return t


def caputo_derivative(f: GridFunction, alpha: float, t_eval=None) -> GridFunction:
    """I^(1-alpha) f' with f' piecewise constant."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    t_eval = f.grid if t_eval is None else np.asarray(t_eval, dtype=float)
    beta = 1.0 - alpha
    slopes = np.diff(f.values) / np.diff(f.grid)
    out = _rl_apply(f.grid, np.append(slopes, 0.0), np.zeros_like(slopes), beta, t_eval)
    return GridFunction(_as_grid(t_eval), out)


def hitting_from_return(ftilde_prev: GridFunction | None, ftilde: GridFunction, alpha: float) -> GridFunction:
    """Hitting-time CDF slice from return-time CDF slices.

    F^[d](t, t+s_2, ...) = alpha int_0^t (F~^[d-1](x+s_2, ...) - F~^[d](x, x+s_2, ...)) (t-x)^(alpha-1) dx,
    with both slices given as functions of x; ``ftilde_prev=None`` means F~^[0] = 1.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if not ftilde.is_cdf(1e-9):
        raise ValueError("return-time slice is not a CDF")
    prev = np.ones_like(ftilde.values) if ftilde_prev is None else ftilde_prev(ftilde.grid)
    if ftilde_prev is not None and not ftilde_prev.is_cdf(1e-9):
        raise ValueError("return-time slice is not a CDF")
    g = GridFunction(ftilde.grid, prev - ftilde.values)
    out = rl_integral(g, alpha)
    return GridFunction(out.grid, math.gamma(1.0 + alpha) * out.values)


def _empirical_cdf(x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    xs = np.sort(x)
    return np.searchsorted(xs, grid, side="right") / xs.size


def fixed_point_residual(
    alpha: float,
    theta: float,
    d: int,
    grid,
    law: LawSpec | None = None,
    method: str = "auto",
    trials: int = 10**6,
    rng: np.random.Generator | None = None,
    s2: float = 0.5,
) -> float:
    """max |lhs - rhs| of the compound fixed-point equation on a grid.

    F~^[d](t, ...) = (1-theta) F~^[d-1](t_2, ...)
                     + theta alpha int_0^t (F~^[d-1](x+s_2, ...) - F~^[d](x, x+s_2, ...)) (t-x)^(alpha-1) dx

    evaluated for the renewal process of W_{alpha,theta}(theta Gamma(1+alpha)),
    or for ``law`` (a single-wait law used for all waits) when given.
    d = 2 uses the diagonal slice t_2 = t + s2.
    """
    grid = _as_grid(grid)
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    lam = theta * math.gamma(1.0 + alpha)
    if law is None:
        law = LawSpec("W_mix", alpha, lam, theta)
    if method == "auto":
        method = "analytic" if (d == 1 and law.has_cdf) else "mc"
    if method == "analytic" and d == 1:
        F1 = law.cdf(grid)
        lhs = F1
        rhs_int = hitting_from_return(None, GridFunction(grid, F1), alpha).values
        rhs = (1.0 - theta) + theta * rhs_int
        return float(np.max(np.abs(lhs - rhs)))
    rng = rng or np.random.default_rng(0)
    waits = _sample_law(law, rng, (trials, 2))
    T = np.cumsum(waits, axis=1)
    if d == 1:
        F1 = _empirical_cdf(T[:, 0], grid)
        rhs = (1.0 - theta) + theta * hitting_from_return(None, GridFunction(grid, F1), alpha).values
        return float(np.max(np.abs(F1 - rhs)))
    # diagonal slice (x, x + s2)
    F1_shift = _empirical_cdf(T[:, 0], grid + s2)
    F2 = _joint_cdf_diag(T[:, 0], T[:, 1], grid, s2)
    integral = hitting_from_return(GridFunction(grid, F1_shift), GridFunction(grid, F2), alpha).values
    lhs = F2
    rhs = (1.0 - theta) * _empirical_cdf(T[:, 0], grid + s2) + theta * integral
    return float(np.max(np.abs(lhs - rhs)))


def _sample_law(law: LawSpec, rng, shape):
    n = int(np.prod(shape))
    if law.tag in ("Exp", "PPP"):
        w = rng.exponential(1.0 / law.lam, n)
    elif law.tag in ("ML_H", "FPP", "CFPP"):
        w = sample_waiting(law.alpha, law.lam, 1.0, rng, n)
    elif law.tag in ("W_mix", "RPP_W"):
        w = sample_waiting(law.alpha, law.lam, law.theta, rng, n)
    else:
        raise ValueError(f"no sampler for {law.tag}")
    return w.reshape(shape)


def _joint_cdf_diag(t1: np.ndarray, t2: np.ndarray, grid: np.ndarray, s2: float) -> np.ndarray:
    """P(T1 <= x, T2 <= x + s2) on the grid."""
    # T1 <= T2, so the event is {max(T1, T2 - s2) <= x}
    return _empirical_cdf(np.maximum(t1, t2 - s2), grid)


def count_probabilities(event_times: np.ndarray, t_grid, d_max: int) -> np.ndarray:
    """P(N[0,t] = d) for d = 0..d_max from per-trial sorted event times (trials, >= d_max+1)."""
    t_grid = np.asarray(t_grid, dtype=float)
    if event_times.shape[1] < d_max + 1:
        raise ValueError("need at least d_max + 1 event times per trial")
    # P(N >= d) = P(T_d <= t)
    ge = [np.ones_like(t_grid)]
    for d in range(1, d_max + 2):
        ge.append(_empirical_cdf(event_times[:, d - 1], t_grid))
    ge = np.array(ge)
    return ge[:-1] - ge[1:]


def _kf_from_probs(P: np.ndarray, t_grid: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    d_max = P.shape[0] - 1
    res = np.empty_like(P)
    for d in range(d_max + 1):
        prev = P[d - 1] if d >= 1 else np.zeros_like(P[d])
        integ = rl_integral(GridFunction(t_grid, prev - P[d]), alpha).values
        p0 = 1.0 if d == 0 else 0.0
        res[d] = P[d] - p0 - lam * integ
    return res


def kf_residual(counts, t_grid, alpha: float, lam: float, d_max: int) -> float:
    """max_{d <= d_max, t} |P(d,t) - P(d,0) - lam I^alpha(P(d-1,.) - P(d,.))(t)|.

    ``counts`` is an array (trials, len(t_grid)) of N[0,t].
    """
    t_grid = _as_grid(t_grid)
    counts = np.asarray(counts)
    P = np.array([(counts == d).mean(axis=0) for d in range(d_max + 1)])
    return float(np.max(np.abs(_kf_from_probs(P, t_grid, alpha, lam))))


def kf_residual_from_times(
    event_times: np.ndarray, t_grid, alpha: float, lam: float, d_max: int, batches: int = 20
) -> tuple[float, float]:
    """kf_residual computed from event times; also returns the largest batch-means SE."""
    t_grid = _as_grid(t_grid)
    P = count_probabilities(event_times, t_grid, d_max)
    res = _kf_from_probs(P, t_grid, alpha, lam)
    parts = np.array_split(np.arange(event_times.shape[0]), batches)
    br = np.array(
        [_kf_from_probs(count_probabilities(event_times[idx], t_grid, d_max), t_grid, alpha, lam) for idx in parts]
    )
    se = br.std(axis=0, ddof=1) / math.sqrt(batches)
    return float(np.max(np.abs(res))), float(np.max(se))


def simulate_fpp_times(alpha: float, lam: float, trials: int, n_events: int, rng) -> np.ndarray:
    """Event times of FPP_alpha(lam) (PPP when alpha = 1), shape (trials, n_events)."""
    tag = "PPP" if alpha == 1.0 else "FPP"
    return renewal_event_times(LawSpec(tag, alpha, lam), trials, n_events, rng)


__all__ = [
    "GridFunction",
    "rl_integral",
    "caputo_derivative",
    "hitting_from_return",
    "fixed_point_residual",
    "count_probabilities",
    "kf_residual",
    "kf_residual_from_times",
    "simulate_fpp_times",
]

