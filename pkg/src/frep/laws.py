"""Limit laws for rare-event point processes.

Samplers for positive stable and Mittag-Leffler (first type) laws, the
Mittag-Leffler function, renewal/compound processes, thinning, Laplace
transforms of the J-family, and empirical-vs-reference distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import mpmath
import numpy as np
from numba import njit
from scipy import integrate, interpolate, special, stats

#: s-grid for Laplace-transform distances.
LT_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
#: Switch from the power series to the integral representation of E_alpha.
ML_SWITCH = 5.0

TAGS = (
    "FPP", "CFPP", "RPP_W", "DRPP_J", "PPP",
    "ML_H", "W_mix", "J", "J_frak", "J_tilde", "Exp",
)


class RunawayError(RuntimeError):
    """Too many renewal events before the horizon."""


# --------------------------------------------------------------------------
# samplers


def sample_positive_stable(alpha: float, rng: np.random.Generator, size=None):
    """Positive alpha-stable S with E exp(-sS) = exp(-s^alpha) (Kanter's representation)."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return 1.0 if size is None else np.ones(size)
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    return (
        np.sin(alpha * u)
        / np.sin(u) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    )


def sample_waiting(alpha: float, lam: float, theta: float, rng: np.random.Generator, size=None):
    """W_{alpha,theta}(lam): 0 with probability 1-theta, else H_alpha(lam).

    H_alpha(lam) = lam^(-1/alpha) E^(1/alpha) S, with E standard exponential
    and S positive alpha-stable; theta = 1 gives H_alpha(lam).
    """
    if not (0.0 < theta <= 1.0):
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if lam <= 0:
        raise ValueError("lam must be positive")
    e = rng.standard_exponential(size)
    s = sample_positive_stable(alpha, rng, size)
    h = lam ** (-1.0 / alpha) * e ** (1.0 / alpha) * s
    if theta < 1.0:
        keep = rng.uniform(size=size) < theta
        h = np.where(keep, h, 0.0)
        if size is None:
            h = float(h)
    return h


# --------------------------------------------------------------------------
# Mittag-Leffler function


def _ml_series(alpha: float, z: float) -> float:
    if abs(z) <= 1.0:
        total, k, term = 0.0, 0, 1.0
        while abs(term) > 1e-18 or k < 3:
            term = z**k / math.gamma(alpha * k + 1.0)
            total += term
            k += 1
        return total
    # the alternating series cancels badly for small alpha: sum with enough
    # digits to cover the largest term
    big = max(k * math.log10(abs(z)) - math.lgamma(alpha * k + 1.0) / math.log(10) for k in range(2000))
    with mpmath.workdps(int(big) + 30):
        zz = mpmath.mpf(z)
        total = mpmath.mpf(0)
        k = 0
        while True:
            term = zz**k / mpmath.gamma(mpmath.mpf(alpha) * k + 1)
            total += term
            if k > 10 and abs(term) < mpmath.mpf(10) ** -30:
                break
            k += 1
        return float(total)


def _ml_integral(alpha: float, x: float) -> float:
    """E_alpha(-x), x > 0, from the completely monotone representation."""
    ca = math.cos(math.pi * alpha)
    ia = 1.0 / alpha

    def f(w):
        return math.exp(-(w**ia)) * x / (w * w + 2.0 * w * x * ca + x * x)

    # mass sits below w ~ 40^alpha (exp decay) and near w = x (denominator)
    cuts = sorted({x, 40.0**alpha})
    opts = dict(epsabs=1e-16, epsrel=1e-13, limit=400)
    total = 0.0
    lo = 0.0
    for c in cuts:
        total += integrate.quad(f, lo, c, **opts)[0]
        lo = c
    total += integrate.quad(f, lo, math.inf, **opts)[0]
    return math.sin(math.pi * alpha) / (math.pi * alpha) * total


def ml_function(alpha: float, z):
    """E_alpha(z) for z <= 0.

    Power series for |z| <= 5, integral representation beyond.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if np.ndim(z):
        return np.vectorize(lambda v: ml_function(alpha, float(v)), otypes=[float])(z)
    z = float(z)
    if z > 0.0:
        raise ValueError("only z <= 0 is supported")
    if alpha == 1.0:
        return math.exp(z)
    if -z <= ML_SWITCH:
        return _ml_series(alpha, z)
    return _ml_integral(alpha, -z)


@lru_cache(maxsize=32)
def _ml_table(alpha: float):
    lx = np.linspace(math.log(1e-12), math.log(1e12), 1601)
    vals = np.array([ml_function(alpha, -math.exp(v)) for v in lx])
    return interpolate.CubicSpline(lx, vals)


def ml_survival(alpha: float, x):
    """Vectorized E_alpha(-x) for x >= 0 (P(H_alpha > x^(1/alpha)))."""
    x = np.asarray(x, dtype=float)
    if alpha == 1.0:
        return np.exp(-x)
    if alpha == 0.5:
        return special.erfcx(x)
    spl = _ml_table(float(alpha))
    out = np.empty_like(x)
    small = x < 1e-12
    big = x > 1e12
    mid = ~(small | big)
    out[small] = 1.0 - x[small] / math.gamma(1.0 + alpha)
    xb = x[big]
    out[big] = 1.0 / (xb * math.gamma(1.0 - alpha))
    if 2.0 * alpha != 1.0 and alpha < 1.0:
        out[big] -= 1.0 / (xb * xb * math.gamma(1.0 - 2.0 * alpha))
    out[mid] = spl(np.log(x[mid]))
    return np.clip(out, 0.0, 1.0)


def ml_cdf(alpha: float, lam: float, t):
    """P(H_alpha(lam) <= t) = 1 - E_alpha(-lam t^alpha)."""
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    return 1.0 - ml_survival(alpha, lam * t**alpha)


# --------------------------------------------------------------------------
# laws and point processes


@dataclass(frozen=True)
class LawSpec:
    """Tagged limit law or point process.

    Point-process tags (FPP, CFPP, RPP_W, DRPP_J, PPP) refer, where a single
    law is needed, to the law of their first event. ``DRPP_J`` is the
    (tau, v) thinned and rescaled renewal process of J_tilde waits, delayed
    by a J_frak first wait when ``delayed``.
    """

    tag: str
    alpha: float = 1.0
    lam: float = 1.0
    theta: float = 1.0
    tau: float = 1.0
    v: float = 1.0
    delayed: bool = False

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown law tag {self.tag!r}")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if self.lam <= 0 or self.v <= 0:
            raise ValueError("lam and v must be positive")
        if not (0.0 < self.theta <= 1.0 and 0.0 < self.tau <= 1.0):
            raise ValueError("theta and tau must lie in (0, 1]")
        if self.tag in ("J", "J_frak", "J_tilde", "DRPP_J") and self.alpha >= 1.0:
            raise ValueError("the J family needs alpha < 1")

    @property
    def has_cdf(self) -> bool:
        return self.tag not in ("J", "J_frak", "J_tilde", "DRPP_J")

    def cdf(self, t):
        """CDF of the (first-event) law; W-mixture atoms are included at t = 0."""
        t = np.asarray(t, dtype=float)
        tag = self.tag
        if tag in ("Exp", "PPP"):
            return np.where(t >= 0, -np.expm1(-self.lam * np.maximum(t, 0.0)), 0.0)
        if tag in ("ML_H", "FPP", "CFPP"):
            return np.where(t >= 0, ml_cdf(self.alpha, self.lam, t), 0.0)
        if tag in ("W_mix", "RPP_W"):
            th = self.theta
            return np.where(t >= 0, 1.0 - th + th * ml_cdf(self.alpha, self.lam, t), 0.0)
        raise ValueError(f"no closed-form CDF for {tag}")

    def atom_at_zero(self) -> float:
        return 1.0 - self.theta if self.tag in ("W_mix", "RPP_W") else 0.0


@dataclass(frozen=True)
class EventSample:
    """One realization of a point process on [0, horizon]."""

    times: np.ndarray
    marks: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.marks, dtype=np.int64)
        if t.shape != m.shape:
            raise ValueError("times and marks differ in length")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > self.horizon):
            raise ValueError("times must be strictly increasing within [0, horizon]")
        if np.any(m < 1):
            raise ValueError("marks must be >= 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "marks", m)

    def count(self, t: float) -> int:
        """N[0, t] counted with multiplicity."""
        return int(self.marks[self.times <= t].sum())


def merge_zero_gaps(times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse coincident event times into single events with integer marks."""
    if times.size == 0:
        return times.astype(float), np.zeros(0, dtype=np.int64)
    u, c = np.unique(times, return_counts=True)
    return u, c.astype(np.int64)


def _wait_draw(spec: LawSpec) -> Callable:
    a, lam = spec.alpha, spec.lam
    tag = spec.tag
    if tag == "PPP":
        return lambda rng, n: rng.exponential(1.0 / lam, n)
    if tag in ("FPP", "CFPP"):
        return lambda rng, n: sample_waiting(a, lam, 1.0, rng, n)
    if tag == "RPP_W":
        return lambda rng, n: sample_waiting(a, lam, spec.theta, rng, n)
    raise ValueError(f"no renewal sampler for {tag}")


def sample_renewal_process(
    spec: LawSpec,
    horizon: float,
    rng: np.random.Generator,
    construction: str = "marks",
    max_events: int = 10**8,
) -> EventSample:
    """One trajectory on [0, horizon].

    CFPP is built either from FPP events with Geo(theta) marks
    (``construction="marks"``) or as the delayed renewal process with an
    H first wait and W_{alpha,theta} later waits, zero gaps merged into
    marks (``construction="mixture"``).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    mixture = spec.tag == "CFPP" and construction == "mixture"
    first = _wait_draw(spec)
    later = (
        (lambda r, n: sample_waiting(spec.alpha, spec.lam, spec.theta, r, n))
        if mixture
        else _wait_draw(spec)
    )
    chunks = []
    t = 0.0
    total = 0
    block = 16
    w = np.concatenate([np.atleast_1d(first(rng, 1)), later(rng, block - 1)])
    while True:
        cs = t + np.cumsum(w)
        inside = cs[cs <= horizon]
        chunks.append(inside)
        total += inside.size
        if total > max_events:
            raise RunawayError(f"more than {max_events} events before horizon {horizon}")
        if inside.size < cs.size:
            break
        t = cs[-1]
        block = min(2 * block, 1 << 20)
        w = later(rng, block)
    times = np.concatenate(chunks) if chunks else np.zeros(0)
    times, marks = merge_zero_gaps(times)
    if spec.tag == "CFPP" and not mixture:
        marks = rng.geometric(spec.theta, times.size).astype(np.int64)
    return EventSample(times, marks, float(horizon))


def renewal_counts(
    spec: LawSpec, t: float, trials: int, rng: np.random.Generator, construction: str = "marks"
) -> np.ndarray:
    """N[0, t] (with multiplicity) for many independent trajectories, vectorized."""
    mixture = spec.tag == "CFPP" and construction == "mixture"
    first = _wait_draw(spec)
    counts = np.zeros(trials, dtype=np.int64)
    clock = first(rng, trials)
    active = np.nonzero(clock <= t)[0]
    while active.size:
        if spec.tag == "CFPP" and not mixture:
            counts[active] += rng.geometric(spec.theta, active.size)
        else:
            counts[active] += 1
        if mixture:
            w = sample_waiting(spec.alpha, spec.lam, spec.theta, rng, active.size)
        else:
            w = first(rng, active.size)
        clock[active] += w
        active = active[clock[active] <= t]
    return counts


def renewal_event_times(
    spec: LawSpec, trials: int, n_events: int, rng: np.random.Generator
) -> np.ndarray:
    """First n_events event times of each trajectory, shape (trials, n_events)."""
    draw = _wait_draw(spec)
    w = draw(rng, trials * n_events).reshape(trials, n_events)
    return np.cumsum(w, axis=1)


def thin_rescale(sample: EventSample, tau: float, v: float, rng: np.random.Generator) -> EventSample:
    """Keep each event with probability tau; multiply kept times and the horizon by v."""
    if not (0.0 < tau <= 1.0) or v <= 0:
        raise ValueError("need 0 < tau <= 1 and v > 0")
    keep = rng.uniform(size=sample.times.size) < tau if tau < 1.0 else np.ones(sample.times.size, bool)
    return EventSample(sample.times[keep] * v, sample.marks[keep], sample.horizon * v)


@njit(cache=True, nogil=True)
def _bm_running_max(seed, trials, n_steps, dt):
    np.random.seed(seed)
    out = np.empty(trials)
    sd = math.sqrt(dt)
    for i in range(trials):
        b = 0.0
        m = 0.0
        for _ in range(n_steps):
            b += sd * np.random.standard_normal()
            if b > m:
                m = b
        out[i] = m
    return out


def fpp_subordinator_crosscheck(
    lam: float,
    horizon: float,
    trials: int,
    rng: np.random.Generator,
    alpha: float = 0.5,
    dt: float = 1e-4,
) -> dict:
    """Counts of N_lam(sqrt(2) max_{[0,t]} B) against renewal FPP_{1/2}(lam) counts on [0, t]."""
    if alpha != 0.5:
        raise ValueError("the Brownian running-max representation holds for alpha = 1/2 only")
    if dt > 1e-4:
        raise ValueError("dt must be <= 1e-4")
    if horizon == 0:
        z = np.zeros(trials, dtype=np.int64)
        return {"ks": 0.0, "mean_subordinator": 0.0, "mean_renewal": 0.0, "counts": (z, z)}
    n_steps = int(round(horizon / dt))
    seed = int(rng.integers(0, 2**31 - 1))
    m = _bm_running_max(seed, trials, n_steps, horizon / n_steps)
    inv_sub = math.sqrt(2.0) * m
    sub_counts = rng.poisson(lam * inv_sub)
    ren_counts = renewal_counts(LawSpec("FPP", alpha, lam), horizon, trials, rng)
    ks = two_sample_ks(sub_counts, ren_counts)
    return {
        "ks": ks,
        "mean_subordinator": float(sub_counts.mean()),
        "mean_renewal": float(ren_counts.mean()),
        "counts": (sub_counts, ren_counts),
    }


# --------------------------------------------------------------------------
# Laplace transforms


def d_alpha(alpha: float) -> float:
    """(Gamma(1+alpha) Gamma(1-alpha))^(-1/alpha)."""
    return (math.gamma(1.0 + alpha) * math.gamma(1.0 - alpha)) ** (-1.0 / alpha)


def _j_inner(alpha: float, s: float) -> float:
    # int_0^1 y^-alpha e^{-sy} dy with y = u^{1/(1-alpha)}: integrand becomes smooth
    b = 1.0 / (1.0 - alpha)
    val, _ = integrate.quad(lambda u: math.exp(-s * u**b), 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return b * val


def laplace_J(alpha: float, s: float) -> float:
    """E exp(-s J_alpha) = 1 / (e^{-s} + s int_0^1 y^{-alpha} e^{-sy} dy)."""
    if s == 0:
        return 1.0
    return 1.0 / (math.exp(-s) + s * _j_inner(alpha, s))


def reference_laplace(spec: LawSpec, s: float) -> float:
    """Laplace transform at s of the law (or first-event law) described by spec."""
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0:
        return 1.0
    a, lam, tag = spec.alpha, spec.lam, spec.tag
    if tag in ("Exp", "PPP"):
        return lam / (lam + s)
    if tag in ("ML_H", "FPP", "CFPP"):
        return lam / (lam + s**a)
    if tag in ("W_mix", "RPP_W"):
        return 1.0 - spec.theta + spec.theta * lam / (lam + s**a)
    if tag == "J":
        return laplace_J(a, s)
    if tag == "J_frak":
        return laplace_J(a, d_alpha(a) * s)
    if tag == "J_tilde":
        return 1.0 - s**a / math.gamma(1.0 + a) * laplace_J(a, d_alpha(a) * s)
    if tag == "DRPP_J":
        sv = spec.v * s
        lt_tilde = reference_laplace(LawSpec("J_tilde", a), sv)
        tau = spec.tau
        geo = tau / (1.0 - (1.0 - tau) * lt_tilde)
        head = reference_laplace(LawSpec("J_frak", a), sv) if spec.delayed else lt_tilde
        return head * geo
    raise ValueError(tag)


class LaplaceEstimate(NamedTuple):
    value: float
    std_error: float
    n: int
    n_censored: int
    censor_bias: float


def empirical_laplace(samples, s: float, horizon: float | None = None) -> LaplaceEstimate:
    """Mean of exp(-s x).

    Non-finite samples are censored: they are counted and contribute 0
    (their true contribution lies in [0, exp(-s horizon)]); the largest
    possible resulting bias is returned as ``censor_bias``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    cens = ~np.isfinite(x)
    nc = int(cens.sum())
    vals = np.where(cens, 0.0, np.exp(-s * np.where(cens, 0.0, x)))
    n = x.size
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    bias = nc / n * math.exp(-s * horizon) if (nc and horizon is not None) else (nc / n if nc else 0.0)
    return LaplaceEstimate(float(vals.mean()), se, n, nc, bias)


def empirical_laplace_joint(x1, x2, s1: float, s2: float) -> tuple[float, float, float]:
    """(E exp(-s1 X1 - s2 X2), E exp(-s1 X1) E exp(-s2 X2), SE of their difference)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    e1 = np.exp(-s1 * x1)
    e2 = np.exp(-s2 * x2)
    joint = e1 * e2
    m1, m2 = e1.mean(), e2.mean()
    # delta method on joint - m1 m2
    infl = joint - m2 * e1 - m1 * e2
    se = float(infl.std(ddof=1) / math.sqrt(x1.size))
    return float(joint.mean()), float(m1 * m2), se


def windowed_laplace_joint(first, second, horizon: float, s1: float = 1.0, s2: float = 1.0):
    """Joint-versus-product Laplace gap of two successive waits seen inside a window.

    The second wait is only observed when first + second <= horizon, which
    couples the two through censoring. Restricting to first <= horizon/2 and
    truncating second at horizon/2 makes both fully observed; conditioning on
    an event of the first wait keeps independent waits independent.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    keep = first <= 0.5 * horizon
    if keep.sum() < 2:
        return float("nan"), float("nan"), float("nan")
    x2 = np.where(second[keep] <= 0.5 * horizon, second[keep], np.inf)
    return empirical_laplace_joint(first[keep], x2, s1, s2)


# --------------------------------------------------------------------------
# distances


def ks_statistic(samples, cdf: Callable, atom0: float = 0.0, horizon: float | None = None) -> float:
    """sup_t |F_n(t) - F(t)| over t <= horizon.

    ``cdf`` must include any atom at 0 (``atom0`` is its size, so that the
    left limit at 0 is handled). Non-finite samples are censored beyond
    the horizon.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if horizon is None:
        horizon = math.inf
    fin = x[x <= horizon]
    vals, idx = np.unique(fin, return_index=True)
    if vals.size == 0:
        return float(cdf(np.array([horizon]))[0]) if math.isfinite(horizon) else 1.0
    counts_le = np.searchsorted(x, vals, side="right") / n
    counts_lt = idx / n
    F = cdf(vals)
    F_left = F.copy()
    F_left[vals == 0.0] -= atom0
    d = max(np.max(np.abs(counts_le - F)), np.max(np.abs(counts_lt - F_left)))
    if math.isfinite(horizon):
        d = max(d, abs(np.searchsorted(x, horizon, side="right") / n - float(cdf(np.array([horizon]))[0])))
    return float(d)


def two_sample_ks(a, b) -> float:
    """sup |F_a - F_b| over the pooled values (valid for discrete data)."""
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


class Distance(NamedTuple):
    ks: float | None
    lt: float
    n: int
    n_censored: int


def distribution_distance(
    samples,
    spec: LawSpec | Callable,
    horizon: float | None = None,
    s_grid=LT_GRID,
    atom0: float = 0.0,
    laplace: Callable | None = None,
) -> Distance:
    """KS distance (when a CDF exists) and max |LT_emp - LT_ref| over s_grid."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise ValueError("need at least 100 samples")
    if isinstance(spec, LawSpec):
        cdf = spec.cdf if spec.has_cdf else None
        atom0 = spec.atom_at_zero()
        laplace = laplace or (lambda s: reference_laplace(spec, s))
    else:
        cdf = spec
    ks = ks_statistic(x, cdf, atom0, horizon) if cdf is not None else None
    lt = math.nan
    if laplace is not None:
        lt = max(abs(empirical_laplace(x, s, horizon).value - laplace(s)) for s in s_grid)
    return Distance(ks, float(lt), int(x.size), int((~np.isfinite(x)).sum()))


__all__ = [
    "LT_GRID",
    "LawSpec",
    "EventSample",
    "Distance",
    "LaplaceEstimate",
    "RunawayError",
    "sample_positive_stable",
    "sample_waiting",
    "ml_function",
    "ml_survival",
    "ml_cdf",
    "merge_zero_gaps",
    "sample_renewal_process",
    "renewal_counts",
    "renewal_event_times",
    "thin_rescale",
    "fpp_subordinator_crosscheck",
    "d_alpha",
    "laplace_J",
    "reference_laplace",
    "empirical_laplace",
    "empirical_laplace_joint",
    "windowed_laplace_joint",
    "ks_statistic",
    "two_sample_ks",
    "distribution_distance",
]
