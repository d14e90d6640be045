"""The LSV map with a neutral fixed point at 0, its boundary sequence and induced map.

    T(x) = x + 2^p x^(p+1)   on [0, 1/2)
    T(x) = 2x - 1            on [1/2, 1]

Long excursions near 0 are traversed in O(1) with the conjugacy coordinate
``phi`` built on ``u = x^(-p)``, in which one lower-branch step is a shift by
``-p 2^p`` up to O(u^-4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

#: Exact lower-branch steps taken at the end of every long excursion.
K_ITER = 128
#: Default excursion cap (equivalent raw iterations).
K_CAP = 10**9


class DomainError(ValueError):
    """Argument outside the domain of a map operation."""


class ConvergenceError(RuntimeError):
    """Root finder failed; carries the last bracket."""

    def __init__(self, msg, bracket):
        super().__init__(f"{msg} (last bracket {bracket})")
        self.bracket = bracket


class ExcursionOverflow(RuntimeError):
    """An excursion longer than the configured cap."""


@dataclass(frozen=True)
class MapParams:
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p >= 1.0):
            raise DomainError(f"p must be >= 1, got {self.p}")

    @property
    def alpha(self) -> float:
        return 1.0 / self.p

    @property
    def a(self) -> float:
        return 2.0**self.p

    @property
    def shift(self) -> float:
        """Decrement of the conjugacy coordinate per lower-branch step."""
        return self.p * 2.0**self.p


# --------------------------------------------------------------------------
# scalar kernels


@njit(cache=True, inline="always")
def _pow_p1(x, p):
    # x^(p+1); integer exponents by multiplication (pow dominates the inner loop)
    if p == 2.0:
        return x * x * x
    if p == 1.0:
        return x * x
    if p == 1.5:
        return x * x * math.sqrt(x)
    return x ** (p + 1.0)


@njit(cache=True)
def _lower(x, p, a):
    return x + a * _pow_p1(x, p)


@njit(cache=True)
def _phi(u, p, a):
    # conjugacy coordinate: _phi(u(T_1 x)) = _phi(u(x)) - p a + O(u^-4)
    return (
        u
        + 0.5 * (p + 1.0) * a * math.log(u)
        + a * a * (p + 1.0) * (2.0 * p + 1.0) / (12.0 * u)
        - a**3 * (p + 1.0) ** 2 * (3.0 * p + 1.0) / (48.0 * u * u)
    )


@njit(cache=True)
def _phi_inv(target, p, a):
    b = 0.5 * (p + 1.0) * a
    u = target - b * math.log(max(target, 2.0))
    if u < 1.0:
        u = 1.0
    for _ in range(60):
        f = _phi(u, p, a) - target
        df = (
            1.0
            + b / u
            - a * a * (p + 1.0) * (2.0 * p + 1.0) / (12.0 * u * u)
            + a**3 * (p + 1.0) ** 2 * (3.0 * p + 1.0) / (24.0 * u**3)
        )
        step = f / df
        u -= step
        if abs(step) <= 1e-15 * u:
            break
    return u


@njit(cache=True)
def _inv_lower(y, p, a):
    # Newton from the right on the convex increasing x + a x^(p+1) - y;
    # bisection fallback keeps the iterate inside [lo, hi].
    if y <= 0.0:
        return 0.0, 0
    lo = 0.0
    hi = y
    x = y
    for it in range(200):
        f = x + a * _pow_p1(x, p) - y
        if f > 0.0:
            hi = x
        else:
            lo = x
        df = 1.0 + a * (p + 1.0) * x**p
        nx = x - f / df
        if not (lo <= nx <= hi):
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 1e-17 + 2e-16 * nx or hi - lo <= 1e-300:
            return nx, 0
        x = nx
    return x, 1


@njit(cache=True)
def _build_table(p, a, K):
    c = np.empty(K + 1)
    c[0] = 1.0
    c[1] = 0.5
    bad = 0
    for k in range(1, K):
        c[k + 1], err = _inv_lower(c[k], p, a)
        bad += err
    return c, bad


@njit(cache=True)
def _cell_index(x, tab, p, a, phiK):
    """Real-valued cell index: floor gives k with c_{k+1} <= x < c_k."""
    K = tab.shape[0] - 1
    if x >= tab[K]:
        lo = 0
        hi = K
        # invariant: tab[hi] <= x < tab[lo] (x < 1 required)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if tab[mid] <= x:
                hi = mid
            else:
                lo = mid
        return float(lo)
    return K + (_phi(x ** (-p), p, a) - phiK) / (p * a)


@njit(cache=True)
def _transit(w, tab, p, a, phiK, limit, kiter):
    """Lower-branch excursion from w in (0, 1/2): (exit point in Y, steps).

    When the step count would exceed ``limit`` the exit point is not computed:
    it is returned as nan together with the (possibly float-only) count.
    """
    if w <= 0.0:
        return np.nan, 1e300
    if kiter + 1 < tab.shape[0] and w >= tab[kiter + 1]:
        x = w
        n = 0.0
        while x < 0.5:
            x = x + a * _pow_p1(x, p)
            n += 1.0
        return x, n
    kf = _cell_index(w, tab, p, a, phiK)
    if not kf <= limit:
        return np.nan, kf
    k = math.floor(kf)
    target = _phi(w ** (-p), p, a) - (k - kiter) * p * a
    x = _phi_inv(target, p, a) ** (-1.0 / p)
    n = k - kiter
    while x < 0.5:
        x = x + a * _pow_p1(x, p)
        n += 1.0
    return x, n


@njit(cache=True)
def _step(y, tab, p, a, phiK, limit, kiter):
    """One induced step from y in [1/2, 1]: (next y, r_Y), nan past ``limit``."""
    w = 2.0 * y - 1.0
    if w >= 0.5:
        return w, 1.0
    x, n = _transit(w, tab, p, a, phiK, limit - 1.0, kiter)
    return x, n + 1.0


@njit(cache=True)
def _brute_exit(w, p, a, max_steps):
    x = w
    n = 0
    while x < 0.5 and n < max_steps:
        x = x + a * _pow_p1(x, p)
        n += 1
    return x, n


# --------------------------------------------------------------------------
# public API


def evaluate_map(params: MapParams, x: float) -> tuple[float, float]:
    """Value and derivative of T at x."""
    if not (math.isfinite(x) and 0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x}")
    p, a = params.p, params.a
    if x < 0.5:
        return x + a * _pow_p1(x, p), 1.0 + a * (p + 1.0) * x**p
    return 2.0 * x - 1.0, 2.0


def inverse_branch(params: MapParams, branch: str, y: float) -> float:
    """Preimage of y on the ``"lower"`` ([0, 1/2]) or ``"upper"`` ([1/2, 1]) branch."""
    if not (math.isfinite(y) and 0.0 <= y <= 1.0):
        raise DomainError(f"y must lie in [0, 1], got {y}")
    if branch == "upper":
        return 0.5 * (y + 1.0)
    if branch != "lower":
        raise ValueError(f"unknown branch {branch!r}")
    if y == 1.0:
        return 0.5
    x, err = _inv_lower(y, params.p, params.a)
    if err:
        raise ConvergenceError("lower-branch inversion did not converge", (0.0, y))
    return x


@dataclass(frozen=True)
class BoundaryTable:
    """c_0 = 1 > c_1 = 1/2 > ... > c_K with c_k = T_1^{-k}(1).

    Beyond K the cells are located by the conjugacy coordinate anchored at
    c_K. ``tail_c`` and ``tail_log`` are the fitted constants in
    c_k ~ tail_c k^-alpha (1 + tail_log log(k)/k) over the last decade.
    """

    params: MapParams
    exact: np.ndarray = field(repr=False)
    tail_c: float
    tail_log: float
    phi_anchor: float

    @property
    def K(self) -> int:
        return self.exact.shape[0] - 1

    def c(self, k: int) -> float:
        """c_k for any k >= 0 (tail from the conjugacy coordinate)."""
        if k <= self.K:
            return float(self.exact[k])
        p, a = self.params.p, self.params.a
        u = _phi_inv(self.phi_anchor + (k - self.K) * self.params.shift, p, a)
        return u ** (-1.0 / p)

    def tail_model(self, k: float) -> float:
        """Fitted regular-variation model of c_k."""
        return self.tail_c * k ** (-self.params.alpha) * (1.0 + self.tail_log * math.log(k) / k)


def build_boundary_table(params: MapParams, K: int = 100_000) -> BoundaryTable:
    if K < 2:
        raise DomainError("K must be >= 2")
    c, bad = _build_table(params.p, params.a, int(K))
    if bad:
        raise ConvergenceError("boundary table inversion failed", (0.0, 1.0))
    phi_anchor = _phi(c[-1] ** (-params.p), params.p, params.a)
    lo = max(2, K // 10)
    ks = np.arange(lo, K + 1, dtype=float)
    # c_k k^alpha = C (1 + D log k / k): linear in (1, log k / k)
    A = np.column_stack([np.ones_like(ks), np.log(ks) / ks])
    coef, *_ = np.linalg.lstsq(A, c[lo:] * ks**params.alpha, rcond=None)
    return BoundaryTable(params, c, float(coef[0]), float(coef[1] / coef[0]), float(phi_anchor))


def locate_cell(table: BoundaryTable, x: float) -> int:
    """k with c_{k+1} <= x < c_k."""
    if not (math.isfinite(x) and x > 0.0):
        raise DomainError("x must be > 0: the fixed point 0 lies in no cell")
    if x >= 1.0:
        return 0
    p = table.params
    return int(math.floor(_cell_index(x, table.exact, p.p, p.a, table.phi_anchor)))


@dataclass(frozen=True)
class InducedState:
    y: float
    clock: int = 0


def induced_step(
    params: MapParams, table: BoundaryTable, state: InducedState, k_cap: int = K_CAP
) -> tuple[InducedState, int]:
    """First return to Y = [1/2, 1]; returns the next state and r_Y."""
    if not (0.5 <= state.y <= 1.0):
        raise DomainError(f"state.y must lie in [1/2, 1], got {state.y}")
    y, r = _step(state.y, table.exact, params.p, params.a, table.phi_anchor, float(k_cap), K_ITER)
    if not math.isfinite(y):
        raise ExcursionOverflow(f"excursion of length {r:.3g} exceeds cap {k_cap}")
    r = int(r)
    return InducedState(y, state.clock + r), r


def excursion_exit(params: MapParams, table: BoundaryTable, w: float) -> tuple[float, int]:
    """Lower-branch exit point of w in (0, 1/2) and the number of steps taken."""
    if not (0.0 < w < 0.5):
        raise DomainError(f"w must lie in (0, 1/2), got {w}")
    y, n = _transit(w, table.exact, params.p, params.a, table.phi_anchor, 1e300, K_ITER)
    return y, int(n)


def brute_exit(params: MapParams, w: float, max_steps: int = 10**8) -> tuple[float, int]:
    """Raw forward iteration of the lower branch until the orbit re-enters Y."""
    x, n = _brute_exit(w, params.p, params.a, max_steps)
    return x, int(n)


def point_from_word(
    params: MapParams, word, mode: str = "finite", anchor: float = 0.0
) -> tuple[float, float]:
    """Point coded by an admissible word and the derivative of T^len along it.

    ``finite``: x = T^{-1}_{s(a_0)} ... T^{-1}_{s(a_{k-1})}(anchor), where
    s(0) is the upper branch and s(j > 0) the lower one.
    ``periodic``: the fixed point of the cyclic composition.
    """
    word = [int(s) for s in word]
    check_admissible(word, cyclic=(mode == "periodic"))
    branches = ["upper" if s == 0 else "lower" for s in word]

    def pull(x):
        for br in reversed(branches):
            x = inverse_branch(params, br, x)
        return x

    if mode == "finite":
        x = pull(anchor)
    elif mode == "periodic":
        if not word:
            raise ValueError("periodic word must be non-empty")
        x = 0.5 if word[0] == 0 else 0.25
        # iterate to a floating-point fixed point; a 1e-15 step is the hard bound
        for _ in range(10_000):
            nx = pull(x)
            if nx == x:
                break
            x = nx
        if abs(pull(x) - x) > 1e-15:
            raise AssertionError("inverse-branch cycle is not contracting")
    else:
        raise ValueError(f"unknown mode {mode!r}")

    deriv = 1.0
    z = x
    for _ in word:
        z, d = evaluate_map(params, z)
        deriv *= d
    return x, deriv


def check_admissible(word, cyclic: bool = False) -> None:
    """a_{i+1} = a_i - 1 or a_i = 0 for consecutive symbols."""
    seq = list(word)
    if any(s < 0 for s in seq):
        raise ValueError(f"negative symbol in {seq}")
    pairs = list(zip(seq, seq[1:]))
    if cyclic and seq:
        pairs.append((seq[-1], seq[0]))
    for s, t in pairs:
        if s != 0 and t != s - 1:
            raise ValueError(f"inadmissible word {seq}")
