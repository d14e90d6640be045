"""Shrinking target sets: cylinders of points, components around preimages of 0,
the escape/immediate-return split at periodic points, and the waiting time tau_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lsv import (
    BoundaryTable,
    DomainError,
    ExcursionOverflow,
    InducedState,
    K_CAP,
    MapParams,
    check_admissible,
    evaluate_map,
    excursion_exit,
    induced_step,
    inverse_branch,
    locate_cell,
    point_from_word,
)

#: Distance to a cell boundary below which an itinerary is considered ill-defined.
GRAZE_TOL = 1e-13


class OrbitHitsZero(ValueError):
    """The orbit comes within GRAZE_TOL of 0 or of a cell boundary."""


class DepthTooSmall(ValueError):
    """Target too coarse to separate the orbit of a periodic point."""


@dataclass(frozen=True)
class PointClass:
    """Metadata of the anchor point: ``generic``, ``periodic`` (with q) or ``preimage_zero`` (with k)."""

    kind: str
    x: float
    q: int | None = None
    k: int | None = None
    word: tuple = ()

    def __post_init__(self):
        if self.kind not in ("generic", "periodic", "preimage_zero"):
            raise ValueError(f"unknown point class {self.kind!r}")
        if self.kind == "periodic" and not (self.q and self.q >= 1):
            raise ValueError("periodic point needs q >= 1")
        if self.kind == "preimage_zero" and (self.k is None or self.k < 0):
            raise ValueError("preimage point needs k >= 0")


@dataclass(frozen=True)
class IntervalTarget:
    lo: float
    hi: float
    word: tuple
    depth: int
    point_class: PointClass

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError(f"bad interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def inside_Y(self) -> bool:
        return self.lo >= 0.5


@dataclass(frozen=True)
class AnnulusSplit:
    """U = B ∩ T^{-q}B (immediate return) and Q = B \\ U (escape), Q as <= 2 intervals."""

    B: IntervalTarget
    U: IntervalTarget
    Q: list = field(default_factory=list)

    def q_length(self) -> float:
        return sum(hi - lo for lo, hi in self.Q)


def _cell_bounds(table: BoundaryTable, k: int) -> tuple[float, float]:
    return table.c(k + 1), table.c(k)


def _pull_back(params: MapParams, word, lo: float, hi: float) -> tuple[float, float]:
    for s in reversed(word):
        br = "upper" if s == 0 else "lower"
        lo = inverse_branch(params, br, lo)
        hi = inverse_branch(params, br, hi)
    return lo, hi


def itinerary(params: MapParams, table: BoundaryTable, x: float, n: int) -> tuple:
    """Cells visited by x, T x, ..., T^{n-1} x; raises OrbitHitsZero on grazing."""
    word = []
    z = x
    for _ in range(n):
        if z <= GRAZE_TOL:
            raise OrbitHitsZero(f"orbit of {x} reaches {z:.3g}, too close to 0")
        k = locate_cell(table, z)
        lo, hi = _cell_bounds(table, k)
        # the top of cell 0 is the end of the interval, not a boundary
        near_hi = hi < 1.0 and hi - z <= GRAZE_TOL
        if z - lo <= GRAZE_TOL or near_hi:
            raise OrbitHitsZero(f"orbit of {x} grazes the boundary of cell {k}")
        word.append(k)
        z = evaluate_map(params, z)[0]
    return tuple(word)


def cylinder_of_point(
    params: MapParams, table: BoundaryTable, x: float, n: int, point_class: PointClass | None = None
) -> IntervalTarget:
    """The depth-n cylinder xi_n(x)."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    word = itinerary(params, table, x, n)
    lo, hi = _cell_bounds(table, word[-1])
    lo, hi = _pull_back(params, word[:-1], lo, hi)
    if point_class is None:
        point_class = PointClass("generic", x)
    return IntervalTarget(lo, hi, word, n, point_class)


def preimage_component(
    params: MapParams, table: BoundaryTable, zword, n: int
) -> IntervalTarget:
    """Component of T^{-(k+1)}[0, c_n] around the point coded by zword (k = len(zword)).

    [0, c_n] is pulled back by the upper branch first, giving
    E_n = [1/2, (1 + c_n)/2], then along zword.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    zword = tuple(int(s) for s in zword)
    check_admissible(zword + (0,))
    lo = 0.5
    hi = inverse_branch(params, "upper", table.c(n))
    lo, hi = _pull_back(params, zword, lo, hi)
    z = _pull_back(params, zword + (0,), 0.0, 0.0)[0]
    pc = PointClass("preimage_zero", z, k=len(zword), word=zword)
    return IntervalTarget(lo, hi, zword + (0,), n, pc)


def periodic_target(
    params: MapParams, table: BoundaryTable, word, n: int
) -> IntervalTarget:
    """Depth-n cylinder of the periodic point with cyclic word ``word``.

    The itinerary comes from the word itself, so no orbit is iterated.
    """
    word = tuple(int(s) for s in word)
    x, _ = point_from_word(params, word, mode="periodic")
    q = len(word)
    full = tuple(word[i % q] for i in range(n))
    lo, hi = _cell_bounds(table, full[-1])
    lo, hi = _pull_back(params, full[:-1], lo, hi)
    return IntervalTarget(lo, hi, full, n, PointClass("periodic", x, q=q, word=word))


def split_annulus(
    params: MapParams, table: BoundaryTable, target: IntervalTarget, q: int
) -> AnnulusSplit:
    """Split a periodic target B into U = B ∩ T^{-q}B and Q = B \\ U."""
    pc = target.point_class
    if pc.kind != "periodic":
        raise ValueError("split_annulus needs a periodic target")
    w = target.word
    n = len(w)
    for j in range(1, q):
        if all(w[i + j] == w[i] for i in range(n - j)):
            raise DepthTooSmall(f"depth {n} does not separate shift {j} of the period-{q} orbit")
    cyc = pc.word if pc.word else w[:q]
    full = tuple(cyc[i % q] for i in range(n + q))
    lo, hi = _cell_bounds(table, full[-1])
    ulo, uhi = _pull_back(params, full[:-1], lo, hi)
    # numerical pullbacks may overshoot B by an ulp
    ulo, uhi = max(ulo, target.lo), min(uhi, target.hi)
    U = IntervalTarget(ulo, uhi, full, n + q, pc)
    Q = [(a, b) for a, b in ((target.lo, ulo), (uhi, target.hi)) if b > a]
    return AnnulusSplit(target, U, Q)


def tau_of_point(
    params: MapParams, table: BoundaryTable, x: float, n: int, k_cap: int = K_CAP
) -> int:
    """min{i >= n-1 : T^i x in Y}, found from induced-chain clocks."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 < x <= 1.0):
        raise DomainError(f"x must lie in (0, 1], got {x}")
    if x < 0.5:
        y, t = excursion_exit(params, table, x)
        if t > k_cap:
            raise ExcursionOverflow("first entry to Y exceeds the cap")
    else:
        y, t = x, 0
    state = InducedState(y, t)
    while state.clock < n - 1:
        state, _ = induced_step(params, table, state, k_cap=k_cap)
    return state.clock


__all__ = [
    "GRAZE_TOL",
    "OrbitHitsZero",
    "DepthTooSmall",
    "PointClass",
    "IntervalTarget",
    "AnnulusSplit",
    "itinerary",
    "cylinder_of_point",
    "preimage_component",
    "periodic_target",
    "split_annulus",
    "tau_of_point",
]
