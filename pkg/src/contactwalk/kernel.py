"""Walker jump-rate kernels: finite tables mapping local windows to rates.

A kernel assigns to every occupancy window w of radius R and every jump
displacement z in a finite ordered support a rate alpha(w, z) >= 0.  Two rule
types exist:

* ``table``: an explicit row per window (2^cells rows, row-major bit coding);
* ``occupancy``: radius 0, two rows selected by the occupancy of the walker's
  own site (row 0 = healthy, row 1 = infected).

The weighted norm  sum_z |z|_1 * max_w alpha(w, z)  is the thinning clock
normalizer.  Because the support excludes the origin, |z|_1 >= 1 for every
supported jump and the norm dominates every per-window total rate; validation
asserts this explicitly.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .lattice import Window, window_offsets

RULE_TABLE = "table"
RULE_OCCUPANCY = "occupancy"
MAX_WINDOW_CELLS = 20


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Immutable kernel description.

    ``rates`` has one row per window (table rule: 2^cells rows indexed by the
    window code; occupancy rule: 2 rows indexed by the walker-site bit) and
    one column per support entry, in support order.
    """

    dimension: int
    radius: int
    support: tuple
    rule: str
    rates: np.ndarray

    def __post_init__(self):
        if self.dimension < 1:
            raise KernelError("dimension must be >= 1")
        if self.radius < 0:
            raise KernelError("radius must be >= 0")
        if self.rule not in (RULE_TABLE, RULE_OCCUPANCY):
            raise KernelError(f"unknown rule type {self.rule!r}")
        if self.rule == RULE_OCCUPANCY and self.radius != 0:
            raise KernelError("occupancy rule requires radius 0")
        if self.cells > MAX_WINDOW_CELLS:
            raise KernelError(
                f"window has {self.cells} cells, exhaustive cap is {MAX_WINDOW_CELLS}")
        support = tuple(tuple(int(c) for c in z) for z in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise KernelError("support must be nonempty")
        if len(set(support)) != len(support):
            raise KernelError("support entries must be distinct")
        for z in support:
            if len(z) != self.dimension:
                raise KernelError(f"jump {z} does not have dimension {self.dimension}")
            if all(c == 0 for c in z):
                raise KernelError("the zero displacement may not be in the support")
        rates = np.ascontiguousarray(self.rates, dtype=np.float64)
        nrows = 2 if self.rule == RULE_OCCUPANCY else 2 ** self.cells
        if rates.shape != (nrows, len(support)):
            raise KernelError(
                f"rates must have shape ({nrows}, {len(support)}), got {rates.shape}")
        if not np.all(np.isfinite(rates)) or rates.min() < 0.0:
            raise KernelError("rates must be finite and nonnegative")
        object.__setattr__(self, "rates", rates)

    @property
    def cells(self) -> int:
        return (2 * self.radius + 1) ** self.dimension

    @property
    def num_jumps(self) -> int:
        return len(self.support)

    def row_index(self, window: Window) -> int:
        if window.dimension != self.dimension or window.radius != self.radius:
            raise KernelError("window shape does not match kernel")
        if self.rule == RULE_OCCUPANCY:
            return window.center_bit
        return window.code

    def row_for_code(self, code: int) -> int:
        """Row index for an integer window code (center bit for occupancy)."""
        if self.rule == RULE_OCCUPANCY:
            center = (self.cells - 1) // 2
            return (int(code) >> center) & 1
        return int(code)

    def jump_array(self) -> np.ndarray:
        return np.array(self.support, dtype=np.int64).reshape(self.num_jumps, self.dimension)


def alpha(spec: KernelSpec, window: Window, z) -> float:
    """Jump rate alpha(window, z); zero for displacements off the support."""
    zt = tuple(int(c) for c in z)
    try:
        col = spec.support.index(zt)
    except ValueError:
        return 0.0
    return float(spec.rates[spec.row_index(window), col])


def cumulative(spec: KernelSpec, window: Window, m: int) -> float:
    """Partial sum p(window, m) = sum_{i <= m} alpha(window, z_i), m in 0..K."""
    if not 0 <= m <= spec.num_jumps:
        raise KernelError(f"m must lie in 0..{spec.num_jumps}")
    row = spec.rates[spec.row_index(window)]
    return float(row[:m].sum())


def alpha_norm(spec: KernelSpec) -> float:
    """sum_z |z|_1 * max_w alpha(w, z)."""
    weights = np.array([sum(abs(c) for c in z) for z in spec.support], dtype=np.float64)
    return float((weights * spec.rates.max(axis=0)).sum())


def max_total_rate(spec: KernelSpec) -> float:
    return float(spec.rates.sum(axis=1).max())


def _all_windows(spec: KernelSpec):
    if spec.rule == RULE_OCCUPANCY:
        yield Window(spec.dimension, 0, (0,))
        yield Window(spec.dimension, 0, (1,))
        return
    for code in range(2 ** spec.cells):
        yield Window.from_code(spec.dimension, spec.radius, code)


def _cone_reachable(targets, generators, dimension: int) -> dict:
    """Which targets are nonnegative integer combinations of the generators.

    Breadth-first search over lattice points within a bounded region.  The
    bound is generous for every kernel of practical size; a combination that
    needs partial sums far outside the region would be missed, which only
    makes the check conservative (reported as a violation, never the other
    way around).
    """
    extent = max((max(abs(c) for c in z) for z in list(targets) + list(generators)),
                 default=1)
    bound = 4 * extent + 4
    seen = {(0,) * dimension}
    frontier = [(0,) * dimension]
    targets_left = set(targets)
    targets_left.discard((0,) * dimension)
    while frontier and targets_left:
        nxt = []
        for p in frontier:
            for g in generators:
                q = tuple(a + b for a, b in zip(p, g))
                if q in seen or any(abs(c) > bound for c in q):
                    continue
                seen.add(q)
                targets_left.discard(q)
                nxt.append(q)
        frontier = nxt
    return {t: (t in seen or all(c == 0 for c in t)) for t in targets}


@dataclass(frozen=True)
class KernelReport:
    """Validation summary for a kernel at a given activity gamma."""

    gamma: float
    alpha_norm: float
    max_total_rate: float
    clock_rate: float
    elliptic: bool
    elliptic_set: tuple
    counterexample: dict | None
    hull_vertices: tuple

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha_norm": self.alpha_norm,
            "max_total_rate": self.max_total_rate,
            "clock_rate": self.clock_rate,
            "elliptic": self.elliptic,
            "elliptic_set": [list(z) for z in self.elliptic_set],
            "counterexample": self.counterexample,
            "hull_vertices": [list(v) for v in self.hull_vertices],
        }


def drift_vectors(spec: KernelSpec) -> np.ndarray:
    """Per-window mean displacement sum_z z * alpha(w, z), one row per window."""
    jumps = spec.jump_array().astype(np.float64)
    return spec.rates @ jumps


def range_hull(spec: KernelSpec, gamma: float) -> tuple:
    """Vertices of gamma * conv{ drift vector of each window }.

    For dimension 1 the hull is the exact interval [min, max].  In higher
    dimensions scipy's convex hull is used when it is nondegenerate; for
    degenerate point sets the deduplicated points themselves are returned,
    which is a valid (possibly non-minimal) vertex list for membership tests.
    """
    pts = gamma * drift_vectors(spec)
    if spec.dimension == 1:
        lo, hi = float(pts.min()), float(pts.max())
        return ((lo,),) if lo == hi else ((lo,), (hi,))
    uniq = np.unique(pts, axis=0)
    if uniq.shape[0] <= spec.dimension:
        return tuple(tuple(float(c) for c in v) for v in uniq)
    try:
        from scipy.spatial import ConvexHull
        hull = ConvexHull(uniq)
        verts = uniq[hull.vertices]
    except Exception:
        verts = uniq
    return tuple(tuple(float(c) for c in v) for v in verts)


def validate(spec: KernelSpec, gamma: float = 1.0) -> KernelReport:
    """Exhaustive kernel validation over every window (hard cap on cells).

    Checks rate sanity, computes the clock normalizer and the per-window
    total-rate bound, decides ellipticity (a universally available jump set
    whose nonnegative integer combinations cover the support), and reports
    the gamma-scaled hull of mean drifts.
    """
    if gamma < 0:
        raise KernelError("gamma must be >= 0")
    if spec.cells > MAX_WINDOW_CELLS:
        raise KernelError("window space too large for exhaustive validation")
    norm = alpha_norm(spec)
    max_total = max_total_rate(spec)
    # |z|_1 >= 1 off the origin makes this an identity-level guarantee; a
    # failure would mean the thinning construction is unsound.
    if max_total > norm + 1e-12:
        raise KernelError(
            f"total rate {max_total} exceeds the clock normalizer {norm}")

    active = [z for col, z in enumerate(spec.support) if spec.rates[:, col].max() > 0.0]
    universal = [z for col, z in enumerate(spec.support) if spec.rates[:, col].min() > 0.0]
    counterexample = None
    if not universal:
        elliptic = False
        if active:
            z0 = active[0]
            col = spec.support.index(z0)
            for w in _all_windows(spec):
                if spec.rates[spec.row_index(w), col] == 0.0:
                    counterexample = {
                        "reason": "no jump has a positive rate in every window",
                        "jump": list(z0),
                        "window_code": w.code,
                    }
                    break
        else:
            counterexample = {"reason": "kernel has no positive rate at all"}
    else:
        reach = _cone_reachable(active, universal, spec.dimension)
        missing = [z for z, ok in reach.items() if not ok]
        elliptic = not missing
        if missing:
            counterexample = {
                "reason": "supported jump not generated by universally available jumps",
                "jump": list(missing[0]),
            }

    return KernelReport(
        gamma=float(gamma),
        alpha_norm=norm,
        max_total_rate=max_total,
        clock_rate=float(gamma) * norm,
        elliptic=elliptic,
        elliptic_set=tuple(universal),
        counterexample=counterexample,
        hull_vertices=range_hull(spec, gamma),
    )


# -- engine-facing dense tables --------------------------------------------

def threshold_table(spec: KernelSpec, gamma: float):
    """Dense cumulative jump thresholds for the thinning rule.

    Returns (cum, jumps, clock_rate) where cum[w, m] = p(w, m) / norm for
    window code w (2^cells rows; the occupancy rule expands to its two rows
    via the center bit, which for radius 0 *is* the window code) and
    clock_rate = gamma * norm.  At a ring with uniform u the walker jumps by
    jumps[m-1] iff cum[w, m-1] <= u < cum[w, m], and stays iff u >= cum[w, K].
    """
    norm = alpha_norm(spec)
    nrows = 2 ** spec.cells
    K = spec.num_jumps
    cum = np.zeros((nrows, K + 1), dtype=np.float64)
    for code in range(nrows):
        row = spec.rates[spec.row_for_code(code)]
        if norm > 0.0:
            cum[code, 1:] = np.cumsum(row) / norm
    return cum, spec.jump_array(), float(gamma) * norm


# -- file format ------------------------------------------------------------

def _code_to_key(code: int, cells: int) -> str:
    return "".join("1" if (code >> j) & 1 else "0" for j in range(cells))


def _key_to_code(key: str, cells: int) -> int:
    if len(key) != cells or any(ch not in "01" for ch in key):
        raise KernelError(f"bad window key {key!r}, need {cells} chars of 0/1")
    return sum(1 << j for j, ch in enumerate(key) if ch == "1")


def kernel_to_dict(spec: KernelSpec) -> dict:
    if spec.rule == RULE_OCCUPANCY:
        entries = {"healthy": list(map(float, spec.rates[0])),
                   "infected": list(map(float, spec.rates[1]))}
    else:
        entries = {_code_to_key(code, spec.cells): list(map(float, spec.rates[code]))
                   for code in range(2 ** spec.cells)}
    return {
        "dimension": spec.dimension,
        "radius": spec.radius,
        "support": [list(z) for z in spec.support],
        "rule": {"type": spec.rule, "entries": entries},
    }


def kernel_from_dict(data: dict) -> KernelSpec:
    try:
        dimension = int(data["dimension"])
        radius = int(data["radius"])
        support = tuple(tuple(int(c) for c in z) for z in data["support"])
        rule = data["rule"]["type"]
        entries = data["rule"]["entries"]
    except (KeyError, TypeError) as exc:
        raise KernelError(f"malformed kernel object: {exc}") from exc
    K = len(support)
    if rule == RULE_OCCUPANCY:
        try:
            rates = np.array([entries["healthy"], entries["infected"]], dtype=np.float64)
        except (KeyError, ValueError) as exc:
            raise KernelError(f"malformed occupancy entries: {exc}") from exc
    elif rule == RULE_TABLE:
        cells = (2 * radius + 1) ** dimension
        if cells > MAX_WINDOW_CELLS:
            raise KernelError("window space too large")
        nrows = 2 ** cells
        if len(entries) != nrows:
            raise KernelError(f"table rule needs all {nrows} window keys")
        rates = np.zeros((nrows, K), dtype=np.float64)
        for key, row in entries.items():
            rates[_key_to_code(key, cells)] = np.asarray(row, dtype=np.float64)
    else:
        raise KernelError(f"unknown rule type {rule!r}")
    return KernelSpec(dimension=dimension, radius=radius, support=support,
                      rule=rule, rates=rates)


def save_kernel(spec: KernelSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(kernel_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_kernel(path) -> KernelSpec:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise KernelError(f"kernel file is not valid JSON: {exc}") from exc
    return kernel_from_dict(data)


# -- stock kernels -----------------------------------------------------------

def occupancy_kernel(support, healthy_rates, infected_rates, dimension: int = 1) -> KernelSpec:
    return KernelSpec(
        dimension=dimension, radius=0,
        support=tuple(tuple(int(c) for c in (z if hasattr(z, "__len__") else (z,)))
                      for z in support),
        rule=RULE_OCCUPANCY,
        rates=np.array([healthy_rates, infected_rates], dtype=np.float64),
    )


def constant_kernel(support, rates, dimension: int = 1) -> KernelSpec:
    """State-independent rates (both occupancy rows equal)."""
    return occupancy_kernel(support, rates, rates, dimension=dimension)


def example_drift_kernel() -> KernelSpec:
    """The stock d=1 occupancy kernel: drift +1 on infected, -1 on healthy.

    Rates: infected site -> (+1 at 2, -1 at 1); healthy -> (+1 at 1, -1 at 2).
    Elliptic with universal set {+1, -1}; norm 4; max total rate 3.
    """
    return occupancy_kernel(((1,), (-1,)), healthy_rates=(1.0, 2.0),
                            infected_rates=(2.0, 1.0))
