"""Graphical construction of the contact process on a finite box.

One build draws, per in-box site, a rate-1 recovery-mark stream and, per
directed incoming edge (one per site and neighbor direction), a rate-lambda
arrow stream, all on [0, horizon].  Evolving any initial configuration is a
deterministic replay of those marks: a recovery mark empties its site, an
arrow infects its target when its source is occupied at that instant.
Sources outside the box are phantom sites whose occupancy is the boundary
constant, so the same event table serves all three boundary policies (under
``empty`` phantom arrows can never fire, under ``all_one`` they always do).

Replaying is additive and monotone path by path, which is what the two-copy
coupling operations rely on.

Draw order inside one build (fixed, part of the seeding contract): recovery
counts for all sites in flat order in one call, recovery times, arrow counts
for all streams in (target flat index, direction) order in one call, arrow
times; the family builder appends one thinning uniform per arrow.  Merged
events are sorted by time with stable tie-breaking in that enumeration order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import rng
from ._replay import cp_replay, pair_replay
from .lattice import BoxSpec, Configuration, as_site

_EXT_NONE = -1.0


def _ext_init(count: int) -> float:
    """Initial extinction marker: an empty medium is extinct at time zero."""
    return 0.0 if count == 0 else _EXT_NONE


@lru_cache(maxsize=64)
def _arrow_tables(box: BoxSpec):
    """Per arrow stream (target, direction): source flat index (-1 = phantom)."""
    offs = box.neighbor_offsets()
    n = box.num_sites
    deg = len(offs)
    src = np.empty(n * deg, dtype=np.int64)
    dst = np.empty(n * deg, dtype=np.int64)
    dirs = np.empty(n * deg, dtype=np.int64)
    k = 0
    for flat in range(n):
        target = box.coords(flat)
        for di, off in enumerate(offs):
            source = tuple(c + o for c, o in zip(target, off))
            if box.boundary == "periodic":
                s = box.flat(box.wrap(source))
            elif box.contains(source):
                s = box.flat(source)
            else:
                s = -1
            src[k] = s
            dst[k] = flat
            dirs[k] = di
            k += 1
    return src, dst, dirs


@dataclass
class GraphicalConstruction:
    """Frozen event substrate for one (box, lambda, horizon) realization.

    ``ev_*`` arrays are all events merged in time order (stable ties).  For
    arrows, ``ev_dir`` is the incoming-direction index of the stream and
    ``ev_src`` the resolved source flat index (-1 for phantom boundary
    sources); recoveries carry direction -1.
    """

    box: BoxSpec
    lam: float
    horizon: float
    seed_key: int | None
    ev_time: np.ndarray
    ev_arrow: np.ndarray
    ev_src: np.ndarray
    ev_dst: np.ndarray
    ev_dir: np.ndarray
    n_recovery: int
    n_arrow: int

    @property
    def num_events(self) -> int:
        return int(self.ev_time.shape[0])

    def recovery_times(self, site) -> np.ndarray:
        flat = self.box.flat(as_site(site, self.box.dimension))
        mask = (self.ev_arrow == 0) & (self.ev_dst == flat)
        return self.ev_time[mask].copy()

    def arrow_times(self, target, direction) -> np.ndarray:
        """Events of one incoming arrow stream; ``direction`` is the offset
        of the source relative to the target, e.g. (1,) or (-1,)."""
        flat = self.box.flat(as_site(target, self.box.dimension))
        off = tuple(int(c) for c in direction)
        di = self.box.neighbor_offsets().index(off)
        mask = (self.ev_arrow == 1) & (self.ev_dst == flat) & (self.ev_dir == di)
        return self.ev_time[mask].copy()

    def _phantom(self) -> int:
        return self.box.boundary_value()


def _assemble(box: BoxSpec, lam: float, horizon: float, seed_key,
              rec_site, rec_time, arr_stream, arr_time) -> GraphicalConstruction:
    src_tab, dst_tab, dir_tab = _arrow_tables(box)
    times = np.concatenate([rec_time, arr_time])
    arrow = np.concatenate([np.zeros(rec_time.shape[0], dtype=np.int8),
                            np.ones(arr_time.shape[0], dtype=np.int8)])
    src = np.concatenate([np.full(rec_time.shape[0], -1, dtype=np.int64),
                          src_tab[arr_stream]])
    dst = np.concatenate([rec_site, dst_tab[arr_stream]])
    dirs = np.concatenate([np.full(rec_time.shape[0], -1, dtype=np.int64),
                           dir_tab[arr_stream]])
    order = np.argsort(times, kind="stable")
    return GraphicalConstruction(
        box=box, lam=float(lam), horizon=float(horizon), seed_key=seed_key,
        ev_time=np.ascontiguousarray(times[order]),
        ev_arrow=np.ascontiguousarray(arrow[order]),
        ev_src=np.ascontiguousarray(src[order]),
        ev_dst=np.ascontiguousarray(dst[order]),
        ev_dir=np.ascontiguousarray(dirs[order]),
        n_recovery=int(rec_time.shape[0]),
        n_arrow=int(arr_time.shape[0]),
    )


def _draw_streams(box: BoxSpec, lam: float, horizon: float, gen: np.random.Generator):
    n = box.num_sites
    deg = 2 * box.dimension
    rec_counts = gen.poisson(horizon, size=n)
    rec_total = int(rec_counts.sum())
    rec_time = gen.random(rec_total) * horizon
    rec_site = np.repeat(np.arange(n, dtype=np.int64), rec_counts)
    arr_counts = gen.poisson(lam * horizon, size=n * deg)
    arr_total = int(arr_counts.sum())
    arr_time = gen.random(arr_total) * horizon
    arr_stream = np.repeat(np.arange(n * deg, dtype=np.int64), arr_counts)
    return rec_site, rec_time, arr_stream, arr_time


def build_graphical(box: BoxSpec, lam: float, horizon: float, seed) -> GraphicalConstruction:
    """Draw one graphical construction.

    ``seed`` is either an integer stream key (see :mod:`contactwalk.rng`) or a
    ready generator.  Identical (box, lam, horizon, key) give bit-identical
    event tables.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if isinstance(seed, np.random.Generator):
        gen, key = seed, None
    else:
        key = int(seed)
        gen = rng.generator_from_key(key)
    rec_site, rec_time, arr_stream, arr_time = _draw_streams(box, lam, horizon, gen)
    return _assemble(box, lam, horizon, key, rec_site, rec_time, arr_stream, arr_time)


def build_graphical_family(box: BoxSpec, lams, horizon: float, seed) -> list:
    """Constructions for several lambdas coupled on one substrate.

    Arrows are drawn at the largest rate and each construction keeps an
    arrow iff its thinning uniform is below lam/lam_max, so the event sets
    are nested monotonically in lambda while each one is marginally an exact
    rate-lam draw.  Recovery marks are shared.
    """
    lams = [float(x) for x in lams]
    if not lams or any(x < 0 for x in lams):
        raise ValueError("need nonnegative lambdas")
    lam_cap = max(lams)
    if isinstance(seed, np.random.Generator):
        gen, key = seed, None
    else:
        key = int(seed)
        gen = rng.generator_from_key(key)
    rec_site, rec_time, arr_stream, arr_time = _draw_streams(box, lam_cap, horizon, gen)
    thin = gen.random(arr_time.shape[0])
    out = []
    for lam in lams:
        if lam_cap > 0:
            keep = thin < (lam / lam_cap)
        else:
            keep = np.zeros(arr_time.shape[0], dtype=bool)
        out.append(_assemble(box, lam, horizon, key, rec_site, rec_time,
                             arr_stream[keep], arr_time[keep]))
    return out


def from_events(box: BoxSpec, lam: float, horizon: float,
                recoveries=None, arrows=None) -> GraphicalConstruction:
    """Hand-built construction for tests: explicit mark and arrow times.

    ``recoveries`` maps site -> iterable of times; ``arrows`` maps
    (source_site, target_site) -> iterable of times, nearest neighbors only.
    """
    rec_site_l, rec_time_l = [], []
    for site, ts in (recoveries or {}).items():
        flat = box.flat(as_site(site, box.dimension))
        for t in ts:
            rec_site_l.append(flat)
            rec_time_l.append(float(t))
    offs = box.neighbor_offsets()
    deg = len(offs)
    arr_stream_l, arr_time_l = [], []
    for (src, dst), ts in (arrows or {}).items():
        s = as_site(src, box.dimension)
        d = as_site(dst, box.dimension)
        off = tuple(a - b for a, b in zip(s, d))
        if box.boundary == "periodic":
            candidates = [tuple(a - b for a, b in zip(box.wrap(s), box.wrap(d))), off]
            off = next((o for o in candidates if o in offs), off)
        if off not in offs:
            raise ValueError(f"{src}->{dst} is not a nearest-neighbor arrow")
        stream = box.flat(box.wrap(d) if box.boundary == "periodic" else d) * deg \
            + offs.index(off)
        for t in ts:
            arr_stream_l.append(stream)
            arr_time_l.append(float(t))
    return _assemble(
        box, lam, horizon, None,
        np.asarray(rec_site_l, dtype=np.int64),
        np.asarray(rec_time_l, dtype=np.float64),
        np.asarray(arr_stream_l, dtype=np.int64),
        np.asarray(arr_time_l, dtype=np.float64),
    )


# -- replay operations -------------------------------------------------------

def _check_run(gc: GraphicalConstruction, initial: Configuration, t: float):
    if initial.box != gc.box:
        raise ValueError("initial configuration lives on a different box")
    if not 0.0 <= t <= gc.horizon:
        raise ValueError(f"time {t} outside [0, horizon={gc.horizon}]")


def evolve(gc: GraphicalConstruction, initial: Configuration, t: float) -> Configuration:
    """Configuration at time t from ``initial`` (events with time <= t applied)."""
    _check_run(gc, initial, t)
    occ = initial.occupancy.copy()
    visited = np.zeros_like(occ)
    cp_replay(gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst, 0, t,
              occ, visited, gc._phantom(), int(initial.infected_count),
              _ext_init(initial.infected_count))
    return Configuration(gc.box, occ)


@dataclass
class CpTrajectory:
    """Sampled contact-process path plus the exact absorption time."""

    box: BoxSpec
    horizon: float
    times: tuple
    configs: list
    extinction_time: float  # inf = still alive at the horizon

    @property
    def survived(self) -> bool:
        return not np.isfinite(self.extinction_time)

    def infected_counts(self) -> np.ndarray:
        return np.array([c.infected_count for c in self.configs], dtype=np.int64)


def evolve_trajectory(gc: GraphicalConstruction, initial: Configuration,
                      sample_times) -> CpTrajectory:
    times = [float(t) for t in sample_times]
    if any(t < 0 or t > gc.horizon for t in times):
        raise ValueError("sample times must lie in [0, horizon]")
    if times != sorted(times):
        raise ValueError("sample times must be sorted")
    _check_run(gc, initial, times[-1] if times else 0.0)
    occ = initial.occupancy.copy()
    visited = np.zeros_like(occ)
    count = int(initial.infected_count)
    ext = _ext_init(count)
    i = 0
    configs = []
    for t in times:
        i, count, ext = cp_replay(gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst,
                                  i, t, occ, visited, gc._phantom(), count, ext)
        configs.append(Configuration(gc.box, occ.copy()))
    i, count, ext = cp_replay(gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst,
                              i, gc.horizon, occ, visited, gc._phantom(), count, ext)
    return CpTrajectory(box=gc.box, horizon=gc.horizon, times=tuple(times),
                        configs=configs,
                        extinction_time=(ext if ext >= 0.0 else np.inf))


def extinction_time(gc: GraphicalConstruction, initial: Configuration) -> float:
    """First time the configuration hits all-zero, inf if alive at horizon."""
    _check_run(gc, initial, gc.horizon)
    occ = initial.occupancy.copy()
    visited = np.zeros_like(occ)
    _, _, ext = cp_replay(gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst, 0,
                          gc.horizon, occ, visited, gc._phantom(),
                          int(initial.infected_count),
                          _ext_init(initial.infected_count))
    return float(ext) if ext >= 0.0 else np.inf


def couple_pair(gc: GraphicalConstruction, eta: Configuration, omega: Configuration,
                t: float):
    """Both initials evolved through the same event table (canonical coupling)."""
    return evolve(gc, eta, t), evolve(gc, omega, t)


def disagreement_episodes(gc: GraphicalConstruction, eta: Configuration,
                          omega: Configuration, t_end: float):
    """Maximal intervals [lo, hi) during which the coupled copies disagree
    at a site, for all events up to t_end.  Open episodes get hi = inf.
    Returns (sites, lows, highs, count_eta, count_omega, ext_eta, ext_omega,
    occ_eta, occ_omega) with the final occupancies at t_end.
    """
    _check_run(gc, eta, t_end)
    _check_run(gc, omega, t_end)
    occ1 = eta.occupancy.copy()
    occ2 = omega.occupancy.copy()
    n = gc.box.num_sites
    diff_start = np.where(occ1 != occ2, 0.0, -1.0)
    cap = gc.num_events + n + 1
    ep_site = np.empty(cap, dtype=np.int64)
    ep_lo = np.empty(cap, dtype=np.float64)
    ep_hi = np.empty(cap, dtype=np.float64)
    n_ep, c1, c2, e1, e2 = pair_replay(
        gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst, t_end,
        occ1, occ2, gc._phantom(), diff_start,
        ep_site, ep_lo, ep_hi,
        int(eta.infected_count), int(omega.infected_count),
        _ext_init(eta.infected_count), _ext_init(omega.infected_count))
    open_sites = np.flatnonzero(diff_start >= 0.0)
    for x in open_sites:
        ep_site[n_ep] = x
        ep_lo[n_ep] = diff_start[x]
        ep_hi[n_ep] = np.inf
        n_ep += 1
    return (ep_site[:n_ep].copy(), ep_lo[:n_ep].copy(), ep_hi[:n_ep].copy(),
            int(c1), int(c2),
            float(e1) if e1 >= 0 else np.inf, float(e2) if e2 >= 0 else np.inf,
            occ1, occ2)


def agreement_set(gc: GraphicalConstruction, eta: Configuration,
                  omega: Configuration, t: float, t_max: float) -> np.ndarray:
    """Boolean mask of sites where the coupled copies agree at every instant
    of [t, t_max].  Computed event-exactly, so it is valid for any sampling
    grid inside that interval.
    """
    if t > t_max:
        raise ValueError("need t <= t_max")
    _check_run(gc, eta, t_max)
    sites, lows, highs, *_ = disagreement_episodes(gc, eta, omega, t_max)
    good = np.ones(gc.box.num_sites, dtype=bool)
    for x, lo, hi in zip(sites, lows, highs):
        # episode [lo, hi) intersects [t, t_max]?
        if lo <= t_max and hi > t:
            good[x] = False
    return good


def visited_masks(gc: GraphicalConstruction, initial: Configuration,
                  sample_times):
    """Ever-infected masks at the given times (initially infected count too)."""
    times = [float(t) for t in sample_times]
    if times != sorted(times):
        raise ValueError("sample times must be sorted")
    _check_run(gc, initial, times[-1] if times else 0.0)
    occ = initial.occupancy.copy()
    visited = occ.copy()
    count = int(initial.infected_count)
    ext = _ext_init(count)
    i = 0
    masks = []
    for t in times:
        i, count, ext = cp_replay(gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst,
                                  i, t, occ, visited, gc._phantom(), count, ext)
        masks.append(visited.astype(bool))
    return masks, (float(ext) if ext >= 0.0 else np.inf), count
