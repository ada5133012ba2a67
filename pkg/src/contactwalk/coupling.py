"""Two walkers on one medium substrate, coupled through spliced clocks.

Walker 1 runs on clock (N1, U1).  Walker 2 runs on the splice of an
independent auxiliary clock (N3, U3) with N1 at a switch time T: its rings
are the N3 rings in [0, T] followed by the N1 rings in (T, horizon], and its
k-th uniform is U3_k while k <= N3_T and the uniform of the matching N1 ring
afterwards.  Memorylessness makes the spliced pair again a rate-correct clock
with iid uniforms, so each walker separately has the standalone law, while
after T both walkers hear identical rings with identical uniforms.

Consequence (checked here, never assumed): if the walkers sit on the same
site at T, both media agree on a spreading cone fattened by at least the
kernel radius at every instant of [T, horizon], and both walkers stay inside
the cone, then the walker paths coincide on [T, horizon] exactly.  Any
divergence under those verified preconditions is an implementation bug.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .graphical import GraphicalConstruction, disagreement_episodes
from .kernel import KernelSpec, range_hull
from .lattice import Configuration
from .walk import JointTrajectory, WalkClock, build_walk_clock, simulate_joint

_EMPTY = (np.inf, -np.inf)


def splice_clock(primary: WalkClock, auxiliary: WalkClock, T: float) -> WalkClock:
    """Clock for the second walker: auxiliary rings through T, primary after."""
    if abs(primary.rate - auxiliary.rate) > 1e-12:
        raise ValueError("clocks to splice must have equal rates")
    if T < 0 or T > primary.horizon:
        raise ValueError("switch time must lie in [0, horizon]")
    n1 = primary.rings_up_to(T)
    n3 = auxiliary.rings_up_to(T)
    times = np.concatenate([auxiliary.ring_times[:n3], primary.ring_times[n1:]])
    uniforms = np.concatenate([auxiliary.uniforms[:n3], primary.uniforms[n1:]])
    return WalkClock(rate=primary.rate, horizon=primary.horizon,
                     ring_times=times, uniforms=uniforms, seed_key=None)


@dataclass
class CoupledRun:
    """Both trajectories plus everything needed to audit the construction."""

    gc: GraphicalConstruction
    kernel: KernelSpec
    gamma: float
    switch_time: float
    eta: Configuration
    omega: Configuration
    clock_primary: WalkClock
    clock_auxiliary: WalkClock
    clock_spliced: WalkClock
    traj1: JointTrajectory
    traj2: JointTrajectory


def build_coupling(gc: GraphicalConstruction, spec: KernelSpec, gamma: float,
                   eta: Configuration, omega: Configuration, T: float, seed, *,
                   obs_radius: int | None = None, sample_times=()) -> CoupledRun:
    """Draw both clocks from ``seed`` (or use a given (primary, auxiliary)
    pair) and run the two walkers on the shared construction."""
    if isinstance(seed, tuple):
        clock1, clock3 = seed
    else:
        key = int(seed)
        clock1 = build_walk_clock(spec, gamma, gc.horizon,
                                  rng.derive_key(key, rng.CLOCK_STREAM))
        clock3 = build_walk_clock(spec, gamma, gc.horizon,
                                  rng.derive_key(key, rng.AUX_CLOCK_STREAM))
    clock2 = splice_clock(clock1, clock3, T)
    traj1 = simulate_joint(gc, spec, gamma, eta, clock1,
                           obs_radius=obs_radius, sample_times=sample_times)
    traj2 = simulate_joint(gc, spec, gamma, omega, clock2,
                           obs_radius=obs_radius, sample_times=sample_times)
    return CoupledRun(gc=gc, kernel=spec, gamma=gamma, switch_time=float(T),
                      eta=eta, omega=omega, clock_primary=clock1,
                      clock_auxiliary=clock3, clock_spliced=clock2,
                      traj1=traj1, traj2=traj2)


# -- cone geometry -----------------------------------------------------------

def _interval_cap(a, b):
    return max(a[0], b[0]), min(a[1], b[1])


def _halfline(coef: float, bound: float):
    """{s >= 0 : coef * s <= bound} as a closed interval."""
    if coef > 0:
        return (0.0, bound / coef) if bound >= 0 else _EMPTY
    if coef == 0:
        return (0.0, np.inf) if bound >= 0 else _EMPTY
    return (max(0.0, bound / coef), np.inf)


def cone_time_interval_1d(x: float, lo: float, hi: float, margin: float):
    """Times s >= 0 with x inside [s*lo - margin, s*hi + margin].

    The admissible set is convex, hence an interval (possibly empty).
    """
    a = _halfline(lo, x + margin)           # s*lo <= x + margin
    b = _halfline(-hi, margin - x)          # s*hi >= x - margin
    s0, s1 = _interval_cap(a, b)
    return (s0, s1) if s0 <= s1 else _EMPTY


def hull_interval(spec: KernelSpec, gamma: float, epsilon: float):
    """The d=1 drift hull (1+epsilon) * gamma * conv{drifts} as [lo, hi]."""
    verts = range_hull(spec, gamma)
    vals = [v[0] for v in verts]
    return (1.0 + epsilon) * min(vals), (1.0 + epsilon) * max(vals)


def point_in_scaled_hull(x, s: float, vertices, margin: float) -> bool:
    """Is x inside s * conv(vertices) + [-margin, margin]^d?

    Dimension 1 is exact interval arithmetic; higher dimensions solve the
    small feasibility LP over the hull vertices.
    """
    verts = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    d = x.shape[0]
    if d == 1:
        vals = s * verts[:, 0]
        return vals.min() - margin <= x[0] <= vals.max() + margin
    from scipy.optimize import linprog
    nv = verts.shape[0]
    # feasibility: theta >= 0, sum theta = 1, |x_i - s*(V^T theta)_i| <= margin
    A_ub = np.vstack([s * verts.T, -s * verts.T])
    b_ub = np.concatenate([margin + x, margin - x])
    res = linprog(c=np.zeros(nv), A_ub=A_ub, b_ub=b_ub,
                  A_eq=np.ones((1, nv)), b_eq=np.array([1.0]),
                  bounds=[(0, None)] * nv, method="highs")
    return bool(res.status == 0)


# -- monitors ----------------------------------------------------------------

@dataclass
class ConeMonitor:
    """Grid flags plus (in exact mode) continuous-time verdicts.

    ``cone_agreement_from`` / ``walkers_inside_from`` are the earliest grid
    times from which the respective condition holds at every later grid time
    (inf when it fails at the last grid point).
    """

    grid: np.ndarray
    agreement_flags: np.ndarray
    inside_flags: np.ndarray
    cone_agreement_from: float
    walkers_inside_from: float
    epsilon: float
    margin: float
    exact: bool
    agreement_holds: bool | None = None
    inside_holds: bool | None = None
    agreement_violations: list = field(default_factory=list)
    inside_violations: list = field(default_factory=list)


def _first_holding(grid: np.ndarray, flags: np.ndarray) -> float:
    bad = np.flatnonzero(~flags)
    if bad.size == 0:
        return float(grid[0]) if grid.size else np.inf
    if bad[-1] == grid.size - 1:
        return np.inf
    return float(grid[bad[-1] + 1])


def _require_region_inside_box(crun: CoupledRun, lo: float, hi: float, margin: float):
    box = crun.gc.box
    H = crun.gc.horizon
    reach = max(abs(H * lo) + margin, abs(H * hi) + margin)
    if reach > box.half_width:
        raise ValueError(
            f"cone region extends to {reach:.3g} at the horizon, beyond the box "
            f"half-width {box.half_width}; use a larger box")


def _walker_cone_violations(traj: JointTrajectory, lo: float, hi: float,
                            T: float, H: float, slack: float = 1e-9):
    """Exact check of 'position inside t*(hull)' over [T, H] per segment."""
    times = np.concatenate([[0.0], traj.jump_times, [H]])
    start = np.asarray(traj.start, dtype=np.int64).reshape(1, -1)
    if traj.jump_vectors.shape[0]:
        positions = np.vstack([start, start + np.cumsum(traj.jump_vectors, axis=0)])
    else:
        positions = start
    out = []
    for k in range(positions.shape[0]):
        s0 = max(times[k], T)
        s1 = min(times[k + 1], H)
        if s0 > s1:
            continue
        x = float(positions[k][0])
        w0, w1 = cone_time_interval_1d(x, lo, hi, 0.0)
        if not (w0 - slack <= s0 and s1 <= w1 + slack):
            out.append((float(s0), float(s1), x))
    return out


def _media_cone_violations(crun: CoupledRun, lo: float, hi: float, margin: float,
                           T: float):
    """Exact d=1 check of media agreement inside the moving region on [T, H]."""
    gc = crun.gc
    H = gc.horizon
    sites, lows, highs, *_ = disagreement_episodes(gc, crun.eta, crun.omega, H)
    box = gc.box
    out = []
    for x_flat, a, b in zip(sites, lows, highs):
        a2, b2 = max(a, T), min(b, H)
        if a2 >= b2:
            continue
        x = float(box.coords(int(x_flat))[0])
        w0, w1 = cone_time_interval_1d(x, lo, hi, margin)
        # episode is [a2, b2), admissible window is closed [w0, w1]
        if a2 <= w1 and w0 < b2:
            out.append((float(a2), float(b2), x))
    return out


def monitor_cones(crun: CoupledRun, epsilon: float, margin: float | None = None,
                  grid_step: float = 1.0, mode: str = "grid") -> ConeMonitor:
    """Evaluate the cone events for one coupled run.

    Grid mode samples both conditions on a uniform grid over [0, horizon];
    exact mode (dimension 1) additionally verifies them continuously on
    [T, horizon] from the event table, which is the version the sticking
    guarantee needs.
    """
    spec = crun.kernel
    if margin is None:
        margin = float(max(spec.radius, 1))
    if crun.gc.box.dimension != 1:
        raise NotImplementedError("cone monitors are implemented for dimension 1")
    lo, hi = hull_interval(spec, crun.gamma, epsilon)
    _require_region_inside_box(crun, lo, hi, margin)
    T = crun.switch_time
    H = crun.gc.horizon
    box = crun.gc.box
    grid = np.arange(0.0, H + 1e-12, grid_step)
    coords = np.array([box.coords(f)[0] for f in range(box.num_sites)],
                      dtype=np.float64)

    agreement_flags = np.ones(grid.size, dtype=bool)
    inside_flags = np.ones(grid.size, dtype=bool)
    occ1 = crun.eta.occupancy.copy()
    occ2 = crun.omega.occupancy.copy()
    from ._replay import cp_replay
    dummy1 = np.zeros_like(occ1)
    dummy2 = np.zeros_like(occ2)
    i1 = i2 = 0
    c1 = int(crun.eta.infected_count)
    c2 = int(crun.omega.infected_count)
    e1 = 0.0 if c1 == 0 else -1.0
    e2 = 0.0 if c2 == 0 else -1.0
    gcd = crun.gc
    for gi, g in enumerate(grid):
        i1, c1, e1 = cp_replay(gcd.ev_time, gcd.ev_arrow, gcd.ev_src, gcd.ev_dst,
                               i1, g, occ1, dummy1, gcd._phantom(), c1, e1)
        i2, c2, e2 = cp_replay(gcd.ev_time, gcd.ev_arrow, gcd.ev_src, gcd.ev_dst,
                               i2, g, occ2, dummy2, gcd._phantom(), c2, e2)
        diff = np.flatnonzero(occ1 != occ2)
        if diff.size:
            xs = coords[diff]
            inside = (g * lo - margin <= xs) & (xs <= g * hi + margin)
            agreement_flags[gi] = not inside.any()
        x1 = crun.traj1.position_at(g)[0]
        x2 = crun.traj2.position_at(g)[0]
        inside_flags[gi] = (g * lo <= x1 <= g * hi) and (g * lo <= x2 <= g * hi)

    mon = ConeMonitor(
        grid=grid, agreement_flags=agreement_flags, inside_flags=inside_flags,
        cone_agreement_from=_first_holding(grid, agreement_flags),
        walkers_inside_from=_first_holding(grid, inside_flags),
        epsilon=float(epsilon), margin=float(margin), exact=(mode == "exact"))
    if mode == "exact":
        a_viol = _media_cone_violations(crun, lo, hi, margin, T)
        d_viol = (_walker_cone_violations(crun.traj1, lo, hi, T, H)
                  + _walker_cone_violations(crun.traj2, lo, hi, T, H))
        mon.agreement_violations = a_viol
        mon.inside_violations = d_viol
        mon.agreement_holds = not a_viol
        mon.inside_holds = not d_viol
    elif mode != "grid":
        raise ValueError(f"unknown monitor mode {mode!r}")
    return mon


# -- sticking ----------------------------------------------------------------

@dataclass
class StickingReport:
    verdict: str                      # "stuck" | "diverged" | "precondition-unmet"
    first_divergence: float | None
    positions_equal_at_T: bool
    media_agree_on_cone: bool
    walkers_inside_cone: bool

    @property
    def preconditions_met(self) -> bool:
        return (self.positions_equal_at_T and self.media_agree_on_cone
                and self.walkers_inside_cone)


def check_sticking(crun: CoupledRun, epsilon: float,
                   margin: float | None = None) -> StickingReport:
    """Classify one coupled run.

    Preconditions (all verified continuously on [T, horizon], dimension 1):
    equal positions at T, media agreement on the fattened cone with margin at
    least the kernel radius, both walkers inside the cone.  Post-T jump
    sequences are compared event by event whenever the positions at T agree.
    Paths that agree are "stuck" regardless of the cone diagnostics (equal
    clocks on equal windows stick for free, e.g. eta = omega with T = 0); a
    path difference is "diverged" only when every precondition held, which
    makes it a hard failure of the construction rather than a statistical
    event, and is "precondition-unmet" otherwise.
    """
    spec = crun.kernel
    if margin is None:
        margin = float(max(spec.radius, 1))
    if margin < spec.radius:
        raise ValueError("margin must be at least the kernel radius")
    T = crun.switch_time
    pos_eq = np.array_equal(crun.traj1.position_at(T), crun.traj2.position_at(T))
    lo, hi = hull_interval(spec, crun.gamma, epsilon)
    _require_region_inside_box(crun, lo, hi, margin)
    media_ok = not _media_cone_violations(crun, lo, hi, margin, T)
    H = crun.gc.horizon
    inside_ok = not (_walker_cone_violations(crun.traj1, lo, hi, T, H)
                     or _walker_cone_violations(crun.traj2, lo, hi, T, H))
    if not pos_eq:
        return StickingReport("precondition-unmet", None, False,
                              bool(media_ok), bool(inside_ok))

    j1t, j1v = _jumps_after(crun.traj1, T)
    j2t, j2v = _jumps_after(crun.traj2, T)
    first_div = None
    n = min(j1t.size, j2t.size)
    for k in range(n):
        if j1t[k] != j2t[k] or not np.array_equal(j1v[k], j2v[k]):
            first_div = float(min(j1t[k], j2t[k]))
            break
    if first_div is None and j1t.size != j2t.size:
        first_div = float(j1t[n] if j1t.size > n else j2t[n])
    if first_div is None:
        return StickingReport("stuck", None, True, bool(media_ok),
                              bool(inside_ok))
    verdict = "diverged" if (media_ok and inside_ok) else "precondition-unmet"
    return StickingReport(verdict, first_div, True, bool(media_ok),
                          bool(inside_ok))


def _jumps_after(traj: JointTrajectory, T: float):
    idx = np.searchsorted(traj.jump_times, T, side="right")
    return traj.jump_times[idx:], traj.jump_vectors[idx:]
