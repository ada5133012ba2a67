"""Random walk with medium-dependent jump rates, run on a graphical build.

The walker carries a Poisson clock of constant rate gamma * norm, where norm
is the kernel's weighted rate bound (see :mod:`contactwalk.kernel`).  At the
k-th ring the walker reads the occupancy window around its position as it was
just before the ring (simultaneous graphical events resolve first) and jumps
by the m-th support displacement iff the ring's uniform lands in the m-th
normalized cumulative-rate slot; rings falling beyond the total rate are
discarded.  Thinning a constant-rate clock this way reproduces the
state-dependent jump rates exactly because the normalizer dominates every
per-window total rate.

Positions live on Z^d and are never wrapped: on a periodic box the medium
reads wrap while the displacement keeps accumulating, and on the other
policies a jump that would leave the box aborts the run with the partial
trajectory attached to the error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from ._replay import walk_replay
from .graphical import GraphicalConstruction, _ext_init
from .kernel import KernelSpec, alpha_norm, threshold_table
from .lattice import BoxSpec, Configuration, Window, as_site, local_window, shift, \
    window_offsets

MAX_OBS_CELLS = 62


class WalkerOutOfBoxError(RuntimeError):
    """A jump would take the walker outside a non-periodic box.

    Carries the partial trajectory (``.trajectory``) and the ring time of the
    aborted jump (``.time``).
    """

    def __init__(self, message, trajectory, time):
        super().__init__(message)
        self.trajectory = trajectory
        self.time = time


@dataclass(frozen=True)
class WalkClock:
    """Rings of a rate-``rate`` Poisson clock with one uniform per ring.

    The k-th uniform belongs to the k-th ring in time order.
    """

    rate: float
    horizon: float
    ring_times: np.ndarray
    uniforms: np.ndarray
    seed_key: int | None = None

    def __post_init__(self):
        if self.ring_times.shape != self.uniforms.shape:
            raise ValueError("ring_times and uniforms must align")
        if np.any(np.diff(self.ring_times) < 0):
            raise ValueError("ring times must be sorted")

    @property
    def num_rings(self) -> int:
        return int(self.ring_times.shape[0])

    def rings_up_to(self, t: float) -> int:
        return int(np.searchsorted(self.ring_times, t, side="right"))


def build_walk_clock(spec: KernelSpec, gamma: float, horizon: float, seed) -> WalkClock:
    """Draw a clock for this kernel and activity.

    Draw order: ring count, raw ring positions (sorted after scaling), then
    the per-ring uniforms.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rate = gamma * alpha_norm(spec)
    if isinstance(seed, np.random.Generator):
        gen, key = seed, None
    else:
        key = int(seed)
        gen = rng.generator_from_key(key)
    n = int(gen.poisson(rate * horizon)) if rate > 0 else 0
    times = np.sort(gen.random(n) * horizon)
    uniforms = gen.random(n)
    return WalkClock(rate=rate, horizon=float(horizon), ring_times=times,
                     uniforms=uniforms, seed_key=key)


@dataclass
class JointTrajectory:
    """Medium + walker path, stored as exact change segments.

    Segment i covers [times[i], times[i+1]) (the last one runs to the
    horizon); within a segment the walker position and the occupancy of the
    observation window around it are constant.  ``codes`` encodes that window
    row-major (see :class:`contactwalk.lattice.Window`).  The jump ledger
    lists every realized jump; rings that drew no jump appear only in
    ``ring_count``.
    """

    box: BoxSpec
    kernel: KernelSpec
    gamma: float
    horizon: float
    obs_radius: int
    start: tuple
    seg_times: np.ndarray
    seg_positions: np.ndarray
    seg_codes: np.ndarray
    jump_times: np.ndarray
    jump_vectors: np.ndarray
    ring_count: int
    extinction_time: float
    sample_times: tuple
    sample_configs: list
    sample_positions: np.ndarray
    final_config: Configuration | None
    clock: WalkClock
    aborted: bool = False
    abort_time: float = np.inf

    @property
    def survived(self) -> bool:
        return not np.isfinite(self.extinction_time)

    @property
    def dimension(self) -> int:
        return self.box.dimension

    def _seg_at(self, t: float) -> int:
        if t < self.seg_times[0]:
            raise ValueError("time before trajectory start")
        return int(np.searchsorted(self.seg_times, t, side="right")) - 1

    def position_at(self, t: float) -> tuple:
        return tuple(int(c) for c in self.seg_positions[self._seg_at(t)])

    def window_code_at(self, t: float) -> int:
        return int(self.seg_codes[self._seg_at(t)])

    def window_at(self, t: float) -> Window:
        return Window.from_code(self.dimension, self.obs_radius, self.window_code_at(t))

    def displacement(self) -> tuple:
        end = self.seg_positions[-1]
        return tuple(int(e) - int(s) for e, s in zip(end, self.start))

    def jump_ledger_sum(self) -> tuple:
        if self.jump_vectors.shape[0] == 0:
            return (0,) * self.dimension
        return tuple(int(c) for c in self.jump_vectors.sum(axis=0))


def simulate_joint(gc: GraphicalConstruction, spec: KernelSpec, gamma: float,
                   initial: Configuration, clock: WalkClock, *,
                   obs_radius: int | None = None, sample_times=(),
                   start=None) -> JointTrajectory:
    """Run medium and walker together over the clock's rings.

    ``obs_radius`` (>= kernel radius) sets how much of the medium around the
    walker is recorded per segment; estimators need it at least as large as
    the radius of any local observable they integrate.
    """
    box = gc.box
    if initial.box != box:
        raise ValueError("initial configuration lives on a different box")
    if spec.dimension != box.dimension:
        raise ValueError("kernel dimension does not match the box")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    obs = spec.radius if obs_radius is None else int(obs_radius)
    if obs < spec.radius:
        raise ValueError("obs_radius must be >= kernel radius")
    d = box.dimension
    n_obs = (2 * obs + 1) ** d
    if n_obs > MAX_OBS_CELLS:
        raise ValueError(f"observation window has {n_obs} cells, cap {MAX_OBS_CELLS}")
    if box.boundary == "periodic" and 2 * obs + 1 > box.side:
        raise ValueError("observation window wraps around the periodic box")
    cum, jumps, rate = threshold_table(spec, gamma)
    if not np.isclose(clock.rate, rate, rtol=0, atol=1e-9):
        raise ValueError(f"clock rate {clock.rate} != gamma*norm {rate}")
    if clock.horizon + 1e-9 < gc.horizon:
        raise ValueError("clock horizon shorter than the construction horizon")

    start_site = box.origin if start is None else as_site(start, d)
    if not box.contains(start_site) and box.boundary != "periodic":
        raise ValueError("start site outside box")

    times = [float(t) for t in sample_times]
    if times != sorted(times) or any(t < 0 or t > gc.horizon for t in times):
        raise ValueError("sample times must be sorted and inside [0, horizon]")

    # observation-window geometry
    obs_off = np.array(window_offsets(d, obs), dtype=np.int64).reshape(n_obs, d)
    kern_cells = window_offsets(d, spec.radius)
    side_obs = 2 * obs + 1
    kern_pos = np.array(
        [sum((u[i] + obs) * side_obs ** (d - 1 - i) for i in range(d))
         for u in kern_cells], dtype=np.int64)

    occ = initial.occupancy.copy()
    count = int(initial.infected_count)
    ext = _ext_init(int(initial.infected_count))
    pos = np.array(start_site, dtype=np.int64)
    obs_flat = np.full(n_obs, -1, dtype=np.int64)
    inv = np.full(box.num_sites, -1, dtype=np.int64)

    cap_seg = gc.num_events + clock.num_rings + 2
    seg_time = np.empty(cap_seg, dtype=np.float64)
    seg_code = np.empty(cap_seg, dtype=np.int64)
    seg_pos = np.empty((cap_seg, d), dtype=np.int64)
    jmp_time = np.empty(max(clock.num_rings, 1), dtype=np.float64)
    jmp_zidx = np.empty(max(clock.num_rings, 1), dtype=np.int64)

    seg_time[0] = 0.0
    seg_code[0] = local_window(initial, start_site, obs).code
    seg_pos[0] = pos
    n_seg = 1
    n_jmp = 0

    boundaries = times + ([] if times and times[-1] == gc.horizon else [gc.horizon])
    sample_configs = []
    sample_positions = []
    i = j = 0
    aborted = False
    abort_time = np.inf
    phantom = gc._phantom()
    for t_next in boundaries:
        inv.fill(-1)
        i, j, count, ext, n_seg, n_jmp, ab, ab_t = walk_replay(
            gc.ev_time, gc.ev_arrow, gc.ev_src, gc.ev_dst,
            clock.ring_times, clock.uniforms,
            i, j, t_next,
            occ, count, ext,
            pos,
            d, box.half_width, box.side,
            1 if box.boundary == "periodic" else 0, phantom,
            obs_off, obs_flat, inv,
            kern_pos, cum, jumps,
            seg_time, seg_code, seg_pos, n_seg,
            jmp_time, jmp_zidx, n_jmp)
        if ab:
            aborted = True
            abort_time = float(ab_t)
            break
        if t_next in times:
            sample_configs.append(Configuration(box, occ.copy()))
            sample_positions.append(pos.copy())

    jv = jumps[jmp_zidx[:n_jmp]] if n_jmp else np.empty((0, d), dtype=np.int64)
    traj = JointTrajectory(
        box=box, kernel=spec, gamma=float(gamma), horizon=gc.horizon,
        obs_radius=obs, start=start_site,
        seg_times=seg_time[:n_seg].copy(),
        seg_positions=seg_pos[:n_seg].copy(),
        seg_codes=seg_code[:n_seg].copy(),
        jump_times=jmp_time[:n_jmp].copy(),
        jump_vectors=jv.copy(),
        ring_count=int(j),
        extinction_time=(float(ext) if ext >= 0.0 else np.inf),
        sample_times=tuple(times[:len(sample_configs)]),
        sample_configs=sample_configs,
        sample_positions=(np.array(sample_positions, dtype=np.int64)
                          if sample_positions else np.empty((0, d), dtype=np.int64)),
        final_config=None if aborted else Configuration(box, occ.copy()),
        clock=clock, aborted=aborted, abort_time=abort_time)
    if aborted:
        raise WalkerOutOfBoxError(
            f"walker attempted to leave the box at t={abort_time:.6g}",
            trajectory=traj, time=abort_time)
    return traj


@dataclass
class EnvironmentTrajectory:
    """The medium as seen from the walker: exact local-window segments plus
    re-centered full snapshots at the requested sample times."""

    box: BoxSpec
    obs_radius: int
    horizon: float
    times: np.ndarray
    codes: np.ndarray
    sample_times: tuple
    sample_views: list

    def window_at(self, t: float) -> Window:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            raise ValueError("time before trajectory start")
        return Window.from_code(self.box.dimension, self.obs_radius,
                                int(self.codes[idx]))


def environment_view(traj: JointTrajectory) -> EnvironmentTrajectory:
    """Re-center the trajectory at the walker.

    The local segments are already walker-relative; the sampled full
    configurations are shifted so that the walker sits at the origin (a jump
    by z therefore shifts the view by -z).
    """
    views = [shift(cfg, tuple(-int(c) for c in x))
             for cfg, x in zip(traj.sample_configs, traj.sample_positions)]
    return EnvironmentTrajectory(
        box=traj.box, obs_radius=traj.obs_radius, horizon=traj.horizon,
        times=traj.seg_times, codes=traj.seg_codes,
        sample_times=traj.sample_times, sample_views=views)
