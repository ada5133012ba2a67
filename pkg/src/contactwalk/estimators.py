"""Statistical estimators over simulated trajectories.

Everything here consumes the event-exact segment representation produced by
the engines (piecewise-constant window codes with their change times), so
time integrals are computed without discretization error.  A constant
integrand short-circuits to its constant value, which keeps algebraic
identities (average of a constant, averages after the medium has died out)
exact in floating point rather than merely close.

Statistical outputs carry standard errors and the comparison helpers used by
the acceptance battery: Wilson intervals for frequencies, pairwise z-scores
with Bonferroni correction for mean agreement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import rng
from .graphical import (agreement_set, build_graphical, build_graphical_family,
                        extinction_time, visited_masks)
from .kernel import KernelSpec, range_hull
from .lattice import (BoxSpec, Configuration, configuration_all_one,
                      configuration_bernoulli, configuration_from_sites,
                      configuration_single, configuration_zero, window_offsets)
from .walk import build_walk_clock, simulate_joint

MAX_TABLE_CELLS = 22


class EstimatorError(RuntimeError):
    pass


# -- local functions of the observation window --------------------------------

def _projection_map(dimension: int, r_small: int, r_big: int) -> np.ndarray:
    """Cell index in the big window of each cell of the small window."""
    big = {off: j for j, off in enumerate(window_offsets(dimension, r_big))}
    return np.array([big[off] for off in window_offsets(dimension, r_small)],
                    dtype=np.int64)


def project_codes(codes, dimension: int, r_from: int, r_to: int):
    """Restrict window codes of radius r_from to the centered radius r_to."""
    if r_to > r_from:
        raise ValueError("cannot project to a larger window")
    if r_to == r_from:
        return np.asarray(codes, dtype=np.int64)
    idx = _projection_map(dimension, r_to, r_from)
    codes = np.asarray(codes, dtype=np.int64)
    out = np.zeros_like(codes)
    for j, cell in enumerate(idx):
        out |= ((codes >> int(cell)) & 1) << j
    return out


@dataclass(frozen=True)
class LocalFunction:
    """A bounded function of the window of given radius around the walker."""

    name: str
    dimension: int
    radius: int
    table: np.ndarray          # value per window code, length 2^cells

    def __post_init__(self):
        cells = len(tuple(window_offsets(self.dimension, self.radius)))
        if cells > MAX_TABLE_CELLS:
            raise ValueError("window too large for a value table")
        if self.table.shape != (1 << cells,):
            raise ValueError("table length must be 2^cells")

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.table).max())

    @property
    def value_at_zero(self) -> float:
        """f evaluated on the all-healthy window."""
        return float(self.table[0])

    def values(self, codes, obs_radius: int) -> np.ndarray:
        if obs_radius < self.radius:
            raise EstimatorError(
                f"function {self.name} needs window radius {self.radius}, "
                f"trajectory observed radius {obs_radius}")
        return self.table[project_codes(codes, self.dimension, obs_radius,
                                        self.radius)]


def _cells(dimension: int, radius: int) -> list:
    return list(window_offsets(dimension, radius))


def occupancy_at(offset=0, dimension: int = 1) -> LocalFunction:
    """Indicator that the site at ``offset`` from the walker is infected."""
    off = (offset,) * dimension if np.isscalar(offset) else tuple(offset)
    radius = max(abs(c) for c in off) if any(off) else 0
    cells = _cells(dimension, radius)
    j = cells.index(off)
    table = np.array([(code >> j) & 1 for code in range(1 << len(cells))],
                     dtype=np.float64)
    return LocalFunction(f"occupancy@{off}", dimension, radius, table)


def all_ones(radius: int, dimension: int = 1) -> LocalFunction:
    cells = _cells(dimension, radius)
    full = (1 << len(cells)) - 1
    table = np.zeros(full + 1)
    table[full] = 1.0
    return LocalFunction(f"all_ones(r={radius})", dimension, radius, table)


def all_healthy(radius: int, dimension: int = 1) -> LocalFunction:
    cells = _cells(dimension, radius)
    table = np.zeros(1 << len(cells))
    table[0] = 1.0
    return LocalFunction(f"all_healthy(r={radius})", dimension, radius, table)


def fraction_infected(radius: int, dimension: int = 1) -> LocalFunction:
    cells = _cells(dimension, radius)
    n = len(cells)
    table = np.array([bin(code).count("1") / n for code in range(1 << n)])
    return LocalFunction(f"fraction(r={radius})", dimension, radius, table)


def constant(value: float, dimension: int = 1) -> LocalFunction:
    return LocalFunction(f"const({value})", dimension, 0,
                         np.array([float(value), float(value)]))


# -- event-exact time averages -------------------------------------------------

def window_average(seg_times: np.ndarray, values: np.ndarray, horizon: float,
                   t_lo: float, t_hi: float) -> float:
    """Average of the piecewise-constant path over [t_lo, t_hi].

    Segment k holds on [seg_times[k], seg_times[k+1]), the last one up to the
    horizon.  A constant path returns its value exactly.
    """
    if not (0.0 <= t_lo < t_hi <= horizon + 1e-12):
        raise ValueError("need 0 <= t_lo < t_hi <= horizon")
    edges = np.append(seg_times, horizon)
    lo = np.clip(edges[:-1], t_lo, t_hi)
    hi = np.clip(edges[1:], t_lo, t_hi)
    w = hi - lo
    nz = w > 0
    if not nz.any():
        raise EstimatorError("averaging window contains no time")
    vals = values[nz]
    if np.all(vals == vals[0]):
        return float(vals[0])
    num = math.fsum((vals * w[nz]).tolist())
    den = math.fsum(w[nz].tolist())
    return num / den


@dataclass
class CesaroSeries:
    """Running averages (1/t) int_0^t f ds evaluated at the event times."""

    function: str
    times: np.ndarray
    averages: np.ndarray
    final_average: float
    last_half_average: float

    @property
    def convergence_gap(self) -> float:
        """|last-half average - full average|: a plain diagnostic, no claim."""
        return abs(self.last_half_average - self.final_average)


def cesaro_average(traj, f: LocalFunction, obs_radius: int | None = None) -> CesaroSeries:
    """Event-exact running Cesaro average of f along a trajectory.

    Accepts a joint trajectory (window codes seen from the walker) or an
    environment trajectory.
    """
    seg_times = getattr(traj, "seg_times", None)
    if seg_times is None:
        seg_times, codes = traj.times, traj.codes
    else:
        codes = traj.seg_codes
    horizon = traj.horizon
    if obs_radius is None:
        obs_radius = traj.obs_radius
    vals = f.values(codes, obs_radius)

    edges = np.append(seg_times, horizon)
    widths = np.diff(edges)
    cum = np.cumsum(vals * widths)
    times = edges[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        averages = cum / times
    if np.all(vals == vals[0]):
        averages = np.full_like(averages, vals[0])
        final = float(vals[0])
    else:
        final = window_average(seg_times, vals, horizon, 0.0, horizon)
    last_half = window_average(seg_times, vals, horizon, horizon / 2.0, horizon)
    return CesaroSeries(function=f.name, times=times, averages=averages,
                        final_average=final, last_half_average=last_half)


def density(traj, offset=0) -> CesaroSeries:
    """Running time-average of the occupancy at a fixed offset from the walker."""
    return cesaro_average(traj, occupancy_at(offset, traj.box.dimension))


# -- frequencies ----------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = 1.96):
    if trials == 0:
        raise ValueError("no trials")
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class SurvivalEstimate:
    frequency: float
    ci_low: float
    ci_high: float
    replicas: int
    horizon: float
    sensitivity: dict           # horizon -> frequency at that earlier horizon
    extinction_times: np.ndarray


def survival_probability(box: BoxSpec, lam: float, initial, horizon: float,
                         replicas: int, seed: int,
                         threads: int = 1) -> SurvivalEstimate:
    """Horizon-survival frequency of the medium alone, with Wilson CI.

    ``initial`` is a Configuration or a named spec tuple as accepted by
    :func:`make_initial`.  The sensitivity block reports the frequency at
    half and quarter horizon from the same runs, quantifying how much the
    classification would move if the horizon were doubled.
    """
    args = [(box, lam, initial, horizon, seed, r) for r in range(replicas)]
    exts = np.array(_pool_map(_survival_worker, args, threads))
    survived = ~np.isfinite(exts)
    k = int(survived.sum())
    lo, hi = wilson_interval(k, replicas)
    sens = {horizon / 4: float((exts > horizon / 4).mean()),
            horizon / 2: float((exts > horizon / 2).mean()),
            horizon: k / replicas}
    return SurvivalEstimate(frequency=k / replicas, ci_low=lo, ci_high=hi,
                            replicas=replicas, horizon=horizon,
                            sensitivity=sens, extinction_times=exts)


def make_initial(box: BoxSpec, spec, gen=None) -> Configuration:
    """Build a named initial configuration: Configuration, or a tuple among
    ('zero',), ('all_one',), ('single',), ('bernoulli', p), ('sites', sites)."""
    if isinstance(spec, Configuration):
        return spec
    kind = spec[0]
    if kind == "sites":
        return configuration_from_sites(box, spec[1])
    if kind == "zero":
        return configuration_zero(box)
    if kind == "all_one":
        return configuration_all_one(box)
    if kind == "single":
        return configuration_single(box)
    if kind == "bernoulli":
        if gen is None:
            raise ValueError("bernoulli initial needs a generator")
        return configuration_bernoulli(box, float(spec[1]), gen)
    raise ValueError(f"unknown initial spec {spec!r}")


def _survival_worker(args):
    box, lam, initial, horizon, seed, r = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(seed, r, rng.GC_STREAM))
    init = make_initial(box, initial, rng.replica_generator(seed, r, rng.INIT_STREAM))
    return extinction_time(gc, init)


def _pool_map(fn, args, threads: int):
    if threads <= 1 or len(args) < 2:
        return [fn(a) for a in args]
    with Pool(processes=threads) as pool:
        return pool.map(fn, args, chunksize=max(1, len(args) // (threads * 8)))


# -- speed ------------------------------------------------------------------------

def drift_table(spec: KernelSpec, gamma: float, obs_radius: int,
                dimension: int | None = None) -> np.ndarray:
    """Mean jump velocity gamma*sum_z z*alpha(window, z) per observation code."""
    d = spec.dimension if dimension is None else dimension
    cells = len(_cells(d, obs_radius))
    if cells > MAX_TABLE_CELLS:
        raise ValueError("observation window too large for a drift table")
    codes = np.arange(1 << cells, dtype=np.int64)
    kcodes = project_codes(codes, d, obs_radius, spec.radius)
    jumps = spec.jump_array().astype(np.float64)
    return gamma * spec.rates[kcodes, :] @ jumps       # (2^cells, d)


@dataclass
class SpeedEstimate:
    """Direct and drift-formula speed estimators with their buckets."""

    horizon: float
    replicas: int
    direct: np.ndarray          # (n, d) displacement / horizon
    drift_formula: np.ndarray   # (n, d) time-averaged instantaneous drift
    survived: np.ndarray        # (n,) bool
    direct_mean: np.ndarray
    direct_se: np.ndarray
    drift_mean: np.ndarray
    drift_se: np.ndarray
    v1: np.ndarray | None       # surviving-bucket direct mean
    v1_se: np.ndarray | None
    v0: np.ndarray | None       # post-extinction tail drift (exact per path)
    v0_predicted: np.ndarray    # gamma * drift of the all-healthy window
    survival_weight: float

    def agreement_z(self) -> np.ndarray:
        """Combined z-score between the two estimators, per coordinate."""
        se = np.sqrt(self.direct_se ** 2 + self.drift_se ** 2)
        se = np.where(se == 0, np.inf, se)
        return np.abs(self.direct_mean - self.drift_mean) / se


def _mean_se(rows: np.ndarray):
    mean = rows.mean(axis=0)
    if rows.shape[0] > 1:
        se = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    else:
        se = np.full(rows.shape[1], np.inf)
    return mean, se


def speed(trajs, spec: KernelSpec, gamma: float) -> SpeedEstimate:
    """Speed estimators over a batch of joint trajectories.

    Enforces the jump-ledger audit on every path: the sum of realized jump
    vectors must equal the net displacement exactly, or the batch is
    rejected as corrupt.
    """
    if len(trajs) < 2:
        raise EstimatorError("need at least two replicas")
    d = trajs[0].box.dimension
    h = trajs[0].horizon
    table = drift_table(spec, gamma, trajs[0].obs_radius, d)
    direct = np.empty((len(trajs), d))
    driftf = np.empty((len(trajs), d))
    survived = np.empty(len(trajs), dtype=bool)
    tail_vals = []
    for i, tr in enumerate(trajs):
        if not np.array_equal(tr.displacement(), tr.jump_ledger_sum()):
            raise EstimatorError(
                f"replica {i}: jump ledger does not match displacement")
        direct[i] = np.asarray(tr.displacement(), dtype=np.float64) / h
        vals = table[tr.seg_codes]                    # (n_seg, d)
        for c in range(d):
            driftf[i, c] = window_average(tr.seg_times, vals[:, c], h, 0.0, h)
        survived[i] = not np.isfinite(tr.extinction_time)
        if np.isfinite(tr.extinction_time) and tr.extinction_time < h:
            tail = np.array([window_average(tr.seg_times, vals[:, c], h,
                                            tr.extinction_time, h)
                             for c in range(d)])
            tail_vals.append(tail)
    direct_mean, direct_se = _mean_se(direct)
    drift_mean, drift_se = _mean_se(driftf)
    v1 = v1_se = None
    if survived.any():
        v1, v1_se = _mean_se(direct[survived])
    v0 = None
    if tail_vals:
        tails = np.vstack(tail_vals)
        if not np.all(tails == tails[0]):
            raise EstimatorError(
                "post-extinction drift differs across extinct replicas; the "
                "medium cannot have been all-healthy")
        v0 = tails[0]
    return SpeedEstimate(
        horizon=h, replicas=len(trajs), direct=direct, drift_formula=driftf,
        survived=survived, direct_mean=direct_mean, direct_se=direct_se,
        drift_mean=drift_mean, drift_se=drift_se, v1=v1, v1_se=v1_se, v0=v0,
        v0_predicted=table[0], survival_weight=float(survived.mean()))


# -- complete-convergence consistency ---------------------------------------------

def _bonferroni_threshold(alpha: float, n_tests: int) -> float:
    from scipy.stats import norm
    return float(norm.ppf(1.0 - alpha / (2.0 * n_tests)))


def _convergence_worker(args):
    (box, lam, gamma, spec, obs_radius, horizon, t_lo, initial, master, r,
     tables) = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(master, r, rng.GC_STREAM))
    init = make_initial(box, initial, rng.replica_generator(master, r, rng.INIT_STREAM))
    clock = build_walk_clock(spec, gamma, horizon,
                             rng.replica_key(master, r, rng.CLOCK_STREAM))
    traj = simulate_joint(gc, spec, gamma, init, clock, obs_radius=obs_radius)
    ext = traj.extinction_time
    out_main, out_half, out_full = [], [], []
    out_tail, out_tail_half = [], []
    for table in tables:
        vals = table[traj.seg_codes]
        out_main.append(window_average(traj.seg_times, vals, horizon, t_lo, horizon))
        out_half.append(window_average(traj.seg_times, vals, horizon,
                                       t_lo / 2, horizon / 2))
        out_full.append(window_average(traj.seg_times, vals, horizon, 0.0, horizon))
        if np.isfinite(ext) and ext < horizon:
            out_tail.append(window_average(traj.seg_times, vals, horizon,
                                           ext, horizon))
        else:
            out_tail.append(np.nan)
        if np.isfinite(ext) and ext < horizon / 2:
            out_tail_half.append(window_average(traj.seg_times, vals, horizon,
                                                ext, horizon / 2))
        else:
            out_tail_half.append(np.nan)
    return ext, out_main, out_half, out_full, out_tail, out_tail_half


def _bucket_stats(rows: np.ndarray):
    mean = rows.mean(axis=0)
    se = (rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
          if rows.shape[0] > 1 else np.full(rows.shape[1], np.inf))
    return mean, se


def _pairwise_block(names, f_names, means, ses, threshold):
    tests = []
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            for k, fn in enumerate(f_names):
                se = math.sqrt(ses[a][k] ** 2 + ses[b][k] ** 2)
                z = abs(means[a][k] - means[b][k]) / se if se > 0 else math.inf
                tests.append({
                    "initials": (names[a], names[b]), "function": fn,
                    "difference": means[a][k] - means[b][k],
                    "combined_se": se, "z": z, "pass": bool(z <= threshold)})
    return tests


def complete_convergence_check(initials, f_set, *, box: BoxSpec, lam: float,
                               gamma: float, spec: KernelSpec, horizon: float,
                               replicas: int, seed: int, obs_radius: int,
                               t_lo: float | None = None, alpha: float = 0.01,
                               threads: int = 1, min_surviving: int = 10,
                               box_sensitivity: bool = True) -> dict:
    """Consistency check that surviving runs forget their initial condition.

    For each named initial, replicas are split at the horizon into surviving
    and extinct buckets.  Surviving-bucket time averages of every local
    function (over [t_lo, horizon]) are compared pairwise across initials by
    z-tests with Bonferroni correction across the function set.  Extinct
    buckets are averaged over the post-extinction tail, where the average
    must equal f evaluated on the all-healthy window exactly.  The report
    carries a half-horizon block and (optionally) a half-box block so the
    stability of the verdict under doubling is visible.
    """
    if t_lo is None:
        t_lo = horizon / 2
    names = [n for n, _ in initials]
    tables = [f.values(np.arange(1 << len(_cells(box.dimension, obs_radius)),
                                 dtype=np.int64), obs_radius) for f in f_set]
    f_names = [f.name for f in f_set]
    f_zero = [f.value_at_zero for f in f_set]
    threshold = _bonferroni_threshold(alpha, len(f_set))

    per_initial = {}
    for idx, (name, init_spec) in enumerate(initials):
        master = rng.derive_key(seed, idx)
        args = [(box, lam, gamma, spec, obs_radius, horizon, t_lo, init_spec,
                 master, r, tables) for r in range(replicas)]
        rows = _pool_map(_convergence_worker, args, threads)
        exts = np.array([row[0] for row in rows])
        main = np.array([row[1] for row in rows])
        half = np.array([row[2] for row in rows])
        full = np.array([row[3] for row in rows])
        tail = np.array([row[4] for row in rows])
        tail_h = np.array([row[5] for row in rows])
        per_initial[name] = {"extinction_times": exts, "main": main,
                             "half": half, "full": full, "tail": tail,
                             "tail_half": tail_h}

    def analyze(avg_key, surv_time, tail_key):
        means, ses, blocks = [], [], {}
        for name in names:
            data = per_initial[name]
            surv = data["extinction_times"] > surv_time
            n_surv = int(surv.sum())
            entry = {"replicas": replicas, "surviving": n_surv,
                     "survival_frequency": n_surv / replicas}
            if n_surv >= 2:
                m, s = _bucket_stats(data[avg_key][surv])
                entry["surviving_mean"] = m.tolist()
                entry["surviving_se"] = s.tolist()
                means.append(m); ses.append(s)
            else:
                means.append(None); ses.append(None)
            ext_rows = data[tail_key][~surv]
            ext_rows = ext_rows[~np.isnan(ext_rows).any(axis=1)] if ext_rows.size else ext_rows
            if ext_rows.size:
                exact = [bool(np.all(ext_rows[:, k] == f_zero[k]))
                         for k in range(len(f_set))]
                entry["extinct_tail_mean"] = ext_rows.mean(axis=0).tolist()
                entry["extinct_tail_exact"] = exact
            blocks[name] = entry
        ok = [i for i, m in enumerate(means) if m is not None]
        tests = _pairwise_block([names[i] for i in ok], f_names,
                                [means[i] for i in ok], [ses[i] for i in ok],
                                threshold)
        return blocks, tests

    blocks, tests = analyze("main", horizon, "tail")
    blocks_h, tests_h = analyze("half", horizon / 2, "tail_half")

    warnings = [f"initial {n}: only {blocks[n]['surviving']} surviving replicas"
                for n in names if blocks[n]["surviving"] < min_surviving]

    # mixture weight: full-window average across all replicas vs the
    # two-point mixture of the surviving mean and f at the all-healthy window
    mixture = {}
    for name in names:
        data = per_initial[name]
        surv = data["extinction_times"] > horizon
        if 0 < surv.sum() < replicas:
            w = float(surv.mean())
            full_mean = data["full"].mean(axis=0)
            surv_mean = data["full"][surv].mean(axis=0)
            implied = []
            for k in range(len(f_set)):
                gap = surv_mean[k] - f_zero[k]
                implied.append(float((full_mean[k] - f_zero[k]) / gap)
                               if abs(gap) > 1e-12 else math.nan)
            mixture[name] = {"survival_frequency": w, "implied_weights": implied}

    report = {
        "parameters": {"lam": lam, "gamma": gamma, "horizon": horizon,
                       "replicas": replicas, "t_lo": t_lo, "alpha": alpha,
                       "bonferroni_threshold": threshold,
                       "box_half_width": box.half_width,
                       "functions": f_names, "initials": names,
                       "seed": seed},
        "buckets": blocks,
        "pairwise_tests": tests,
        "all_pass": bool(all(t["pass"] for t in tests)) if tests else False,
        "mixture": mixture,
        "warnings": warnings,
        "horizon_sensitivity": {"buckets": blocks_h, "pairwise_tests": tests_h,
                                "all_pass": bool(all(t["pass"] for t in tests_h))
                                if tests_h else False},
    }
    if box_sensitivity and box.half_width >= 4:
        small = BoxSpec(dimension=box.dimension,
                        half_width=box.half_width // 2, boundary=box.boundary)
        report["box_sensitivity"] = complete_convergence_check(
            initials, f_set, box=small, lam=lam, gamma=gamma, spec=spec,
            horizon=horizon, replicas=replicas, seed=rng.derive_key(seed, 97),
            obs_radius=obs_radius, t_lo=t_lo, alpha=alpha, threads=threads,
            min_surviving=min_surviving, box_sensitivity=False)
    return report


# -- shape and cone ------------------------------------------------------------------

@dataclass
class ShapeSample:
    """Growth data of one replica: visited set and agreement set at t_final."""

    survived: bool
    extinction_time: float
    t_final: float
    visited: np.ndarray         # bool over box sites, visited by t_final
    agreement: np.ndarray       # bool over box sites, agree with 1-bar start on [t_final, horizon]
    inner_radius: float         # of the fattened visited-and-agreeing set
    outer_radius: float         # of the fattened visited set


def _inner_radius(mask: np.ndarray, box: BoxSpec) -> float:
    """Largest a with the l1-ball of radius a inside the unit-cube fattening."""
    origin_flat = box.flat(box.origin)
    if not mask[origin_flat]:
        return 0.0
    best = box.half_width + 0.5      # cannot certify beyond the box
    for f in np.flatnonzero(~mask):
        x = box.coords(int(f))
        dist = sum(max(abs(c) - 0.5, 0.0) for c in x)
        best = min(best, dist)
    return best


def _outer_radius(mask: np.ndarray, box: BoxSpec) -> float:
    flat = np.flatnonzero(mask)
    if flat.size == 0:
        return 0.0
    return max(sum(abs(c) for c in box.coords(int(f))) + 0.5 * box.dimension
               for f in flat)


def shape_sample(gc, t_final: float) -> ShapeSample:
    """One replica's growth sets from a single-site start on ``gc``.

    The agreement set is computed against the all-one start on the same
    construction over [t_final, horizon], the finite-horizon stand-in for
    agreement at all later times.
    """
    if t_final < 1.0:
        raise ValueError("rescaling by t needs t_final >= 1")
    if t_final > gc.horizon:
        raise ValueError("t_final beyond the construction horizon")
    box = gc.box
    single = configuration_single(box)
    masks, ext, _ = visited_masks(gc, single, [t_final])
    visited = masks[0]
    agree = agreement_set(gc, single, configuration_all_one(box),
                          t_final, gc.horizon)
    survived = not np.isfinite(ext)
    both = visited & agree
    return ShapeSample(survived=survived, extinction_time=ext, t_final=t_final,
                       visited=visited, agreement=agree,
                       inner_radius=_inner_radius(both, box),
                       outer_radius=_outer_radius(visited, box))


@dataclass
class ShapeEstimate:
    lam: float
    t_final: float
    epsilon: float
    replicas: int
    surviving: int
    f_hat: float                    # median rescaled inner radius, survivors
    radii: np.ndarray               # rescaled inner radii of survivors
    inner_frequency: float          # (1-eps)-ball containment among survivors
    outer_frequency: float          # visited set inside (1+eps)-ball
    candidate_radius: float


def _shape_batch(samples, lam, t_final, epsilon, candidate_radius=None):
    surv = [s for s in samples if s.survived]
    if not surv:
        raise EstimatorError("no surviving replicas for the shape estimate")
    radii = np.array([s.inner_radius / t_final for s in surv])
    f_hat = float(np.median(radii))
    r_c = f_hat if candidate_radius is None else candidate_radius
    inner = float(np.mean([s.inner_radius >= (1 - epsilon) * r_c * t_final
                           for s in surv]))
    outer = float(np.mean([s.outer_radius <= (1 + epsilon) * r_c * t_final
                           for s in surv]))
    return ShapeEstimate(lam=lam, t_final=t_final, epsilon=epsilon,
                         replicas=len(samples), surviving=len(surv),
                         f_hat=f_hat, radii=radii, inner_frequency=inner,
                         outer_frequency=outer, candidate_radius=r_c)


def _shape_worker(args):
    box, lam, horizon, t_final, seed, r = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(seed, r, rng.GC_STREAM))
    return shape_sample(gc, t_final)


def shape_estimate(box: BoxSpec, lam: float, horizon: float, t_final: float,
                   replicas: int, seed: int, epsilon: float,
                   candidate_radius: float | None = None,
                   threads: int = 1) -> ShapeEstimate:
    """Inner-radius estimate of the rescaled growth shape over replicas."""
    args = [(box, lam, horizon, t_final, seed, r) for r in range(replicas)]
    samples = _pool_map(_shape_worker, args, threads)
    return _shape_batch(samples, lam, t_final, epsilon, candidate_radius)


def _shape_family_worker(args):
    box, lams, horizon, t_final, seed, r = args
    gcs = build_graphical_family(box, lams, horizon,
                                 rng.replica_key(seed, r, rng.GC_STREAM))
    return [shape_sample(gc, t_final) for gc in gcs]


def shape_trend(box: BoxSpec, lams, horizon: float, t_final: float,
                replicas_per_batch: int, batches: int, seed: int,
                epsilon: float, threads: int = 1) -> dict:
    """Paired monotonicity of the shape radius across infection rates.

    Each batch shares one thinning-coupled family of constructions per
    replica, so comparisons across rates are paired path by path.  A batch
    counts as monotone when the per-batch median radii are nondecreasing in
    the rate.
    """
    lams = sorted(float(x) for x in lams)
    per_batch = []
    monotone = 0
    usable = 0
    for b in range(batches):
        bseed = rng.derive_key(seed, b)
        args = [(box, lams, horizon, t_final, bseed, r)
                for r in range(replicas_per_batch)]
        rows = _pool_map(_shape_family_worker, args, threads)
        medians = []
        for j, lam in enumerate(lams):
            samples = [row[j] for row in rows]
            try:
                est = _shape_batch(samples, lam, t_final, epsilon)
                medians.append(est.f_hat)
            except EstimatorError:
                medians.append(None)
        per_batch.append(medians)
        if all(m is not None for m in medians):
            usable += 1
            if all(medians[j] <= medians[j + 1] + 1e-12
                   for j in range(len(lams) - 1)):
                monotone += 1
    return {"lams": lams, "batches": batches, "usable_batches": usable,
            "monotone_batches": monotone,
            "monotone_fraction": monotone / usable if usable else math.nan,
            "per_batch_medians": per_batch}


def cone_condition_verdict(spec: KernelSpec, gamma: float, epsilon: float,
                           f_hat: float) -> dict:
    """Is the inflated reachable-drift hull inside the l1-ball of radius f_hat?"""
    verts = range_hull(spec, gamma)
    reach = max(sum(abs(c) for c in v) for v in verts)
    return {"gamma": gamma, "epsilon": epsilon, "f_hat": f_hat,
            "hull_l1_radius": reach,
            "inflated_radius": (1 + epsilon) * reach,
            "pass": bool((1 + epsilon) * reach <= f_hat)}
