"""Joint medium-walker simulation and environment-view tests."""
import math

import numpy as np
import pytest
from scipy import stats

from contactwalk.graphical import build_graphical, from_events
from contactwalk.kernel import constant_kernel, example_drift_kernel
from contactwalk.lattice import (BoxSpec, configuration_all_one,
                                 configuration_single, configuration_zero,
                                 shift)
from contactwalk.rng import (AUX_CLOCK_STREAM, CLOCK_STREAM, GC_STREAM,
                             derive_key, replica_key)
from contactwalk.walk import (build_walk_clock, environment_view,
                              simulate_joint)


def torus(L):
    return BoxSpec(dimension=1, half_width=L, boundary="periodic")


def run_joint(L, lam, gamma, kern, horizon, seed, initial="all_one", **kw):
    gc = build_graphical(torus(L), lam, horizon, replica_key(seed, 0, GC_STREAM))
    init = (configuration_all_one(gc.box) if initial == "all_one"
            else configuration_single(gc.box))
    clock = build_walk_clock(kern, gamma, horizon, replica_key(seed, 0, CLOCK_STREAM))
    return simulate_joint(gc, kern, gamma, init, clock, **kw)


# -- clock ---------------------------------------------------------------------

def test_clock_rate_and_streams():
    kern = example_drift_kernel()
    clock = build_walk_clock(kern, 0.5, 100.0, seed=5)
    assert clock.rate == pytest.approx(0.5 * 4.0)
    assert np.all(np.diff(clock.ring_times) > 0)
    assert clock.ring_times.size == 0 or clock.ring_times[-1] <= 100.0
    assert np.all((clock.uniforms >= 0) & (clock.uniforms < 1))
    assert clock.uniforms.size == clock.ring_times.size


def test_clock_count_matches_poisson_mean():
    kern = example_drift_kernel()
    counts = [build_walk_clock(kern, 0.5, 50.0, seed=derive_key(1, r)).ring_times.size
              for r in range(200)]
    mean = 2.0 * 50.0
    se = math.sqrt(mean / len(counts))
    assert abs(np.mean(counts) - mean) < 4 * se


def test_gamma_zero_clock_empty():
    kern = example_drift_kernel()
    clock = build_walk_clock(kern, 0.0, 10.0, seed=3)
    assert clock.ring_times.size == 0


# -- joint simulation ----------------------------------------------------------

def test_gamma_zero_walker_fixed():
    traj = run_joint(10, 2.0, 0.0, example_drift_kernel(), 5.0, seed=11)
    assert traj.jump_times.size == 0
    assert tuple(traj.displacement()) == (0,)
    # and the medium marginal is untouched by the walker layer
    gc = build_graphical(torus(10), 2.0, 5.0, replica_key(11, 0, GC_STREAM))
    from contactwalk.graphical import evolve
    direct = evolve(gc, configuration_all_one(gc.box), 5.0)
    assert traj.final_config == direct


def test_quenched_determinism():
    kern = example_drift_kernel()
    a = run_joint(20, 2.0, 0.4, kern, 8.0, seed=7)
    b = run_joint(20, 2.0, 0.4, kern, 8.0, seed=7)
    assert np.array_equal(a.jump_times, b.jump_times)
    assert np.array_equal(a.jump_vectors, b.jump_vectors)
    assert a.final_config == b.final_config


def test_jump_ledger_and_support():
    kern = example_drift_kernel()
    traj = run_joint(30, 2.0, 0.8, kern, 20.0, seed=13)
    assert traj.jump_times.size <= traj.ring_count
    support = {z[0] for z in kern.support}
    assert set(traj.jump_vectors[:, 0].tolist()) <= support
    # ledger: displacement equals the sum of realized jumps
    assert traj.jump_vectors.sum(axis=0).tolist() == list(traj.displacement())


def test_ring_count_mean():
    kern = example_drift_kernel()
    counts = [run_joint(20, 1.0, 0.25, kern, 10.0, seed=derive_key(2, r)).ring_count
              for r in range(150)]
    mean = 0.25 * 4.0 * 10.0
    se = math.sqrt(mean / len(counts))
    assert abs(np.mean(counts) - mean) < 4 * se


def test_constant_kernel_jump_counts_poisson():
    """No thinning for a constant kernel whose total rate equals the norm."""
    kern = constant_kernel([(1,)], [1.0])
    counts = np.array([
        run_joint(40, 0.5, 0.7, kern, 20.0, seed=derive_key(3, r)).jump_times.size
        for r in range(300)])
    mean = 0.7 * 20.0
    # dispersion check: Poisson mean == variance
    assert abs(counts.mean() - mean) < 4 * math.sqrt(mean / counts.size)
    lo, hi = np.percentile(counts, [1, 99])
    grid = np.arange(int(lo), int(hi) + 1)
    probs = stats.poisson.pmf(grid, mean)
    obs = np.array([(counts == k).sum() for k in grid], dtype=float)
    exp = probs * counts.size
    keep = exp > 4
    chi2 = ((obs[keep] - exp[keep]) ** 2 / exp[keep]).sum()
    crit = stats.chi2.ppf(0.99, keep.sum() - 1)
    assert chi2 < crit


def test_walker_aborts_outside_nonperiodic_box():
    box = BoxSpec(dimension=1, half_width=2, boundary="empty")
    kern = constant_kernel([(1,)], [1.0])
    gc = build_graphical(box, 0.1, 50.0, seed=1)
    clock = build_walk_clock(kern, 5.0, 50.0, seed=2)
    with pytest.raises(RuntimeError):
        simulate_joint(gc, kern, 5.0, configuration_all_one(box), clock)


def test_periodic_box_unwraps_displacement():
    kern = constant_kernel([(1,)], [1.0])
    traj = run_joint(3, 0.1, 2.0, kern, 30.0, seed=9)
    # a +1 walk for 30 time units at rate 2 travels far beyond one period
    assert traj.displacement()[0] == traj.jump_times.size
    assert traj.displacement()[0] > 2 * 3 + 1


def test_clock_shorter_than_horizon_rejected():
    kern = example_drift_kernel()
    gc = build_graphical(torus(5), 1.0, 10.0, seed=1)
    clock = build_walk_clock(kern, 0.5, 5.0, seed=2)
    with pytest.raises(ValueError):
        simulate_joint(gc, kern, 0.5, configuration_all_one(gc.box), clock)


def test_thinning_left_limit_window():
    """The jump decision reads the medium state just before the ring."""
    box = torus(2)
    kern = example_drift_kernel()  # infected cum (0.5, 0.75); healthy (0.25, 0.75)
    # recovery clears the origin at t=1; ring at t=1.5 with uniform 0.3:
    # the healthy thresholds put 0.3 in the left-jump slot [0.25, 0.75)
    gc = from_events(box, lam=1.0, horizon=2.0, recoveries={(0,): [1.0]})
    from contactwalk.walk import WalkClock
    clock = WalkClock(rate=2.0, horizon=2.0, ring_times=np.array([1.5]),
                      uniforms=np.array([0.3]), seed_key=None)
    traj = simulate_joint(gc, kern, 0.5, configuration_single(box), clock)
    assert traj.jump_vectors.tolist() == [[-1]]
    # recovery after the ring instead: infected thresholds put 0.3 in the
    # right-jump slot [0, 0.5)
    gc2 = from_events(box, lam=1.0, horizon=2.0, recoveries={(0,): [1.8]})
    traj2 = simulate_joint(gc2, kern, 0.5, configuration_single(box), clock)
    assert traj2.jump_vectors.tolist() == [[1]]


# -- environment view ---------------------------------------------------------

def test_environment_gamma_zero_equals_medium():
    traj = run_joint(8, 2.0, 0.0, example_drift_kernel(), 4.0, seed=15,
                     obs_radius=2, sample_times=(1.0, 4.0))
    ep = environment_view(traj)
    gc = build_graphical(torus(8), 2.0, 4.0, replica_key(15, 0, GC_STREAM))
    from contactwalk.graphical import evolve
    from contactwalk.lattice import local_window
    for t in (0.0, 1.3, 2.2, 4.0):
        ref = evolve(gc, configuration_all_one(gc.box), t)
        assert ep.window_at(t).code == local_window(ref, (0,), 2).code


def test_environment_shift_semantics():
    """A walker jump by z shifts the observed window by -z: static medium."""
    box = torus(3)
    kern = constant_kernel([(1,)], [1.0])
    gc = from_events(box, lam=1.0, horizon=2.0)  # frozen medium, no events
    from contactwalk.walk import WalkClock
    clock = WalkClock(rate=1.0, horizon=2.0, ring_times=np.array([1.0]),
                      uniforms=np.array([0.0]), seed_key=None)
    init = configuration_single(box)  # 1 at the origin only
    traj = simulate_joint(gc, kern, 1.0, init, clock, obs_radius=1,
                          sample_times=(0.5, 1.5))
    ep = environment_view(traj)
    from contactwalk.lattice import local_window
    assert ep.window_at(0.5).code == local_window(init, (0,), 1).code
    assert ep.window_at(1.5).code == local_window(shift(init, (-1,)), (0,), 1).code
    # the re-centered snapshots agree with the same shift rule
    assert ep.sample_views[0] == init
    assert ep.sample_views[1] == shift(init, (-1,))


def test_environment_all_one_invariant_under_walk():
    traj = run_joint(4, 0.0, 1.0, constant_kernel([(1,)], [1.0]), 5.0,
                     seed=16, obs_radius=1, sample_times=(0.0, 2.5, 5.0))
    # lam=0 but starting all-one: recoveries thin it... instead freeze medium
    box = torus(4)
    gc = from_events(box, lam=1.0, horizon=5.0)
    kern = constant_kernel([(1,)], [1.0])
    clock = build_walk_clock(kern, 1.0, 5.0, seed=17)
    traj = simulate_joint(gc, kern, 1.0, configuration_all_one(box), clock,
                          obs_radius=1, sample_times=(0.0, 2.5, 5.0))
    ep = environment_view(traj)
    assert all(code == 0b111 for code in ep.codes)


def test_environment_horizon_recorded():
    traj = run_joint(6, 1.5, 0.3, example_drift_kernel(), 7.0, seed=18,
                     obs_radius=1)
    ep = environment_view(traj)
    assert ep.horizon == 7.0
