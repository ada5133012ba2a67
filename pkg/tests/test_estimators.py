"""Window averages, speed, survival, convergence, and shape estimators."""
import math

import numpy as np
import pytest

from contactwalk import estimators as est
from contactwalk.graphical import build_graphical
from contactwalk.kernel import constant_kernel, example_drift_kernel
from contactwalk.lattice import BoxSpec, configuration_all_one, configuration_single
from contactwalk.rng import CLOCK_STREAM, GC_STREAM, derive_key, replica_key
from contactwalk.walk import build_walk_clock, environment_view, simulate_joint


def torus(L):
    return BoxSpec(dimension=1, half_width=L, boundary="periodic")


def joint_traj(seed, L=20, lam=2.0, gamma=0.3, horizon=10.0, kern=None,
               initial="all_one", obs_radius=1):
    kern = kern or example_drift_kernel()
    gc = build_graphical(torus(L), lam, horizon, replica_key(seed, 0, GC_STREAM))
    init = (configuration_all_one(gc.box) if initial == "all_one"
            else configuration_single(gc.box))
    clock = build_walk_clock(kern, gamma, horizon,
                             replica_key(seed, 0, CLOCK_STREAM))
    return simulate_joint(gc, kern, gamma, init, clock, obs_radius=obs_radius)


# -- local functions ------------------------------------------------------------

def test_occupancy_function_table():
    f = est.occupancy_at(0)
    assert f.value_at_zero == 0.0
    assert f.sup_norm == 1.0
    codes = np.array([0b000, 0b010, 0b101])
    # radius-1 window, origin is the middle bit
    assert f.values(codes, 1).tolist() == [0.0, 1.0, 0.0]


def test_all_healthy_value_at_zero_is_one():
    f = est.all_healthy(1)
    assert f.value_at_zero == 1.0
    assert f.values(np.array([0b000]), 1).tolist() == [1.0]
    assert f.values(np.array([0b010]), 1).tolist() == [0.0]


def test_projection_of_codes():
    # radius 2 code with bits (x=-2..2) = (1,0,1,1,0) -> radius 1 keeps (0,1,1)
    code = 0b01101
    out = est.project_codes(np.array([code]), 1, 2, 1)
    assert out.tolist() == [0b110]


# -- window averages -------------------------------------------------------------

def test_window_average_piecewise_exact():
    times = np.array([0.0, 1.0, 3.0])
    vals = np.array([2.0, 4.0, 1.0])
    # over [0, 4): 2*1 + 4*2 + 1*1 = 11, width 4
    avg = est.window_average(times, vals, horizon=4.0, t_lo=0.0, t_hi=4.0)
    assert avg == pytest.approx(11 / 4)
    # clipped window [2, 4): 4*1 + 1*1 over width 2
    avg2 = est.window_average(times, vals, horizon=4.0, t_lo=2.0, t_hi=4.0)
    assert avg2 == pytest.approx(5 / 2)


def test_constant_function_average_is_exact():
    traj = joint_traj(1)
    series = est.cesaro_average(traj, est.constant(0.7), obs_radius=1)
    assert series.final_average == 0.7  # bitwise, not approx
    assert np.all(series.averages == 0.7)


def test_cesaro_bounded_by_sup_norm():
    traj = joint_traj(2)
    f = est.fraction_infected(1)
    series = est.cesaro_average(traj, f, obs_radius=1)
    assert np.all(series.averages <= f.sup_norm + 1e-15)
    assert np.all(series.averages >= 0.0)


def test_density_from_zero_medium_exact():
    gc = build_graphical(torus(10), 2.0, 5.0, seed=3)
    from contactwalk.lattice import configuration_zero
    kern = example_drift_kernel()
    clock = build_walk_clock(kern, 0.3, 5.0, seed=4)
    traj = simulate_joint(gc, kern, 0.3, configuration_zero(gc.box), clock,
                          obs_radius=1)
    series = est.density(traj)
    assert series.final_average == 0.0  # exact
    assert np.all(series.averages == 0.0)


def test_density_frozen_all_one_exact():
    from contactwalk.graphical import from_events
    box = torus(5)
    gc = from_events(box, lam=2.0, horizon=6.0)  # no events: frozen medium
    kern = example_drift_kernel()
    clock = build_walk_clock(kern, 0.5, 6.0, seed=5)
    traj = simulate_joint(gc, kern, 0.5, configuration_all_one(box), clock,
                          obs_radius=1)
    assert est.density(traj).final_average == 1.0  # exact


def test_cesaro_accepts_environment_trajectory():
    traj = joint_traj(6, obs_radius=1)
    ep = environment_view(traj)
    a = est.cesaro_average(traj, est.occupancy_at(0), obs_radius=1)
    b = est.cesaro_average(ep, est.occupancy_at(0))
    assert a.final_average == b.final_average


# -- survival ---------------------------------------------------------------------

def test_survival_from_zero_initial_exact():
    out = est.survival_probability(torus(5), 2.0, ("zero",), horizon=5.0,
                                   replicas=50, seed=1)
    assert out.frequency == 0.0
    assert out.ci_high < 0.1


def test_survival_pure_death():
    out = est.survival_probability(torus(2), 0.0, ("single",), horizon=5.0,
                                   replicas=3000, seed=2)
    p = math.exp(-5.0)
    sigma = math.sqrt(p * (1 - p) / 3000)
    assert abs(out.frequency - p) < 4 * sigma
    assert out.ci_low <= out.frequency <= out.ci_high


def test_survival_sensitivity_monotone():
    out = est.survival_probability(torus(8), 1.5, ("single",), horizon=20.0,
                                   replicas=400, seed=3)
    freqs = [out.sensitivity[h] for h in sorted(out.sensitivity)]
    assert freqs == sorted(freqs, reverse=True)  # nonincreasing in horizon


def test_wilson_interval_known_value():
    lo, hi = est.wilson_interval(50, 100, z=1.96)
    assert lo == pytest.approx(0.404, abs=2e-3)
    assert hi == pytest.approx(0.596, abs=2e-3)


# -- speed ------------------------------------------------------------------------

def test_speed_constant_kernel_exact_drift():
    kern = constant_kernel([(1,)], [1.0])
    trajs = [joint_traj(derive_key(7, r), L=50, lam=1.0, gamma=0.7,
                        horizon=30.0, kern=kern, obs_radius=0)
             for r in range(10)]
    out = est.speed(trajs, kern, 0.7)
    assert np.all(out.drift_formula == 0.7)  # exact on every path
    se = 3 * math.sqrt(0.7 / 30.0 / 10)
    assert abs(out.direct_mean[0] - 0.7) < se


def test_speed_gamma_zero_exact():
    kern = example_drift_kernel()
    trajs = [joint_traj(derive_key(8, r), gamma=0.0, horizon=5.0)
             for r in range(4)]
    out = est.speed(trajs, kern, 0.0)
    assert np.all(out.direct == 0.0)
    assert np.all(out.drift_formula == 0.0)


def test_speed_extinct_tail_drift_is_healthy_drift():
    # subcritical medium: most replicas die, after which the walker drifts
    # at the healthy-window rate gamma * (1 - 2) = -0.2
    kern = example_drift_kernel()
    trajs = [joint_traj(derive_key(9, r), L=40, lam=0.4, gamma=0.2,
                        horizon=40.0, initial="single", obs_radius=0)
             for r in range(30)]
    out = est.speed(trajs, kern, 0.2)
    assert out.v0 is not None
    assert out.v0[0] == pytest.approx(-0.2, abs=1e-12)
    assert out.v0_predicted[0] == pytest.approx(-0.2, abs=1e-12)


def test_speed_ledger_audit_rejects_corrupt_trajectory():
    kern = example_drift_kernel()
    traj = joint_traj(10, horizon=5.0)
    traj.jump_vectors = traj.jump_vectors.copy()
    if traj.jump_vectors.size == 0:
        pytest.skip("no jumps drawn")
    traj.jump_vectors[0, 0] += 1  # corrupt the ledger
    with pytest.raises(est.EstimatorError):
        est.speed([traj, joint_traj(11, horizon=5.0)], kern, 0.3)


# -- convergence -------------------------------------------------------------------

def test_convergence_zero_initial_all_extinct():
    kern = example_drift_kernel()
    report = est.complete_convergence_check(
        [("zero", ("zero",))], [est.occupancy_at(0), est.all_healthy(1)],
        box=torus(10), lam=2.0, gamma=0.2, spec=kern, horizon=6.0,
        replicas=20, seed=12, obs_radius=1, box_sensitivity=False)
    bucket = report["buckets"]["zero"]
    assert bucket["surviving"] == 0
    assert bucket["survival_frequency"] == 0.0
    # extinct-bucket tail averages equal f(0-bar) exactly
    assert bucket["extinct_tail_exact"] == [True, True]
    assert bucket["extinct_tail_mean"] == [0.0, 1.0]


def test_convergence_pairwise_structure():
    kern = example_drift_kernel()
    report = est.complete_convergence_check(
        [("all_one", ("all_one",)), ("bern", ("bernoulli", 0.5))],
        [est.occupancy_at(0)],
        box=torus(15), lam=2.5, gamma=0.2, spec=kern, horizon=8.0,
        replicas=60, seed=13, obs_radius=1, box_sensitivity=False)
    assert len(report["pairwise_tests"]) == 1
    t = report["pairwise_tests"][0]
    assert set(t["initials"]) == {"all_one", "bern"}
    assert "horizon_sensitivity" in report
    assert report["parameters"]["bonferroni_threshold"] > 2.5  # Bonferroni inflation


def test_convergence_mixture_weight_matches_survival():
    kern = example_drift_kernel()
    report = est.complete_convergence_check(
        [("single", ("single",))], [est.occupancy_at(0)],
        box=torus(15), lam=2.5, gamma=0.2, spec=kern, horizon=10.0,
        replicas=80, seed=14, obs_radius=1, box_sensitivity=False,
        min_surviving=5)
    mix = report["mixture"]["single"]
    assert mix["survival_frequency"] == pytest.approx(
        report["buckets"]["single"]["surviving"] / 80)
    assert len(mix["implied_weights"]) == 1


def test_convergence_box_sensitivity_block():
    kern = example_drift_kernel()
    report = est.complete_convergence_check(
        [("all_one", ("all_one",))], [est.occupancy_at(0)],
        box=torus(8), lam=2.5, gamma=0.2, spec=kern, horizon=4.0,
        replicas=20, seed=15, obs_radius=1, box_sensitivity=True)
    inner = report["box_sensitivity"]
    assert inner["parameters"]["box_half_width"] == 4
    assert "buckets" in inner and "box_sensitivity" not in inner


# -- shape ------------------------------------------------------------------------

def test_shape_sample_requires_t_final_at_least_one():
    gc = build_graphical(torus(10), 2.0, 5.0, seed=16)
    with pytest.raises(ValueError):
        est.shape_sample(gc, 0.5)


def test_inner_radius_geometry():
    box = torus(5)
    mask = np.zeros(box.num_sites, dtype=bool)
    # infected segment [-2, 2]: the nearest uncovered cube starts at |x|=3
    for x in range(-2, 3):
        mask[box.flat((x,))] = True
    r = est._inner_radius(mask, box)
    assert r == pytest.approx(2.5)
    # origin missing -> radius 0
    mask2 = np.zeros(box.num_sites, dtype=bool)
    mask2[box.flat((1,))] = True
    assert est._inner_radius(mask2, box) == 0.0


def test_outer_radius_geometry():
    box = torus(5)
    mask = np.zeros(box.num_sites, dtype=bool)
    mask[box.flat((0,))] = True
    mask[box.flat((3,))] = True
    assert est._outer_radius(mask, box) == pytest.approx(3.5)


def test_shape_estimate_smoke():
    out = est.shape_estimate(torus(25), 2.5, horizon=10.0, t_final=6.0,
                             replicas=40, seed=17, epsilon=0.5)
    assert out.surviving > 0
    assert out.f_hat > 0
    assert 0.0 <= out.inner_frequency <= 1.0
    assert 0.0 <= out.outer_frequency <= 1.0


def test_cone_condition_verdict_flips_with_gamma():
    kern = example_drift_kernel()
    hot = est.cone_condition_verdict(kern, gamma=5.0, epsilon=0.5, f_hat=1.0)
    cold = est.cone_condition_verdict(kern, gamma=0.1, epsilon=0.5, f_hat=1.0)
    assert not hot["pass"]
    assert cold["pass"]
