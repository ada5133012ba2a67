"""Event-table construction, replay, coupling, and extinction tests."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactwalk.graphical import (agreement_set, build_graphical,
                                   build_graphical_family, couple_pair,
                                   disagreement_episodes, evolve,
                                   evolve_trajectory, extinction_time,
                                   from_events, visited_masks)
from contactwalk.lattice import (BoxSpec, configuration_all_one,
                                 configuration_bernoulli,
                                 configuration_from_sites,
                                 configuration_single, configuration_zero)
from contactwalk.rng import SCRATCH_STREAM, derive_key, replica_generator


def box1d(L, boundary="empty"):
    return BoxSpec(dimension=1, half_width=L, boundary=boundary)


# -- construction ------------------------------------------------------------

def test_horizon_zero_has_no_events():
    gc = build_graphical(box1d(5), 2.0, 0.0, seed=1)
    assert gc.ev_time.size == 0


def test_identical_seeds_identical_tables():
    a = build_graphical(box1d(10), 1.5, 4.0, seed=42)
    b = build_graphical(box1d(10), 1.5, 4.0, seed=42)
    for name in ("ev_time", "ev_arrow", "ev_src", "ev_dst"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = build_graphical(box1d(10), 1.5, 4.0, seed=43)
    assert not np.array_equal(a.ev_time, c.ev_time)


def test_event_times_sorted_within_horizon():
    gc = build_graphical(box1d(20), 2.0, 3.0, seed=7)
    t = gc.ev_time
    assert np.all(np.diff(t) >= 0)
    assert t.size == 0 or (t[0] >= 0 and t[-1] <= 3.0)


def test_recovery_mark_count_poisson():
    # 101 sites, horizon 10: recovery marks are Poisson(1010)
    gc = build_graphical(box1d(50), 2.0, 10.0, seed=2024)
    recoveries = int((gc.ev_arrow == 0).sum())
    mean = 101 * 10.0
    assert abs(recoveries - mean) < 4 * math.sqrt(mean)


def test_arrow_count_poisson():
    # empty boundary: 2*101 - 2 directed interior edges... periodic: 202
    box = box1d(50, "periodic")
    gc = build_graphical(box, 2.0, 10.0, seed=17)
    arrows = int((gc.ev_arrow == 1).sum())
    mean = 202 * 2.0 * 10.0
    assert abs(arrows - mean) < 4 * math.sqrt(mean)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        build_graphical(box1d(3), -1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        build_graphical(box1d(3), 1.0, -1.0, seed=0)


# -- replay -------------------------------------------------------------------

def test_zero_config_absorbing():
    gc = build_graphical(box1d(10), 2.0, 5.0, seed=3)
    eta0 = configuration_zero(gc.box)
    for t in (0.0, 1.0, 5.0):
        assert evolve(gc, eta0, t).infected_count == 0


def test_arrow_ignored_when_source_healthy():
    # hand-built event table: one arrow 0 -> 1 at time 1; start single at 0
    box = box1d(3)
    gc = from_events(box, lam=1.0, horizon=2.0,
                     arrows={((0,), (1,)): [1.0]})
    eta = configuration_single(box)
    out = evolve(gc, eta, 2.0)
    assert sorted(out.infected_sites()) == [(0,), (1,)]
    # from the empty start the same arrow does nothing
    assert evolve(gc, configuration_zero(box), 2.0).infected_count == 0


def test_recovery_mark_clears_site():
    box = box1d(3)
    gc = from_events(box, lam=1.0, horizon=2.0, recoveries={(0,): [0.5]})
    eta = configuration_single(box)
    assert evolve(gc, eta, 0.4).infected_count == 1
    assert evolve(gc, eta, 0.6).infected_count == 0


def test_evolve_time_bounds():
    gc = build_graphical(box1d(3), 1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        evolve(gc, configuration_zero(gc.box), 1.5)
    with pytest.raises(ValueError):
        evolve(gc, configuration_zero(gc.box), -0.1)


def test_trajectory_consistent_with_evolve():
    gc = build_graphical(box1d(15), 2.0, 6.0, seed=11)
    eta = configuration_all_one(gc.box)
    times = (0.0, 1.0, 3.0, 6.0)
    traj = evolve_trajectory(gc, eta, times)
    for t, cfg in zip(times, traj.configs):
        assert cfg == evolve(gc, eta, t)


# -- extinction --------------------------------------------------------------

def test_extinction_from_zero_is_time_zero():
    gc = build_graphical(box1d(5), 2.0, 3.0, seed=5)
    assert extinction_time(gc, configuration_zero(gc.box)) == 0.0


def test_extinction_matches_replay():
    gen_seed = 0
    hits = 0
    for r in range(40):
        gc = build_graphical(box1d(6), 0.6, 20.0, seed=derive_key(77, r))
        eta = configuration_single(gc.box)
        tau = extinction_time(gc, eta)
        if np.isfinite(tau):
            hits += 1
            eps = 1e-9
            assert evolve(gc, eta, min(tau + eps, 20.0)).infected_count == 0
            if tau > eps:
                assert evolve(gc, eta, tau - eps).infected_count > 0
    assert hits > 0  # subcritical: most replicas die


def test_extinction_monotone_in_initial():
    for r in range(25):
        gc = build_graphical(box1d(8), 1.2, 10.0, seed=derive_key(31, r))
        small = configuration_single(gc.box)
        big = configuration_all_one(gc.box)
        assert extinction_time(gc, small) <= extinction_time(gc, big)


def test_pure_death_survival_curve():
    # lam = 0 degenerate case: the single site dies at an Exp(1) time
    n = 4000
    taus = []
    for r in range(n):
        gc = build_graphical(box1d(1), 0.0, 10.0, seed=derive_key(13, r))
        taus.append(extinction_time(gc, configuration_single(gc.box)))
    taus = np.array(taus)
    for t in (0.5, 1.0, 2.0):
        p = math.exp(-t)
        freq = float((taus > t).mean())
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(freq - p) < 4 * sigma


# -- two-copy coupling --------------------------------------------------------

def test_couple_equal_initials_identical():
    gc = build_graphical(box1d(10), 2.0, 4.0, seed=9)
    eta = configuration_bernoulli(gc.box, 0.4,
                                  replica_generator(1, 0, SCRATCH_STREAM))
    a, b = couple_pair(gc, eta, eta.copy(), 4.0)
    assert a == b


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_monotonicity_battery(seed):
    gc = build_graphical(box1d(8), 1.7, 3.0, seed=derive_key(seed, 0))
    gen = replica_generator(seed, 1, SCRATCH_STREAM)
    omega = configuration_bernoulli(gc.box, 0.6, gen)
    # eta <= omega sitewise by thinning omega
    mask = (gen.random(gc.box.num_sites) < 0.5).astype(np.uint8)
    eta = type(omega)(gc.box, omega.occupancy * mask)
    for t in (1.0, 3.0):
        a, b = couple_pair(gc, eta, omega, t)
        assert np.all(a.occupancy <= b.occupancy)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_additivity_battery(seed):
    gc = build_graphical(box1d(8), 1.7, 3.0, seed=derive_key(seed, 2))
    gen = replica_generator(seed, 3, SCRATCH_STREAM)
    eta = configuration_bernoulli(gc.box, 0.3, gen)
    omega = configuration_bernoulli(gc.box, 0.3, gen)
    union = type(eta)(gc.box, np.maximum(eta.occupancy, omega.occupancy))
    for t in (1.5, 3.0):
        a, b = couple_pair(gc, eta, omega, t)
        u = evolve(gc, union, t)
        assert np.array_equal(u.occupancy, np.maximum(a.occupancy, b.occupancy))


def test_agreement_set_equal_initials_is_everything():
    gc = build_graphical(box1d(6), 2.0, 5.0, seed=21)
    eta = configuration_single(gc.box)
    mask = agreement_set(gc, eta, eta.copy(), 1.0, 5.0)
    assert mask.all()


def test_agreement_set_shrinks_with_longer_window():
    gc = build_graphical(box1d(10), 2.0, 8.0, seed=22)
    eta = configuration_single(gc.box)
    omega = configuration_all_one(gc.box)
    instant = agreement_set(gc, eta, omega, 4.0, 4.0)
    window = agreement_set(gc, eta, omega, 4.0, 8.0)
    # agreeing over a longer verification window is a stronger demand
    assert np.all(window <= instant)


def test_disagreement_episodes_structure():
    gc = build_graphical(box1d(6), 2.0, 4.0, seed=23)
    eta = configuration_single(gc.box)
    omega = configuration_all_one(gc.box)
    sites, lows, highs, *_ = disagreement_episodes(gc, eta, omega, 4.0)
    assert np.all(lows < highs)
    assert np.all(lows >= 0.0)
    finite = np.isfinite(highs)
    assert np.all(highs[finite] <= 4.0 + 1e-12)
    assert np.all((sites >= 0) & (sites < gc.box.num_sites))


# -- thinning-coupled families -----------------------------------------------

def test_family_shares_events_monotonically():
    fam = build_graphical_family(box1d(10, "periodic"), [1.0, 2.0], 3.0, seed=4)
    lo, hi = fam
    # the smaller-rate table is a subset of the larger-rate table
    set_lo = set(zip(lo.ev_time.tolist(), lo.ev_arrow.tolist(),
                     lo.ev_src.tolist(), lo.ev_dst.tolist()))
    set_hi = set(zip(hi.ev_time.tolist(), hi.ev_arrow.tolist(),
                     hi.ev_src.tolist(), hi.ev_dst.tolist()))
    assert set_lo <= set_hi
    # recovery marks are identical across the family
    rec_lo = lo.ev_time[lo.ev_arrow == 0]
    rec_hi = hi.ev_time[hi.ev_arrow == 0]
    assert np.array_equal(rec_lo, rec_hi)


def test_visited_masks_monotone():
    gc = build_graphical(box1d(10), 2.0, 5.0, seed=30)
    eta = configuration_single(gc.box)
    masks, ext, count = visited_masks(gc, eta, (1.0, 2.5, 5.0))
    counts = [int(m.sum()) for m in masks]
    assert counts == sorted(counts)
    assert masks[0][gc.box.flat((0,))]  # origin visited from the start
    for a, b in zip(masks, masks[1:]):
        assert np.all(a <= b)
