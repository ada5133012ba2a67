"""Command-line experiment runner.

Each subcommand reads a JSON config, validates it fully before any compute,
fans replicas over a worker pool, and writes three kinds of artifacts into
the output directory: ``manifest.json`` (the resolved, self-contained config
that reproduces the run byte for byte), ``results.json``, and CSV series
where a table is more useful than nested JSON.  Nothing written depends on
wall-clock time or thread count; replica i draws its randomness from streams
keyed by a SplitMix64 fold of (master seed, i, stream tag).

Exit codes: 0 success, 1 runtime failure (partial results are preserved as
``results.partial.json``), 2 config error (nothing is written).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, estimators, oracle, rng
from .coupling import build_coupling, check_sticking, monitor_cones
from .graphical import build_graphical, evolve_trajectory
from .kernel import (KernelSpec, example_drift_kernel, kernel_from_dict,
                     kernel_to_dict, validate as validate_kernel)
from .lattice import BOUNDARY_POLICIES, BoxSpec
from .walk import build_walk_clock, simulate_joint

EXPERIMENTS = ("simulate-cp", "simulate-rwdre", "couple", "speed", "shape",
               "convergence", "oracle", "validate-kernel")


class ConfigError(ValueError):
    """Anything wrong with the config file; maps to exit code 2."""


# -- config resolution ---------------------------------------------------------

def _require(params: dict, key: str, kind=None):
    if key not in params:
        raise ConfigError(f"missing required parameter {key!r}")
    val = params[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"parameter {key!r} has the wrong type")
    return val


def _resolve_box(params: dict) -> BoxSpec:
    spec = _require(params, "box", dict)
    try:
        box = BoxSpec(dimension=int(spec.get("dimension", 1)),
                      half_width=int(_require(spec, "half_width")),
                      boundary=str(spec.get("boundary", "empty")))
    except ValueError as exc:
        raise ConfigError(f"bad box: {exc}") from None
    if box.boundary not in BOUNDARY_POLICIES:
        raise ConfigError(f"unknown boundary {box.boundary!r}")
    return box


def _resolve_kernel(params: dict, key: str = "kernel") -> KernelSpec:
    spec = _require(params, key)
    try:
        if spec == {"stock": "drift_example"} or spec == "drift_example":
            kern = example_drift_kernel()
        elif isinstance(spec, str):
            raw = json.loads(Path(spec).read_text())
            kern = kernel_from_dict(raw)
        elif isinstance(spec, dict):
            kern = kernel_from_dict(spec)
        else:
            raise ConfigError(f"cannot interpret kernel spec {spec!r}")
    except ConfigError:
        raise
    except FileNotFoundError:
        raise ConfigError(f"kernel file {spec!r} not found") from None
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad kernel: {exc}") from None
    params[key] = kernel_to_dict(kern)      # inline it for the manifest
    return kern


_NAMED_INITIALS = {"zero": ("zero",), "all_one": ("all_one",),
                   "single_site": ("single",), "single": ("single",)}


def _resolve_initial(spec):
    """Named initial -> the tuple form used by estimators.make_initial."""
    if isinstance(spec, str):
        if spec not in _NAMED_INITIALS:
            raise ConfigError(f"unknown initial {spec!r}")
        return _NAMED_INITIALS[spec]
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "bernoulli":
            p = float(_require(spec, "p"))
            if not 0 <= p <= 1:
                raise ConfigError("bernoulli p must be in [0, 1]")
            return ("bernoulli", p)
        if kind == "sites":
            return ("sites", tuple(tuple(int(c) for c in x)
                                   for x in _require(spec, "sites")))
        raise ConfigError(f"unknown initial kind {kind!r}")
    raise ConfigError(f"cannot interpret initial {spec!r}")


def _make_initial(box, spec, gen=None):
    return estimators.make_initial(box, spec, gen)


def _initial_label(spec) -> str:
    if isinstance(spec, str):
        return spec
    kind = spec.get("kind")
    if kind == "bernoulli":
        return f"bernoulli({spec['p']})"
    return kind or repr(spec)


def _positive(params, key, default=None, allow_zero=False):
    val = params.get(key, default)
    if val is None:
        raise ConfigError(f"missing required parameter {key!r}")
    val = float(val)
    if val < 0 or (val == 0 and not allow_zero):
        need = "nonnegative" if allow_zero else "positive"
        raise ConfigError(f"parameter {key!r} must be {need}")
    return val


def _count(params, key, default=None, minimum=1):
    val = params.get(key, default)
    if val is None:
        raise ConfigError(f"missing required parameter {key!r}")
    val = int(val)
    if val < minimum:
        raise ConfigError(f"parameter {key!r} must be >= {minimum}")
    return val


def _sample_times(params, horizon):
    times = params.get("sample_times")
    if times is None:
        times = [horizon]
        params["sample_times"] = times
    times = [float(t) for t in times]
    if times != sorted(times) or any(t < 0 or t > horizon for t in times):
        raise ConfigError("sample_times must be sorted and inside [0, horizon]")
    return times


# -- serialization ---------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _pool_map(fn, args, threads):
    return estimators._pool_map(fn, args, threads)


# -- experiment handlers -----------------------------------------------------------

def _cp_worker(args):
    box, lam, horizon, times, initial, seed, r = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(seed, r, rng.GC_STREAM))
    init = _make_initial(box, initial, rng.replica_generator(seed, r, rng.INIT_STREAM))
    traj = evolve_trajectory(gc, init, times)
    return {"replica": r, "extinction_time": traj.extinction_time,
            "survived": traj.survived,
            "infected_counts": [c.infected_count for c in traj.configs]}


def _run_simulate_cp(params, seed, threads, out):
    box = _resolve_box(params)
    lam = _positive(params, "lam", allow_zero=True)
    horizon = _positive(params, "horizon", allow_zero=True)
    times = _sample_times(params, horizon)
    initial = _resolve_initial(_require(params, "initial"))
    replicas = _count(params, "replicas", 1)
    rows = _pool_map(_cp_worker, [(box, lam, horizon, times, initial, seed, r)
                                  for r in range(replicas)], threads)
    survived = [r["survived"] for r in rows]
    results = {"replicas": replicas,
               "survival_frequency": float(np.mean(survived)),
               "sample_times": times,
               "mean_infected": np.array([r["infected_counts"] for r in rows],
                                         dtype=float).mean(axis=0).tolist(),
               "per_replica": rows}
    csv_rows = [(r["replica"], t, c) for r in rows
                for t, c in zip(times, r["infected_counts"])]
    _write_csv(out / "infected_counts.csv", ("replica", "time", "infected"), csv_rows)
    return results


def _rw_worker(args):
    box, lam, gamma, kern, obs_radius, horizon, times, initial, seed, r = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(seed, r, rng.GC_STREAM))
    init = _make_initial(box, initial, rng.replica_generator(seed, r, rng.INIT_STREAM))
    clock = build_walk_clock(kern, gamma, horizon,
                             rng.replica_key(seed, r, rng.CLOCK_STREAM))
    traj = simulate_joint(gc, kern, gamma, init, clock, obs_radius=obs_radius,
                          sample_times=times)
    return {"replica": r,
            "displacement": list(traj.displacement()),
            "ring_count": traj.ring_count,
            "jump_count": int(traj.jump_times.size),
            "extinction_time": traj.extinction_time,
            "sample_positions": traj.sample_positions.tolist(),
            "sample_infected": [c.infected_count for c in traj.sample_configs]}


def _run_simulate_rwdre(params, seed, threads, out):
    box = _resolve_box(params)
    lam = _positive(params, "lam", allow_zero=True)
    gamma = _positive(params, "gamma", allow_zero=True)
    kern = _resolve_kernel(params)
    horizon = _positive(params, "horizon", allow_zero=True)
    times = _sample_times(params, horizon)
    initial = _resolve_initial(_require(params, "initial"))
    replicas = _count(params, "replicas", 1)
    obs_radius = _count(params, "obs_radius", kern.radius, minimum=0)
    rows = _pool_map(_rw_worker,
                     [(box, lam, gamma, kern, obs_radius, horizon, times,
                       initial, seed, r) for r in range(replicas)], threads)
    disp = np.array([r["displacement"] for r in rows], dtype=float)
    results = {"replicas": replicas, "sample_times": times,
               "mean_displacement": disp.mean(axis=0).tolist(),
               "per_replica": rows}
    csv_rows = []
    for r in rows:
        for t, pos, inf in zip(times, r["sample_positions"], r["sample_infected"]):
            csv_rows.append((r["replica"], t, *pos, inf))
    d = box.dimension
    header = ("replica", "time", *(f"x{i}" for i in range(d)), "infected")
    _write_csv(out / "walker_samples.csv", header, csv_rows)
    return results


def _couple_worker(args):
    (box, lam, gamma, kern, obs_radius, horizon, T, eta_spec, omega_spec,
     epsilon, margin, mode, grid_step, seed, r) = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(seed, r, rng.GC_STREAM))
    eta = _make_initial(box, eta_spec, rng.replica_generator(seed, r, rng.INIT_STREAM))
    omega = _make_initial(box, omega_spec,
                          rng.replica_generator(seed, r, rng.SCRATCH_STREAM))
    clock1 = build_walk_clock(kern, gamma, horizon,
                              rng.replica_key(seed, r, rng.CLOCK_STREAM))
    clock3 = build_walk_clock(kern, gamma, horizon,
                              rng.replica_key(seed, r, rng.AUX_CLOCK_STREAM))
    crun = build_coupling(gc, kern, gamma, eta, omega, T, (clock1, clock3),
                          obs_radius=obs_radius)
    rep = check_sticking(crun, epsilon, margin)
    mon = monitor_cones(crun, epsilon, margin, grid_step=grid_step, mode=mode)
    return {"replica": r, "verdict": rep.verdict,
            "first_divergence": rep.first_divergence,
            "positions_equal_at_T": rep.positions_equal_at_T,
            "media_agree_on_cone": rep.media_agree_on_cone,
            "walkers_inside_cone": rep.walkers_inside_cone,
            "cone_agreement_from": mon.cone_agreement_from,
            "walkers_inside_from": mon.walkers_inside_from}


def _run_couple(params, seed, threads, out):
    box = _resolve_box(params)
    lam = _positive(params, "lam", allow_zero=True)
    gamma = _positive(params, "gamma", allow_zero=True)
    kern = _resolve_kernel(params)
    horizon = _positive(params, "horizon")
    T = _positive(params, "switch_time", allow_zero=True)
    if T > horizon:
        raise ConfigError("switch_time must not exceed horizon")
    eta = _resolve_initial(params.get("initial_eta", "all_one"))
    omega = _resolve_initial(params.get("initial_omega", "single_site"))
    epsilon = _positive(params, "epsilon", 0.5)
    margin = params.get("margin")
    margin = float(margin) if margin is not None else None
    mode = params.get("mode", "exact")
    if mode not in ("exact", "grid"):
        raise ConfigError("mode must be 'exact' or 'grid'")
    grid_step = _positive(params, "grid_step", 1.0)
    replicas = _count(params, "replicas", 1)
    obs_radius = _count(params, "obs_radius", kern.radius, minimum=0)
    rows = _pool_map(_couple_worker,
                     [(box, lam, gamma, kern, obs_radius, horizon, T, eta,
                       omega, epsilon, margin, mode, grid_step, seed, r)
                      for r in range(replicas)], threads)
    verdicts = {}
    for r in rows:
        verdicts[r["verdict"]] = verdicts.get(r["verdict"], 0) + 1
    results = {"replicas": replicas, "verdict_counts": verdicts,
               "divergences_with_preconditions_met":
                   sum(1 for r in rows if r["verdict"] == "diverged"),
               "per_replica": rows}
    _write_csv(out / "coupling_verdicts.csv",
               ("replica", "verdict", "first_divergence"),
               [(r["replica"], r["verdict"],
                 math.nan if r["first_divergence"] is None else r["first_divergence"])
                for r in rows])
    return results


def _speed_worker(args):
    box, lam, gamma, kern, obs_radius, horizon, initial, seed, r = args
    gc = build_graphical(box, lam, horizon, rng.replica_key(seed, r, rng.GC_STREAM))
    init = _make_initial(box, initial, rng.replica_generator(seed, r, rng.INIT_STREAM))
    clock = build_walk_clock(kern, gamma, horizon,
                             rng.replica_key(seed, r, rng.CLOCK_STREAM))
    return simulate_joint(gc, kern, gamma, init, clock, obs_radius=obs_radius)


def _run_speed(params, seed, threads, out):
    box = _resolve_box(params)
    lam = _positive(params, "lam", allow_zero=True)
    gamma = _positive(params, "gamma", allow_zero=True)
    kern = _resolve_kernel(params)
    horizon = _positive(params, "horizon")
    initial = _resolve_initial(_require(params, "initial"))
    replicas = _count(params, "replicas", 2, minimum=2)
    obs_radius = _count(params, "obs_radius", kern.radius, minimum=0)
    trajs = _pool_map(_speed_worker,
                      [(box, lam, gamma, kern, obs_radius, horizon, initial,
                        seed, r) for r in range(replicas)], threads)
    est = estimators.speed(trajs, kern, gamma)
    results = {
        "replicas": replicas, "horizon": horizon,
        "direct_mean": est.direct_mean, "direct_se": est.direct_se,
        "drift_formula_mean": est.drift_mean, "drift_formula_se": est.drift_se,
        "agreement_z": est.agreement_z(),
        "survival_weight": est.survival_weight,
        "v1": est.v1, "v1_se": est.v1_se, "v0": est.v0,
        "v0_predicted": est.v0_predicted,
    }
    d = box.dimension
    header = ("replica", "survived",
              *(f"direct{i}" for i in range(d)),
              *(f"drift{i}" for i in range(d)))
    _write_csv(out / "speed_per_replica.csv", header,
               [(i, bool(est.survived[i]), *est.direct[i], *est.drift_formula[i])
                for i in range(replicas)])
    return results


def _run_shape(params, seed, threads, out):
    box = _resolve_box(params)
    lams = params.get("lams")
    if lams is None:
        lams = [_positive(params, "lam")]
    lams = [float(x) for x in lams]
    if any(x <= 0 for x in lams):
        raise ConfigError("infection rates must be positive")
    horizon = _positive(params, "horizon")
    t_final = _positive(params, "t_final", 2 * horizon / 3)
    if not 1.0 <= t_final <= horizon:
        raise ConfigError("need 1 <= t_final <= horizon")
    epsilon = _positive(params, "epsilon", 0.5)
    results = {}
    if len(lams) == 1:
        replicas = _count(params, "replicas", 100)
        est = estimators.shape_estimate(box, lams[0], horizon, t_final,
                                        replicas, seed, epsilon, threads=threads)
        results["estimate"] = {
            "lam": est.lam, "f_hat": est.f_hat, "surviving": est.surviving,
            "replicas": est.replicas, "inner_frequency": est.inner_frequency,
            "outer_frequency": est.outer_frequency, "epsilon": epsilon,
            "t_final": t_final}
        _write_csv(out / "shape_radii.csv", ("index", "rescaled_inner_radius"),
                   list(enumerate(est.radii)))
    else:
        batches = _count(params, "batches", 10)
        per_batch = _count(params, "replicas_per_batch", 20)
        results["trend"] = estimators.shape_trend(
            box, lams, horizon, t_final, per_batch, batches, seed, epsilon,
            threads=threads)
    if "kernel" in params and "gamma" in params:
        kern = _resolve_kernel(params)
        gamma = _positive(params, "gamma", allow_zero=True)
        f_hat = (results.get("estimate", {}).get("f_hat")
                 or np.median([m[-1] for m in results["trend"]["per_batch_medians"]
                               if m[-1] is not None]))
        results["cone_verdict"] = estimators.cone_condition_verdict(
            kern, gamma, epsilon, float(f_hat))
    return results


def _run_convergence(params, seed, threads, out):
    box = _resolve_box(params)
    lam = _positive(params, "lam")
    gamma = _positive(params, "gamma", allow_zero=True)
    kern = _resolve_kernel(params)
    horizon = _positive(params, "horizon")
    replicas = _count(params, "replicas", 100)
    obs_radius = _count(params, "obs_radius", max(kern.radius, 1), minimum=0)
    initials = [(_initial_label(spec), _resolve_initial(spec))
                for spec in _require(params, "initials", list)]
    f_set = [_resolve_function(f, box.dimension) for f in
             _require(params, "functions", list)]
    t_lo = params.get("t_lo")
    report = estimators.complete_convergence_check(
        initials, f_set, box=box, lam=lam, gamma=gamma, spec=kern,
        horizon=horizon, replicas=replicas, seed=seed, obs_radius=obs_radius,
        t_lo=float(t_lo) if t_lo is not None else None,
        alpha=float(params.get("alpha", 0.01)), threads=threads,
        box_sensitivity=bool(params.get("box_sensitivity", True)))
    return report


def _resolve_function(spec, dimension):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(f"bad function spec {spec!r}")
    name = spec["name"]
    try:
        if name == "occupancy":
            return estimators.occupancy_at(spec.get("offset", 0), dimension)
        if name == "all_ones":
            return estimators.all_ones(int(spec.get("radius", 1)), dimension)
        if name == "all_healthy":
            return estimators.all_healthy(int(spec.get("radius", 1)), dimension)
        if name == "fraction":
            return estimators.fraction_infected(int(spec.get("radius", 1)), dimension)
        if name == "constant":
            return estimators.constant(float(spec.get("value", 1.0)), dimension)
    except ValueError as exc:
        raise ConfigError(f"bad function spec {spec!r}: {exc}") from None
    raise ConfigError(f"unknown function {name!r}")


def _oracle_initial(spec, chain, layer):
    L = chain.num_sites
    if isinstance(spec, int):
        return spec
    if spec == "all_one":
        mask = oracle.all_one_mask(L)
    elif spec in ("single", "single_site"):
        mask = oracle.mask_from_sites([0], L)
    elif isinstance(spec, dict) and "mask" in spec:
        mask = int(spec["mask"])
    else:
        raise ConfigError(f"cannot interpret oracle initial {spec!r}")
    if layer == "joint":
        return oracle.joint_state(mask, 0, L)
    return mask


def _run_oracle(params, seed, threads, out):
    layer = params.get("layer", "contact")
    if layer not in oracle.LAYERS:
        raise ConfigError(f"layer must be one of {oracle.LAYERS}")
    kern = _resolve_kernel(params) if "kernel" in params else None
    try:
        chain = oracle.TorusChainSpec(
            num_sites=_count(params, "num_sites", minimum=1),
            lam=_positive(params, "lam", allow_zero=True),
            kernel=kern, gamma=_positive(params, "gamma", 0.0, allow_zero=True))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    kind = params.get("computation", "transient")
    tol = _positive(params, "tol", 1e-10)
    if (layer in ("joint", "environment") or kind in ("displacement", "stationary")) \
            and kern is None:
        raise ConfigError(f"layer {layer!r} / computation {kind!r} needs a kernel")
    results = {"layer": layer, "num_sites": chain.num_sites, "lam": chain.lam,
               "gamma": chain.gamma, "computation": kind, "tol": tol}
    if kind in ("transient", "integrated", "absorption", "extinction"):
        rm = oracle.build_generator(chain, layer)
        initial = _oracle_initial(params.get("initial", "single_site"), chain, layer)
        if kind == "extinction":
            results["expected_extinction_time"] = oracle.expected_extinction_time(rm, initial)
        else:
            t = _positive(params, "t", allow_zero=True)
            results["t"] = t
            if kind == "transient":
                dist = oracle.transient_distribution(rm, initial, t, tol)
                results["distribution"] = dist
                results["occupancy_probability"] = {
                    str(s): oracle.occupancy_probability(dist, s, rm)
                    for s in range(chain.num_sites)}
                if rm.num_states <= 1024:
                    dense = oracle.dense_transient(rm, initial, t)
                    results["cross_method_residual"] = float(np.abs(dist - dense).max())
            elif kind == "integrated":
                results["occupation_measure"] = oracle.integrated_distribution(
                    rm, initial, t, tol)
            else:
                results["absorption_probability"] = oracle.absorption_probability(
                    rm, initial, t, tol)
    elif kind == "displacement":
        if layer != "joint":
            raise ConfigError("displacement needs the joint layer")
        initial = _oracle_initial(params.get("initial", "single_site"), chain, layer)
        t = _positive(params, "t", allow_zero=True)
        results["t"] = t
        results["expected_displacement"] = oracle.expected_displacement(
            chain, initial, t, tol)
    elif kind == "stationary":
        mode = params.get("mode", "iota")
        if mode not in ("iota", "qs", "qprocess"):
            raise ConfigError(f"unknown stationary mode {mode!r}")
        iota = _positive(params, "iota", 1e-3)
        st = oracle.stationary_ep(chain, mode=mode, iota=iota)
        results.update({"mode": mode, "iota": st.iota, "residual": st.residual,
                        "distribution": st.distribution,
                        "decay_rate": st.decay_rate})
        if chain.kernel is not None:
            results["drift"] = oracle.oracle_drift(st, chain)
            if mode == "iota":
                f = oracle.drift_values(chain)
                results["iota_sensitivity_drift"] = {
                    repr(i): v for i, v in oracle.iota_sensitivity(chain, f).items()}
    else:
        raise ConfigError(f"unknown computation {kind!r}")
    return results


def _run_validate_kernel(params, seed, threads, out):
    kern = _resolve_kernel(params)
    gamma = _positive(params, "gamma", 1.0, allow_zero=True)
    report = validate_kernel(kern, gamma)
    results = report.as_dict()
    lines = [f"jump-rate kernel: dimension {kern.dimension}, "
             f"radius {kern.radius}, {len(kern.support)} jumps",
             f"  alpha_norm      = {report.alpha_norm}",
             f"  max_total_rate  = {report.max_total_rate}",
             f"  clock_rate      = {report.clock_rate} (gamma={gamma})",
             f"  elliptic        = {report.elliptic}"]
    if report.elliptic:
        lines.append(f"  elliptic_set    = {sorted(report.elliptic_set)}")
    else:
        lines.append(f"  counterexample  = {report.counterexample}")
    lines.append(f"  drift hull      = {report.hull_vertices}")
    print("\n".join(lines))
    return results


_HANDLERS = {
    "simulate-cp": _run_simulate_cp,
    "simulate-rwdre": _run_simulate_rwdre,
    "couple": _run_couple,
    "speed": _run_speed,
    "shape": _run_shape,
    "convergence": _run_convergence,
    "oracle": _run_oracle,
    "validate-kernel": _run_validate_kernel,
}


# -- entry point -------------------------------------------------------------------

def _load_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="contactwalk",
        description="Event-driven experiments with contact-process media and "
                    "walkers driven by local jump rates.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "validate-kernel"))
        p.add_argument("--out", default=".")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if name == "validate-kernel":
            p.add_argument("--kernel", default=None)
            p.add_argument("--gamma", type=float, default=1.0)
    args = parser.parse_args(argv)

    try:
        if args.experiment == "validate-kernel" and args.config is None:
            if args.kernel is None:
                raise ConfigError("validate-kernel needs --config or --kernel")
            config = {"experiment": "validate-kernel", "seed": 0,
                      "params": {"kernel": args.kernel, "gamma": args.gamma}}
        else:
            config = _load_config(args.config)
        experiment = config.get("experiment", args.experiment)
        if experiment != args.experiment:
            raise ConfigError(
                f"config is for {experiment!r}, invoked as {args.experiment!r}")
        params = config.get("params")
        if not isinstance(params, dict):
            raise ConfigError("config needs a 'params' object")
        seed = args.seed if args.seed is not None else config.get("seed")
        if seed is None:
            raise ConfigError("no seed given (config 'seed' or --seed)")
        seed = int(seed)
        threads = max(1, int(args.threads if args.threads is not None
                             else config.get("threads", 1)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = _HANDLERS[args.experiment]
    try:
        results = handler(params, seed, threads, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"runtime error: {exc}", file=sys.stderr)
        partial = {"error": str(exc), "experiment": args.experiment}
        _write_json(out / "results.partial.json", partial)
        return 1
    manifest = {"version": __version__, "experiment": args.experiment,
                "seed": seed, "params": params,
                "seeding": {"scheme": "splitmix64-fold -> philox4x64-10",
                            "replica_rule": "key = fold(master, replica, stream)",
                            "streams": {"graphical": rng.GC_STREAM,
                                        "clock": rng.CLOCK_STREAM,
                                        "aux_clock": rng.AUX_CLOCK_STREAM,
                                        "initial": rng.INIT_STREAM,
                                        "scratch": rng.SCRATCH_STREAM}}}
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "results.json", results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
