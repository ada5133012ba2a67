"""Event-driven simulation laboratory for random walks on contact-process media.

The package builds one-shot Poisson event tables (graphical constructions)
for the contact process on finite boxes, runs walkers whose jump rates
depend on the medium in a window around them, couples pairs of walkers
through a spliced clock, and checks the resulting limit statements against
both Monte Carlo estimators and an exact generator-level oracle on small
tori.
"""

__version__ = "0.1.0"

from .lattice import (BoxSpec, Configuration, Window, configuration_all_one,
                      configuration_bernoulli, configuration_from_sites,
                      configuration_single, configuration_zero, local_window,
                      neighbor_sum, shift)
from .kernel import (KernelSpec, KernelReport, alpha, alpha_norm,
                     constant_kernel, cumulative, example_drift_kernel,
                     kernel_from_dict, kernel_to_dict, load_kernel,
                     max_total_rate, occupancy_kernel, range_hull,
                     save_kernel, validate)
from .graphical import (CpTrajectory, GraphicalConstruction,
                        build_graphical, build_graphical_family,
                        disagreement_episodes, evolve, evolve_trajectory,
                        extinction_time, visited_masks)
from .walk import (EnvironmentTrajectory, JointTrajectory, WalkClock,
                   build_walk_clock, environment_view, simulate_joint)
from .coupling import (ConeMonitor, CoupledRun, StickingReport,
                       build_coupling, check_sticking, cone_time_interval_1d,
                       hull_interval, monitor_cones, point_in_scaled_hull,
                       splice_clock)
from . import estimators, oracle, rng

__all__ = [
    "BoxSpec", "Configuration", "Window", "configuration_all_one",
    "configuration_bernoulli", "configuration_from_sites",
    "configuration_single", "configuration_zero", "local_window",
    "neighbor_sum", "shift",
    "KernelSpec", "KernelReport", "alpha", "alpha_norm", "constant_kernel",
    "cumulative", "example_drift_kernel", "kernel_from_dict",
    "kernel_to_dict", "load_kernel", "max_total_rate", "occupancy_kernel",
    "range_hull", "save_kernel", "validate",
    "CpTrajectory", "GraphicalConstruction", "build_graphical",
    "build_graphical_family", "disagreement_episodes", "evolve",
    "evolve_trajectory", "extinction_time", "visited_masks",
    "EnvironmentTrajectory", "JointTrajectory", "WalkClock",
    "build_walk_clock", "environment_view", "simulate_joint",
    "ConeMonitor", "CoupledRun", "StickingReport", "build_coupling",
    "check_sticking", "cone_time_interval_1d", "hull_interval",
    "monitor_cones", "point_in_scaled_hull", "splice_clock",
    "estimators", "oracle", "rng",
]
