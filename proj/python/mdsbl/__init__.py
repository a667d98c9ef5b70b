"""Multi-sensor gridless sparse Bayesian learning for MIMO radar."""

from ._core import (
    ConfigError,
    Error,
    InvalidInputError,
    ObjectSpec,
    RadarGeometry,
    Rect,
    Scenario,
    atom,
    crossing_region,
    crossing_scenario,
    multi_radar_scenario,
    nomp_estimate,
    normalize_config,
    ospa,
    polar_grid,
    run_experiment,
    sbl_estimate,
    synthesize,
    xy_grid,
)

__all__ = [
    "ConfigError",
    "Error",
    "InvalidInputError",
    "ObjectSpec",
    "RadarGeometry",
    "Rect",
    "Scenario",
    "atom",
    "crossing_region",
    "crossing_scenario",
    "multi_radar_scenario",
    "nomp_estimate",
    "normalize_config",
    "ospa",
    "polar_grid",
    "run_experiment",
    "sbl_estimate",
    "synthesize",
    "xy_grid",
]
