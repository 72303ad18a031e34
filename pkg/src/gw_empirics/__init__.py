"""Empirical squared Gromov-Wasserstein estimation between Euclidean point clouds."""

__version__ = "0.1.0"

from .errors import ConfigError, ConstructionError, DomainError, GwError, ScenarioError  # noqa: E402
from .gw import GwOptions, GwResult, estimate_gw, gw_objective, oracle_grid, procrustes_w2, s1, s2_alternating  # noqa: E402
from .measures import DiscreteMeasure, SamplerSpec, SeedPath, center, moments, sample  # noqa: E402
from .transport import solve_ot  # noqa: E402

__all__ = [
    "ConfigError", "ConstructionError", "DiscreteMeasure", "DomainError", "GwError", "GwOptions",
    "GwResult", "SamplerSpec", "ScenarioError", "SeedPath", "center", "estimate_gw", "gw_objective",
    "moments", "oracle_grid", "procrustes_w2", "s1", "s2_alternating", "sample", "solve_ot",
]
