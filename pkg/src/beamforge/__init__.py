"""Beam-switching codebook design for high-speed-rail mmWave links."""

from .channel import (AoDGrid, Beam, Codebook, band, build_grid,
                      codebook_rsnr_trace, coverage_set, gains_over,
                      nearfield_loss, steering_vector)
from .scenario import ScenarioConfig, SolverParams
from .search import (SolverError, bisection_search, mixed_search,
                     sequential_design)

__all__ = [
    "AoDGrid", "Beam", "Codebook", "ScenarioConfig", "SolverParams",
    "SolverError", "band", "bisection_search", "build_grid",
    "codebook_rsnr_trace", "coverage_set", "gains_over", "mixed_search",
    "nearfield_loss", "sequential_design", "steering_vector",
]

__version__ = "0.1.0"
