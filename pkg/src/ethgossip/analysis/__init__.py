from .degree import DegreeEstimate, estimate_degree, estimate_all_degrees
from .distribution import empirical_distribution
from .hopmodel import HopModelParams, HopSolution, solve_hop_model
from .latency import LatencyReport, broadcast_latency
from .powerlaw import PowerLawFit, fit_power_law, sample_power_law, sample_poisson

__all__ = [
    "DegreeEstimate",
    "estimate_degree",
    "estimate_all_degrees",
    "empirical_distribution",
    "HopModelParams",
    "HopSolution",
    "solve_hop_model",
    "LatencyReport",
    "broadcast_latency",
    "PowerLawFit",
    "fit_power_law",
    "sample_power_law",
    "sample_poisson",
]
