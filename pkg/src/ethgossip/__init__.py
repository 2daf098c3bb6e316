"""Deterministic Ethereum gossip simulator and topology estimators."""

__version__ = "0.1.0"

from .backend import active_backend, run_simulation  # noqa: F401
from .params import ProtocolParams  # noqa: F401
from .rng import RandomSource  # noqa: F401
from .topology import Topology, generate_topology, read_topology, write_topology  # noqa: F401
from .workload import Workload, build_workload  # noqa: F401
