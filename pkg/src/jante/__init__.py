"""Simulation and verification lab for the local Jante's law process.

The process lives on a finite graph (a cycle by default). At every step the
node whose fitness deviates most from the mean of its neighbours is replaced
by a fresh draw from a fixed distribution.
"""

from jante.kernels import BACKEND
from jante.process import (
    DistributionSpec,
    StepRecord,
    Trajectory,
    max_nonconformity,
    nonconformity,
    run,
    select_worst,
    step,
)
from jante.topology import Topology, counterexample_graph, cycle, from_edge_list

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DistributionSpec",
    "StepRecord",
    "Topology",
    "Trajectory",
    "counterexample_graph",
    "cycle",
    "from_edge_list",
    "max_nonconformity",
    "nonconformity",
    "run",
    "select_worst",
    "step",
]
