"""Exact simulation and seen-from-tip analysis of one-dimensional lattice
birth processes with bounded occupancy and finite-range rates."""

from .lattice import (
    Configuration,
    EmptyConfigurationError,
    LatticeBuffer,
    SeenFromTip,
    increment,
    occ,
    seen_from_tip,
    shift,
    singleton_origin,
    tip,
)
from .rates import (
    FecEstModel,
    FecEstParams,
    FreeBranchingModel,
    Kernel,
    RateBounds,
    RateModel,
    TableModel,
    check_conditions,
    compute_bounds,
    standard_model,
)
from .simulator import SimState, Trajectory, init, replicate, run_until, simulate, step

__version__ = "0.1.0"
