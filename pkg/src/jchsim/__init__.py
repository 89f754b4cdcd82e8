"""Exact diagonalization and cluster mean-field tools for a three-level Jaynes-Cummings-Hubbard lattice."""

from .basis import FullBasis, Level, LocalState, SectorBasis, enumerate_sector, full_basis, sector_dimension
from .eigensolver import GroundState, dense_ground_state, dense_spectrum, ground_state
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionLimitError,
    EmptySectorError,
    JCHError,
    OrthogonalStatesError,
)
from .hamiltonian import ModelParams, SparseOperator, build_chain, build_cluster_gc, cluster_geometry

__version__ = "0.1.0"
