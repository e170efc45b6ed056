"""Finite-volume solver for truncated coagulation with multiple fragmentation."""

from .config import InitialData, RunConfig, StudyConfig, dump_config, load_config
from .discretization import Grid, GriddedDensity, build_grid
from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    DomainError,
    GridError,
    ProjectionError,
    SolverError,
    StepSizeError,
    StudyError,
    TruncoagError,
)
from .kernels import FragmentationSpec, KernelSpec, TruncationSpec
from .solver import Trajectory, run

__all__ = [
    "ConfigError",
    "ContractError",
    "DivergenceError",
    "DomainError",
    "FragmentationSpec",
    "Grid",
    "GridError",
    "GriddedDensity",
    "InitialData",
    "KernelSpec",
    "ProjectionError",
    "RunConfig",
    "SolverError",
    "StepSizeError",
    "StudyConfig",
    "StudyError",
    "Trajectory",
    "TruncationSpec",
    "TruncoagError",
    "build_grid",
    "dump_config",
    "load_config",
    "run",
]
