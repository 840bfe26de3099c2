"""Sectional solver and verification tools for coagulation with collision-induced multiple fragmentation."""

__version__ = "0.1.0"

from .analysis import (AnalysisConfig, contraction_check, gronwall_constant_psi,
                       mass_conservation_report, oracle_constant_kernel_M0, oracle_dense_ode,
                       truncation_convergence, uniqueness_distance, weighted_norm)
from .errors import ConfigError, DomainError, InputError, NumericalError, StiffnessError
from .grid import MassGrid, build_geometric_grid, project_initial_condition
from .kernels import (BreakupKernel, CoagulationKernel, CollisionKernel, SamplePlan,
                      breakup_moment, check_admissibility, eval_B, eval_C, eval_K, truncate)
from .moments import EnvelopeParams, moment
from .solver import SolverConfig, State, Trajectory, rhs, run, step
