"""Interacting agents driven by a dynamic potential field.

Simulation of the N-agent system and its mixture-field particle scheme,
the deterministic coupled update with a contraction certificate and fixed
point, and a suite of pre-registered numerical checks tying the code to the
quantitative guarantees it claims.
"""

__version__ = "0.1.0"

from .agents import AgentSystemState, SystemTrajectory, run_system, system_step
from .config import RunConfig, load_config, parse_config
from .experiments import CheckReport, RunContext, build_context, run_checks
from .kernels import BoxDomain, KernelBank, derive_constants, field_tail_radius
from .meanfield import (
    ContractionConstants,
    ConvergenceError,
    MeanFieldState,
    compute_constants,
    field_update,
    fixed_point,
    pair_distance,
    phi_step,
)
from .measures import (
    EmpiricalMeasure,
    FunctionNet,
    GaussianMixture,
    GridDensity,
    UniformGrid,
    agent_grid,
    build_net,
    field_grid,
    net_distance,
    oscillation,
    rasterize,
    single_gaussian,
    sup_distance,
    tv_distance,
    uniform_density,
)
from .metropolis import (
    PotentialField,
    accept_weight,
    m_psi_pushforward,
    m_psi_sample,
    step_agents,
    transition_matrix,
)
from .scheme import SchemeState, SchemeTrajectory, exact_field_oracle, run_scheme, scheme_step

__all__ = [
    "AgentSystemState",
    "BoxDomain",
    "CheckReport",
    "ContractionConstants",
    "ConvergenceError",
    "EmpiricalMeasure",
    "FunctionNet",
    "GaussianMixture",
    "GridDensity",
    "KernelBank",
    "MeanFieldState",
    "PotentialField",
    "RunConfig",
    "RunContext",
    "SchemeState",
    "SchemeTrajectory",
    "SystemTrajectory",
    "UniformGrid",
    "__version__",
    "accept_weight",
    "agent_grid",
    "build_context",
    "build_net",
    "compute_constants",
    "derive_constants",
    "exact_field_oracle",
    "field_grid",
    "field_tail_radius",
    "field_update",
    "fixed_point",
    "load_config",
    "m_psi_pushforward",
    "m_psi_sample",
    "net_distance",
    "oscillation",
    "pair_distance",
    "parse_config",
    "phi_step",
    "rasterize",
    "run_checks",
    "run_scheme",
    "run_system",
    "scheme_step",
    "single_gaussian",
    "step_agents",
    "sup_distance",
    "system_step",
    "transition_matrix",
    "tv_distance",
    "uniform_density",
]
