"""Numerical laboratory for the degenerate parabolic logistic equation
and its large-exponent obstacle-problem limit."""

from .errors import ConfigurationError, DivergenceError, SolverError
from .mesh import (
    DomainSpec,
    Field,
    Grid,
    Mask,
    apply_laplacian,
    build_grid,
    norm,
    sample_domain,
    smallest_laplacian_eigenvalue,
)
from .spectral import EigenPair, principal_eigenpair
from .evolution import (
    EvolveParams,
    TimeSeries,
    diffusion_step_implicit,
    evolve,
    heat_supersolution,
    reaction_step_exact,
    subsolution_margin,
)
from .obstacle import (
    ObstacleSpec,
    VIResult,
    complementarity_residual,
    coincidence_set,
    default_vi_dt,
    parabolic_vi_evolve,
    parabolic_vi_step,
    stationary_vi_solve,
)

__version__ = "0.1.0"
