"""Rank-truncated linear multistep integration on hierarchical Tucker tensors."""

from .dimtree import DimTree, build_balanced, layers, validate
from .discretization import Grid, KronOperator, KronTerm, build_advection, build_diffusion, build_generator
from .errors import BudgetExceededError, ConfigError
from .fields import SeparableField
from .ht import HTTensor, TruncationPolicy, from_dense, truncate
from .lmm import LMMScheme, StepState, ab_scheme

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ConfigError",
    "DimTree",
    "Grid",
    "HTTensor",
    "KronOperator",
    "KronTerm",
    "LMMScheme",
    "SeparableField",
    "StepState",
    "TruncationPolicy",
    "ab_scheme",
    "build_advection",
    "build_balanced",
    "build_diffusion",
    "build_generator",
    "from_dense",
    "layers",
    "truncate",
    "validate",
]
