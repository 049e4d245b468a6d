"""Selection statistics for a proxy ``M = G + xi`` of a goal ``G``.

Given independent ``G`` and ``xi``, keep the top ``alpha`` fraction by ``M``
and ask what happens to the goal among the survivors: the threshold
``m_alpha``, conditional moments, and the truncated correlation ``rho_alpha``.
Quadrature, closed forms and Monte Carlo compute the same records so each can
check the others.
"""

from .errors import (
    BracketFailure,
    ConfigError,
    DomainError,
    GoodhartError,
    InsufficientSweep,
    MissingStdErrors,
    MomentDoesNotExist,
    QuadratureFailure,
)
from .records import Method, TruncatedStats
from .truncation import (
    AlphaLogGrid,
    Scenario,
    SweepTable,
    ThresholdGrid,
    solve_m_alpha,
    sweep,
    truncated_stats,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaLogGrid",
    "BracketFailure",
    "ConfigError",
    "DomainError",
    "GoodhartError",
    "InsufficientSweep",
    "Method",
    "MissingStdErrors",
    "MomentDoesNotExist",
    "QuadratureFailure",
    "Scenario",
    "SweepTable",
    "ThresholdGrid",
    "TruncatedStats",
    "solve_m_alpha",
    "sweep",
    "truncated_stats",
]
