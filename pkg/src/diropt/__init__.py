"""Decentralized composite optimization over directed networks.

PG-ExtraPush (with its ExtraPush, P-ExtraPush and PG-EXTRA reductions) and a
Subgradient-Push baseline, simulated in synchronous rounds, together with the
graph, proximal, problem-generation and analysis tooling around them.
"""

from .errors import (
    BoostFailed,
    ConfigError,
    DegenerateConstraint,
    DimensionMismatch,
    DiroptError,
    InfeasibleInstance,
    NoConvergence,
    NonFiniteIterate,
    NotStronglyConnected,
    RangeTooNarrow,
    SingularSystem,
    TraceTooShort,
)

__version__ = "0.1.0"
