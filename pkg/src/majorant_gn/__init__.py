"""Gauss-Newton-like iterations with majorant-based convergence certificates."""

from .certify import Certificate, LemmaCheckReport, certify_trace
from .errors import (
    DomainExceeded,
    ForcingViolation,
    Infeasible,
    InvalidMajorant,
    MajorantGNError,
    NotSquare,
    OutOfBall,
    PerturbationTooLarge,
    RankDeficient,
    SingularPreconditioner,
    StationaryPointMissing,
    TargetUnreachable,
    TraceFormatError,
)
from .majorant import (
    MajorantSpec,
    MethodParams,
    ProblemConstants,
    RadiusReport,
    make_lipschitz_majorant,
    make_smale_majorant,
    q2_coefficients,
    radius,
)
from .problems import CatalogEntry, catalog, get_entry
from .runner import RunSpec, run_one
from .solver import IterationTrace, Problem, SolverConfig, StepRecord, iterate

__version__ = "0.1.0"
