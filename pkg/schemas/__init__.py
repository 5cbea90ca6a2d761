from .report import CheckResult, GoursatSummary, QuarantinedPoint, RunReport
from .run_config import (
    CHECK_NAMES,
    AlgebraSection,
    ChecksSection,
    GridSection,
    ModelSection,
    OutputsSection,
    RunConfig,
    RunSection,
    SolutionSection,
    TolerancesSection,
)

__all__ = [
    "CHECK_NAMES",
    "AlgebraSection",
    "ChecksSection",
    "GridSection",
    "ModelSection",
    "OutputsSection",
    "RunConfig",
    "RunSection",
    "SolutionSection",
    "TolerancesSection",
    "CheckResult",
    "GoursatSummary",
    "QuarantinedPoint",
    "RunReport",
]
