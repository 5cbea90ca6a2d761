from .algebra import AlgebraElement, ChevalleyHandles, Grading, LieAlgebra, OrthonormalBasis
from .geometry import CurvatureTensors, FundamentalForms, GcrResiduals, NormalFrame
from .toda import ClosedFormField, FieldConfig, GaugeData, GoursatReport, GridField, TodaModel
from .transport import ImmersionPatch, StaircasePath, TransportState

__all__ = [
    "AlgebraElement",
    "ChevalleyHandles",
    "Grading",
    "LieAlgebra",
    "OrthonormalBasis",
    "CurvatureTensors",
    "FundamentalForms",
    "GcrResiduals",
    "NormalFrame",
    "ClosedFormField",
    "FieldConfig",
    "GaugeData",
    "GoursatReport",
    "GridField",
    "TodaModel",
    "ImmersionPatch",
    "StaircasePath",
    "TransportState",
]
