from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    name: str
    max_residual: Union[float, str]
    tolerance: float
    passed: bool
    points: int = 0


class QuarantinedPoint(BaseModel):
    z: float
    zbar: float
    reason: str
    message: str


class GoursatSummary(BaseModel):
    # 推进中途发散时只记录已完成的行，残差可能无法计算
    max_residual: Optional[float] = None
    h: float
    hbar: float
    corrector_passes: int
    blew_up: bool = False
    completed_rows: Optional[int] = None
    last_valid_zbar: Optional[float] = None


class RunReport(BaseModel):
    status: str
    config: Dict[str, Any]
    algebra_dim: int
    nu_bar: int
    nu_perp: Optional[int] = None
    points: int
    checks: List[CheckResult] = Field(default_factory=list)
    quarantined: List[QuarantinedPoint] = Field(default_factory=list)
    quarantine_fraction: float = 0.0
    goursat: Optional[GoursatSummary] = None
    warnings: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "passed"
