from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CHECK_NAMES = ("field_eq", "zero_curvature", "gcr", "gauge_invariance", "appendix_christoffel", "curvature")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class AlgebraSection(_Section):
    family: Literal["sl"] = "sl"
    n: int = 2
    alpha_sq: float = 2.0

    @field_validator("n")
    @classmethod
    def rank_supported(cls, v: int) -> int:
        if v < 2:
            raise ValueError("n 必须 >= 2")
        return v

    @field_validator("alpha_sq")
    @classmethod
    def alpha_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("alpha_sq 必须为正")
        return v


class ModelSection(_Section):
    mu_plus: float = 1.0
    mu_minus: float = 1.0
    c: float = 1.0
    lam: float = Field(default=0.0, alias="lambda")

    @field_validator("c")
    @classmethod
    def c_nonzero(cls, v: float) -> float:
        if v == 0:
            raise ValueError("c ≠ 0 是构造浸入的必要条件（度量 c·k 非退化）")
        return v

    @field_validator("mu_plus", "mu_minus")
    @classmethod
    def mu_nonzero(cls, v: float) -> float:
        if v == 0:
            raise ValueError("μ⁺ 和 μ⁻ 不能为 0（ε± ≠ 0）")
        return v


class SolutionSection(_Section):
    kind: Literal["builtin", "grid_file", "goursat"] = "builtin"
    name: Optional[str] = None
    params: Dict[str, Union[int, float]] = Field(default_factory=dict)
    path: Optional[Path] = None
    initial: Optional[str] = None
    step: Optional[float] = None

    @model_validator(mode="after")
    def kind_fields(self) -> "SolutionSection":
        if self.kind == "builtin" and not self.name:
            raise ValueError("builtin 解需要 name")
        if self.kind == "grid_file" and self.path is None:
            raise ValueError("grid_file 解需要 path")
        if self.kind == "goursat":
            if not self.initial:
                raise ValueError("goursat 解需要 initial（精确解名称或 zero）")
            if self.step is None or not self.step > 0:
                raise ValueError("goursat 解需要正的 step")
        return self


class GridSection(_Section):
    z_min: float
    z_max: float
    zbar_min: float
    zbar_max: float
    nz: int = 11
    nzbar: int = 11

    @field_validator("nz", "nzbar")
    @classmethod
    def enough_points(cls, v: int) -> int:
        if v < 2:
            raise ValueError("网格每个方向至少 2 个点")
        return v

    @model_validator(mode="after")
    def ordered(self) -> "GridSection":
        if not (self.z_max > self.z_min and self.zbar_max > self.zbar_min):
            raise ValueError("网格范围必须满足 max > min")
        return self


class RunSection(_Section):
    fd_step: float = 1e-3
    transport_step: float = 1e-3
    max_quarantine_fraction: float = 0.0
    # 规范不变性检查用的常数元素：Σ gauge_cartan[i]·h_i
    gauge_cartan: List[float] = Field(default_factory=list)

    @field_validator("fd_step", "transport_step")
    @classmethod
    def positive_step(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("步长必须为正")
        return v

    @field_validator("max_quarantine_fraction")
    @classmethod
    def fraction(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("max_quarantine_fraction 必须在 [0, 1] 内")
        return v


class OutputsSection(_Section):
    forms_csv: Path = Path("out/forms.csv")
    immersion_csv: Optional[Path] = None
    report_json: Path = Path("out/report.json")


class ChecksSection(_Section):
    enabled: List[str] = Field(default_factory=lambda: list(CHECK_NAMES))

    @field_validator("enabled")
    @classmethod
    def known_checks(cls, v: List[str]) -> List[str]:
        unknown = [name for name in v if name not in CHECK_NAMES]
        if unknown:
            raise ValueError(f"未知的检查项 {unknown}，可选 {list(CHECK_NAMES)}")
        return v


class TolerancesSection(_Section):
    field_eq: float = 1e-8
    zero_curvature: float = 1e-8
    gcr: float = 1e-4
    gauge_invariance: float = 1e-9
    appendix_christoffel: float = 1e-5
    curvature: float = 1e-4


class RunConfig(_Section):
    algebra: AlgebraSection = Field(default_factory=AlgebraSection)
    model: ModelSection = Field(default_factory=ModelSection)
    solution: SolutionSection
    grid: GridSection
    run: RunSection = Field(default_factory=RunSection)
    outputs: OutputsSection = Field(default_factory=OutputsSection)
    checks: ChecksSection = Field(default_factory=ChecksSection)
    tolerances: TolerancesSection = Field(default_factory=TolerancesSection)

    def resolve_paths(self, base: Path) -> "RunConfig":
        """相对路径按配置文件所在目录解析"""

        def absolute(p: Optional[Path]) -> Optional[Path]:
            return None if p is None or p.is_absolute() else base / p

        outputs = self.outputs.model_copy(update={
            "forms_csv": absolute(self.outputs.forms_csv) or self.outputs.forms_csv,
            "immersion_csv": absolute(self.outputs.immersion_csv) or self.outputs.immersion_csv,
            "report_json": absolute(self.outputs.report_json) or self.outputs.report_json,
        })
        solution = self.solution.model_copy(update={"path": absolute(self.solution.path) or self.solution.path})
        return self.model_copy(update={"outputs": outputs, "solution": solution})
