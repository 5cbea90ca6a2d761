from typing import Any, Optional


class TodaGeometryError(Exception):
    """所有领域错误的基类"""


class AlgebraInputError(TodaGeometryError, ValueError):
    """元素维度与代数不匹配"""


class UnsupportedAlgebraError(TodaGeometryError, ValueError):
    """不支持的代数族或秩"""


class SemisimplicityError(TodaGeometryError):
    """Killing形式退化"""


class ModelError(TodaGeometryError, ValueError):
    """TodaModel不变量不成立"""


class DomainError(TodaGeometryError, ValueError):
    """求值点不在场的定义域内"""


class SolutionLookupError(TodaGeometryError, KeyError):
    """未注册的精确解"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class OffShellError(TodaGeometryError):
    """场不满足场方程，拒绝on-shell计算"""


class DegeneratePointError(TodaGeometryError):
    """度量退化或法空间配对秩亏损"""

    def __init__(self, message: str, point: Optional[tuple] = None):
        super().__init__(message)
        self.point = point


class FrameDiscontinuityError(TodaGeometryError):
    """代数式与法标架运动式两种第二基本形式不一致"""

    def __init__(self, message: str, deviation: float = float("nan")):
        super().__init__(message)
        self.deviation = deviation


class ConsistencyError(TodaGeometryError):
    """数值一致性检查失败"""


class TransportDivergenceError(TodaGeometryError):
    """输运积分发散"""


class GoursatBlowUpError(TodaGeometryError):
    """Goursat推进出现非有限值"""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class ConfigError(TodaGeometryError):
    """运行配置解析或校验失败"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self) -> str:
        base = super().__str__()
        if self.line is not None:
            return f"{base} (第{self.line}行, 第{self.column or 1}列)"
        return base
