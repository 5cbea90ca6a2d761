from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .algebra import OrthonormalBasis
from .exceptions import ModelError

PATH_ORDERS = ("z_first", "zbar_first")


@dataclass(frozen=True)
class StaircasePath:
    """从 base 到 target 的两段折线，每段只改变一个坐标"""

    base: Tuple[float, float]
    target: Tuple[float, float]
    order: str = "z_first"

    def __post_init__(self):
        if self.order not in PATH_ORDERS:
            raise ModelError(f"未知的路径顺序 {self.order}，可选 {PATH_ORDERS}")

    def segments(self) -> List[Tuple[int, float, float, float]]:
        """(方向 μ, 起点, 终点, 另一坐标的固定值)，μ=0 表示沿 z"""
        (z0, w0), (z1, w1) = self.base, self.target
        if self.order == "z_first":
            return [(0, z0, z1, w0), (1, w0, w1, z1)]
        return [(1, w0, w1, z0), (0, z0, z1, w1)]

    @property
    def length(self) -> float:
        return abs(self.target[0] - self.base[0]) + abs(self.target[1] - self.base[1])


@dataclass(frozen=True, eq=False)
class TransportState:
    """(∂_μ + a_μ)U = 0 在伴随表示下的解 U（m̄×m̄）"""

    U: np.ndarray
    base_point: Tuple[float, float]
    base_value: np.ndarray
    point: Tuple[float, float]
    lam: float
    order: str
    h: float
    U_l: Optional[np.ndarray] = None
    warning: Optional[str] = None

    @property
    def path(self) -> StaircasePath:
        return StaircasePath(self.base_point, self.point, self.order)


@dataclass(frozen=True, eq=False)
class ImmersionPatch:
    """网格上的位置向量 r(z, z̄)

    r 是代数基下的坐标，y 是 c·k 正交归一基下的坐标：r = Σ y_j b_j。
    """

    z: np.ndarray
    zbar: np.ndarray
    r: np.ndarray
    y: np.ndarray
    basis: OrthonormalBasis
    max_killing_drift: float
    # 各网格点上 r_{,1}, r_{,2} 最小奇异值的最小者
    min_rank_margin: float = float("inf")
