from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebra import GramSchmidtPlan


@dataclass(frozen=True, eq=False)
class NormalFrame:
    """法标架 {N⁰_A}：与 a_{1,λ}, a_{2,λ} Killing正交，c·k(N⁰_A, N⁰_B) = η_AB

    vectors 的每一行是一个 N⁰_A 的代数坐标；plan 用于在邻近点重放同一组主元选择。
    """

    vectors: np.ndarray
    eta: np.ndarray
    plan: GramSchmidtPlan = ()

    @property
    def rank(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def nu_perp(self) -> int:
        """ν⊥：法空间中类时方向的个数"""
        return int(np.sum(self.eta < 0))

    @property
    def eta_matrix(self) -> np.ndarray:
        return np.diag(self.eta.astype(float))


@dataclass(frozen=True, eq=False)
class CurvatureTensors:
    """二维情形下由Christoffel符号有限差分得到的曲率张量

    riemann[i,j,k,l] = R^i_{jkl}，lowered[i,j,k,l] = R_{ijkl}。
    K = −R_{1212}；sectional = S/2 是满足 Ric = sectional·g 的截面曲率。
    """

    riemann: np.ndarray
    lowered: np.ndarray
    ricci: np.ndarray
    scalar: float
    K: float

    @property
    def sectional(self) -> float:
        return 0.5 * self.scalar


@dataclass(frozen=True)
class GcrResiduals:
    gauss: float
    codazzi: float
    ricci: float

    def max(self) -> float:
        return max(self.gauss, self.codazzi, self.ricci)


@dataclass(frozen=True, eq=False)
class FundamentalForms:
    """一点处的基本形式及曲率数据"""

    z: float
    zbar: float
    g: np.ndarray
    g_inv: np.ndarray
    Gamma: np.ndarray
    b: np.ndarray
    mu_conn: np.ndarray
    K: float
    K_closed: Optional[float]
    K_fd: float
    K_gauss: float
    H_norm_sq: float
    frame: NormalFrame
    b_crosscheck: float = 0.0

    @property
    def nu_perp(self) -> int:
        return self.frame.nu_perp
