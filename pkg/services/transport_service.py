import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from config import settings
from models.algebra import AlgebraElement, LieAlgebra
from models.exceptions import ConsistencyError, DegeneratePointError, ModelError, TransportDivergenceError
from models.toda import FieldConfig, TodaModel
from models.transport import ImmersionPatch, StaircasePath, TransportState
from services.algebra_service import algebra_service
from services.toda_service import toda_service

logger = logging.getLogger(__name__)

# 超过这个量级就认为积分发散
_DIVERGENCE_LIMIT = 1e12
# 切向量 r_{,1}, r_{,2} 的最小奇异值下限（浸入的秩条件）
IMMERSION_RANK_TOL = 1e-8


class TransportService:
    """伴随表示下沿阶梯路径积分 dU/ds = −ad(a_μ)U（经典四阶Runge–Kutta）"""

    def _generators(self, model: TodaModel, fields: FieldConfig, mu: int, fixed: float, s: np.ndarray):
        ad_basis = model.algebra.ad_basis
        if mu == 0:
            z, w = s, np.full_like(s, fixed)
        else:
            z, w = np.full_like(s, fixed), s
        a, a_l = toda_service.potentials_many(model, fields, z, w)
        A = np.einsum("ikj,ni->nkj", ad_basis, a[mu])
        A_l = np.einsum("ikj,ni->nkj", ad_basis, a_l[mu])
        return A, A_l, (z, w)

    def _rk4(
        self,
        A: np.ndarray,
        A_l: Optional[np.ndarray],
        U: np.ndarray,
        V: Optional[np.ndarray],
        step: float,
    ):
        """A 给在 2n+1 个半步节点上；V 不为 None 时同时积分 dV = −A_l U − A V"""
        n = (A.shape[0] - 1) // 2

        def rhs(k: int, u, v):
            du = -A[k] @ u
            dv = None if v is None else -A_l[k] @ u - A[k] @ v
            return du, dv

        def shift(u, du, v, dv, t):
            return u + t * du, (None if v is None else v + t * dv)

        for i in range(n):
            k1 = rhs(2 * i, U, V)
            k2 = rhs(2 * i + 1, *shift(U, k1[0], V, k1[1], 0.5 * step))
            k3 = rhs(2 * i + 1, *shift(U, k2[0], V, k2[1], 0.5 * step))
            k4 = rhs(2 * i + 2, *shift(U, k3[0], V, k3[1], step))
            U = U + step / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            if V is not None:
                V = V + step / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if not np.all(np.isfinite(U)) or np.max(np.abs(U)) > _DIVERGENCE_LIMIT:
                raise TransportDivergenceError(f"输运在第 {i + 1} 步发散")
        return U, V

    def transport(
        self,
        model: TodaModel,
        fields: FieldConfig,
        target: Tuple[float, float],
        h: float = 1e-3,
        base: Optional[Tuple[float, float]] = None,
        order: str = "z_first",
        base_value: Optional[np.ndarray] = None,
        variation: bool = False,
        check_residual: bool = True,
    ) -> TransportState:
        """从 base（默认为定义域左下角）沿阶梯路径输运到 target

        variation=True 时同时积分 U_λ（变分方程），结果放在 U_l。
        """
        if h <= 0:
            raise ModelError("输运步长必须为正")
        m = model.dim
        base = (fields.domain[0], fields.domain[2]) if base is None else (float(base[0]), float(base[1]))
        path = StaircasePath(base, (float(target[0]), float(target[1])), order)
        U0 = np.eye(m) if base_value is None else np.array(base_value, dtype=float)
        U, V = U0.copy(), (np.zeros((m, m)) if variation else None)

        worst = 0.0
        for mu, s0, s1, fixed in path.segments():
            if s1 == s0:
                continue
            n = max(1, math.ceil(abs(s1 - s0) / h - 1e-9))
            s = np.linspace(s0, s1, 2 * n + 1)
            A, A_l, (zs, ws) = self._generators(model, fields, mu, fixed, s)
            if check_residual:
                worst = max(worst, float(np.max(toda_service.field_residual_many(model, fields, zs, ws))))
            U, V = self._rk4(A, A_l if variation else None, U, V, (s1 - s0) / n)

        warning = None
        if worst > settings.transport_warn_tol:
            warning = f"场不满足场方程（最大残差 {worst:.3e}），U 依赖于路径"
            logger.warning(f"⚠️ {warning}")
        return TransportState(
            U=U, base_point=base, base_value=U0, point=path.target, lam=model.lam,
            order=order, h=h, U_l=V, warning=warning,
        )

    def killing_drift(self, state: TransportState, algebra: LieAlgebra) -> float:
        """‖UᵀκU − κ‖ / ‖κ‖"""
        kappa = algebra.killing_matrix
        return float(np.linalg.norm(state.U.T @ kappa @ state.U - kappa) / np.linalg.norm(kappa))

    def element_from_ad(self, algebra: LieAlgebra, matrix: np.ndarray, tol: Optional[float] = None) -> AlgebraElement:
        """由 ad 矩阵恢复代数元素（在 ad 像上做最小二乘投影）"""
        tol = settings.projection_tol if tol is None else tol
        basis = algebra.ad_basis.reshape(algebra.dim, -1).T
        coeffs, *_ = np.linalg.lstsq(basis, matrix.reshape(-1), rcond=None)
        residual = float(np.linalg.norm(basis @ coeffs - matrix.reshape(-1)))
        if residual > tol * max(1.0, float(np.max(np.abs(matrix)))):
            raise ConsistencyError(f"U⁻¹U_λ 不在 ad 像中（残差 {residual:.3e}），积分可能漂移")
        return AlgebraElement(coeffs)

    def position_vector(
        self,
        state: TransportState,
        model: TodaModel,
        fields: FieldConfig,
        method: str = "central",
        delta: Optional[float] = None,
    ) -> AlgebraElement:
        """r = U⁻¹U_λ

        method="central" 在 λ±δ 各输运一次；method="variation" 使用变分方程积分的 U_λ。
        """
        if method == "variation":
            U_l = state.U_l
            if U_l is None:
                U_l = self.transport(
                    model, fields, state.point, state.h, state.base_point, state.order,
                    state.base_value, variation=True, check_residual=False,
                ).U_l
        elif method == "central":
            delta = settings.lambda_step if delta is None else delta
            shifted = [
                self.transport(
                    model.with_lambda(state.lam + sign * delta), fields, state.point, state.h,
                    state.base_point, state.order, state.base_value, check_residual=False,
                ).U
                for sign in (1.0, -1.0)
            ]
            U_l = (shifted[0] - shifted[1]) / (2.0 * delta)
        else:
            raise ModelError(f"未知的 method: {method}")
        return self.element_from_ad(model.algebra, np.linalg.solve(state.U, U_l))

    def tangent_vectors(self, state: TransportState, model: TodaModel, fields: FieldConfig) -> np.ndarray:
        """r_{,μ} = −U⁻¹ a_{μ,λ} U，形状 (2, m̄)；两个切向量线性相关时抛 DegeneratePointError"""
        gauge = toda_service.gauge_at(model, fields, *state.point)
        tangents = -np.linalg.solve(state.U, gauge.a_l.T).T
        sigma = self.rank_margin(tangents)
        if sigma <= IMMERSION_RANK_TOL:
            raise DegeneratePointError(f"切向量线性相关（最小奇异值 {sigma:.3e}）", point=state.point)
        return tangents

    def rank_margin(self, tangents: np.ndarray) -> float:
        """2×m̄ 切向量矩阵的最小奇异值"""
        return float(np.linalg.svd(tangents, compute_uv=False)[-1])

    def immersion_patch(
        self,
        model: TodaModel,
        fields: FieldConfig,
        z: np.ndarray,
        zbar: np.ndarray,
        h: float = 1e-3,
        base_value: Optional[np.ndarray] = None,
    ) -> ImmersionPatch:
        """先沿 z = z₀ 输运到每个 z̄_k，再沿每一行输运到各 z_j；U_λ 用变分方程"""
        z = np.asarray(z, dtype=float)
        zbar = np.asarray(zbar, dtype=float)
        m = model.dim
        basis = algebra_service.orthonormal_basis(model.algebra, model.c)
        U0 = np.eye(m) if base_value is None else np.array(base_value, dtype=float)

        worst = float(np.max(toda_service.field_residual_many(
            model, fields, *[a.ravel() for a in np.meshgrid(z, zbar, indexing="ij")]
        )))
        if worst > settings.transport_warn_tol:
            logger.warning(f"⚠️ 场不满足场方程（最大残差 {worst:.3e}），浸入依赖于路径")

        column = self._march(model, fields, 1, z[0], zbar, U0, np.zeros((m, m)), h)

        def row(k: int) -> List[Tuple[np.ndarray, np.ndarray]]:
            U_k, V_k = column[k]
            return self._march(model, fields, 0, zbar[k], z, U_k, V_k, h)

        with ThreadPoolExecutor(max_workers=settings.threads) as executor:
            rows = list(executor.map(row, range(zbar.shape[0])))

        Z, W = np.meshgrid(z, zbar, indexing="ij")
        _, a_l = toda_service.potentials_many(model, fields, Z.ravel(), W.ravel())
        a_l = a_l.reshape(2, z.shape[0], zbar.shape[0], m)

        r = np.zeros((z.shape[0], zbar.shape[0], m))
        drift = 0.0
        margin = np.inf
        kappa = model.algebra.killing_matrix
        for k, states in enumerate(rows):
            for j, (U, V) in enumerate(states):
                r[j, k] = self.element_from_ad(model.algebra, np.linalg.solve(U, V)).coeffs
                drift = max(drift, float(np.linalg.norm(U.T @ kappa @ U - kappa) / np.linalg.norm(kappa)))
                margin = min(margin, self.rank_margin(-np.linalg.solve(U, a_l[:, j, k].T).T))
        if margin <= IMMERSION_RANK_TOL:
            logger.warning(f"⚠️ 浸入在部分网格点秩亏损（最小奇异值 {margin:.3e}）")

        B = basis.matrix()
        # y_j = ε_j · c·k(r, b_j)
        y = (r @ (model.c * kappa) @ B) * basis.signs
        logger.info(f"✅ 浸入坐标计算完成: {z.shape[0]}×{zbar.shape[0]}, 最大Killing漂移 {drift:.3e}")
        return ImmersionPatch(
            z=z, zbar=zbar, r=r, y=y, basis=basis, max_killing_drift=drift, min_rank_margin=float(margin)
        )

    def _march(self, model, fields, mu, fixed, nodes, U, V, h):
        """沿一条坐标线输运 (U, U_λ)，返回每个节点处的值"""
        out = [(U, V)]
        for s0, s1 in zip(nodes[:-1], nodes[1:]):
            n = max(1, math.ceil(abs(s1 - s0) / h - 1e-9))
            A, A_l, _ = self._generators(model, fields, mu, fixed, np.linspace(s0, s1, 2 * n + 1))
            U, V = self._rk4(A, A_l, U, V, (s1 - s0) / n)
            out.append((U, V))
        return out


# 全局实例
transport_service = TransportService()
