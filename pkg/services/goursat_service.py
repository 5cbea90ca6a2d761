import logging
from typing import Optional, Tuple

import numpy as np

from config import settings
from models.exceptions import GoursatBlowUpError, ModelError
from models.toda import Domain, FieldConfig, GoursatReport, GridField, TodaModel

logger = logging.getLogger(__name__)


class GoursatService:
    """∂₁∂₂φ_i = rhs_i(φ) 的特征线初值问题

    数据给在 z̄ = z̄₀ 与 z = z₀ 两条特征线上，沿 z̄ 逐行推进，行内沿 z 累加。
    每个网格单元用积分形式
        φ(j+1,k+1) = φ(j,k+1) + φ(j+1,k) − φ(j,k) + ∬ rhs
    加四角梯形公式，先用旧行的 rhs 预测，再迭代校正。
    """

    def grid(self, domain: Domain, h: float, hbar: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        if h <= 0 or (hbar is not None and hbar <= 0):
            raise ModelError("步长必须为正")
        hbar = h if hbar is None else hbar
        z0, z1, w0, w1 = domain
        nz = int(round((z1 - z0) / h))
        nw = int(round((w1 - w0) / hbar))
        if nz < 3 or nw < 3:
            raise ModelError("区域太小：每个方向至少需要 3 个步长")
        return np.linspace(z0, z1, nz + 1), np.linspace(w0, w1, nw + 1)

    def characteristic_data(self, fields: FieldConfig, z: np.ndarray, zbar: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """从已知场上采样两条特征线上的初值：(沿 z 于 z̄₀, 沿 z̄ 于 z₀)"""
        along_z = fields.evaluate_many(z, np.full_like(z, zbar[0]))[0]
        along_zbar = fields.evaluate_many(np.full_like(zbar, z[0]), zbar)[0]
        return along_z, along_zbar

    def solve(
        self,
        model: TodaModel,
        initial: Tuple[np.ndarray, np.ndarray],
        domain: Domain,
        h: float,
        hbar: Optional[float] = None,
        passes: Optional[int] = None,
        name: str = "goursat",
    ) -> GoursatReport:
        z, zbar = self.grid(domain, h, hbar)
        h, hbar = z[1] - z[0], zbar[1] - zbar[0]
        passes = settings.goursat_corrector_passes if passes is None else int(passes)
        r = model.n_fields

        along_z = np.asarray(initial[0], dtype=float).reshape(z.shape[0], -1)
        along_zbar = np.asarray(initial[1], dtype=float).reshape(zbar.shape[0], -1)
        if along_z.shape[1] != r or along_zbar.shape[1] != r:
            raise ModelError(f"初值的场个数与模型不符（需要 {r} 个）")
        corner_gap = np.max(np.abs(along_z[0] - along_zbar[0]))
        if corner_gap > 1e-12 * max(1.0, float(np.max(np.abs(along_z[0])))):
            raise ModelError(f"两条特征线的角点值不一致（差 {corner_gap:.3e}）")

        phi = np.full((z.shape[0], zbar.shape[0], r), np.nan)
        phi[:, 0] = along_z
        phi[0, :] = along_zbar
        area = h * hbar

        with np.errstate(over="ignore", invalid="ignore"):
            rhs_old = model.field_rhs(phi[:, 0])
            for k in range(zbar.shape[0] - 1):
                base_inc = np.diff(phi[:, k], axis=0)
                start = phi[0, k + 1]
                inc = base_inc + 0.5 * area * (rhs_old[:-1] + rhs_old[1:])
                row = start + np.concatenate([np.zeros((1, r)), np.cumsum(inc, axis=0)])
                for _ in range(passes):
                    rhs_new = model.field_rhs(row)
                    inc = base_inc + 0.25 * area * (rhs_old[:-1] + rhs_old[1:] + rhs_new[:-1] + rhs_new[1:])
                    row = start + np.concatenate([np.zeros((1, r)), np.cumsum(inc, axis=0)])
                if not np.all(np.isfinite(row)):
                    logger.warning(f"⚠️ Goursat推进在 z̄ = {zbar[k + 1]:.6g} 处出现非有限值，停止")
                    partial = {
                        "z": z, "zbar": zbar[: k + 1], "phi": phi[:, : k + 1].copy(),
                        "h": h, "hbar": hbar, "passes": passes,
                    }
                    raise GoursatBlowUpError(f"Goursat推进在第 {k + 1} 行发散", partial=partial)
                phi[:, k + 1] = row
                rhs_old = model.field_rhs(row)

        field = GridField(name, z, zbar, phi, params={"h": h, "hbar": hbar, "passes": passes})
        residual = self.cell_residual(model, phi, h, hbar)
        logger.info(f"✅ Goursat推进完成: {z.shape[0]}×{zbar.shape[0]} 网格, 最大残差 {residual:.3e}")
        return GoursatReport(field=field, max_residual=residual, h=h, hbar=hbar, corrector_passes=passes)

    def solve_from_field(
        self, model: TodaModel, fields: FieldConfig, domain: Domain, h: float, **kwargs
    ) -> GoursatReport:
        """用已知场在特征线上的值作为初值求解"""
        z, zbar = self.grid(domain, h, kwargs.get("hbar"))
        return self.solve(model, self.characteristic_data(fields, z, zbar), domain, h, **kwargs)

    def cell_residual(self, model: TodaModel, phi: np.ndarray, h: float, hbar: float) -> float:
        """单元中心处场方程残差的最大范数（盒式差分，φ 取四角平均）"""
        box = (phi[1:, 1:] - phi[1:, :-1] - phi[:-1, 1:] + phi[:-1, :-1]) / (h * hbar)
        centre = 0.25 * (phi[1:, 1:] + phi[1:, :-1] + phi[:-1, 1:] + phi[:-1, :-1])
        res = (box - model.field_rhs(centre)) @ model.h_matrix.T
        return float(np.max(np.linalg.norm(res, axis=-1)))


# 全局实例
goursat_service = GoursatService()
