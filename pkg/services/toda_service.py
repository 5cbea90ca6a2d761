import logging
from typing import Optional

import numpy as np
from scipy.linalg import expm

from config import settings
from models.algebra import AlgebraElement, ElementLike
from models.exceptions import DegeneratePointError, ModelError
from models.toda import FieldConfig, FieldSample, GaugeData, TodaModel
from services.algebra_service import algebra_service

logger = logging.getLogger(__name__)


class TodaService:
    """Toda模型、规范势以及场方程/零曲率残差"""

    def build_model(
        self,
        n: int,
        alpha_sq: float = 2.0,
        mu_plus: float = 1.0,
        mu_minus: float = 1.0,
        c: float = 1.0,
        lam: float = 0.0,
        allow_free_limit: bool = False,
    ) -> TodaModel:
        """内置模型：ε⁺ = μ⁺ΣE_{α_i}，ε⁻ = μ⁻ΣE_{-α_i}，B = exp(Σφ_i h_i)"""
        algebra, grading, handles = algebra_service.build_sl(n, alpha_sq)
        eps_plus = mu_plus * sum(handles.e_plus[1:], handles.e_plus[0])
        eps_minus = mu_minus * sum(handles.e_minus[1:], handles.e_minus[0])
        return TodaModel(
            algebra=algebra,
            grading=grading,
            eps_plus=eps_plus,
            eps_minus=eps_minus,
            cartan_dirs=handles.h,
            mu_plus=float(mu_plus),
            mu_minus=float(mu_minus),
            c=float(c),
            lam=float(lam),
            allow_free_limit=allow_free_limit,
            handles=handles,
        )

    def check_fields(self, model: TodaModel, fields: FieldConfig):
        if fields.n_fields != model.n_fields:
            raise ModelError(f"场的个数 {fields.n_fields} 与模型的Cartan方向数 {model.n_fields} 不一致")

    def gauge_from_sample(self, model: TodaModel, sample: FieldSample) -> GaugeData:
        algebra = model.algebra
        H = model.h_matrix
        X = model.conj_eps_minus(sample.phi)
        D1, D2 = H @ sample.d1, H @ sample.d2
        # 阿贝尔 G_0：∂_ν(Ad_B ε⁻) = [Σ∂_νφ_i h_i, Ad_B ε⁻]
        dX1, dX2 = algebra.ad(D1) @ X, algebra.ad(D2) @ X
        e_minus, e_plus = np.exp(-model.lam), np.exp(model.lam)
        zero = np.zeros(algebra.dim)
        return GaugeData(
            a1=e_minus * X,
            a2=-e_plus * model.eps_plus.coeffs - D2,
            a1_l=-e_minus * X,
            a2_l=-e_plus * model.eps_plus.coeffs,
            a1_1l=-e_minus * dX1,
            a1_2l=-e_minus * dX2,
            a2_1l=zero,
            a2_2l=zero.copy(),
            B_conj_eps=X,
            dBBinv_2=D2,
            d2_a1=e_minus * dX2,
            d1_a2=-(H @ sample.d12),
        )

    def gauge_at(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> GaugeData:
        """(z, z̄) 处的 a₁, a₂ 及其解析的 λ 导数和混合导数"""
        return self.gauge_from_sample(model, fields.evaluate(z, zbar))

    def potentials_many(self, model: TodaModel, fields: FieldConfig, z, zbar):
        """批量的 (a_μ, a_{μ,λ})，两个数组形状均为 (2, N, m̄)"""
        phi, _, d2, _ = fields.evaluate_many(z, zbar)
        X = model.conj_eps_minus(phi)
        e_minus, e_plus = np.exp(-model.lam), np.exp(model.lam)
        eps_plus = np.broadcast_to(model.eps_plus.coeffs, X.shape)
        a = np.stack([e_minus * X, -e_plus * eps_plus - d2 @ model.h_matrix.T])
        a_l = np.stack([-e_minus * X, -e_plus * eps_plus])
        return a, a_l

    def field_residual(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> AlgebraElement:
        """Σ(∂₁∂₂φ_i)h_i + [ε⁻, Ad_{B⁻¹}(ε⁺)]"""
        sample = fields.evaluate(z, zbar)
        inv_conj = model.cartan.apply(-sample.phi, model.eps_plus)
        return AlgebraElement(model.h_matrix @ sample.d12 + model.algebra.ad(model.eps_minus) @ inv_conj)

    def field_residual_many(self, model: TodaModel, fields: FieldConfig, z, zbar) -> np.ndarray:
        """批量的场方程残差范数"""
        phi, _, _, d12 = fields.evaluate_many(z, zbar)
        inv_conj = model.cartan.apply(-phi, model.eps_plus)
        res = d12 @ model.h_matrix.T + inv_conj @ model.algebra.ad(model.eps_minus).T
        return np.linalg.norm(res, axis=-1)

    def zero_curvature_from_gauge(self, model: TodaModel, gauge: GaugeData) -> AlgebraElement:
        bracket = model.algebra.bracket(gauge.a1, gauge.a2).coeffs
        return AlgebraElement(gauge.d1_a2 - gauge.d2_a1 + bracket)

    def zero_curvature_residual(
        self,
        model: TodaModel,
        fields: FieldConfig,
        z: float,
        zbar: float,
        g_const: Optional[ElementLike] = None,
    ) -> AlgebraElement:
        """∂₁a₂ − ∂₂a₁ + [a₁,a₂]；g_const 给定时先做常数规范变换 g = exp(g_const)"""
        gauge = self.gauge_at(model, fields, z, zbar)
        if g_const is not None:
            gauge = gauge.transformed(expm(model.algebra.ad(g_const)))
        return self.zero_curvature_from_gauge(model, gauge)

    def determinant_factor(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> float:
        """k(Bε⁻B⁻¹, ε⁺)，非零才能构成浸入"""
        X = model.conj_eps_minus(fields.evaluate(z, zbar).phi)
        value = model.algebra.killing(X, model.eps_plus)
        if abs(value) < settings.degenerate_tol:
            raise DegeneratePointError(f"k(Bε⁻B⁻¹, ε⁺) = {value:.3e}，该点退化", point=(z, zbar))
        return value


# 全局实例
toda_service = TodaService()
