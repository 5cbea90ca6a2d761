import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from config import settings
from models.algebra import AlgebraElement, ElementLike, GramSchmidtPlan, tolerance_scale
from models.exceptions import (
    ConsistencyError,
    DegeneratePointError,
    DomainError,
    FrameDiscontinuityError,
    ModelError,
    OffShellError,
    UnsupportedAlgebraError,
)
from models.geometry import CurvatureTensors, FundamentalForms, GcrResiduals, NormalFrame
from models.toda import FieldConfig, GaugeData, TodaModel
from models.transport import TransportState
from services.algebra_service import algebra_service
from services.toda_service import toda_service

logger = logging.getLogger(__name__)

GAUSSIAN_MODES = ("onshell", "finite_difference", "gauss")


class GeometryService:
    """Toda规范势给出的二维子流形：基本形式、曲率以及Gauss–Codazzi–Ricci残差

    约定：ḡ = c·k，g_{μν} = c·k(a_{μ,λ}, a_{ν,λ})。数组下标顺序
    Gamma[μ,α,β] = Γ^μ_{αβ}，b[A,α,β] = b_{Aαβ}，mu[B,A,α] = μ_{BAα}。
    """

    # ---------- 与坐标无关的代数核心（规范变换检查复用） ----------

    def _ambient(self, model: TodaModel) -> np.ndarray:
        return model.c * model.algebra.killing_matrix

    def _metric_from(self, model: TodaModel, gauge: GaugeData) -> np.ndarray:
        a_l = gauge.a_l
        return a_l @ self._ambient(model) @ a_l.T

    def _acceleration(self, model: TodaModel, gauge: GaugeData) -> np.ndarray:
        """W[α,β] = [a_{α,λ}, a_β] − a_{α,βλ}"""
        a, a_l, mixed = gauge.a, gauge.a_l, gauge.a_mixed
        ad = model.algebra.ad
        return np.stack([np.stack([ad(a_l[al]) @ a[be] - mixed[al, be] for be in range(2)]) for al in range(2)])

    def _christoffel_from(self, model: TodaModel, gauge: GaugeData, g_inv: np.ndarray) -> np.ndarray:
        W = self._acceleration(model, gauge)
        gamma = -np.einsum("mr,rp,pq,abq->mab", g_inv, gauge.a_l, self._ambient(model), W)
        return 0.5 * (gamma + gamma.transpose(0, 2, 1))

    def _second_form_from(self, model: TodaModel, gauge: GaugeData, vectors: np.ndarray) -> np.ndarray:
        W = self._acceleration(model, gauge)
        return np.einsum("cm,mn,abn->cab", vectors, self._ambient(model), W)

    def _frame_motion(self, model: TodaModel, gauge: GaugeData, vectors: np.ndarray, d_vectors: np.ndarray) -> np.ndarray:
        """T[α,A] = N⁰_{A,α} + [a_α, N⁰_A]"""
        ad = model.algebra.ad
        return np.stack([d_vectors[al] + vectors @ ad(gauge.a[al]).T for al in range(2)])

    def _second_form_by_motion(self, model: TodaModel, gauge: GaugeData, motion: np.ndarray) -> np.ndarray:
        return np.einsum("bm,mn,xcn->cxb", gauge.a_l, self._ambient(model), motion)

    def _connection_from(self, model: TodaModel, vectors: np.ndarray, motion: np.ndarray) -> np.ndarray:
        return np.einsum("bm,mn,xan->bax", vectors, self._ambient(model), motion)

    # ---------- 有限差分 ----------

    def _derivative(
        self,
        fn: Callable[[float, float], np.ndarray],
        fields: FieldConfig,
        z: float,
        zbar: float,
        axis: int,
        step: float,
        f0: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """沿 z (axis=0) 或 z̄ (axis=1) 的二阶差分；靠近边界时改用单侧三点公式"""
        if step <= 0:
            raise ModelError("差分步长必须为正")

        def at(t: float) -> np.ndarray:
            return np.asarray(fn(z + t, zbar) if axis == 0 else fn(z, zbar + t), dtype=float)

        def inside(t: float) -> bool:
            return bool(fields.contains(z + t, zbar) if axis == 0 else fields.contains(z, zbar + t))

        if inside(step) and inside(-step):
            return (at(step) - at(-step)) / (2.0 * step)
        base = at(0.0) if f0 is None else np.asarray(f0, dtype=float)
        if inside(2 * step):
            return (-3.0 * base + 4.0 * at(step) - at(2 * step)) / (2.0 * step)
        if inside(-2 * step):
            return (3.0 * base - 4.0 * at(-step) + at(-2 * step)) / (2.0 * step)
        raise DomainError(f"点 ({z}, {zbar}) 附近放不下步长 {step} 的差分模板")

    def _gradient(self, fn, fields, z, zbar, step, f0=None) -> np.ndarray:
        return np.stack([self._derivative(fn, fields, z, zbar, axis, step, f0) for axis in (0, 1)])

    # ---------- 第一基本形式与Christoffel符号 ----------

    def _checked_metric(self, model: TodaModel, gauge: GaugeData, point: Tuple[float, float]) -> np.ndarray:
        g = self._metric_from(model, gauge)
        scale = tolerance_scale(g)
        closed = model.c * model.algebra.killing(gauge.B_conj_eps, model.eps_plus)
        gap = max(abs(g[0, 1] - closed), abs(g[1, 0] - closed), abs(g[0, 0]), abs(g[1, 1]))
        if gap > 1e-12 * scale:
            raise ConsistencyError(f"g_μν 与闭式 g₁₂ = c·k(Bε⁻B⁻¹, ε⁺) 不符（偏差 {gap:.3e}）")
        det = float(np.linalg.det(g))
        if abs(det) < settings.degenerate_tol * scale**2:
            raise DegeneratePointError(f"度量退化：det g = {det:.3e}", point=point)
        return g

    def metric(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> np.ndarray:
        """g_μν = c·k(a_{μ,λ}, a_{ν,λ})"""
        return self._checked_metric(model, toda_service.gauge_at(model, fields, z, zbar), (z, zbar))

    def closed_form_metric(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> float:
        X = model.conj_eps_minus(fields.evaluate(z, zbar).phi)
        return model.c * model.algebra.killing(X, model.eps_plus)

    def christoffel_direct(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> np.ndarray:
        """Γ^μ_{αβ} = c·g^{ρμ} k(a_{ρ,λ}, a_{α,βλ} − [a_{α,λ}, a_β])，只用解析导数"""
        gauge = toda_service.gauge_at(model, fields, z, zbar)
        g = self._checked_metric(model, gauge, (z, zbar))
        return self._christoffel_from(model, gauge, np.linalg.inv(g))

    def christoffel_metric(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float, h: float = 1e-3) -> np.ndarray:
        """Levi-Civita 公式 Γ^k_ij = ½g^{kr}(∂_i g_jr + ∂_j g_ir − ∂_r g_ij)，度量导数用差分"""
        g = self.metric(model, fields, z, zbar)

        def g_at(zz, ww):
            return self._metric_from(model, toda_service.gauge_at(model, fields, zz, ww))

        dg = self._gradient(g_at, fields, z, zbar, h, f0=g)
        # term[i,j,r] = ∂_i g_jr + ∂_j g_ir − ∂_r g_ij
        term = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
        return 0.5 * np.einsum("kr,ijr->kij", np.linalg.inv(g), term)

    # ---------- 曲率 ----------

    def curvature_tensors(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float, h: float = 1e-3) -> CurvatureTensors:
        """R^i_{jkl} = ∂_l Γ^i_{kj} − ∂_k Γ^i_{lj} + Γ^i_{lr}Γ^r_{kj} − Γ^i_{kr}Γ^r_{lj}"""
        g = self.metric(model, fields, z, zbar)
        gamma = self.christoffel_direct(model, fields, z, zbar)

        def gamma_at(zz, ww):
            return self.christoffel_direct(model, fields, zz, ww)

        # d_gamma[l,i,k,j] = ∂_l Γ^i_{kj}
        d_gamma = self._gradient(gamma_at, fields, z, zbar, h, f0=gamma)
        riemann = (
            d_gamma.transpose(1, 3, 2, 0)
            - d_gamma.transpose(1, 3, 0, 2)
            + np.einsum("ilr,rkj->ijkl", gamma, gamma)
            - np.einsum("ikr,rlj->ijkl", gamma, gamma)
        )
        lowered = np.einsum("ir,rjkl->ijkl", g, riemann)
        ricci = np.einsum("kijk->ij", riemann)
        scalar = float(np.einsum("ij,ij->", np.linalg.inv(g), ricci))
        return CurvatureTensors(riemann=riemann, lowered=lowered, ricci=ricci, scalar=scalar, K=float(-lowered[0, 1, 0, 1]))

    def _require_onshell(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float):
        residual = toda_service.field_residual(model, fields, z, zbar).norm()
        if residual > settings.offshell_tol:
            raise OffShellError(f"场方程残差 {residual:.3e} 超过 {settings.offshell_tol:.1e}，拒绝on-shell曲率")

    def _onshell_curvature(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> float:
        """K = c·k(X,ε⁺)·∂₁[k([X,ε⁺], D₂)/k(ε⁺,X)]，X = Bε⁻B⁻¹，∂₁∂₂φ 用场方程代入"""
        self._require_onshell(model, fields, z, zbar)
        algebra = model.algebra
        sample = fields.evaluate(z, zbar)
        H = model.h_matrix
        X = model.conj_eps_minus(sample.phi)
        D1, D2 = H @ sample.d1, H @ sample.d2
        d12 = H @ model.field_rhs(sample.phi)
        eps = model.eps_plus.coeffs

        dX = algebra.ad(D1) @ X
        commutator = algebra.ad(X) @ eps
        num = algebra.killing(commutator, D2)
        den = algebra.killing(eps, X)
        if abs(den) < settings.degenerate_tol:
            raise DegeneratePointError(f"k(Bε⁻B⁻¹, ε⁺) = {den:.3e}，该点退化", point=(z, zbar))
        d_num = algebra.killing(algebra.ad(dX) @ eps, D2) + algebra.killing(commutator, d12)
        d_den = algebra.killing(eps, dX)
        return float(model.c * (d_num - num * d_den / den))

    def closed_form_curvature(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> float:
        """sl(2) 用 −(4c/α²)(μ⁺μ⁻)²e^{−4φ}，其它模型用on-shell闭式"""
        algebra = model.algebra
        if model.handles is not None and model.n_fields == 1 and algebra.dim == 3 and algebra.root_length_sq:
            self._require_onshell(model, fields, z, zbar)
            phi = float(fields.evaluate(z, zbar).phi[0])
            mu = model.mu_plus * model.mu_minus
            return float(-(4.0 * model.c / algebra.root_length_sq) * mu**2 * np.exp(-4.0 * phi))
        return self._onshell_curvature(model, fields, z, zbar)

    def gaussian_curvature(
        self,
        model: TodaModel,
        fields: FieldConfig,
        z: float,
        zbar: float,
        mode: str = "onshell",
        h: float = 1e-3,
        frame: Optional[NormalFrame] = None,
    ) -> float:
        """K = −R₁₂₁₂，三种算法：onshell / finite_difference / gauss"""
        if mode == "onshell":
            return self._onshell_curvature(model, fields, z, zbar)
        if mode == "finite_difference":
            return self.curvature_tensors(model, fields, z, zbar, h).K
        if mode == "gauss":
            frame = self.normal_frame(model, fields, z, zbar) if frame is None else frame
            b = self.second_form(model, fields, frame, z, zbar, cross_check=False)
            return self._gauss_curvature_from(frame, b)
        raise ModelError(f"未知的曲率算法 {mode}，可选 {GAUSSIAN_MODES}")

    def _gauss_curvature_from(self, frame: NormalFrame, b: np.ndarray) -> float:
        # η^{CD}(b_C11 b_D22 − b_C12 b_D21)
        return float(np.sum(frame.eta * (b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0])))

    # ---------- 法标架 ----------

    def _frame_rows(
        self, model: TodaModel, gauge: GaugeData, plan: Optional[GramSchmidtPlan], point: Tuple[float, float]
    ) -> Tuple[np.ndarray, np.ndarray, GramSchmidtPlan]:
        G = self._ambient(model)
        T = gauge.a_l
        m = model.dim
        if np.linalg.matrix_rank(T @ model.algebra.killing_matrix, tol=1e-12 * tolerance_scale(T)) < 2:
            raise DegeneratePointError("a_{μ,λ} 的Killing配对秩亏损", point=point)
        g = T @ G @ T.T
        if abs(np.linalg.det(g)) < settings.degenerate_tol * tolerance_scale(g) ** 2:
            raise DegeneratePointError("度量退化，无法构造法空间", point=point)
        # 每一行是基向量去掉切向分量后的剩余
        residual = np.eye(m) - G @ T.T @ np.linalg.solve(g, T)
        try:
            rows, signs, plan = algebra_service.indefinite_gram_schmidt(residual, G, plan=plan)
        except DegeneratePointError as e:
            raise DegeneratePointError(str(e), point=point) from e
        if rows.shape[0] != m - 2:
            raise DegeneratePointError(f"法空间维数 {rows.shape[0]} ≠ {m - 2}", point=point)
        return rows, signs, plan

    def normal_frame(
        self,
        model: TodaModel,
        fields: FieldConfig,
        z: float,
        zbar: float,
        plan: Optional[GramSchmidtPlan] = None,
    ) -> NormalFrame:
        """span{a_{1,λ}, a_{2,λ}} 的Killing正交补上的正交归一标架"""
        gauge = toda_service.gauge_at(model, fields, z, zbar)
        rows, signs, plan = self._frame_rows(model, gauge, plan, (z, zbar))
        frame = NormalFrame(vectors=rows, eta=signs, plan=plan)
        self._verify_frame(model, gauge, frame)
        return frame

    def _verify_frame(self, model: TodaModel, gauge: GaugeData, frame: NormalFrame, tol: float = 1e-10):
        kappa = model.algebra.killing_matrix
        scale = tolerance_scale(gauge.a_l, frame.vectors)
        tangency = float(np.max(np.abs(gauge.a_l @ kappa @ frame.vectors.T)))
        if tangency > tol * scale:
            raise ConsistencyError(f"法标架与切空间不正交（{tangency:.3e}）")
        gram = frame.vectors @ self._ambient(model) @ frame.vectors.T
        gap = float(np.max(np.abs(gram - frame.eta_matrix)))
        if gap > tol * scale:
            raise ConsistencyError(f"法标架不正交归一（{gap:.3e}）")

    def _frame_at(self, model: TodaModel, fields: FieldConfig, frame: NormalFrame, z: float, zbar: float) -> NormalFrame:
        """在邻近点重放 frame 的主元选择"""
        gauge = toda_service.gauge_at(model, fields, z, zbar)
        rows, signs, plan = self._frame_rows(model, gauge, frame.plan, (z, zbar))
        if not np.array_equal(signs, frame.eta):
            raise FrameDiscontinuityError(f"法标架在 ({z}, {zbar}) 处符号改变")
        return NormalFrame(vectors=rows, eta=signs, plan=plan)

    def frame_derivative(
        self,
        model: TodaModel,
        fields: FieldConfig,
        frame: NormalFrame,
        z: float,
        zbar: float,
        step: Optional[float] = None,
    ) -> np.ndarray:
        """∂_α N⁰_A，形状 (2, m̄−2, m̄)"""
        step = settings.frame_fd_step if step is None else step
        return self._gradient(
            lambda zz, ww: self._frame_at(model, fields, frame, zz, ww).vectors,
            fields, z, zbar, step, f0=frame.vectors,
        )

    def normal_projector(self, model: TodaModel, frame: NormalFrame) -> np.ndarray:
        """法空间上的 c·k 正交投影（作用在列坐标上）"""
        N = frame.vectors
        return N.T @ frame.eta_matrix @ N @ self._ambient(model)

    def sl3_reference_frame(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> NormalFrame:
        """sl(3) 的显式法标架 N⁰₁..N⁰₆

        c₁ = e^{(3/2)(φ₁−φ₂)}/(2cosh[(3/2)(φ₁−φ₂)])，c₂ = 1 − c₁。
        """
        handles = model.handles
        if handles is None or model.dim != 8 or handles.rank != 2:
            raise UnsupportedAlgebraError("显式法标架只对内置的 sl(3) 模型可用")
        phi = fields.evaluate(z, zbar).phi
        u = 1.5 * (phi[0] - phi[1])
        c1 = np.exp(u) / (2.0 * np.cosh(u))
        c2 = np.exp(-u) / (2.0 * np.cosh(u))
        root = handles.root_vectors
        e1, e2 = root["E_a1"].coeffs, root["E_a2"].coeffs
        f1, f2 = root["E_-a1"].coeffs, root["E_-a2"].coeffs
        theta, theta_neg = root["E_a1+a2"].coeffs, root["E_-a1-a2"].coeffs
        c_abs = abs(model.c)
        # k(E_α, E_−α) = 2/α²
        root_norm = np.sqrt(2.0 * c_abs * 2.0 / model.algebra.root_length_sq)
        graded = c1 * e1 - c2 * e2
        vectors = np.array([
            handles.H[0].coeffs / np.sqrt(c_abs),
            handles.H[1].coeffs / np.sqrt(c_abs),
            (graded - f1 + f2) / root_norm,
            (graded + f1 - f2) / root_norm,
            (theta + theta_neg) / root_norm,
            (theta - theta_neg) / root_norm,
        ])
        gram = vectors @ self._ambient(model) @ vectors.T
        eta = np.sign(np.diag(gram)).astype(int)
        return NormalFrame(vectors=vectors, eta=eta)

    # ---------- 第二基本形式与法联络 ----------

    def second_form_pair(
        self, model: TodaModel, fields: FieldConfig, frame: NormalFrame, z: float, zbar: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """b 的两种算法：代数式（只用 a 的解析导数）与法标架运动式（需要 ∂_α N⁰）"""
        gauge = toda_service.gauge_at(model, fields, z, zbar)
        direct = self._second_form_from(model, gauge, frame.vectors)
        motion = self._frame_motion(model, gauge, frame.vectors, self.frame_derivative(model, fields, frame, z, zbar))
        return direct, self._second_form_by_motion(model, gauge, motion)

    def second_form(
        self,
        model: TodaModel,
        fields: FieldConfig,
        frame: NormalFrame,
        z: float,
        zbar: float,
        cross_check: bool = True,
    ) -> np.ndarray:
        """b_{Cαβ} = c·k(N⁰_C, [a_{α,λ}, a_β] − a_{α,βλ})"""
        if cross_check:
            b, by_motion = self.second_form_pair(model, fields, frame, z, zbar)
            deviation = float(np.max(np.abs(b - by_motion)))
            if deviation > 1e-6 * tolerance_scale(b):
                raise FrameDiscontinuityError(
                    f"两种第二基本形式在 ({z}, {zbar}) 处不一致（{deviation:.3e}），法标架可能跳支",
                    deviation=deviation,
                )
        else:
            b = self._second_form_from(model, toda_service.gauge_at(model, fields, z, zbar), frame.vectors)
        asym = float(np.max(np.abs(b - b.transpose(0, 2, 1))))
        if asym > 1e-10 * tolerance_scale(b):
            raise ConsistencyError(f"b_Aαβ 不对称（{asym:.3e}）")
        return b

    def normal_connection(self, model: TodaModel, fields: FieldConfig, frame: NormalFrame, z: float, zbar: float) -> np.ndarray:
        """μ_{BAα} = c·k(N⁰_B, N⁰_{A,α} + [a_α, N⁰_A])；超曲面返回零"""
        if frame.rank == 1:
            return np.zeros((1, 1, 2))
        gauge = toda_service.gauge_at(model, fields, z, zbar)
        motion = self._frame_motion(model, gauge, frame.vectors, self.frame_derivative(model, fields, frame, z, zbar))
        mu = self._connection_from(model, frame.vectors, motion)
        asym = float(np.max(np.abs(mu + mu.transpose(1, 0, 2))))
        if asym > 1e-6 * tolerance_scale(mu):
            raise FrameDiscontinuityError(f"μ_BAα 不反对称（{asym:.3e}）", deviation=asym)
        return 0.5 * (mu - mu.transpose(1, 0, 2))

    # ---------- 平均曲率 ----------

    def tangent_frame(self, model: TodaModel, fields: FieldConfig, z: float, zbar: float) -> np.ndarray:
        """正交归一切标架 V₁,₂ = ∂₁ ± ∂₂/(2g₁₂) 的坐标分量，行是 V₁, V₂"""
        g12 = self.metric(model, fields, z, zbar)[0, 1]
        s = 1.0 / (2.0 * g12)
        return np.array([[1.0, s], [1.0, -s]])

    def _mean_components(self, g_inv: np.ndarray, frame: NormalFrame, b: np.ndarray) -> np.ndarray:
        """H⃗ = h^A N_A，h^A = ½ η^{AA} g^{μν} b_{Aμν}"""
        return 0.5 * frame.eta * np.einsum("mn,amn->a", g_inv, b)

    def mean_curvature(
        self,
        model: TodaModel,
        fields: FieldConfig,
        frame: NormalFrame,
        state: TransportState,
        z: float,
        zbar: float,
    ) -> Tuple[AlgebraElement, float]:
        """H⃗ = ½[Π(V₁,V₁) − Π(V₂,V₂)]，用 U 共轭到浸入处；同时返回 c·k(H⃗,H⃗)"""
        if not np.allclose(state.point, (z, zbar), rtol=0.0, atol=1e-12):
            raise ModelError(f"TransportState 的终点 {state.point} 不是 ({z}, {zbar})")
        V = self.tangent_frame(model, fields, z, zbar)
        b = self.second_form(model, fields, frame, z, zbar, cross_check=False)
        # Π(V,V) 的法分量：η^{AA} V^μ V^ν b_{Aμν}
        pi = frame.eta[None, :] * np.einsum("im,in,amn->ia", V, V, b)
        h = 0.5 * (pi[0] - pi[1])
        H0 = h @ frame.vectors
        H = np.linalg.solve(state.U, H0)
        return AlgebraElement(H), float(model.c * model.algebra.killing(H, H))

    def mean_curvature_norm(self, model: TodaModel, fields: FieldConfig, frame: NormalFrame, z: float, zbar: float) -> float:
        """c·k(H⃗,H⃗)，与 U 无关"""
        g_inv = np.linalg.inv(self.metric(model, fields, z, zbar))
        h = self._mean_components(g_inv, frame, self.second_form(model, fields, frame, z, zbar, cross_check=False))
        return float(np.sum(frame.eta * h**2))

    def normal_derivative_of_mean_curvature(
        self,
        model: TodaModel,
        fields: FieldConfig,
        frame: NormalFrame,
        z: float,
        zbar: float,
        h: float = 1e-3,
    ) -> np.ndarray:
        """D⊥_α H⃗ = (∂_α h^C + h^A μ^C_{Aα}) N_C，返回分量 [C, α]"""

        def components_at(zz, ww):
            local = self._frame_at(model, fields, frame, zz, ww)
            g_inv = np.linalg.inv(self.metric(model, fields, zz, ww))
            return self._mean_components(g_inv, local, self.second_form(model, fields, local, zz, ww, cross_check=False))

        comps = components_at(z, zbar)
        d_comps = self._gradient(components_at, fields, z, zbar, h, f0=comps)
        mu_up = frame.eta[:, None, None] * self.normal_connection(model, fields, frame, z, zbar)
        return d_comps.T + np.einsum("a,cax->cx", comps, mu_up)

    # ---------- Gauss–Codazzi–Ricci ----------

    def gcr_residuals(
        self,
        model: TodaModel,
        fields: FieldConfig,
        frame: NormalFrame,
        z: float,
        zbar: float,
        h: float = 1e-3,
    ) -> GcrResiduals:
        """平直背景下 Gauss、Codazzi、Ricci 方程的最大残差"""
        g = self.metric(model, fields, z, zbar)
        g_inv = np.linalg.inv(g)
        gamma = self.christoffel_direct(model, fields, z, zbar)
        b = self.second_form(model, fields, frame, z, zbar, cross_check=False)
        mu = self.normal_connection(model, fields, frame, z, zbar)
        eta = frame.eta.astype(float)

        # Gauss: R_{δγαβ} = η^{CD}(b_{Cαγ}b_{Dβδ} − b_{Cαδ}b_{Dβγ})
        intrinsic = self.curvature_tensors(model, fields, z, zbar, h).lowered
        extrinsic = np.einsum("c,cag,cbd->dgab", eta, b, b) - np.einsum("c,cad,cbg->dgab", eta, b, b)
        gauss = float(np.max(np.abs(intrinsic - extrinsic)))

        # Codazzi
        def b_at(zz, ww):
            local = self._frame_at(model, fields, frame, zz, ww)
            return self.second_form(model, fields, local, zz, ww, cross_check=False)

        db = self._gradient(b_at, fields, z, zbar, h, f0=b)
        # cov[α,D,β,γ] = b_{Dβγ;α}
        cov = db - np.einsum("tag,dbt->adbg", gamma, b) - np.einsum("tab,dtg->adbg", gamma, b)
        mu_up = eta[:, None, None] * mu
        codazzi_terms = (
            np.einsum("kbg,kda->dabg", b, mu_up)
            - np.einsum("kag,kdb->dabg", b, mu_up)
            - cov.transpose(1, 0, 2, 3)
            + cov.transpose(1, 2, 0, 3)
        )
        codazzi = float(np.max(np.abs(codazzi_terms)))

        # Ricci（超曲面时两边恒为零）
        ricci = 0.0
        if frame.rank > 1:

            def mu_up_at(zz, ww):
                local = self._frame_at(model, fields, frame, zz, ww)
                return eta[:, None, None] * self.normal_connection(model, fields, local, zz, ww)

            d_mu = self._gradient(mu_up_at, fields, z, zbar, h, f0=mu_up)
            # r^C_{A12} = ∂₂μ^C_{A1} + μ^B_{A1}μ^C_{B2} − ∂₁μ^C_{A2} − μ^B_{A2}μ^C_{B1}
            r = (
                d_mu[1][:, :, 0]
                + np.einsum("ba,cb->ca", mu_up[:, :, 0], mu_up[:, :, 1])
                - d_mu[0][:, :, 1]
                - np.einsum("ba,cb->ca", mu_up[:, :, 1], mu_up[:, :, 0])
            )
            lhs = (eta[:, None] * r).T
            rhs = np.einsum("ag,bt,tg->ab", b[:, 0], b[:, 1], g_inv) - np.einsum("bg,at,tg->ab", b[:, 0], b[:, 1], g_inv)
            ricci = float(np.max(np.abs(lhs - rhs)))

        return GcrResiduals(gauss=gauss, codazzi=codazzi, ricci=ricci)

    # ---------- 规范不变性 ----------

    def gauge_invariance_check(
        self, model: TodaModel, fields: FieldConfig, g_const: ElementLike, z: float, zbar: float
    ) -> float:
        """常数群元 g = exp(g_const) 作用后 g_μν, b, μ 的最大偏差"""
        gauge = toda_service.gauge_at(model, fields, z, zbar)
        frame = self.normal_frame(model, fields, z, zbar)
        d_vectors = self.frame_derivative(model, fields, frame, z, zbar)
        ad_g = expm(model.algebra.ad(g_const))

        def forms(gauge_data: GaugeData, vectors: np.ndarray, d_vecs: np.ndarray):
            motion = self._frame_motion(model, gauge_data, vectors, d_vecs)
            return (
                self._metric_from(model, gauge_data),
                self._second_form_from(model, gauge_data, vectors),
                self._connection_from(model, vectors, motion),
            )

        before = forms(gauge, frame.vectors, d_vectors)
        after = forms(gauge.transformed(ad_g), frame.vectors @ ad_g.T, d_vectors @ ad_g.T)
        return float(max(np.max(np.abs(x - y)) for x, y in zip(before, after)))

    # ---------- 汇总 ----------

    def fundamental_forms(
        self,
        model: TodaModel,
        fields: FieldConfig,
        z: float,
        zbar: float,
        h: float = 1e-3,
        plan: Optional[GramSchmidtPlan] = None,
    ) -> FundamentalForms:
        """一点处的全部基本形式；K 优先取闭式/on-shell 值，场不在壳时取差分值"""
        g = self.metric(model, fields, z, zbar)
        g_inv = np.linalg.inv(g)
        gamma = self.christoffel_direct(model, fields, z, zbar)
        frame = self.normal_frame(model, fields, z, zbar, plan=plan)
        b, by_motion = self.second_form_pair(model, fields, frame, z, zbar)
        deviation = float(np.max(np.abs(b - by_motion)))
        if deviation > 1e-6 * tolerance_scale(b):
            raise FrameDiscontinuityError(
                f"两种第二基本形式在 ({z}, {zbar}) 处不一致（{deviation:.3e}）", deviation=deviation
            )
        mu = self.normal_connection(model, fields, frame, z, zbar)
        K_fd = self.curvature_tensors(model, fields, z, zbar, h).K
        try:
            K_closed: Optional[float] = self.closed_form_curvature(model, fields, z, zbar)
        except OffShellError:
            K_closed = None
        h_comp = self._mean_components(g_inv, frame, b)
        return FundamentalForms(
            z=float(z),
            zbar=float(zbar),
            g=g,
            g_inv=g_inv,
            Gamma=gamma,
            b=b,
            mu_conn=mu,
            K=K_fd if K_closed is None else K_closed,
            K_closed=K_closed,
            K_fd=K_fd,
            K_gauss=self._gauss_curvature_from(frame, b),
            H_norm_sq=float(np.sum(frame.eta * h_comp**2)),
            frame=frame,
            b_crosscheck=deviation,
        )


# 全局实例
geometry_service = GeometryService()
