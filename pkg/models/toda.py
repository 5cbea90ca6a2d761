from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .algebra import AlgebraElement, CartanAction, ChevalleyHandles, Grading, LieAlgebra
from .exceptions import DomainError, ModelError

# (z_min, z_max, zbar_min, zbar_max)
Domain = Tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class TodaModel:
    """阿贝尔 G_0 的Toda模型：B = exp(Σ φ_i h_i)"""

    algebra: LieAlgebra
    grading: Grading
    eps_plus: AlgebraElement
    eps_minus: AlgebraElement
    cartan_dirs: List[AlgebraElement]
    mu_plus: float
    mu_minus: float
    c: float
    lam: float = 0.0
    allow_free_limit: bool = False
    handles: Optional[ChevalleyHandles] = None
    cartan: CartanAction = field(init=False, repr=False)
    _rhs_map: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.c == 0:
            raise ModelError("c 不能为 0")
        for name, x, grade in (("eps_plus", self.eps_plus, 1), ("eps_minus", self.eps_minus, -1)):
            off = x - self.grading.project(x, grade)
            if off.norm() > 1e-12:
                raise ModelError(f"{name} 不在 G_{grade} 中")
            if x.norm() == 0 and not self.allow_free_limit:
                raise ModelError(f"{name} 不能为零")
        if not self.cartan_dirs:
            raise ModelError("至少需要一个Cartan方向")
        for i, h in enumerate(self.cartan_dirs):
            if (h - self.grading.project(h, 0)).norm() > 1e-12:
                raise ModelError(f"Cartan方向 {i} 不在 G_0 中")
            for h2 in self.cartan_dirs[i + 1 :]:
                if self.algebra.bracket(h, h2).norm() > 1e-12:
                    raise ModelError("Cartan方向必须两两对易")
        object.__setattr__(self, "cartan_dirs", list(self.cartan_dirs))
        object.__setattr__(self, "cartan", CartanAction(self.algebra, self.cartan_dirs))

        # 最小二乘：Σ rhs_i h_i ≈ -[ε⁻, X]
        H = np.column_stack([h.coeffs for h in self.cartan_dirs])
        rhs_map = -np.linalg.pinv(H) @ self.algebra.ad(self.eps_minus)
        object.__setattr__(self, "_rhs_map", rhs_map)

    @property
    def n_fields(self) -> int:
        return len(self.cartan_dirs)

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def h_matrix(self) -> np.ndarray:
        """以 h_i 为列"""
        return np.column_stack([h.coeffs for h in self.cartan_dirs])

    def with_lambda(self, lam: float) -> "TodaModel":
        return replace(self, lam=float(lam))

    def with_c(self, c: float) -> "TodaModel":
        return replace(self, c=float(c))

    def conj_eps_minus(self, phi: np.ndarray) -> np.ndarray:
        """B ε⁻ B⁻¹ 的坐标"""
        return self.cartan.apply(phi, self.eps_minus)

    def field_rhs(self, phi: np.ndarray) -> np.ndarray:
        """on-shell 的 ∂₁∂₂φ_i，phi 形状 (..., r)"""
        phi = np.asarray(phi, dtype=float)
        conj = self.cartan.apply(-phi, self.eps_plus)
        return np.einsum("ik,...k->...i", self._rhs_map, conj)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """一个点上的场值与偏导数"""

    z: float
    zbar: float
    phi: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d12: np.ndarray


class FieldConfig(ABC):
    """Toda场 φ_i(z, z̄) 及其偏导数，定义在矩形区域上"""

    kind: str = "abstract"

    def __init__(self, name: str, n_fields: int, domain: Domain, mu_product: Optional[float] = None,
                 params: Optional[Dict[str, Any]] = None):
        z0, z1, w0, w1 = (float(v) for v in domain)
        if not (z1 > z0 and w1 > w0):
            raise DomainError(f"区域无效: {domain}")
        self.name = name
        self.n_fields = int(n_fields)
        self.domain: Domain = (z0, z1, w0, w1)
        # 解所要求的 μ⁺μ⁻（None 表示不是已知解）
        self.mu_product = mu_product
        self.params = dict(params or {})

    def contains(self, z, zbar, margin: float = 0.0) -> np.ndarray:
        z0, z1, w0, w1 = self.domain
        eps = 1e-12 * max(1.0, abs(z0), abs(z1), abs(w0), abs(w1))
        z, zbar = np.asarray(z, dtype=float), np.asarray(zbar, dtype=float)
        return (
            (z >= z0 + margin - eps) & (z <= z1 - margin + eps) & (zbar >= w0 + margin - eps) & (zbar <= w1 - margin + eps)
        )

    def _check(self, z, zbar):
        inside = self.contains(z, zbar)
        if not np.all(inside):
            bad = np.argwhere(~np.atleast_1d(inside))[0][0]
            zz, ww = np.atleast_1d(z)[bad], np.atleast_1d(zbar)[bad]
            raise DomainError(f"点 ({zz}, {ww}) 不在场 {self.name} 的定义域 {self.domain} 内")

    def evaluate(self, z: float, zbar: float) -> FieldSample:
        self._check(z, zbar)
        phi, d1, d2, d12 = self._evaluate(np.array([z], dtype=float), np.array([zbar], dtype=float))
        return FieldSample(float(z), float(zbar), phi[0], d1[0], d2[0], d12[0])

    def evaluate_many(self, z, zbar) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """批量求值，返回的数组形状为 (N, r)"""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        zbar = np.atleast_1d(np.asarray(zbar, dtype=float))
        self._check(z, zbar)
        return self._evaluate(z, zbar)

    @abstractmethod
    def _evaluate(self, z: np.ndarray, zbar: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ...


FieldEvaluator = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


class ClosedFormField(FieldConfig):
    """解析场：evaluator 给出 φ, ∂₁φ, ∂₂φ 以及（可选的）∂₁∂₂φ

    evaluator 只返回前三项时，∂₁∂₂φ 由 ∂₁φ 沿 z̄ 的中心差分得到，步长为 fd_step。
    """

    kind = "closed_form"

    def __init__(self, name: str, n_fields: int, domain: Domain, evaluator: FieldEvaluator,
                 mu_product: Optional[float] = None, params: Optional[Dict[str, Any]] = None,
                 fd_step: float = 1e-4):
        super().__init__(name, n_fields, domain, mu_product=mu_product, params=params)
        self._evaluator = evaluator
        self.fd_step = float(fd_step)

    def _shape(self, a, n: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(a, dtype=float), (n, self.n_fields)).copy()

    def _evaluate(self, z, zbar):
        out = self._evaluator(z, zbar)
        phi, d1, d2 = (self._shape(a, z.shape[0]) for a in out[:3])
        if len(out) > 3 and out[3] is not None:
            return phi, d1, d2, self._shape(out[3], z.shape[0])
        _, _, w0, w1 = self.domain
        step = self.fd_step
        wc = np.clip(zbar, w0 + step, w1 - step)
        up = self._evaluator(z, wc + step)[1]
        down = self._evaluator(z, wc - step)[1]
        d12 = (self._shape(up, z.shape[0]) - self._shape(down, z.shape[0])) / (2.0 * step)
        return phi, d1, d2, d12

    @classmethod
    def constant(cls, values, domain: Domain = (-1.0, 1.0, -1.0, 1.0)) -> "ClosedFormField":
        """常数场（一般不是解）"""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        n = values.shape[0]

        def evaluator(z, zbar):
            zeros = np.zeros((z.shape[0], n))
            return values[None, :] + zeros, zeros, zeros, zeros

        return cls("constant", n, domain, evaluator, params={"values": values.tolist()})


class GridField(FieldConfig):
    """网格场：每个数组一条双三次样条，混合导数用网格步长的三点差分（边界处单侧）"""

    kind = "grid"

    def __init__(self, name: str, z: np.ndarray, zbar: np.ndarray, phi: np.ndarray,
                 d1: Optional[np.ndarray] = None, d2: Optional[np.ndarray] = None,
                 mu_product: Optional[float] = None, params: Optional[Dict[str, Any]] = None):
        z = np.asarray(z, dtype=float)
        zbar = np.asarray(zbar, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if phi.ndim == 2:
            phi = phi[:, :, None]
        if phi.shape[:2] != (z.shape[0], zbar.shape[0]):
            raise DomainError(f"场数组形状 {phi.shape} 与网格 ({z.shape[0]}, {zbar.shape[0]}) 不符")
        if z.shape[0] < 4 or zbar.shape[0] < 4:
            raise DomainError("双三次插值至少需要 4×4 个网格点")
        hz, hw = np.diff(z), np.diff(zbar)
        if np.any(hz <= 0) or np.any(hw <= 0):
            raise DomainError("网格步长必须为正")
        if np.ptp(hz) > 1e-9 * hz[0] or np.ptp(hw) > 1e-9 * hw[0]:
            raise DomainError("网格必须是均匀的")
        super().__init__(name, phi.shape[2], (z[0], z[-1], zbar[0], zbar[-1]), mu_product=mu_product, params=params)
        self.z = z
        self.zbar = zbar
        self.h = float(hz[0])
        self.hbar = float(hw[0])
        self.phi = phi
        self.d1 = np.gradient(phi, self.h, axis=0, edge_order=2) if d1 is None else np.asarray(d1, dtype=float).reshape(phi.shape)
        self.d2 = np.gradient(phi, self.hbar, axis=1, edge_order=2) if d2 is None else np.asarray(d2, dtype=float).reshape(phi.shape)
        self._splines = [
            [RectBivariateSpline(z, zbar, arr[:, :, i], kx=3, ky=3) for i in range(self.n_fields)]
            for arr in (self.phi, self.d1, self.d2)
        ]

    def _ev(self, which: int, z, zbar) -> np.ndarray:
        return np.stack([s.ev(z, zbar) for s in self._splines[which]], axis=-1)

    @staticmethod
    def _stencil(x: np.ndarray, lo: float, hi: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
        """每个点的三点一阶导数模板 (偏移, 权重)：内部用中心差分，边界附近用单侧二阶公式"""
        offsets = np.tile(np.array([-step, 0.0, step]), (x.shape[0], 1))
        weights = np.tile(np.array([-1.0, 0.0, 1.0]) / (2.0 * step), (x.shape[0], 1))
        tol = 1e-9 * step
        left = x - step < lo - tol
        right = x + step > hi + tol
        offsets[left] = [0.0, step, 2.0 * step]
        weights[left] = np.array([-3.0, 4.0, -1.0]) / (2.0 * step)
        offsets[right] = [0.0, -step, -2.0 * step]
        weights[right] = np.array([3.0, -4.0, 1.0]) / (2.0 * step)
        return offsets, weights

    def _evaluate(self, z, zbar):
        z0, z1, w0, w1 = self.domain
        oz, wz = self._stencil(z, z0, z1, self.h)
        ow, ww = self._stencil(zbar, w0, w1, self.hbar)
        d12 = np.zeros((z.shape[0], self.n_fields))
        for i in range(3):
            for j in range(3):
                d12 += (wz[:, i] * ww[:, j])[:, None] * self._ev(0, z + oz[:, i], zbar + ow[:, j])
        return self._ev(0, z, zbar), self._ev(1, z, zbar), self._ev(2, z, zbar), d12


@dataclass(frozen=True, eq=False)
class GaugeData:
    """一点处的规范势及其 λ、z 导数（全部是代数坐标）

    a_{α,βλ} = ∂_β ∂_λ a_α，例如 a1_2l = ∂₂∂_λ a₁。
    """

    a1: np.ndarray
    a2: np.ndarray
    a1_l: np.ndarray
    a2_l: np.ndarray
    a1_1l: np.ndarray
    a1_2l: np.ndarray
    a2_1l: np.ndarray
    a2_2l: np.ndarray
    B_conj_eps: np.ndarray
    dBBinv_2: np.ndarray
    d2_a1: np.ndarray
    d1_a2: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return np.stack([self.a1, self.a2])

    @property
    def a_l(self) -> np.ndarray:
        return np.stack([self.a1_l, self.a2_l])

    @property
    def a_mixed(self) -> np.ndarray:
        """[α, β] -> a_{α,βλ}"""
        return np.stack([np.stack([self.a1_1l, self.a1_2l]), np.stack([self.a2_1l, self.a2_2l])])

    def transformed(self, ad_g: np.ndarray) -> "GaugeData":
        """常数规范变换 a -> g a g⁻¹，ad_g 是 Ad_g 的矩阵"""
        return GaugeData(**{name: ad_g @ getattr(self, name) for name in self.__dataclass_fields__})


@dataclass(frozen=True, eq=False)
class GoursatReport:
    """特征线推进的结果"""

    field: GridField
    max_residual: float
    h: float
    hbar: float
    corrector_passes: int
