from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import AlgebraInputError, ConsistencyError, ModelError, SemisimplicityError


def tolerance_scale(*arrays) -> float:
    """检查容差的量纲：操作数的最大绝对元素（不小于1）"""
    biggest = 1.0
    for a in arrays:
        if isinstance(a, AlgebraElement):
            a = a.coeffs
        a = np.asarray(a, dtype=float)
        if a.size:
            biggest = max(biggest, float(np.max(np.abs(a))))
    return biggest


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """代数基下的坐标向量"""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float).reshape(-1)
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        _same_length(self, other)
        return AlgebraElement(self.coeffs + other.coeffs)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        _same_length(self, other)
        return AlgebraElement(self.coeffs - other.coeffs)

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(-self.coeffs)

    def __mul__(self, scalar: float) -> "AlgebraElement":
        return AlgebraElement(float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "AlgebraElement":
        return AlgebraElement(self.coeffs / float(scalar))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __repr__(self) -> str:
        return f"AlgebraElement({np.array2string(self.coeffs, precision=6)})"


def _same_length(x: AlgebraElement, y: AlgebraElement):
    if x.dim != y.dim:
        raise AlgebraInputError(f"元素维度不一致: {x.dim} != {y.dim}")


ElementLike = Union[AlgebraElement, np.ndarray, Sequence[float]]


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """有限维实李代数：结构常数 c[k][i][j]，[T_i,T_j] = Σ_k c[k][i][j] T_k

    双线性形式取 killing_scale · trace(ad·ad)，正的归一化因子由根长度约定决定。
    """

    basis_labels: List[str]
    structure_constants: np.ndarray
    killing_scale: float = 1.0
    root_length_sq: Optional[float] = None
    name: str = "custom"
    killing_matrix: np.ndarray = field(init=False, repr=False)
    ad_basis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.structure_constants, dtype=float)
        m = len(self.basis_labels)
        if c.shape != (m, m, m):
            raise AlgebraInputError(f"结构常数形状应为 {(m, m, m)}，实际为 {c.shape}")
        if self.killing_scale <= 0:
            raise AlgebraInputError("killing_scale 必须为正")
        c.flags.writeable = False
        object.__setattr__(self, "structure_constants", c)
        object.__setattr__(self, "basis_labels", list(self.basis_labels))

        # ad_basis[i][k][j] = c[k][i][j]
        ad_basis = np.ascontiguousarray(np.transpose(c, (1, 0, 2)))
        ad_basis.flags.writeable = False
        object.__setattr__(self, "ad_basis", ad_basis)

        # 总是由结构常数重新计算，不信任外部输入
        kappa = self.killing_scale * np.einsum("ikl,jlk->ij", ad_basis, ad_basis)
        kappa = 0.5 * (kappa + kappa.T)
        kappa.flags.writeable = False
        object.__setattr__(self, "killing_matrix", kappa)

    @classmethod
    def from_structure_constants(
        cls,
        basis_labels: List[str],
        structure_constants: np.ndarray,
        killing_matrix: Optional[np.ndarray] = None,
        killing_scale: float = 1.0,
        name: str = "custom",
    ) -> "LieAlgebra":
        """用户提供的Killing矩阵只做交叉校验"""
        algebra = cls(basis_labels, structure_constants, killing_scale=killing_scale, name=name)
        if killing_matrix is not None:
            given = np.asarray(killing_matrix, dtype=float)
            deviation = np.max(np.abs(given - algebra.killing_matrix))
            if deviation > 1e-12 * tolerance_scale(given):
                raise ConsistencyError(f"给定的Killing矩阵与结构常数重算结果不符 (偏差 {deviation:.3e})")
        algebra.verify()
        return algebra

    @property
    def dim(self) -> int:
        return len(self.basis_labels)

    def coords(self, x: ElementLike) -> np.ndarray:
        arr = x.coeffs if isinstance(x, AlgebraElement) else np.asarray(x, dtype=float).reshape(-1)
        if arr.shape[0] != self.dim:
            raise AlgebraInputError(f"元素维度 {arr.shape[0]} 与代数维度 {self.dim} 不匹配")
        return arr

    def element(self, coeffs: ElementLike) -> AlgebraElement:
        return AlgebraElement(self.coords(coeffs))

    def basis_element(self, index: Union[int, str]) -> AlgebraElement:
        if isinstance(index, str):
            index = self.basis_labels.index(index)
        e = np.zeros(self.dim)
        e[index] = 1.0
        return AlgebraElement(e)

    def zero(self) -> AlgebraElement:
        return AlgebraElement(np.zeros(self.dim))

    def ad(self, x: ElementLike) -> np.ndarray:
        """ad_x 的矩阵：(ad_x)[k][j] = Σ_i c[k][i][j] x^i"""
        return np.einsum("ikj,i->kj", self.ad_basis, self.coords(x))

    def bracket(self, x: ElementLike, y: ElementLike) -> AlgebraElement:
        cx, cy = self.coords(x), self.coords(y)
        return AlgebraElement(np.einsum("kij,i,j->k", self.structure_constants, cx, cy))

    def killing(self, x: ElementLike, y: ElementLike) -> float:
        return float(self.coords(x) @ self.killing_matrix @ self.coords(y))

    def verify(self, tol: float = 1e-12):
        """反对称、Jacobi恒等式、Killing矩阵可逆"""
        c = self.structure_constants
        scale = tolerance_scale(c)
        if np.max(np.abs(c + np.transpose(c, (0, 2, 1)))) > tol * scale:
            raise ConsistencyError("结构常数不满足反对称性")

        # Σ_l c[l][i][j] c[m][l][k] + 循环 = 0
        jac = np.einsum("lij,mlk->mijk", c, c)
        jac = jac + np.transpose(jac, (0, 2, 3, 1)) + np.transpose(jac, (0, 3, 1, 2))
        if np.max(np.abs(jac)) > tol * scale**2 * 10:
            raise ConsistencyError("结构常数不满足Jacobi恒等式")

        eig = np.linalg.eigvalsh(self.killing_matrix)
        if np.min(np.abs(eig)) < tol * tolerance_scale(self.killing_matrix):
            raise SemisimplicityError("Killing形式退化，代数不是半单的")


@dataclass(frozen=True, eq=False)
class Grading:
    """分次算子 Q 及其整数分次子空间 G_i"""

    Q: AlgebraElement
    grade_of_basis: Dict[int, int]
    subspaces: Dict[int, List[int]]

    @classmethod
    def from_operator(cls, algebra: LieAlgebra, Q: AlgebraElement, tol: float = 1e-10) -> "Grading":
        """基必须与分次相容：每个基向量都是 ad_Q 的整数本征向量"""
        ad_q = algebra.ad(Q)
        grades: Dict[int, int] = {}
        for j in range(algebra.dim):
            column = ad_q[:, j]
            eigen = column[j]
            off = np.delete(column, j)
            grade = int(round(eigen))
            if np.max(np.abs(off), initial=0.0) > tol or abs(eigen - grade) > tol:
                raise AlgebraInputError(f"基向量 {algebra.basis_labels[j]} 不是 ad_Q 的整数本征向量")
            grades[j] = grade
        subspaces: Dict[int, List[int]] = {}
        for j, grade in grades.items():
            subspaces.setdefault(grade, []).append(j)
        grading = cls(Q=Q, grade_of_basis=grades, subspaces=dict(sorted(subspaces.items())))
        grading.verify(algebra)
        return grading

    @property
    def grades(self) -> List[int]:
        return list(self.subspaces.keys())

    def project(self, x: AlgebraElement, grade: int) -> AlgebraElement:
        """x 在 G_grade 上的分量"""
        out = np.zeros(x.dim)
        idx = self.subspaces.get(grade, [])
        out[idx] = x.coeffs[idx]
        return AlgebraElement(out)

    def verify(self, algebra: LieAlgebra, tol: float = 1e-10):
        for j, grade in self.grade_of_basis.items():
            T = algebra.basis_element(j)
            residual = algebra.bracket(self.Q, T) - grade * T
            if residual.norm() > tol:
                raise ConsistencyError(f"[Q,T] != {grade}·T 对基向量 {algebra.basis_labels[j]}")
        if 0 not in self.subspaces:
            raise ConsistencyError("G_0 为空")
        q_off = np.delete(self.Q.coeffs, self.subspaces[0])
        if np.max(np.abs(q_off), initial=0.0) > tol:
            raise ConsistencyError("Q 不在 G_0 中")
        kappa = algebra.killing_matrix
        scale = tolerance_scale(kappa)
        for n, idx_n in self.subspaces.items():
            for m, idx_m in self.subspaces.items():
                if n + m != 0 and np.max(np.abs(kappa[np.ix_(idx_n, idx_m)])) > 1e-12 * scale:
                    raise ConsistencyError(f"k(G_{n}, G_{m}) 不为零")


@dataclass(frozen=True, eq=False)
class ChevalleyHandles:
    """sl(n) 的Cartan–Weyl/Chevalley生成元句柄"""

    H: List[AlgebraElement]
    h: List[AlgebraElement]
    e_plus: List[AlgebraElement]
    e_minus: List[AlgebraElement]
    root_vectors: Dict[str, AlgebraElement]

    @property
    def rank(self) -> int:
        return len(self.h)


# 每一步：(主元候选序号, 混合伙伴序号或-1, 符号锚定分量序号)
GramSchmidtPlan = Tuple[Tuple[int, int, int], ...]


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """c·k 下的正交归一基及其符号差"""

    elements: List[AlgebraElement]
    signs: np.ndarray
    c: float
    plan: GramSchmidtPlan = ()

    @property
    def index(self) -> int:
        """ν̄(c)：负号个数"""
        return int(np.sum(self.signs < 0))

    def matrix(self) -> np.ndarray:
        """以基元素为列的矩阵"""
        return np.column_stack([e.coeffs for e in self.elements])


class CartanAction:
    """一组对易的Cartan方向 h_i 的同时对角化

    Ad_{exp(Σφ_i h_i)} = P · diag(exp(Σφ_i w_i)) · P⁻¹，可以对多个点批量求值。
    """

    def __init__(self, algebra: LieAlgebra, directions: Sequence[AlgebraElement], tol: float = 1e-10):
        self.algebra = algebra
        self.directions = list(directions)
        ads = np.array([algebra.ad(h) for h in self.directions])
        # 固定的非对称组合系数，保证确定性
        weights = 1.0 / (np.arange(len(self.directions)) + np.pi)
        combo = np.einsum("r,rij->ij", weights, ads)
        eigvals, P = np.linalg.eig(combo)
        if np.max(np.abs(np.imag(eigvals)), initial=0.0) > tol or np.max(np.abs(np.imag(P))) > tol:
            raise ModelError("Cartan方向的伴随作用不是实可对角化的")
        P = np.real(P)
        P_inv = np.linalg.inv(P)
        diag = np.einsum("ij,rjk,kl->ril", P_inv, ads, P)
        w = np.einsum("rii->ri", diag)
        off = diag - np.einsum("ri,ij->rij", w, np.eye(algebra.dim))
        if np.max(np.abs(off)) > tol * max(1.0, float(np.max(np.abs(ads)))):
            raise ModelError("Cartan方向不能同时对角化（不对易？）")
        self.P = P
        self.P_inv = P_inv
        self.weights = w

    def factors(self, phi: np.ndarray) -> np.ndarray:
        """exp(Σ_i φ_i w_i)，phi 形状 (..., r)"""
        return np.exp(np.asarray(phi, dtype=float) @ self.weights)

    def adjoint(self, phi: np.ndarray) -> np.ndarray:
        """Ad_B 的矩阵，B = exp(Σφ_i h_i)"""
        f = self.factors(phi)
        return np.einsum("ij,...j,jk->...ik", self.P, f, self.P_inv)

    def apply(self, phi: np.ndarray, y: ElementLike) -> np.ndarray:
        """Ad_B(y) 的坐标；phi 为 (r,) 或 (N, r)"""
        cy = self.algebra.coords(y)
        return np.einsum("ij,...j,j->...i", self.P, self.factors(phi), self.P_inv @ cy)
