import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from models.algebra import (
    AlgebraElement,
    ChevalleyHandles,
    ElementLike,
    CartanAction,
    GramSchmidtPlan,
    Grading,
    LieAlgebra,
    OrthonormalBasis,
)
from models.exceptions import (
    AlgebraInputError,
    ConsistencyError,
    DegeneratePointError,
    SemisimplicityError,
    UnsupportedAlgebraError,
)

logger = logging.getLogger(__name__)


def _unit(n: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


def _root_label(i: int, j: int) -> str:
    """e_i - e_j 的标签，i<j 为正根"""
    lo, hi = min(i, j), max(i, j)
    simple = [f"a{k + 1}" for k in range(lo, hi)]
    if i < j:
        return "E_" + "+".join(simple)
    return "E_" + "".join("-" + s for s in simple)


class AlgebraService:
    def __init__(self):
        self._cache: Dict[Tuple[int, float], Tuple[LieAlgebra, Grading, ChevalleyHandles]] = {}

    def build_sl(self, n: int, alpha_sq: float = 2.0) -> Tuple[LieAlgebra, Grading, ChevalleyHandles]:
        """sl(n,ℝ) 的Cartan–Weyl基、主分次与Chevalley句柄

        基顺序：H_1..H_{n-1}，按高度排列的正根，再是对应的负根。
        双线性形式归一化为 k(H_i,H_j)=δ_ij，k(E_α,E_-α)=2/α²。
        """
        if not isinstance(n, (int, np.integer)) or n < 2:
            raise UnsupportedAlgebraError(f"不支持的代数 sl({n})，需要 n >= 2")
        if not alpha_sq > 0:
            raise AlgebraInputError(f"alpha_sq 必须为正，实际为 {alpha_sq}")
        key = (int(n), float(alpha_sq))
        if key in self._cache:
            return self._cache[key]
        if n > 3:
            logger.info(f"🔍 构建扩展代数 sl({n})")

        mats: List[np.ndarray] = []
        labels: List[str] = []
        root_scale = np.sqrt(alpha_sq / 2.0)
        for k in range(1, n):
            d = np.zeros(n)
            d[:k] = 1.0
            d[k] = -float(k)
            mats.append(root_scale * np.diag(d) / np.sqrt(k * (k + 1)))
            labels.append(f"H_{k}")
        positive = sorted(((i, j) for i in range(n) for j in range(i + 1, n)), key=lambda p: (p[1] - p[0], p[0]))
        for i, j in positive:
            mats.append(_unit(n, i, j))
            labels.append(_root_label(i, j))
        for i, j in positive:
            mats.append(_unit(n, j, i))
            labels.append(_root_label(j, i))

        basis = np.array([m.reshape(-1) for m in mats]).T
        dim = len(mats)

        def coords_of(matrix: np.ndarray) -> np.ndarray:
            sol, *_ = np.linalg.lstsq(basis, matrix.reshape(-1), rcond=None)
            return sol

        c = np.zeros((dim, dim, dim))
        for i in range(dim):
            for j in range(i + 1, dim):
                col = coords_of(mats[i] @ mats[j] - mats[j] @ mats[i])
                c[:, i, j] = col
                c[:, j, i] = -col
        c[np.abs(c) < 1e-15] = 0.0

        # trace(ad X ad Y) = 2n·tr(XY)
        algebra = LieAlgebra(
            labels, c, killing_scale=1.0 / (n * alpha_sq), root_length_sq=float(alpha_sq), name=f"sl{n}"
        )
        algebra.verify()

        Q_matrix = np.diag([(n - 1) / 2.0 - i for i in range(n)])
        grading = Grading.from_operator(algebra, AlgebraElement(coords_of(Q_matrix)))

        index_of = {lab: k for k, lab in enumerate(labels)}
        h = [AlgebraElement(coords_of(_unit(n, i, i) - _unit(n, i + 1, i + 1))) for i in range(n - 1)]
        handles = ChevalleyHandles(
            H=[algebra.basis_element(k) for k in range(n - 1)],
            h=h,
            e_plus=[algebra.basis_element(index_of[_root_label(i, i + 1)]) for i in range(n - 1)],
            e_minus=[algebra.basis_element(index_of[_root_label(i + 1, i)]) for i in range(n - 1)],
            root_vectors={lab: algebra.basis_element(k) for k, lab in enumerate(labels) if lab.startswith("E_")},
        )
        logger.debug(f"✅ sl({n}) 构建完成: 维数 {dim}, alpha_sq={alpha_sq}")
        self._cache[key] = (algebra, grading, handles)
        return algebra, grading, handles

    def ad_exp(self, algebra: LieAlgebra, x: ElementLike, y: ElementLike) -> AlgebraElement:
        """exp(ad_x)(y) = B y B⁻¹，B = exp(x)"""
        return AlgebraElement(expm(algebra.ad(x)) @ algebra.coords(y))

    def project_grade(self, grading: Grading, x: AlgebraElement, grade: int) -> AlgebraElement:
        return grading.project(x, grade)

    def killing_index(self, algebra: LieAlgebra) -> int:
        """ν̄：Killing矩阵负本征值个数"""
        eig = np.linalg.eigvalsh(algebra.killing_matrix)
        scale = max(1.0, float(np.max(np.abs(eig))))
        if np.min(np.abs(eig)) < 1e-12 * scale:
            raise SemisimplicityError("Killing形式退化")
        return int(np.sum(eig < 0))

    def nu_bar(self, algebra: LieAlgebra, c: float) -> int:
        """c·k 的指标 ν̄(c)"""
        if c == 0:
            raise AlgebraInputError("c 不能为 0")
        index = self.killing_index(algebra)
        return index if c > 0 else algebra.dim - index

    def indefinite_gram_schmidt(
        self,
        vectors: np.ndarray,
        metric: np.ndarray,
        plan: Optional[GramSchmidtPlan] = None,
        tol: float = 1e-10,
    ) -> Tuple[np.ndarray, np.ndarray, GramSchmidtPlan]:
        """不定度量下的Gram–Schmidt正交归一化

        vectors 的每一行是一个候选向量。没有 plan 时每一步取剩余向量中 |G(v,v)|
        最大者为主元；全部剩余向量为零模时，主元与 |G(v,w)| 最大的伙伴相加。
        每个输出向量的首个非零分量取正。返回 (行向量组, 符号, plan)，
        把 plan 传回来可以在邻近的输入上重放同一组选择。
        """
        candidates = np.array(vectors, dtype=float)
        if candidates.ndim != 2:
            raise AlgebraInputError("vectors 必须是二维数组（每行一个向量）")
        G = np.asarray(metric, dtype=float)
        g_scale = max(1.0, float(np.max(np.abs(G))))
        v_scale = max(1.0, float(np.max(np.abs(candidates)))) if candidates.size else 1.0
        alive = list(range(candidates.shape[0]))
        basis: List[np.ndarray] = []
        signs: List[int] = []
        steps: List[Tuple[int, int, int]] = []

        def project_out(v: np.ndarray) -> np.ndarray:
            for _ in range(2):
                for b, s in zip(basis, signs):
                    v = v - s * (b @ G @ v) * b
            return v

        step_no = 0
        while alive:
            residual = {i: project_out(candidates[i]) for i in alive}
            if plan is None:
                alive = [i for i in alive if np.linalg.norm(residual[i]) > tol * v_scale]
                if not alive:
                    break
                norms = {i: residual[i] @ G @ residual[i] for i in alive}
                pivot = max(alive, key=lambda i: (abs(norms[i]), -i))
                partner = -1
                if abs(norms[pivot]) <= tol * g_scale * v_scale**2:
                    # 全为零模：按候选顺序取主元
                    pivot = alive[0]
                    others = [i for i in alive if i != pivot]
                    if not others:
                        raise DegeneratePointError("剩余子空间为零模，度量退化")
                    partner = max(others, key=lambda i: (abs(residual[pivot] @ G @ residual[i]), -i))
                v = residual[pivot] + (residual[partner] if partner >= 0 else 0.0)
                anchor = int(np.argmax(np.abs(v) > tol * max(1.0, float(np.max(np.abs(v))))))
            else:
                if step_no >= len(plan):
                    break
                pivot, partner, anchor = plan[step_no]
                v = residual[pivot] + (residual[partner] if partner >= 0 else 0.0)

            norm = float(v @ G @ v)
            if abs(norm) <= tol * g_scale * max(1.0, float(np.max(np.abs(v)))) ** 2:
                raise DegeneratePointError("Gram–Schmidt 出现零模向量，度量在该子空间退化")
            v = v / np.sqrt(abs(norm))
            if v[anchor] < 0:
                v = -v
            basis.append(v)
            signs.append(1 if norm > 0 else -1)
            steps.append((pivot, partner, anchor))
            alive = [i for i in alive if i != pivot]
            step_no += 1

        if plan is not None and len(steps) != len(plan):
            raise ConsistencyError("重放的 Gram–Schmidt plan 与输入不匹配")
        out = np.array(basis) if basis else np.zeros((0, G.shape[0]))
        return out, np.array(signs, dtype=int), tuple(steps)

    def orthonormal_basis(self, algebra: LieAlgebra, c: float) -> OrthonormalBasis:
        """c·k 下的正交归一基，候选向量为代数基本身"""
        if c == 0:
            raise AlgebraInputError("c 不能为 0")
        eig = np.linalg.eigvalsh(algebra.killing_matrix)
        if np.min(np.abs(eig)) < 1e-12 * max(1.0, float(np.max(np.abs(eig)))):
            raise SemisimplicityError("Killing形式退化，无法构造正交归一基")
        metric = c * algebra.killing_matrix
        rows, signs, plan = self.indefinite_gram_schmidt(np.eye(algebra.dim), metric)
        if rows.shape[0] != algebra.dim:
            raise SemisimplicityError("正交归一化未得到完整的基")
        gram = rows @ metric @ rows.T
        if np.max(np.abs(gram - np.diag(signs))) > 1e-12 * max(1.0, abs(c)) * 10:
            raise ConsistencyError("正交归一基校验失败")
        return OrthonormalBasis(elements=[AlgebraElement(r) for r in rows], signs=signs, c=float(c), plan=plan)

    def cartan_action(self, algebra: LieAlgebra, directions: Sequence[AlgebraElement]) -> CartanAction:
        return CartanAction(algebra, directions)


# 全局实例
algebra_service = AlgebraService()
