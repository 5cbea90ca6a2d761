import logging
from typing import Any, Callable, Dict, Optional

import numpy as np

from models.exceptions import DomainError, ModelError, SolutionLookupError
from models.toda import ClosedFormField, Domain, FieldConfig, GridField

logger = logging.getLogger(__name__)


def _log_cosh(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(x, -x) - np.log(2.0)


def _column(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float)[:, None]


def _perturbed_exponent(a: float, delta: float, k: float, x: np.ndarray):
    """F = 2a(x + δ sin(kx)/k) 及其一、二阶导数"""
    F = 2.0 * a * (x + delta * np.sin(k * x) / k)
    dF = 2.0 * a * (1.0 + delta * np.cos(k * x))
    ddF = -2.0 * a * delta * k * np.sin(k * x)
    return F, dF, ddF


def _general_evaluator(a: float, delta: float, k: float):
    """φ = ln|a(1+fg)| − ½ln(f′g′)，f = e^{F(z)}，g = e^{F(z̄)}"""

    def evaluator(z, zbar):
        F, dF, ddF = _perturbed_exponent(a, delta, k, z)
        G, dG, ddG = _perturbed_exponent(a, delta, k, zbar)
        S = 0.5 * (F + G)
        t = np.tanh(S)
        phi = np.log(2.0 * a) + _log_cosh(S) - 0.5 * np.log(dF * dG)
        d1 = 0.5 * dF * t - 0.5 * ddF / dF
        d2 = 0.5 * dG * t - 0.5 * ddG / dG
        d12 = 0.25 * dF * dG / np.cosh(S) ** 2
        return _column(phi), _column(d1), _column(d2), _column(d12)

    return evaluator


class SolutionService:
    """精确解库：每个解记录它所要求的 μ⁺μ⁻"""

    def __init__(self):
        self._builders: Dict[str, Callable[..., FieldConfig]] = {
            "liouville_log": self.liouville_log,
            "liouville_cosh": self.liouville_cosh,
            "liouville_general": self.liouville_general,
            "vacuum_perturbation_grid": self.vacuum_perturbation_grid,
            "sl3_symmetric_cosh": self.sl3_symmetric_cosh,
        }

    @property
    def names(self):
        return sorted(self._builders)

    def exact_solution(self, name: str, params: Optional[Dict[str, Any]] = None) -> FieldConfig:
        builder = self._builders.get(name)
        if builder is None:
            raise SolutionLookupError(f"未知的精确解 '{name}'，可选: {', '.join(self.names)}")
        try:
            return builder(**(params or {}))
        except TypeError as e:
            raise ModelError(f"精确解 {name} 的参数错误: {e}") from e

    def liouville_log(self, a: float = 1.0, domain: Domain = (0.05, 1.05, 0.05, 1.05)) -> ClosedFormField:
        """φ = ln(a(z+z̄))，要求 μ⁺μ⁻ = −a²"""
        if a <= 0:
            raise ModelError("liouville_log 需要 a > 0")
        if domain[0] + domain[2] <= 0:
            raise DomainError("liouville_log 的定义域必须满足 z+z̄ > 0")

        def evaluator(z, zbar):
            u = z + zbar
            return _column(np.log(a * u)), _column(1.0 / u), _column(1.0 / u), _column(-1.0 / u**2)

        return ClosedFormField("liouville_log", 1, domain, evaluator, mu_product=-(a**2), params={"a": a})

    def liouville_cosh(self, a: float = 1.0, domain: Domain = (0.0, 1.0, 0.0, 1.0)) -> ClosedFormField:
        """φ = ln cosh(a(z+z̄))，要求 μ⁺μ⁻ = a²"""

        def evaluator(z, zbar):
            u = a * (z + zbar)
            t = a * np.tanh(u)
            return _column(_log_cosh(u)), _column(t), _column(t), _column(a**2 / np.cosh(u) ** 2)

        return ClosedFormField("liouville_cosh", 1, domain, evaluator, mu_product=a**2, params={"a": a})

    def liouville_general(
        self, a: float = 1.0, delta: float = 0.1, k: float = 2.0, domain: Domain = (0.0, 1.0, 0.0, 1.0)
    ) -> ClosedFormField:
        """f = exp(2a(z + δ sin(kz)/k))，g 同理；δ = 0 退化为 liouville_cosh"""
        self._check_general(a, delta, k)
        return ClosedFormField(
            "liouville_general",
            1,
            domain,
            _general_evaluator(a, delta, k),
            mu_product=a**2,
            params={"a": a, "delta": delta, "k": k},
        )

    def vacuum_perturbation_grid(
        self,
        a: float = 1.0,
        delta: float = 0.1,
        k: float = 2.0,
        domain: Domain = (0.0, 1.0, 0.0, 1.0),
        nz: int = 41,
        nzbar: int = 41,
    ) -> GridField:
        """liouville_general 采样到均匀网格上（一阶导数取解析值）"""
        self._check_general(a, delta, k)
        z = np.linspace(domain[0], domain[1], int(nz))
        zbar = np.linspace(domain[2], domain[3], int(nzbar))
        Z, W = np.meshgrid(z, zbar, indexing="ij")
        phi, d1, d2, _ = _general_evaluator(a, delta, k)(Z.ravel(), W.ravel())
        shape = (z.shape[0], zbar.shape[0], 1)
        return GridField(
            "vacuum_perturbation_grid",
            z,
            zbar,
            phi.reshape(shape),
            d1.reshape(shape),
            d2.reshape(shape),
            mu_product=a**2,
            params={"a": a, "delta": delta, "k": k, "nz": int(nz), "nzbar": int(nzbar)},
        )

    def sl3_symmetric_cosh(self, a: float = 1.0, domain: Domain = (0.0, 1.0, 0.0, 1.0)) -> ClosedFormField:
        """sl(3) 的对称解 φ₁ = φ₂ = 2 ln cosh(a(z+z̄))，要求 μ⁺μ⁻ = 2a²"""

        def evaluator(z, zbar):
            u = a * (z + zbar)
            phi = 2.0 * _log_cosh(u)
            d = 2.0 * a * np.tanh(u)
            d12 = 2.0 * a**2 / np.cosh(u) ** 2
            return tuple(np.stack([x, x], axis=-1) for x in (phi, d, d, d12))

        return ClosedFormField("sl3_symmetric_cosh", 2, domain, evaluator, mu_product=2.0 * a**2, params={"a": a})

    @staticmethod
    def _check_general(a: float, delta: float, k: float):
        if a <= 0:
            raise ModelError("需要 a > 0")
        if abs(delta) >= 1:
            raise ModelError("需要 |delta| < 1，保证 f′ > 0")
        if k == 0:
            raise ModelError("k 不能为 0")


# 全局实例
solution_service = SolutionService()
