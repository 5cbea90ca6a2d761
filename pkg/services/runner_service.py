import json
import logging
import math
import re
import tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import settings
from models.algebra import AlgebraElement
from models.exceptions import (
    ConfigError,
    ConsistencyError,
    DegeneratePointError,
    DomainError,
    FrameDiscontinuityError,
    GoursatBlowUpError,
    TransportDivergenceError,
)
from models.toda import FieldConfig, GoursatReport, TodaModel
from schemas.report import CheckResult, GoursatSummary, QuarantinedPoint, RunReport
from schemas.run_config import RunConfig
from services.algebra_service import algebra_service
from services.csv_service import csv_service
from services.geometry_service import geometry_service
from services.goursat_service import goursat_service
from services.solution_service import solution_service
from services.toda_service import toda_service
from services.transport_service import transport_service

logger = logging.getLogger(__name__)

# 检疫而不是中止整个运行的逐点错误
POINT_ERRORS = (DegeneratePointError, FrameDiscontinuityError, DomainError)

_TOML_POSITION = re.compile(r"line (\d+), column (\d+)")


@dataclass
class PointResult:
    z: float
    zbar: float
    row: Optional[Dict[str, float]] = None
    residuals: Dict[str, float] = field(default_factory=dict)
    nu_perp: Optional[int] = None
    quarantine: Optional[QuarantinedPoint] = None


def forms_columns(model: TodaModel, checks: Sequence[str]) -> List[str]:
    """基本形式CSV的固定列顺序"""
    k = model.dim - 2
    names = ["z", "zbar", "g12", "K_closed", "K_fd", "K_gauss"]
    names += [f"b_{A + 1}_{al + 1}{be + 1}" for A in range(k) for al in range(2) for be in range(2)]
    names += [f"mu_{B + 1}_{A + 1}_{al + 1}" for B in range(k) for A in range(k) for al in range(2)]
    names += ["H_norm_sq"]
    names += [f"res_{name}" for name in checks]
    return names


def immersion_columns(model: TodaModel) -> List[str]:
    """浸入CSV：z, zbar 与 c·k 正交归一坐标 y1..ym̄"""
    return ["z", "zbar"] + [f"y{j + 1}" for j in range(model.dim)]


class RunnerService:
    """按运行配置扫描网格：逐点计算基本形式与各项检查，写出CSV与JSON报告"""

    # ---------- 配置 ----------

    def load_config(self, path: Path, overrides: Sequence[str] = ()) -> RunConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"配置文件不存在: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            match = _TOML_POSITION.search(str(e))
            line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
            raise ConfigError(f"配置解析失败: {e}", line=line, column=column) from e
        for item in overrides:
            self.apply_override(data, item)
        try:
            config = RunConfig.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            loc = tuple(str(part) for part in first["loc"])
            line, column = self._locate(text, loc)
            raise ConfigError(f"配置校验失败 [{'.'.join(loc)}]: {first['msg']}", line=line, column=column) from e
        return config.resolve_paths(path.parent)

    def apply_override(self, data: Dict[str, Any], item: str):
        """KEY=VALUE，KEY 用点号分隔，VALUE 按TOML标量解析"""
        if "=" not in item:
            raise ConfigError(f"覆盖项必须是 KEY=VALUE 形式: {item}")
        key, raw = item.split("=", 1)
        parts = [p.strip() for p in key.strip().split(".") if p.strip()]
        if not parts:
            raise ConfigError(f"覆盖项缺少键名: {item}")
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        target = data
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"覆盖项 {key} 的路径 {part} 不是一个表")
            target = node
        target[parts[-1]] = value

    def _locate(self, text: str, loc: Tuple[str, ...]) -> Tuple[Optional[int], Optional[int]]:
        """在配置文本中找到校验出错的键所在的行列（找不到时返回节标题所在行）"""
        if not loc:
            return None, None
        section, key = loc[0], (loc[1] if len(loc) > 1 else None)
        in_section, section_line = False, None
        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if stripped.startswith("["):
                in_section = stripped.strip("[] ") == section
                if in_section:
                    section_line = number
                continue
            if in_section and key is not None and re.match(rf"{re.escape(key)}\s*=", stripped):
                return number, line.index(key) + 1
        return section_line, (1 if section_line else None)

    # ---------- 模型与场 ----------

    def build_model(self, config: RunConfig) -> TodaModel:
        return toda_service.build_model(
            config.algebra.n,
            alpha_sq=config.algebra.alpha_sq,
            mu_plus=config.model.mu_plus,
            mu_minus=config.model.mu_minus,
            c=config.model.c,
            lam=config.model.lam,
        )

    def resolve_fields(self, config: RunConfig, model: TodaModel) -> Tuple[FieldConfig, Optional[GoursatReport]]:
        solution = config.solution
        report = None
        if solution.kind == "builtin":
            fields = solution_service.exact_solution(solution.name, solution.params)
        elif solution.kind == "grid_file":
            try:
                fields = csv_service.read_field(solution.path)
            except (FileNotFoundError, DomainError) as e:
                raise ConfigError(f"网格场文件不可用: {e}") from e
        else:
            grid = config.grid
            domain = (grid.z_min, grid.z_max, grid.zbar_min, grid.zbar_max)
            if solution.initial == "zero":
                z, zbar = goursat_service.grid(domain, solution.step)
                initial = (np.zeros((z.shape[0], model.n_fields)), np.zeros((zbar.shape[0], model.n_fields)))
                report = goursat_service.solve(model, initial, domain, solution.step)
            else:
                source = solution_service.exact_solution(solution.initial, solution.params)
                self._require_cover(config, source)
                report = goursat_service.solve_from_field(model, source, domain, solution.step)
            fields = report.field
        self._require_cover(config, fields)
        toda_service.check_fields(model, fields)
        if fields.mu_product is not None and not math.isclose(
            fields.mu_product, model.mu_plus * model.mu_minus, rel_tol=1e-12, abs_tol=1e-14
        ):
            logger.warning(
                f"⚠️ 解 {fields.name} 要求 μ⁺μ⁻ = {fields.mu_product}，模型给的是 {model.mu_plus * model.mu_minus}"
            )
        return fields, report

    def _require_cover(self, config: RunConfig, fields: FieldConfig):
        """解的定义域必须覆盖整个扫描网格"""
        grid = config.grid
        z0, z1, w0, w1 = fields.domain
        tol = 1e-12 * max(1.0, abs(z0), abs(z1), abs(w0), abs(w1))
        if grid.z_min < z0 - tol or grid.z_max > z1 + tol or grid.zbar_min < w0 - tol or grid.zbar_max > w1 + tol:
            raise ConfigError(
                f"解 {fields.name} 的定义域 z∈[{z0}, {z1}], z̄∈[{w0}, {w1}] 不覆盖网格 "
                f"z∈[{grid.z_min}, {grid.z_max}], z̄∈[{grid.zbar_min}, {grid.zbar_max}]"
            )

    def gauge_element(self, config: RunConfig, model: TodaModel) -> AlgebraElement:
        weights = list(config.run.gauge_cartan) or [0.3]
        x = model.algebra.zero()
        for w, h in zip(weights, model.cartan_dirs):
            x = x + w * h
        return x

    # ---------- 逐点计算 ----------

    def evaluate_point(
        self,
        config: RunConfig,
        model: TodaModel,
        fields: FieldConfig,
        z: float,
        zbar: float,
        g_const: AlgebraElement,
    ) -> PointResult:
        checks = config.checks.enabled
        h = config.run.fd_step
        result = PointResult(z=float(z), zbar=float(zbar))
        try:
            forms = geometry_service.fundamental_forms(model, fields, z, zbar, h=h)
            residuals: Dict[str, float] = {}
            if "field_eq" in checks:
                residuals["field_eq"] = toda_service.field_residual(model, fields, z, zbar).norm()
            if "zero_curvature" in checks:
                residuals["zero_curvature"] = toda_service.zero_curvature_residual(model, fields, z, zbar).norm()
            if "appendix_christoffel" in checks:
                by_metric = geometry_service.christoffel_metric(model, fields, z, zbar, h)
                residuals["appendix_christoffel"] = float(np.max(np.abs(by_metric - forms.Gamma)))
            if "gcr" in checks:
                residuals["gcr"] = geometry_service.gcr_residuals(model, fields, forms.frame, z, zbar, h).max()
            if "gauge_invariance" in checks:
                residuals["gauge_invariance"] = geometry_service.gauge_invariance_check(model, fields, g_const, z, zbar)
            if "curvature" in checks:
                reference = forms.K_fd if forms.K_closed is None else forms.K_closed
                residuals["curvature"] = max(abs(forms.K_fd - reference), abs(forms.K_gauss - reference))
        except POINT_ERRORS as e:
            logger.warning(f"⚠️ 点 ({z:.6g}, {zbar:.6g}) 被隔离: {e}")
            result.quarantine = QuarantinedPoint(z=float(z), zbar=float(zbar), reason=type(e).__name__, message=str(e))
            return result

        row = {
            "z": float(z),
            "zbar": float(zbar),
            "g12": float(forms.g[0, 1]),
            "K_closed": float("nan") if forms.K_closed is None else forms.K_closed,
            "K_fd": forms.K_fd,
            "K_gauss": forms.K_gauss,
        }
        k = forms.b.shape[0]
        for A in range(k):
            for al in range(2):
                for be in range(2):
                    row[f"b_{A + 1}_{al + 1}{be + 1}"] = float(forms.b[A, al, be])
        for B in range(k):
            for A in range(k):
                for al in range(2):
                    row[f"mu_{B + 1}_{A + 1}_{al + 1}"] = float(forms.mu_conn[B, A, al])
        row["H_norm_sq"] = forms.H_norm_sq
        for name in checks:
            row[f"res_{name}"] = residuals[name]
        result.row = row
        result.residuals = residuals
        result.nu_perp = forms.nu_perp
        return result

    def sweep(self, config: RunConfig, model: TodaModel, fields: FieldConfig) -> List[PointResult]:
        grid = config.grid
        z = np.linspace(grid.z_min, grid.z_max, grid.nz)
        zbar = np.linspace(grid.zbar_min, grid.zbar_max, grid.nzbar)
        points = [(zz, ww) for zz in z for ww in zbar]
        g_const = self.gauge_element(config, model)

        def work(point: Tuple[float, float]) -> PointResult:
            return self.evaluate_point(config, model, fields, point[0], point[1], g_const)

        # executor.map 保持网格顺序，报告的归约顺序因此确定
        with ThreadPoolExecutor(max_workers=settings.threads) as executor:
            return list(executor.map(work, points))

    # ---------- 输出 ----------

    def immersion_frame(self, config: RunConfig, model: TodaModel, fields: FieldConfig) -> pd.DataFrame:
        grid = config.grid
        z = np.linspace(grid.z_min, grid.z_max, grid.nz)
        zbar = np.linspace(grid.zbar_min, grid.zbar_max, grid.nzbar)
        patch = transport_service.immersion_patch(model, fields, z, zbar, h=config.run.transport_step)
        Z, W = np.meshgrid(z, zbar, indexing="ij")
        m = model.dim
        columns = immersion_columns(model)
        data = np.column_stack([Z.ravel(), W.ravel(), patch.y.reshape(-1, m)])
        return pd.DataFrame(data, columns=columns)

    def summarize(
        self,
        config: RunConfig,
        model: TodaModel,
        results: List[PointResult],
        goursat: Optional[GoursatReport],
        warnings: List[str],
    ) -> RunReport:
        good = [r for r in results if r.quarantine is None]
        quarantined = [r.quarantine for r in results if r.quarantine is not None]
        fraction = len(quarantined) / len(results) if results else 0.0

        checks: List[CheckResult] = []
        for name in config.checks.enabled:
            tol = float(getattr(config.tolerances, name))
            values = [r.residuals[name] for r in good]
            if not values:
                checks.append(CheckResult(name=name, max_residual="quarantined", tolerance=tol, passed=False))
                continue
            worst = max(values)
            if not math.isfinite(worst):
                checks.append(CheckResult(name=name, max_residual="non-finite", tolerance=tol, passed=False, points=len(values)))
                continue
            checks.append(CheckResult(name=name, max_residual=worst, tolerance=tol, passed=worst <= tol, points=len(values)))

        passed = all(c.passed for c in checks) and fraction <= config.run.max_quarantine_fraction
        nu_perp = next((r.nu_perp for r in good), None)
        return RunReport(
            status="passed" if passed else "failed",
            config=config.model_dump(mode="json", by_alias=True),
            algebra_dim=model.dim,
            nu_bar=algebra_service.nu_bar(model.algebra, model.c),
            nu_perp=nu_perp,
            points=len(results),
            checks=checks,
            quarantined=quarantined,
            quarantine_fraction=fraction,
            goursat=None if goursat is None else GoursatSummary(
                max_residual=goursat.max_residual, h=goursat.h, hbar=goursat.hbar,
                corrector_passes=goursat.corrector_passes,
            ),
            warnings=warnings,
        )

    def blow_up_report(self, config: RunConfig, model: TodaModel, error: GoursatBlowUpError) -> RunReport:
        """Goursat推进发散：记录最后一个有效行，不做网格扫描"""
        partial = error.partial or {}
        zbar, phi = partial.get("zbar"), partial.get("phi")
        h, hbar = float(partial.get("h", config.solution.step)), float(partial.get("hbar", config.solution.step))
        residual = None
        if phi is not None and phi.shape[1] >= 2:
            value = goursat_service.cell_residual(model, phi, h, hbar)
            residual = value if math.isfinite(value) else None
        logger.error(f"❌ {error}")
        return RunReport(
            status="failed",
            config=config.model_dump(mode="json", by_alias=True),
            algebra_dim=model.dim,
            nu_bar=algebra_service.nu_bar(model.algebra, model.c),
            points=0,
            goursat=GoursatSummary(
                max_residual=residual, h=h, hbar=hbar,
                corrector_passes=int(partial.get("passes", settings.goursat_corrector_passes)),
                blew_up=True,
                completed_rows=0 if zbar is None else int(len(zbar)),
                last_valid_zbar=None if zbar is None or len(zbar) == 0 else float(zbar[-1]),
            ),
            warnings=[str(error)],
        )

    def write_report(self, report: RunReport, path: Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = report.model_dump(mode="json")
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"✅ 报告已写出: {path}")

    def run(self, config: RunConfig, check_only: bool = False) -> RunReport:
        """执行一次完整运行；输入错误在写出任何文件之前抛出"""
        model = self.build_model(config)
        try:
            fields, goursat = self.resolve_fields(config, model)
        except GoursatBlowUpError as e:
            report = self.blow_up_report(config, model, e)
            self.write_report(report, config.outputs.report_json)
            return report
        logger.info(
            f"🔍 模型 sl({config.algebra.n}), 维数 {model.dim}, c={model.c}, 场 {fields.name}, "
            f"网格 {config.grid.nz}×{config.grid.nzbar}"
        )
        warnings: List[str] = []
        results = self.sweep(config, model, fields)

        immersion = None
        if config.outputs.immersion_csv is not None and not check_only:
            try:
                immersion = self.immersion_frame(config, model, fields)
            except (TransportDivergenceError, ConsistencyError, DomainError) as e:
                warnings.append(f"浸入坐标计算失败: {e}")
                logger.warning(f"⚠️ 浸入坐标计算失败: {e}")

        report = self.summarize(config, model, results, goursat, warnings)
        if report.quarantined:
            logger.warning(f"⚠️ {len(report.quarantined)} 个点被隔离（占比 {report.quarantine_fraction:.3f}）")

        if not check_only:
            rows = [r.row for r in results if r.row is not None]
            frame = pd.DataFrame(rows, columns=forms_columns(model, config.checks.enabled))
            csv_service.write_frame(frame, config.outputs.forms_csv)
            if immersion is not None:
                csv_service.write_frame(immersion, config.outputs.immersion_csv)
        self.write_report(report, config.outputs.report_json)

        for check in report.checks:
            mark = "✅" if check.passed else "❌"
            logger.info(f"{mark} {check.name}: 最大残差 {check.max_residual} (容差 {check.tolerance:.1e})")
        return report


# 全局实例
runner_service = RunnerService()
