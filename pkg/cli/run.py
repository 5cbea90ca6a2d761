import argparse
import logging
from typing import List, Optional

from models.exceptions import (
    AlgebraInputError,
    ConfigError,
    ModelError,
    SolutionLookupError,
    TodaGeometryError,
    UnsupportedAlgebraError,
)
from services.runner_service import runner_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_INPUT_ERROR = 2

# 在写出任何文件之前就能发现的输入错误
INPUT_ERRORS = (ConfigError, SolutionLookupError, ModelError, UnsupportedAlgebraError, AlgebraInputError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toda-geometry",
        description="由Toda场构造二维半黎曼子流形：基本形式、曲率与Gauss–Codazzi–Ricci检查",
    )
    parser.add_argument("--config", required=True, help="TOML运行配置文件")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="覆盖配置项，键用点号分隔，例如 model.c=-1（可重复）",
    )
    parser.add_argument("--quiet", action="store_true", help="只输出警告和错误")
    parser.add_argument("--check-only", action="store_true", help="只做检查并写报告，不写CSV")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """解析参数并执行一次运行，返回退出码"""
    args = build_parser().parse_args(argv)
    if args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    try:
        config = runner_service.load_config(args.config, args.override)
        report = runner_service.run(config, check_only=args.check_only)
    except INPUT_ERRORS as e:
        logger.error(f"❌ 输入错误: {e}")
        return EXIT_INPUT_ERROR
    except TodaGeometryError as e:
        logger.error(f"❌ 运行失败: {e}")
        return EXIT_CHECKS_FAILED

    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        if report.goursat is not None and report.goursat.blew_up:
            reason = report.warnings
        else:
            reason = failed or "隔离点比例超限"
        logger.error(f"❌ 检查未通过: {reason}")
        return EXIT_CHECKS_FAILED
    logger.info("✅ 全部检查通过")
    return EXIT_OK
