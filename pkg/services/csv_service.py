import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from config import settings
from models.exceptions import ModelError
from models.toda import GridField

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def field_columns(n_fields: int) -> List[str]:
    """网格场CSV的固定列顺序"""
    names = ["z", "zbar"]
    for prefix in ("phi", "dphi1", "dphi2"):
        names += [f"{prefix}_{i + 1}" for i in range(n_fields)]
    return names


class CsvService:
    @property
    def float_format(self) -> str:
        # 科学计数法，float_digits 位有效数字
        return f"%.{settings.float_digits - 1}e"

    def write_frame(self, frame: pd.DataFrame, path: PathLike):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=self.float_format, na_rep="nan", lineterminator="\n")
        logger.debug(f"✅ 写出 {path} ({len(frame)} 行)")

    def field_frame(self, field: GridField) -> pd.DataFrame:
        Z, W = np.meshgrid(field.z, field.zbar, indexing="ij")
        n = field.n_fields
        data = np.column_stack(
            [Z.ravel(), W.ravel(), field.phi.reshape(-1, n), field.d1.reshape(-1, n), field.d2.reshape(-1, n)]
        )
        return pd.DataFrame(data, columns=field_columns(n))

    def write_field(self, field: GridField, path: PathLike):
        self.write_frame(self.field_frame(field), path)

    def read_field(self, path: PathLike, name: Optional[str] = None) -> GridField:
        """读取网格场；文件不存在时抛出 FileNotFoundError"""
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"网格场文件不存在: {path}")
        frame = pd.read_csv(path)
        columns = list(frame.columns)
        n = (len(columns) - 2) // 3
        if n < 1 or columns != field_columns(n):
            raise ModelError(f"{path} 的列不符合格式 {field_columns(max(n, 1))}")
        frame = frame.sort_values(["z", "zbar"], kind="mergesort")
        z = np.unique(frame["z"].to_numpy())
        zbar = np.unique(frame["zbar"].to_numpy())
        if len(frame) != z.shape[0] * zbar.shape[0]:
            raise ModelError(f"{path} 不是完整的矩形网格")
        shape = (z.shape[0], zbar.shape[0], n)

        def block(prefix: str) -> np.ndarray:
            return frame[[f"{prefix}_{i + 1}" for i in range(n)]].to_numpy(dtype=float).reshape(shape)

        logger.info(f"✅ 读取网格场 {path}: {z.shape[0]}×{zbar.shape[0]}, {n} 个场")
        return GridField(name or path.stem, z, zbar, block("phi"), block("dphi1"), block("dphi2"), params={"path": str(path)})


# 全局实例
csv_service = CsvService()
