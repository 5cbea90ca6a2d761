import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# 确保加载.env文件
load_dotenv()


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="TODA_", env_file=".env", extra="ignore")

    # 并行设置
    threads: int = os.cpu_count() or 1
    log_level: str = "INFO"

    # 输出格式：17位有效数字，科学计数法
    float_digits: int = 17

    # 数值默认值
    degenerate_tol: float = 1e-12
    frame_fd_step: float = 1e-4
    lambda_step: float = 1e-5
    offshell_tol: float = 1e-8
    transport_warn_tol: float = 1e-6
    projection_tol: float = 1e-6
    goursat_corrector_passes: int = 2


settings = Settings()

# 添加配置验证
if settings.threads < 1:
    raise ValueError("TODA_THREADS 必须 >= 1")

if settings.float_digits < 1:
    raise ValueError("TODA_FLOAT_DIGITS 必须 >= 1")
