# app/settings.py
from __future__ import annotations
from typing import Optional
from pydantic_settings import BaseSettings
from pydantic import Field


class Settings(BaseSettings):
    # Точность / численные лимиты
    precision_bits: Optional[int] = Field(default=None, alias="NAESAT_PRECISION_BITS")
    max_iter: int = Field(default=10_000, alias="NAESAT_MAX_ITER")
    proven_regime_k: int = Field(default=10, alias="NAESAT_PROVEN_REGIME_K")

    # Оракулы на маленьких инстансах
    count_limit_n: int = Field(default=30, alias="NAESAT_COUNT_LIMIT_N")
    enum_limit_n: int = Field(default=12, alias="NAESAT_ENUM_LIMIT_N")
    node_budget: int = Field(default=1_000_000, alias="NAESAT_NODE_BUDGET")

    # Эксперименты / логирование
    n_jobs: int = Field(default=1, alias="NAESAT_N_JOBS")
    log_level: str = Field(default="WARNING", alias="NAESAT_LOG_LEVEL")

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"

    @property
    def log_level_value(self) -> int:
        import logging
        return getattr(logging, (self.log_level or "WARNING").upper(), logging.WARNING)


# Инстанс настроек
settings = Settings()

# Удобные модульные экспортируемые переменные
PRECISION_BITS = settings.precision_bits
COUNT_LIMIT_N = settings.count_limit_n
ENUM_LIMIT_N = settings.enum_limit_n
NODE_BUDGET = settings.node_budget
MAX_ITER = settings.max_iter
N_JOBS = settings.n_jobs
