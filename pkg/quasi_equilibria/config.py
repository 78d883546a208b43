from __future__ import annotations

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .solvers import SolveConfig
from .verify import VerifyConfig
from .vi import VIConfig


class Settings(BaseSettings):
    """Runtime defaults, read from QPE_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="QPE_", extra="ignore")

    residual_tol: float = Field(1e-8, gt=0)
    vi_step: float = Field(0.5, gt=0)
    vi_max_iters: int = Field(10_000, gt=0)
    multistart: int = Field(17, gt=0)
    cluster_tol: float = Field(1e-6, gt=0)
    max_starts: int = Field(64, gt=1)
    settle_after: int = Field(6, ge=0)
    grid: int = Field(41, ge=2)
    threads: int = Field(1, gt=0)
    log_level: str = "WARNING"

    def vi_config(self, **overrides) -> VIConfig:
        fields = {
            "residual_tol": self.residual_tol,
            "step": self.vi_step,
            "max_iters": self.vi_max_iters,
            "multistart": self.multistart,
            "cluster_tol": self.cluster_tol,
            "max_starts": self.max_starts,
            "settle_after": self.settle_after,
        }
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return VIConfig(**fields)

    def solve_config(self, vi: VIConfig | None = None, **overrides) -> SolveConfig:
        fields = {"grid": self.grid, "threads": self.threads, "vi": vi or self.vi_config()}
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return SolveConfig(**fields)

    def verify_config(self, vi: VIConfig | None = None, **overrides) -> VerifyConfig:
        fields = {"threads": self.threads, "vi": vi or self.vi_config()}
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return VerifyConfig(**fields)
