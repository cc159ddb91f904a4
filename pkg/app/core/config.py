# Copyright 2024
# Directory: ContourMARL/app/core/config.py

"""
Process settings (environment / .env) and the run configuration (SacConfig).
Run configurations are line-oriented `key = value` files; unknown keys are rejected.
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level settings, read from CONTOUR_MARL_* variables and .env."""

    model_config = SettingsConfigDict(
        env_prefix="CONTOUR_MARL_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # -------- Run --------
    seed: Optional[int] = Field(default=None, description="Overrides the config-file seed")
    workers: int = Field(default=1, ge=1)
    output_dir: str = Field(default="runs")

    # -------- App --------
    environment: str = Field(default="development")
    log_level: str = Field(default="INFO")


settings = Settings()


def get_settings() -> Settings:
    return settings


class SacConfig(BaseModel):
    """Hyperparameters of the contour-specific SAC trainer and its networks."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # -------- Core SAC --------
    gamma_discount: float = Field(default=0.99, gt=0.0, lt=1.0)
    tau: float = Field(default=0.005, gt=0.0, le=1.0)
    batch_size: int = Field(default=128, ge=1)
    buffer_capacity: int = Field(default=1_000_000, ge=1)
    update_rounds: int = Field(default=1, ge=1)
    warmup_transitions: int = Field(default=128, ge=1)

    # -------- ERAM --------
    alpha0: float = Field(default=0.2, gt=0.0)
    beta: float = Field(default=0.5, ge=0.0)
    lambda1: float = Field(default=0.1, ge=0.0)
    lambda2: float = Field(default=0.5, ge=0.0)
    use_eram: bool = True

    # -------- Rewards --------
    w0: float = Field(default=0.5, ge=0.0)
    w1: float = Field(default=1.0, ge=0.0)
    w2: float = Field(default=1.5, ge=0.0)
    w3: float = Field(default=0.1, ge=0.0)

    # -------- Environment --------
    delta: float = Field(default=25.0, gt=0.0)
    n_points: int = Field(default=128, ge=3)
    horizon: int = Field(default=5, ge=1)
    k_neighbors: int = Field(default=4, ge=2)
    embed_dim: int = Field(default=16, ge=4)
    patch_radius: float = Field(default=4.0, gt=0.0)

    # -------- Networks --------
    hidden_dim: int = Field(default=16, ge=1)
    layers: int = Field(default=3, ge=1)
    window: int = Field(default=8, ge=1)
    gate_init: float = Field(default=0.1)
    use_fusion: bool = True
    head_hidden: int = Field(default=32, ge=1)
    critic_hidden: int = Field(default=64, ge=1)

    # -------- Optimizer / schedule --------
    lr: float = Field(default=1e-4, ge=0.0)
    lr_min: float = Field(default=1e-6, ge=0.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    epochs: int = Field(default=200, ge=0)
    episodes_per_epoch: int = Field(default=0, ge=0, description="0 = whole train split")

    # -------- Run --------
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "SacConfig":
        if self.k_neighbors % 2:
            raise ValueError(f"k_neighbors must be even, got {self.k_neighbors}")
        if self.embed_dim % 4:
            raise ValueError(f"embed_dim must be divisible by 4, got {self.embed_dim}")
        return self

    @property
    def reward_weights(self):
        from ..models.entities import RewardWeights
        return RewardWeights(w0=self.w0, w1=self.w1, w2=self.w2, w3=self.w3)

    @property
    def consistency_weights(self):
        from ..models.entities import ConsistencyWeights
        return ConsistencyWeights(lambda1=self.lambda1, lambda2=self.lambda2)

    @property
    def effective_lr_min(self) -> float:
        return min(self.lr_min, self.lr)


def parse_config_text(text: str) -> Dict[str, str]:
    """
    Parse `key = value` lines; `#` starts a comment.

    Args:
        text: Raw file contents

    Returns:
        Mapping of key to raw string value (last occurrence wins)
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def parse_overrides(pairs) -> Dict[str, str]:
    """Turn ['key=value', ...] command-line overrides into a mapping."""
    values: Dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, value = (part.strip() for part in pair.split("=", 1))
        values[key] = value
    return values


def resolve_sac_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, object]] = None,
    env_seed: Optional[int] = None,
) -> SacConfig:
    """
    Build a SacConfig from defaults < file < CONTOUR_MARL_SEED < overrides.

    Args:
        path: Optional config file
        overrides: Command-line values keyed by SacConfig field name
        env_seed: Seed from the environment (Settings.seed)

    Returns:
        Validated configuration
    """
    values: Dict[str, object] = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
    if env_seed is not None:
        values["seed"] = env_seed
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(values) - set(SacConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        config = SacConfig(**values)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    logger.debug(f"Resolved config with {len(values)} explicit keys")
    return config


def dump_config(config: BaseModel) -> str:
    """Serialize a config model back into replayable `key = value` lines."""
    lines = [f"# {type(config).__name__}"]
    for key, value in config.model_dump().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"
