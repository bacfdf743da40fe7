"""
Pipeline settings.

Precedence: explicit overrides (command-line flags) > TRLF_* environment
variables > TOML config file > defaults. Nested sections use `__` in
environment variables, e.g. TRLF_ENV__STEP_SIZE_MM=0.5.
"""

from pathlib import Path
from typing import Any, Optional

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource

from tractrlf.core.digest import config_hash
from tractrlf.core.errors import MissingArtifactError, UsageError
from tractrlf.schemas.env import EnvConfig
from tractrlf.schemas.mrm import MRMConfig
from tractrlf.schemas.phantom import PhantomConfig
from tractrlf.schemas.post import CleanConfig
from tractrlf.schemas.sh import PeakConfig
from tractrlf.schemas.td3 import TD3Config
from tractrlf.schemas.traj import TrajConfig
from tractrlf.schemas.trlf import TRLFConfig


class PipelineSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="TRLF_", env_nested_delimiter="__", extra="forbid")

    env: EnvConfig = Field(default_factory=EnvConfig)
    td3: TD3Config = Field(default_factory=TD3Config)
    traj: TrajConfig = Field(default_factory=TrajConfig)
    trlf: TRLFConfig = Field(default_factory=TRLFConfig)
    mrm: MRMConfig = Field(default_factory=MRMConfig)
    post: CleanConfig = Field(default_factory=CleanConfig)
    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    peaks: PeakConfig = Field(default_factory=PeakConfig)

    rng_seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    debug: bool = False
    log_level: str = "INFO"
    workdir: Path = Path("runs")

    @classmethod
    def settings_customise_sources(
        cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings
    ):
        sources = [init_settings, env_settings]
        if settings_cls.model_config.get("toml_file"):
            sources.append(TomlConfigSettingsSource(settings_cls))
        return tuple(sources)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    @property
    def config_hash(self) -> str:
        # workdir and verbosity do not change any artifact
        payload = {k: v for k, v in self.resolved().items() if k not in ("workdir", "log_level", "threads")}
        return config_hash(payload)


def load_settings(config_path: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None) -> PipelineSettings:
    """Resolve settings from an optional TOML file, the environment and explicit overrides."""
    cls = PipelineSettings
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.exists():
            raise MissingArtifactError("config", config_path)

        class FileSettings(PipelineSettings):
            model_config = SettingsConfigDict(toml_file=str(config_path))

        cls = FileSettings
    try:
        return cls(**(overrides or {}))
    except ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
