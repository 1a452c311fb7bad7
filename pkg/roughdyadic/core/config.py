from pathlib import Path
from typing import Annotated, Any

from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import (
    BaseSettings,
    NoDecode,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from roughdyadic.core.errors import ConfigError
from roughdyadic.models import RateCheckSpec, RhoParams, TailMode, parse_index_range

COMMANDS = ("simulate", "verify", "solve", "integrate", "report")


class RunConfig(BaseSettings):
    command: str | None = None

    dim: int = 2
    resolution: int = 12
    seed: int = 0

    p: float = 2.5
    gamma: float = 0.5
    n_max: int = 60
    tail_mode: TailMode = TailMode.ANALYTIC_TAIL

    lemmas: Annotated[list[str], NoDecode] = []
    m_range: Annotated[list[int], NoDecode] = list(range(2, 11))
    n_range: Annotated[list[int], NoDecode] = list(range(3, 13))
    samples: int | None = None
    q: float = 2.0
    q_values: list[float] = [2.0, 4.0]
    beta: float = 0.01
    theta: float = 0.02
    delta: float = 0.5
    eps: float = 0.1
    n_tilde: int = 1
    rate_n_tilde: int = 6
    order: int = 1
    tol: float = 0.15

    cases: Annotated[list[str], NoDecode] = []
    substeps: int = 4

    out: Path = Path("runs")
    threads: int = 1
    chunk_size: int = 2000
    anchor_level_cap: int = 12

    model_config = SettingsConfigDict(
        env_prefix="ROUGHDYADIC_",
        env_file=".env",
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # flags > --config file > environment > .env
        return (
            init_settings,
            TomlConfigSettingsSource(settings_cls),
            env_settings,
            dotenv_settings,
        )

    @field_validator("m_range", "n_range", mode="before")
    @classmethod
    def parse_ranges(cls, v: Any) -> list[int]:
        return parse_index_range(v)

    @field_validator("lemmas", "cases", mode="before")
    @classmethod
    def parse_names(cls, v: Any) -> list[str]:
        if isinstance(v, str):
            return [part.strip() for part in v.split(",") if part.strip()]
        return list(v)

    @field_validator("command")
    @classmethod
    def validate_command(cls, v: str | None) -> str | None:
        if v is not None and v not in COMMANDS:
            raise ValueError(f"command must be one of {', '.join(COMMANDS)}, got {v!r}")
        return v

    @field_validator("resolution")
    @classmethod
    def validate_resolution(cls, v: int) -> int:
        if v < 0 or v > 24:
            raise ValueError(f"resolution: 0-24, got {v}")
        return v

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"threads must be >= 1, got {v}")
        return v

    @field_validator("substeps")
    @classmethod
    def validate_substeps(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"substeps must be >= 1, got {v}")
        return v

    @model_validator(mode="after")
    def validate_downstream(self) -> "RunConfig":
        # re-validate the parameter sets the pipelines will build
        try:
            self.rate_check_spec(samples=self.samples or 10_000)
        except ValidationError as e:
            raise ValueError(str(e)) from e
        return self

    def rho_params(self) -> RhoParams:
        return RhoParams(
            p=self.p, gamma=self.gamma, n_max=self.n_max, tail_mode=self.tail_mode
        )

    def rate_check_spec(self, samples: int) -> RateCheckSpec:
        return RateCheckSpec(
            dim=self.dim,
            rho=self.rho_params(),
            q=self.q,
            q_values=tuple(self.q_values),
            n_tilde=self.n_tilde,
            rate_n_tilde=self.rate_n_tilde,
            beta=self.beta,
            theta=self.theta,
            delta=self.delta,
            eps=self.eps,
            m_range=tuple(self.m_range),
            n_range=tuple(self.n_range),
            samples=samples,
            seed=self.seed,
            tol=self.tol,
            order=self.order,
            anchor_level_cap=self.anchor_level_cap,
            chunk_size=self.chunk_size,
            threads=self.threads,
        )


def load_settings(config_file: Path | None = None, **overrides: Any) -> RunConfig:
    """Build a RunConfig from flags (`overrides`), an optional TOML file and the environment."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if config_file is None:
        cls: type[RunConfig] = RunConfig
    else:
        if not config_file.is_file():
            raise ConfigError(f"Config file not found: {config_file}")

        class FileConfig(RunConfig):
            model_config = SettingsConfigDict(toml_file=config_file)

        cls = FileConfig

    try:
        return cls(**overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
    except ValueError as e:
        # unreadable TOML surfaces as a decode error (a ValueError subclass)
        raise ConfigError(f"Could not read {config_file}: {e}") from e


settings = RunConfig()
