from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MAX_SEED = 2**64 - 1


class TailMode(str, Enum):
    TRUNCATE = "truncate"
    ANALYTIC_TAIL = "analytic_tail"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


def combine_verdicts(verdicts: list["Verdict"]) -> "Verdict":
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS


def parse_index_range(value: Any) -> list[int]:
    """Accept "a..b" (inclusive), "a,b,c", a single int, or a list of ints."""
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        text = value.strip()
        if ".." in text:
            lo, _, hi = text.partition("..")
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError as e:
                raise ValueError(f"Range must look like 'a..b', got {value!r}") from e
            if hi_i < lo_i:
                raise ValueError(f"Empty range {value!r}: upper end below lower end")
            return list(range(lo_i, hi_i + 1))
        if not text:
            return []
        try:
            return [int(part) for part in text.split(",") if part.strip()]
        except ValueError as e:
            raise ValueError(f"Range must be 'a..b' or a comma list, got {value!r}") from e
    return [int(v) for v in value]


class RhoParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float = 2.5
    gamma: float = 0.5
    n_max: int = 60
    tail_mode: TailMode = TailMode.ANALYTIC_TAIL

    @field_validator("p")
    @classmethod
    def validate_p(cls, v: float) -> float:
        if not 2.0 < v < 3.0:
            raise ValueError(f"p must lie in (2, 3), got {v}")
        return v

    @field_validator("n_max")
    @classmethod
    def validate_n_max(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"n_max must be >= 1, got {v}")
        return v

    @model_validator(mode="after")
    def validate_gamma(self) -> "RhoParams":
        if self.gamma <= self.p / 2 - 1:
            raise ValueError(
                f"gamma must exceed p/2 - 1 = {self.p / 2 - 1:g}, got {self.gamma}"
            )
        return self


class RateCheckSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    dim: int = 2
    rho: RhoParams = Field(default_factory=RhoParams)
    q: float = 2.0
    q_values: tuple[float, ...] = (2.0, 4.0)
    n_tilde: int = 1
    rate_n_tilde: int = 6
    beta: float = 0.01
    theta: float = 0.02
    delta: float = 0.5
    eps: float = 0.1
    m_range: tuple[int, ...] = tuple(range(2, 11))
    n_range: tuple[int, ...] = tuple(range(3, 13))
    samples: int = 10_000
    seed: int = 0
    tol: float = 0.15
    order: int = 1
    anchor_level_cap: int = 12
    chunk_size: int = 2000
    threads: int = 1

    @field_validator("m_range", "n_range", mode="before")
    @classmethod
    def parse_ranges(cls, v: Any) -> tuple[int, ...]:
        return tuple(parse_index_range(v))

    @field_validator("m_range", "n_range")
    @classmethod
    def validate_ranges(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v:
            raise ValueError("index range must not be empty")
        if min(v) < 0 or max(v) > 23:
            raise ValueError(f"indices must lie in 0..23, got {min(v)}..{max(v)}")
        return tuple(sorted(set(v)))

    @field_validator("dim")
    @classmethod
    def validate_dim(cls, v: int) -> int:
        if v < 1 or v > 8:
            raise ValueError(f"dim: 1-8, got {v}")
        return v

    @field_validator("q")
    @classmethod
    def validate_q(cls, v: float) -> float:
        if v < 1:
            raise ValueError(f"q must be >= 1, got {v}")
        return v

    @field_validator("n_tilde", "rate_n_tilde")
    @classmethod
    def validate_n_tilde(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"n_tilde must be a positive integer, got {v}")
        return v

    @field_validator("beta", "theta", "delta", "eps", "tol")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("samples")
    @classmethod
    def validate_samples(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"samples must be positive, got {v}")
        return v

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if v < 0 or v > MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {v}")
        return v

    @field_validator("order")
    @classmethod
    def validate_order(cls, v: int) -> int:
        if v not in (1, 2):
            raise ValueError(f"derivative order must be 1 or 2, got {v}")
        return v

    @field_validator("threads", "chunk_size", "anchor_level_cap")
    @classmethod
    def validate_counts(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"must be >= 1, got {v}")
        return v

    @property
    def p(self) -> float:
        return self.rho.p

    @property
    def gamma(self) -> float:
        return self.rho.gamma


ANCHOR_SEPARATOR = ": "


def cite(reference: str, bound: str) -> str:
    return f"{reference}{ANCHOR_SEPARATOR}{bound}"


def split_anchor(anchor: str) -> tuple[str, str]:
    reference, sep, bound = anchor.partition(ANCHOR_SEPARATOR)
    if not sep:
        return "", anchor
    return reference, bound


class EstimateRow(BaseModel):
    lemma_id: str
    statistic: str
    m: int | None = None
    n: int | None = None
    q: float | None = None
    estimate: float
    stderr: float = 0.0
    samples: int = 1
    slope: float | None = None
    verdict: Verdict | None = None
    anchor: str = ""
    kind: str = "moment"

    @field_validator("stderr")
    @classmethod
    def validate_stderr(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"standard error must be >= 0, got {v}")
        return v

    @field_validator("samples")
    @classmethod
    def validate_samples(cls, v: int) -> int:
        if v <= 0:
            raise ValueError(f"samples must be positive, got {v}")
        return v

    @property
    def citation(self) -> tuple[str, str]:
        """(reference, bound) parts of the anchor column."""
        return split_anchor(self.anchor)


class RunManifest(BaseModel):
    command: str
    version: str
    seed: int
    started_at: str
    config: dict[str, Any]
    outputs: list[str] = Field(default_factory=list)
    verdict: Verdict | None = None
