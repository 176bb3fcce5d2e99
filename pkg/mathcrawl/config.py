"""
mathcrawl — Configuration
Process settings (env) and the per-run pipeline config (TOML file + env + CLI flags).
"""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from mathcrawl.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="MATHCRAWL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # ── Logging ───────────────────────────────────────────────
    log: str = "INFO"  # MATHCRAWL_LOG

    # ── Bundled resources ─────────────────────────────────────
    data_dir: Path = DATA_DIR

    # ── Debugging API ─────────────────────────────────────────
    host: str = "127.0.0.1"
    port: int = 8077
    math_model: Path | None = None  # MathScore model for POST /prefilter tier 3

    @property
    def log_level(self) -> int:
        level = logging.getLevelName(self.log.upper())
        return level if isinstance(level, int) else logging.INFO

    def data_path(self, name: str, override: Path | None = None) -> Path:
        """Return override if given, else the bundled resource path"""
        return Path(override) if override else self.data_dir / name


# ── Pipeline sections ─────────────────────────────────────────────────────────

class IngestSettings(BaseModel):
    max_record_bytes: int = Field(default=2 * 1024 * 1024, ge=1)


class PrefilterSettings(BaseModel):
    threshold: float = Field(default=0.8, gt=0.0, lt=1.0)
    keywords_path: Path | None = None
    symbols_path: Path | None = None


class ExtractionSettings(BaseModel):
    markdown_share: float = Field(default=0.5, ge=0.0, le=1.0)
    trigger_counts: list[int] = Field(default_factory=lambda: [1, 2])
    boilerplate_path: Path | None = None
    blocklist_path: Path | None = None
    render_services_path: Path | None = None
    single_dollar_max_chars: int = Field(default=500, ge=1)
    link_density_max: float = Field(default=0.25, ge=0.0, le=1.0)
    text_density_min: float = Field(default=10.0, ge=0.0)
    link_cluster_min: int = Field(default=5, ge=2)

    @field_validator("trigger_counts")
    @classmethod
    def counts_positive(cls, v):
        if not v or any(c < 1 for c in v):
            raise ValueError("trigger_counts must be a non-empty list of integers >= 1")
        return v


class FilterThresholds(BaseModel):
    lang_target: str = "en"
    lang_min: float = Field(default=0.65, ge=0.0, le=1.0)
    math_with_latex: float = Field(default=0.17, ge=0.0, le=1.0)
    math_without_latex: float = Field(default=0.8, ge=0.0, le=1.0)
    ppl_max: float = Field(default=15000.0, gt=0.0)

    # Optional character rules, off by default
    rules_enabled: bool = False
    max_symbol_ratio: float = Field(default=0.3, ge=0.0, le=1.0)
    min_mean_word_length: float = 3.0
    max_mean_word_length: float = 10.0


class DedupSettings(BaseModel):
    max_distance: int = Field(default=19, ge=0, le=64)
    feature: Literal["word", "char"] = "char"
    ngram: int = Field(default=3, ge=1)
    prior_sidecars: list[Path] = Field(default_factory=list)
    write_sidecars: bool = True


class DomainRuleSettings(BaseModel):
    blacklist_path: Path | None = None
    url_rules_path: Path | None = None


class ModelPaths(BaseModel):
    lang: Path | None = None
    math: Path | None = None
    lm: Path | None = None


class PipelineConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="MATHCRAWL_",
        env_nested_delimiter="__",
        extra="ignore",
    )

    shard_paths: list[Path] = Field(default_factory=list)
    output_dir: Path = Path("./output")
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    worker_count: int = Field(default=1, ge=1)
    limit: int | None = Field(default=None, ge=0)

    ingest: IngestSettings = Field(default_factory=IngestSettings)
    prefilter: PrefilterSettings = Field(default_factory=PrefilterSettings)
    extraction: ExtractionSettings = Field(default_factory=ExtractionSettings)
    filters: FilterThresholds = Field(default_factory=FilterThresholds)
    dedup: DedupSettings = Field(default_factory=DedupSettings)
    domains: DomainRuleSettings = Field(default_factory=DomainRuleSettings)
    models: ModelPaths = Field(default_factory=ModelPaths)

    def validate_startup(self):
        """
        Called before a run touches any shard; fails loudly, listing every problem.
        Checks: model paths configured and present, shards present.
        """
        errors = []

        for name in ("lang", "math", "lm"):
            path = getattr(self.models, name)
            if path is None:
                errors.append(f"models.{name} must be set")
            elif not Path(path).is_file():
                errors.append(f"models.{name} not found: {path}")

        for path in self.shard_paths:
            if not Path(path).is_file():
                errors.append(f"shard not found: {path}")

        for path in self.dedup.prior_sidecars:
            if not Path(path).is_file():
                errors.append(f"prior sidecar not found: {path}")

        if errors:
            for e in errors:
                logger.critical(f"CONFIG_ERROR: {e}")
            raise ConfigError(
                "Startup validation failed:\n" + "\n".join(f"  - {e}" for e in errors),
                {"errors": errors},
            )

        logger.info(f"CONFIG_VALID shards={len(self.shard_paths)} seed={self.rng_seed}")


def load_config(path: Path | str | None = None, **overrides) -> PipelineConfig:
    """
    Build a PipelineConfig from an optional TOML file plus overrides.
    Overrides with value None are ignored so unset CLI flags keep file values.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"config file is not valid TOML: {path}", {"reason": str(e)})

    data.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return PipelineConfig(**data)
    except ValidationError as e:
        errors = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError("invalid pipeline config:\n" + "\n".join(f"  - {e}" for e in errors), {"errors": errors})


settings = Settings()
