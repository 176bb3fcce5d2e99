"""
mathcrawl — Pydantic Schemas
Records that cross module boundaries: spans, extracted docs, scores, output lines, reports.
"""

from datetime import datetime
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator

SpanKind = Literal[
    "mathjax_inline",
    "mathjax_display",
    "script_tag",
    "annotation_tag",
    "mathml",
    "img_url",
    "img_alt",
    "alttext_class",
    "math_container",
    "env_equation",
    "env_align",
    "wordpress_plugin",
]

Verdict = Literal[
    "kept",
    "rejected_language",
    "rejected_mathscore",
    "rejected_perplexity",
    "rejected_rules",
]


# ── Extraction ────────────────────────────────────────────────────────────────

class MathSpan(BaseModel):
    latex: str = Field(..., description="LaTeX source, delimiters removed")
    display: bool = Field(default=False, description="Display (block) vs inline math")
    kind: SpanKind = Field(..., description="How the formula was encoded in the page")
    origin: tuple[int, int] = Field(..., description="UTF-8 byte range [start, end) in the source HTML")
    config_fallback: bool = Field(
        default=False,
        description="Delimiter span found with default delimiters after the page config failed to parse",
    )

    @field_validator("latex")
    @classmethod
    def latex_not_empty(cls, v):
        if not v.strip():
            raise ValueError("latex cannot be empty")
        return v


class ExtractionParams(BaseModel):
    format: Literal["plain", "markdown"] = "plain"
    boilerplate_trigger_count: int = Field(default=1, ge=1)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)


class ExtractedDoc(BaseModel):
    text: str
    spans: list[MathSpan] = Field(default_factory=list)
    url: str = ""
    fetch_time: Optional[datetime] = None
    params: ExtractionParams = Field(default_factory=ExtractionParams)
    kind_counts: dict[str, int] = Field(default_factory=dict)
    record_id: str = ""
    mathjax: Literal["script_import", "symbol_heuristic", "none"] = "none"


# ── Filtering ─────────────────────────────────────────────────────────────────

class FilterScores(BaseModel):
    lang: str = Field(..., description="Argmax language label")
    lang_prob: float = Field(..., ge=0.0, le=1.0)
    math_score: Optional[float] = Field(default=None, description="None when an earlier gate rejected")
    perplexity: Optional[float] = Field(default=None, description="None when an earlier gate rejected")
    has_latex: bool = False
    verdict: Verdict


# ── Output ────────────────────────────────────────────────────────────────────

class OutputRecord(BaseModel):
    text: str
    url: str
    fetch_time: datetime
    record_id: str
    params: ExtractionParams
    kind_counts: dict[str, int]
    scores: FilterScores
    fingerprint: str = Field(..., pattern=r"^[0-9a-f]{16}$")
    pipeline_version: str


class DomainStats(BaseModel):
    domain: str
    doc_count: int = Field(..., ge=0)
    char_count: int = Field(..., ge=0)
    share_docs: float = Field(..., ge=0.0, le=1.0)
    share_chars: float = Field(..., ge=0.0, le=1.0)


class StageCounts(BaseModel):
    input: int = 0
    output: int = 0
    dropped: int = 0
    errors: int = 0

    @property
    def conserved(self) -> bool:
        return self.input == self.output + self.dropped + self.errors

    def merge(self, other: "StageCounts") -> None:
        self.input += other.input
        self.output += other.output
        self.dropped += other.dropped
        self.errors += other.errors


class ShardSummary(BaseModel):
    path: str
    output: Optional[str] = None
    records: int = 0
    skipped: int = 0
    written: int = 0


class RunSummary(BaseModel):
    pipeline_version: str
    config: dict
    shards: list[ShardSummary] = Field(default_factory=list)
    stages: dict[str, StageCounts] = Field(default_factory=dict)
    ingest: dict[str, int] = Field(default_factory=dict)
    prefilter_tiers: dict[str, int] = Field(default_factory=dict)
    scorer_invocations: int = 0
    verdicts: dict[str, int] = Field(default_factory=dict)
    domain_rule_drops: dict[str, int] = Field(default_factory=dict)
    timings: dict[str, float] = Field(default_factory=dict)   # wall clock; varies between identical runs


# ── Debugging API ─────────────────────────────────────────────────────────────

class ExtractRequest(BaseModel):
    html: str = Field(..., description="Raw HTML of one page")
    url: str = Field(default="http://localhost/", description="Source URL recorded on the doc")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Extraction parameter seed")
    format: Optional[Literal["plain", "markdown"]] = Field(
        default=None, description="Force an output format instead of drawing one"
    )

    @field_validator("html")
    @classmethod
    def html_not_empty(cls, v):
        if not v.strip():
            raise ValueError("html cannot be empty")
        return v


class PrefilterRequest(BaseModel):
    html: str = Field(..., description="Raw HTML of one page")


class PrefilterResponse(BaseModel):
    keep: bool
    tier: Literal["keyword", "latex_symbol", "classifier", "rejected"]
    matched_term: Optional[str] = None
