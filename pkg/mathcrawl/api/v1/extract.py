"""
mathcrawl — Extraction Endpoints
POST /api/v1/extract   — HTML in, ExtractedDoc out.
POST /api/v1/prefilter — HTML in, prefilter tier decision out.
"""

import logging
from typing import Optional

from fastapi import APIRouter

from mathcrawl.config import ExtractionSettings, settings
from mathcrawl.core.exceptions import ModelLoadError
from mathcrawl.core.wordlists import get_default_wordlists
from mathcrawl.models.schemas import ExtractedDoc, ExtractRequest, PrefilterRequest, PrefilterResponse
from mathcrawl.services.classifier import load_model
from mathcrawl.services.content_extract import draw_params, extract_document
from mathcrawl.services.prefilter import MathScorer, prefilter_page

router = APIRouter()
logger = logging.getLogger(__name__)

# Module-level MathScore scorer (loaded on first use when MATHCRAWL_MATH_MODEL is set)
_scorer: Optional[MathScorer] = None


def get_scorer() -> Optional[MathScorer]:
    global _scorer
    if _scorer is None and settings.math_model:
        try:
            _scorer = MathScorer(load_model(settings.math_model))
        except ValueError as e:
            raise ModelLoadError(str(e), {"path": str(settings.math_model)})
    return _scorer


@router.post("/extract", response_model=ExtractedDoc)
def extract(req: ExtractRequest):
    """
    Run the full extraction chain on one page.
    Format and boilerplate trigger are drawn from the seed unless format is given.
    """
    cfg = ExtractionSettings()
    params = draw_params(req.seed, cfg.markdown_share, cfg.trigger_counts)
    if req.format:
        params = params.model_copy(update={"format": req.format})

    doc = extract_document(req.html, req.url, None, params, get_default_wordlists(), cfg)
    logger.info(
        f"API_EXTRACT url={req.url} format={params.format} spans={len(doc.spans)} chars={len(doc.text)}"
    )
    return doc


@router.post("/prefilter", response_model=PrefilterResponse)
def prefilter(req: PrefilterRequest):
    decision = prefilter_page(req.html, get_default_wordlists().keywords, get_scorer())
    return PrefilterResponse(keep=decision.keep, tier=decision.tier, matched_term=decision.matched_term)
