"""
mathcrawl — Filter Stack
Language ID, MathScore with separate thresholds for docs with and without LaTeX,
then a perplexity ceiling. Gates run in that order; the first failure is recorded.
"""

import logging
import re
from typing import Optional

from mathcrawl.config import FilterThresholds
from mathcrawl.core.exceptions import EmptyDocumentError
from mathcrawl.models.schemas import ExtractedDoc, FilterScores, Verdict
from mathcrawl.services.classifier import ClassifierModel, predict_label
from mathcrawl.services.math_extract import strip_math
from mathcrawl.services.ngram_lm import NgramModel, perplexity
from mathcrawl.services.prefilter import MathScorer

logger = logging.getLogger(__name__)

UNKNOWN_LANG = "unknown"

_SYMBOL = re.compile(r"[^\w\s]")


def math_threshold(has_latex: bool, cfg: FilterThresholds) -> float:
    return cfg.math_with_latex if has_latex else cfg.math_without_latex


def rules_pass(text: str, cfg: FilterThresholds) -> bool:
    """Character rules: symbol ratio ceiling and mean word length bounds."""
    stripped = "".join(text.split())
    if not stripped:
        return False
    if len(_SYMBOL.findall(stripped)) / len(stripped) > cfg.max_symbol_ratio:
        return False
    words = text.split()
    mean = sum(len(w) for w in words) / len(words)
    return cfg.min_mean_word_length <= mean <= cfg.max_mean_word_length


def evaluate_gates(
    lang: str,
    lang_prob: float,
    math_score: Optional[float],
    perplexity_score: Optional[float],
    has_latex: bool,
    cfg: Optional[FilterThresholds] = None,
    rules_ok: bool = True,
) -> Verdict:
    """
    Pure verdict from precomputed scores. Thresholds are strict: a MathScore
    equal to its threshold is rejected, a perplexity equal to ppl_max is kept.
    A missing score counts as a failure of its gate.
    """
    cfg = cfg or FilterThresholds()
    if lang != cfg.lang_target or lang_prob < cfg.lang_min:
        return "rejected_language"
    if math_score is None or not math_score > math_threshold(has_latex, cfg):
        return "rejected_mathscore"
    if perplexity_score is None or perplexity_score > cfg.ppl_max:
        return "rejected_perplexity"
    if cfg.rules_enabled and not rules_ok:
        return "rejected_rules"
    return "kept"


def apply_filters(
    doc: ExtractedDoc,
    lang_model: ClassifierModel,
    math_model: ClassifierModel | MathScorer,
    lm: NgramModel,
    cfg: Optional[FilterThresholds] = None,
) -> FilterScores:
    """
    Score lazily in gate order; scores after the first failing gate stay None.
    Language ID and MathScore see the text with math removed, perplexity the full text.
    """
    cfg = cfg or FilterThresholds()
    has_latex = bool(doc.spans)

    if not doc.text.strip():
        return FilterScores(lang=UNKNOWN_LANG, lang_prob=0.0, has_latex=has_latex, verdict="rejected_language")

    prose = " ".join(strip_math(doc.text).split())
    lang, lang_prob = predict_label(lang_model, prose)

    def scores(verdict: Verdict, math_score=None, ppl=None) -> FilterScores:
        return FilterScores(
            lang=lang,
            lang_prob=min(max(lang_prob, 0.0), 1.0),
            math_score=math_score,
            perplexity=ppl,
            has_latex=has_latex,
            verdict=verdict,
        )

    if evaluate_gates(lang, lang_prob, 1.0, 0.0, True, cfg) == "rejected_language":
        return scores("rejected_language")

    if isinstance(math_model, MathScorer):
        math_score = math_model.score(prose)
    else:
        math_score = MathScorer(math_model).score(prose)
    if not math_score > math_threshold(has_latex, cfg):
        return scores("rejected_mathscore", math_score)

    try:
        ppl = perplexity(lm, doc.text)
    except EmptyDocumentError:
        logger.debug(f"FILTER_EMPTY_FOR_LM url={doc.url}")
        return scores("rejected_perplexity", math_score)

    verdict = evaluate_gates(
        lang, lang_prob, math_score, ppl, has_latex, cfg,
        rules_ok=rules_pass(prose, cfg) if cfg.rules_enabled else True,
    )
    return scores(verdict, math_score, ppl)
