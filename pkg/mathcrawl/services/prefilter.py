"""
mathcrawl — Prefilter
Cheap high-recall cascade: keyword substrings, then LaTeX commands, then MathScore.
"""

import html as htmllib
import logging
import re
import threading
from dataclasses import dataclass
from typing import Literal, Optional

from mathcrawl.core.wordlists import KeywordList
from mathcrawl.services.classifier import MATH_LABEL, ClassifierModel, command_pattern, predict

logger = logging.getLogger(__name__)

Tier = Literal["keyword", "latex_symbol", "classifier", "rejected"]

# Invisible content: comments, styles, and scripts that do not carry math
_INVISIBLE = re.compile(
    r"<!--.*?-->|<style\b.*?</style\s*>|<script\b(?![^>]*math/)[^>]*>.*?</script\s*>",
    re.IGNORECASE | re.DOTALL,
)
_TAG = re.compile(r"<[^>]*>")
_SPACE = re.compile(r"\s+")


@dataclass(frozen=True)
class PrefilterDecision:
    keep: bool
    tier: Tier
    matched_term: Optional[str] = None


class MathScorer:
    """MathScore wrapper with an invocation counter; safe to share across threads."""

    def __init__(self, model: ClassifierModel, label: str = MATH_LABEL):
        if label not in model.class_names:
            raise ValueError(f"scorer model has no '{label}' class")
        self.model = model
        self.label = label
        self.invocations = 0
        self._lock = threading.Lock()

    def score(self, text: str) -> float:
        with self._lock:
            self.invocations += 1
        return predict(self.model, text)[self.label]


def rough_plain_text(html: str) -> str:
    """Tags stripped, entities decoded, whitespace collapsed; no boilerplate removal."""
    text = _INVISIBLE.sub(" ", html)
    text = _TAG.sub(" ", text)
    return _SPACE.sub(" ", htmllib.unescape(text)).strip()


def find_latex_symbol(text: str, symbols: tuple[str, ...]) -> Optional[str]:
    """First listed LaTeX command occurring in text, or None."""
    if not symbols or "\\" not in text:
        return None
    m = command_pattern(symbols).search(text)
    return m.group(0) if m else None


def prefilter_page(
    html: str,
    keywords: KeywordList,
    scorer: Optional[MathScorer] = None,
    threshold: float = 0.8,
    plain_text: Optional[str] = None,
) -> PrefilterDecision:
    """
    Tier order, short-circuiting:
    keyword substring -> backslash pretest + LaTeX command -> MathScore >= threshold -> rejected.
    Without a scorer the classifier tier is skipped.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    if not html:
        return PrefilterDecision(False, "rejected")

    for term in keywords.terms:
        if term in html:
            return PrefilterDecision(True, "keyword", term)

    if "\\" in html:
        plain_text = rough_plain_text(html) if plain_text is None else plain_text
        symbol = find_latex_symbol(plain_text, keywords.symbols)
        if symbol:
            return PrefilterDecision(True, "latex_symbol", symbol)

    if scorer is not None:
        plain_text = rough_plain_text(html) if plain_text is None else plain_text
        if plain_text and scorer.score(plain_text) >= threshold:
            return PrefilterDecision(True, "classifier")

    return PrefilterDecision(False, "rejected")
