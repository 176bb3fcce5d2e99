"""Tests for the three-tier prefilter cascade."""

import math

import numpy as np
import pytest

from mathcrawl.core.wordlists import get_default_wordlists
from mathcrawl.services.classifier import ClassifierModel
from mathcrawl.services.prefilter import MathScorer, find_latex_symbol, prefilter_page, rough_plain_text
from tests.fixture_pages import MATH_PAGES, PLAIN_PAGES, page


def fixed_scorer(p_math: float) -> MathScorer:
    """Scorer returning p_math for any non-empty text (features are L1 normalized)."""
    model = ClassifierModel.zeros(("math", "other"), hash_bits=8)
    model.weights[:, 0] = math.log(p_math / (1.0 - p_math))
    return MathScorer(model)


@pytest.fixture
def keywords():
    return get_default_wordlists().keywords


class TestTiers:
    """Tier order and short-circuiting."""

    def test_keyword_tier(self, keywords):
        html = page("<p>Hello</p>", '<script src="/MathJax.js"></script>')
        d = prefilter_page(html, keywords)
        assert (d.keep, d.tier, d.matched_term) == (True, "keyword", "MathJax")

    def test_keyword_match_is_case_sensitive(self, keywords):
        terms = keywords.terms
        assert "MATHJAX" not in terms
        d = prefilter_page(page("<p>MATHJAX is great</p>"), keywords)
        assert not d.keep

    def test_latex_symbol_tier(self, keywords):
        d = prefilter_page(page(r"<p>Then \frac{a}{b} is smaller.</p>"), keywords)
        assert (d.keep, d.tier, d.matched_term) == (True, "latex_symbol", r"\frac")

    def test_symbol_needs_whole_command(self, keywords):
        d = prefilter_page(page(r"<p>A \fracture in the wall.</p>"), keywords)
        assert not d.keep

    def test_symbols_in_scripts_and_comments_are_invisible(self, keywords):
        html = page(r'<!-- \sum --><script>var s = "\\alpha";</script><style>.x{}</style><p>Plain.</p>')
        assert prefilter_page(html, keywords).tier == "rejected"

    def test_math_script_content_is_visible(self, keywords):
        html = page(r'<p><script type="math/tex">\int f</script></p>')
        d = prefilter_page(html, keywords)
        assert d.tier == "latex_symbol"

    def test_classifier_tier(self, keywords):
        d = prefilter_page(page("<p>A plain sentence.</p>"), keywords, fixed_scorer(0.9))
        assert (d.keep, d.tier) == (True, "classifier")

    def test_classifier_threshold_is_inclusive(self, keywords):
        d = prefilter_page(page("<p>A plain sentence.</p>"), keywords, fixed_scorer(0.5), threshold=0.5)
        assert d.keep

    def test_classifier_below_threshold_rejects(self, keywords):
        d = prefilter_page(page("<p>A plain sentence.</p>"), keywords, fixed_scorer(0.5))
        assert (d.keep, d.tier) == (False, "rejected")

    def test_scorer_not_called_when_cheap_tier_hits(self, keywords):
        scorer = fixed_scorer(0.9)
        prefilter_page(MATH_PAGES[0].html, keywords, scorer)
        assert scorer.invocations == 0
        prefilter_page(PLAIN_PAGES[0].html, keywords, scorer)
        assert scorer.invocations == 1

    def test_without_scorer_tier_three_is_skipped(self, keywords):
        assert prefilter_page(page("<p>text</p>"), keywords, None).tier == "rejected"

    def test_empty_page(self, keywords):
        assert prefilter_page("", keywords).tier == "rejected"

    @pytest.mark.parametrize("threshold", [0.0, 1.0, 1.5])
    def test_bad_threshold(self, keywords, threshold):
        with pytest.raises(ValueError):
            prefilter_page("<p>x</p>", keywords, threshold=threshold)


class TestRecall:
    """Fixture corpus: every math page passes, every plain page is dropped."""

    @pytest.mark.parametrize("web", MATH_PAGES, ids=lambda p: p.url)
    def test_math_pages_pass(self, keywords, web):
        assert prefilter_page(web.html, keywords).keep

    @pytest.mark.parametrize("web", PLAIN_PAGES, ids=lambda p: p.url)
    def test_plain_pages_rejected(self, keywords, web):
        assert prefilter_page(web.html, keywords).tier == "rejected"


class TestHelpers:
    def test_rough_plain_text(self):
        html = "<p>a &amp; b</p>\n<style>p{}</style><div>  c </div>"
        assert rough_plain_text(html) == "a & b c"

    def test_find_latex_symbol_requires_backslash(self):
        assert find_latex_symbol("alpha beta", (r"\alpha",)) is None
        assert find_latex_symbol(r"x \alpha y", (r"\alpha",)) == r"\alpha"

    def test_scorer_requires_math_class(self):
        model = ClassifierModel.zeros(("en", "fr"), hash_bits=4)
        with pytest.raises(ValueError):
            MathScorer(model)

    def test_scorer_probability(self):
        np.testing.assert_allclose(fixed_scorer(0.3).score("some words here"), 0.3, rtol=1e-9)
