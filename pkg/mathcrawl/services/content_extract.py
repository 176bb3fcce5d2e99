"""
mathcrawl — Content Extraction
DOM processing, main-content selection and line processing over placeholder-bearing HTML.
Extraction parameters are drawn per document from a seed.
"""

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence, Union

import lxml.html
import mmh3
import numpy as np
from lxml import etree

from mathcrawl.config import ExtractionSettings
from mathcrawl.core.wordlists import Wordlists, get_default_wordlists
from mathcrawl.models.schemas import ExtractedDoc, ExtractionParams, MathSpan
from mathcrawl.services.math_extract import PLACEHOLDER, PLACEHOLDER_PREFIX, detect_mathjax, extract_math

logger = logging.getLogger(__name__)

MARK = "data-mathcrawl"
MARK_LEVEL = "data-mathcrawl-level"

_REMOVED_TAGS = (
    "head", "script", "style", "noscript", "nav", "footer", "aside", "form",
    "button", "input", "select", "textarea", "iframe", "svg", "template", "object", "embed",
)
_BLOCK_TAGS = frozenset({
    "address", "article", "aside", "blockquote", "body", "caption", "center", "dd", "details",
    "dialog", "dir", "div", "dl", "dt", "fieldset", "figcaption", "figure", "h1", "h2", "h3",
    "h4", "h5", "h6", "header", "hr", "li", "main", "menu", "ol", "p", "pre", "section",
    "summary", "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
})
# Inline formatting does not count against text density
_FORMATTING_TAGS = frozenset({
    "abbr", "b", "bdi", "bdo", "big", "cite", "code", "del", "dfn", "em", "font", "i", "ins",
    "kbd", "mark", "q", "s", "samp", "small", "span", "strike", "strong", "sub", "sup", "time",
    "tt", "u", "var",
})
_HEADER_TAGS = {"h1": 1, "h2": 2, "h3": 3, "h4": 4, "h5": 5, "h6": 6}
_KEEP_ALWAYS = frozenset({"html", "body", "main", "article"})

_XML_DECL = re.compile(r"^\s*<\?xml[^>]*\?>")
_HIDDEN_STYLE = re.compile(r"display\s*:\s*none|visibility\s*:\s*hidden", re.IGNORECASE)
_SEPARATOR = re.compile(r"^[\s|,/·•»>\-–—]*$")
_SEGMENTS = re.compile(r"[-_]")
_MD_HEADER = re.compile(r"^#{1,6} ")


@dataclass
class ExtractedLine:
    text: str
    is_header: bool = False


# ── DOM processing ────────────────────────────────────────────────────────────

def _parse(html: str):
    html = _XML_DECL.sub("", html, count=1)
    try:
        return lxml.html.document_fromstring(html)
    except (etree.ParserError, ValueError):
        return lxml.html.document_fromstring("<html><body></body></html>")


def _holds_math(el) -> bool:
    if not isinstance(el.tag, str):
        return False
    return any(PLACEHOLDER_PREFIX in t for t in el.itertext())


def _drop(el) -> None:
    """Remove el, keeping its tail text in place."""
    parent = el.getparent()
    if parent is None:
        return
    if el.tail:
        prev = el.getprevious()
        if prev is not None:
            prev.tail = (prev.tail or "") + el.tail
        else:
            parent.text = (parent.text or "") + el.tail
    parent.remove(el)


def _hidden(el) -> bool:
    if el.get("hidden") is not None:
        return True
    if (el.get("aria-hidden") or "").strip().lower() == "true":
        return True
    return bool(_HIDDEN_STYLE.search(el.get("style") or ""))


def _blocklisted(el, blocklist: frozenset[str]) -> bool:
    if el.tag in _KEEP_ALWAYS:
        return False
    tokens = (el.get("class") or "").lower().split() + (el.get("id") or "").lower().split()
    for token in tokens:
        if token in blocklist:
            return True
        parts = [p for p in _SEGMENTS.split(token) if p]
        if len(parts) > 1 and (parts[0] in blocklist or parts[-1] in blocklist):
            return True
    return False


def _text_of(el) -> str:
    return " ".join(el.text_content().split())


def _is_link_item(el) -> bool:
    if el.tag == "a":
        return True
    if el.tag in ("li", "span"):
        links = el.findall(".//a")
        return len(links) == 1 and _text_of(el) == _text_of(links[0])
    return False


def _link_clusters(root, min_size: int) -> list:
    """Runs of >= min_size sibling link items with only separators between them."""
    clusters = []
    for parent in root.iter():
        if not isinstance(parent.tag, str):
            continue
        run: list = []
        for child in parent:
            if not isinstance(child.tag, str):
                continue
            if _is_link_item(child):
                if run and not _SEPARATOR.match(run[-1].tail or ""):
                    if len(run) >= min_size:
                        clusters.append(run)
                    run = []
                run.append(child)
            else:
                if len(run) >= min_size:
                    clusters.append(run)
                run = []
        if len(run) >= min_size:
            clusters.append(run)
    return clusters


def _is_data_table(el) -> bool:
    """Layout tables (nested tables or block content in cells) are walked, not annotated."""
    return el.find(".//table") is None and next(
        el.iter("p", "div", "ul", "ol", "pre", "blockquote"), None
    ) is None


def process_dom(html: str, lists: Optional[Wordlists] = None, cfg: Optional[ExtractionSettings] = None):
    """
    Parse (never rejects) and clean a page: drop invisible elements, blocklisted
    class/id elements and link clusters, then mark code, tables and headers.
    Elements that hold a math placeholder are never removed.
    """
    lists = lists or get_default_wordlists()
    cfg = cfg or ExtractionSettings()
    root = _parse(html)
    blocklist = frozenset(lists.blocklist)

    for el in list(root.iter(etree.Comment, etree.ProcessingInstruction)):
        _drop(el)

    for el in list(root.iter(*_REMOVED_TAGS)):
        if not _holds_math(el):
            _drop(el)

    for el in list(root.iter()):
        if not isinstance(el.tag, str) or el.getparent() is None:
            continue
        if (_hidden(el) or _blocklisted(el, blocklist)) and not _holds_math(el):
            _drop(el)

    for run in _link_clusters(root, cfg.link_cluster_min):
        for el in run:
            if not _holds_math(el):
                _drop(el)

    for el in root.iter("pre"):
        el.set(MARK, "code")
    for el in root.iter("table"):
        if _is_data_table(el):
            el.set(MARK, "table")
    for el in root.iter(*_HEADER_TAGS):
        el.set(MARK, "header")
        el.set(MARK_LEVEL, str(_HEADER_TAGS[el.tag]))
    return root


# ── Main-content selection ────────────────────────────────────────────────────

@dataclass
class _Block:
    item: bool = False
    pieces: list[str] = field(default_factory=list)
    link_chars: int = 0
    tags: int = 0

    def add(self, text: str, link: bool) -> None:
        self.pieces.append(text)
        if link:
            self.link_chars += len(text.strip())

    @property
    def text(self) -> str:
        return " ".join("".join(self.pieces).split())


class _Walker:
    """Collects blocks in document order; each finished block is a list of output lines."""

    def __init__(self, params: ExtractionParams, cfg: ExtractionSettings):
        self.markdown = params.format == "markdown"
        self.cfg = cfg
        self.blocks: list[list[ExtractedLine]] = []
        self.cur = _Block()
        self.dropped = 0

    def flush(self, item: bool = False) -> None:
        block, self.cur = self.cur, _Block(item=item)
        text = block.text
        if not text:
            return
        if PLACEHOLDER_PREFIX not in text:
            link_density = block.link_chars / len(text)
            text_density = len(text) / block.tags if block.tags else float("inf")
            if link_density > self.cfg.link_density_max or text_density < self.cfg.text_density_min:
                self.dropped += 1
                return
        if block.item and self.markdown:
            text = "- " + text
        self.blocks.append([ExtractedLine(text)])

    def header(self, el) -> None:
        text = _text_of(el)
        if not text:
            return
        if self.markdown:
            text = "#" * int(el.get(MARK_LEVEL, "1")) + " " + text
        self.blocks.append([ExtractedLine(text, is_header=True)])

    def code(self, el) -> None:
        lines = [line.rstrip() for line in el.text_content().strip("\n").splitlines()]
        if not any(lines):
            return
        if self.markdown:
            lines = ["```"] + lines + ["```"]
        self.blocks.append([ExtractedLine(line) for line in lines])

    def table(self, el) -> None:
        rows = []
        for tr in el.iter("tr"):
            cells = [_text_of(td) for td in tr if td.tag in ("td", "th")]
            if any(cells):
                rows.append(cells)
        if not rows:
            return
        if not self.markdown:
            self.blocks.append([ExtractedLine("\t".join(r)) for r in rows])
            return
        width = max(len(r) for r in rows)
        lines = []
        for i, r in enumerate(rows):
            r = r + [""] * (width - len(r))
            lines.append("| " + " | ".join(c.replace("|", "\\|") for c in r) + " |")
            if i == 0:
                lines.append("|" + " --- |" * width)
        self.blocks.append([ExtractedLine(line) for line in lines])

    def walk(self, el, link: bool = False, item: bool = False) -> None:
        if not isinstance(el.tag, str):
            return
        mark = el.get(MARK)
        if mark in ("header", "code", "table"):
            self.flush(item)
            getattr(self, mark)(el)
            return

        tag = el.tag
        block = tag in _BLOCK_TAGS
        if block:
            self.flush(item or tag == "li")
        elif tag == "br":
            self.flush(item)
            return
        elif tag not in _FORMATTING_TAGS:
            self.cur.tags += 1

        inner_link = link or tag == "a"
        inner_item = item or tag == "li"
        if el.text:
            self.cur.add(el.text, inner_link)
        for child in el:
            self.walk(child, inner_link, inner_item)
            if child.tail:
                self.cur.add(child.tail, inner_link)
        if block:
            self.flush(item)


def extract_main_text(tree, params: ExtractionParams, cfg: Optional[ExtractionSettings] = None
                      ) -> list[ExtractedLine]:
    """
    Serialize the main content of a processed tree. Blocks with link density
    above the limit or too little text per tag are boilerplate; headers, code,
    tables and blocks holding math are exempt.
    """
    cfg = cfg or ExtractionSettings()
    walker = _Walker(params, cfg)
    body = tree.find(".//body")
    walker.walk(body if body is not None else tree)
    walker.flush()

    lines: list[ExtractedLine] = []
    for i, block in enumerate(walker.blocks):
        if i and walker.markdown:
            lines.append(ExtractedLine(""))
        lines.extend(block)
    if walker.dropped:
        logger.debug(f"MAIN_TEXT blocks={len(walker.blocks)} boilerplate={walker.dropped}")
    return lines


# ── Line processing ───────────────────────────────────────────────────────────

LineInput = Union[str, ExtractedLine]


def _as_line(line: LineInput) -> ExtractedLine:
    if isinstance(line, ExtractedLine):
        return line
    return ExtractedLine(line, is_header=bool(_MD_HEADER.match(line)))


def _boilerplate_hits(line: str, phrases: Sequence[str]) -> int:
    lowered = line.lower()
    return sum(1 for p in phrases if p in lowered)


def _reinflate(line: str, spans: Mapping[str, MathSpan], used: set[str]) -> list[str]:
    """Inline spans in place, display spans on their own line; unknown tokens vanish."""
    out: list[str] = []
    current = ""
    pos = 0
    for m in PLACEHOLDER.finditer(line):
        current += line[pos:m.start()]
        pos = m.end()
        span = spans.get(m.group(0))
        if span is None or m.group(0) in used:
            continue
        used.add(m.group(0))
        if span.display:
            if current.strip():
                out.append(current.rstrip())
            out.append(f"$${span.latex}$$")
            current = ""
        else:
            current += f"${span.latex}$"
    current += line[pos:]
    if current.strip():
        out.append(current.strip())
    return out


def _process_lines(
    lines: Iterable[LineInput],
    spans: Mapping[str, MathSpan],
    params: ExtractionParams,
    lists: Wordlists,
) -> tuple[str, set[str]]:
    items = [_as_line(line) for line in lines]

    # 1. boilerplate lines
    trigger = params.boilerplate_trigger_count
    kept = [
        ln for ln in items
        if PLACEHOLDER_PREFIX in ln.text or _boilerplate_hits(ln.text, lists.boilerplate) < trigger
    ]

    # 2. headers with nothing under them
    result: list[ExtractedLine] = []
    for i, ln in enumerate(kept):
        if ln.is_header and PLACEHOLDER_PREFIX not in ln.text:
            nxt = next((k for k in kept[i + 1:] if k.text.strip()), None)
            if nxt is None or nxt.is_header:
                continue
        result.append(ln)

    # 3. escape literal dollars, 4. reinflate math
    used: set[str] = set()
    out: list[str] = []
    for ln in result:
        escaped = ln.text.replace("$", "\\$")
        if PLACEHOLDER_PREFIX in escaped:
            out.extend(_reinflate(escaped, spans, used))
        else:
            out.append(escaped)

    # 5. three or more blank lines become two
    text = re.sub(r"\n{4,}", "\n\n\n", "\n".join(line.rstrip() for line in out))
    return text.strip(), used


def process_lines(
    lines: Iterable[LineInput],
    spans: Union[Mapping[str, MathSpan], Sequence[MathSpan]],
    params: ExtractionParams,
    placeholders: Optional[Sequence[str]] = None,
    lists: Optional[Wordlists] = None,
) -> str:
    """
    Line processing: drop boilerplate lines and empty headers, escape $ as \\$,
    reinflate placeholders to $latex$ / $$latex$$, collapse blank-line runs.
    spans is either a placeholder -> span map or a list parallel to placeholders.
    """
    if not isinstance(spans, Mapping):
        if placeholders is None or len(placeholders) != len(spans):
            raise ValueError("a span list needs one placeholder per span")
        spans = dict(zip(placeholders, spans))
    text, _ = _process_lines(lines, spans, params, lists or get_default_wordlists())
    return text


# ── Per-document entry points ─────────────────────────────────────────────────

def document_seed(run_seed: int, key: str) -> int:
    """64-bit per-document seed from the run seed and a stable record key."""
    return mmh3.hash64(f"{run_seed}:{key}", 0, signed=False)[0]


def draw_params(seed: int, markdown_share: float = 0.5, trigger_counts: Sequence[int] = (1, 2)
                ) -> ExtractionParams:
    rng = np.random.default_rng(seed)
    fmt = "markdown" if rng.random() < markdown_share else "plain"
    trigger = int(rng.choice(np.asarray(trigger_counts)))
    return ExtractionParams(format=fmt, boilerplate_trigger_count=trigger, rng_seed=seed)


def extract_document(
    html: str,
    url: str = "",
    fetch_time: Optional[datetime] = None,
    params: Optional[ExtractionParams] = None,
    lists: Optional[Wordlists] = None,
    cfg: Optional[ExtractionSettings] = None,
    record_id: str = "",
) -> ExtractedDoc:
    """detect_mathjax -> extract_math -> process_dom -> extract_main_text -> process_lines"""
    lists = lists or get_default_wordlists()
    cfg = cfg or ExtractionSettings()
    params = params or ExtractionParams()

    config = detect_mathjax(html, lists.commands)
    replaced, spans, tokens = extract_math(html, config, lists, cfg.single_dollar_max_chars)
    tree = process_dom(replaced, lists, cfg)
    lines = extract_main_text(tree, params, cfg)
    text, used = _process_lines(lines, dict(zip(tokens, spans)), params, lists)

    kept = [s for s, t in zip(spans, tokens) if t in used]
    if len(kept) != len(spans):
        logger.debug(f"MATH_NOT_IN_MAIN_TEXT url={url} lost={len(spans) - len(kept)}")

    return ExtractedDoc(
        text=text,
        spans=kept,
        url=url,
        fetch_time=fetch_time,
        params=params,
        kind_counts=dict(Counter(s.kind for s in kept)),
        record_id=record_id,
        mathjax=config.detected,
    )
