"""
mathcrawl — Math Extraction
Finds LaTeX in every encoding seen in crawled HTML and swaps each formula for a
unique placeholder token. Content extraction reinflates the tokens afterwards.
"""

import bisect
import html as htmllib
import logging
import re
import secrets
from dataclasses import dataclass, field
from typing import Literal, Optional
from urllib.parse import parse_qs, unquote, unquote_plus, urlsplit

from mathcrawl.core.wordlists import Wordlists, get_default_wordlists
from mathcrawl.models.schemas import MathSpan
from mathcrawl.services.mathml import mathml_to_latex, parse_mathml
from mathcrawl.services.prefilter import find_latex_symbol, rough_plain_text

logger = logging.getLogger(__name__)

Detection = Literal["script_import", "symbol_heuristic", "none"]

PLACEHOLDER_PREFIX = "MATHSPAN_"
PLACEHOLDER = re.compile(r"MATHSPAN_[0-9a-f]{16}")

DEFAULT_INLINE = [
    ("$", "$"),
    ("\\(", "\\)"),
    ("\\\\(", "\\\\)"),
    ("[latex]", "[/latex]"),
    ("[math]", "[/math]"),
]
DEFAULT_DISPLAY = [
    ("$$", "$$"),
    ("\\[", "\\]"),
    ("\\\\[", "\\\\]"),
    ("[tex]", "[/tex]"),
    ("\\begin{displaymath}", "\\end{displaymath}"),
]

SINGLE_DOLLAR_MAX_CHARS = 500

# ── Patterns ──────────────────────────────────────────────────────────────────

_SCRIPT = re.compile(r"<script\b([^>]*)>(.*?)</script\s*>", re.IGNORECASE | re.DOTALL)
_SCRIPT_TYPE = re.compile(r"""\btype\s*=\s*["']?\s*([^"'>]+)""", re.IGNORECASE)
_CDATA = re.compile(r"^\s*(?://\s*)?<!\[CDATA\[|(?://\s*)?\]\]>\s*$")
_MATH = re.compile(r"<math\b[^>]*>.*?</math\s*>", re.IGNORECASE | re.DOTALL)
_MATH_OPEN = re.compile(r"<math\b[^>]*>", re.IGNORECASE)
_ANNOTATION = re.compile(
    r"""<annotation\b[^>]*encoding\s*=\s*["']application/x-tex["'][^>]*>(.*?)</annotation\s*>""",
    re.IGNORECASE | re.DOTALL,
)
_START_TAG = re.compile(r"<([a-zA-Z][\w:-]*)\b([^>]*)>", re.DOTALL)
_ATTR = re.compile(r"""([a-zA-Z_:][-\w:.]*)\s*(?:=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'=<>`]+)))?""")
_MATHJAX_TAG = re.compile(r"<mathjax\b[^>]*>(.*?)</mathjax\s*>", re.IGNORECASE | re.DOTALL)
_IMG = re.compile(r"<img\b[^>]*>", re.IGNORECASE)
_TAG = re.compile(r"<(?:/?[a-zA-Z][^>]*|!--.*?--)>", re.DOTALL)
_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_COMMAND = re.compile(r"\\[A-Za-z]+")
_ENV = re.compile(r"\\begin\{(equation|align|alignat|gather|multline|eqnarray|flalign)(\*?)\}")

_BARRIER = re.compile(
    r"<!--.*?-->|<(script|style|pre|code|textarea|noscript|title)\b.*?</\1\s*>",
    re.IGNORECASE | re.DOTALL,
)
_BARRIER_CHAR = "\x01"
_TAG_CHAR = "\x00"

_ENV_KIND = {
    "equation": "env_equation",
    "gather": "env_equation",
    "multline": "env_equation",
    "align": "env_align",
    "alignat": "env_align",
    "eqnarray": "env_align",
    "flalign": "env_align",
}

_VOID_TAGS = {"img", "br", "hr", "input", "meta", "link", "source", "wbr"}
_BLOCK_TAGS = {
    "p", "div", "ul", "ol", "li", "table", "blockquote", "pre", "section", "article",
    "h1", "h2", "h3", "h4", "h5", "h6",
}
_BLOCK_START = re.compile(rf"<(?:{'|'.join(sorted(_BLOCK_TAGS))})\b", re.IGNORECASE)

_MATHJAX_KEYS = re.compile(r"\b(inlineMath|displayMath)\s*:\s*\[")
_PAIR = re.compile(
    r"""\[\s*(['"])((?:\\.|(?!\1).)*)\1\s*,\s*(['"])((?:\\.|(?!\3).)*)\3\s*\]""",
    re.DOTALL,
)
_KATEX_DELIM = re.compile(
    r"""\{\s*left\s*:\s*(['"])((?:\\.|(?!\1).)*)\1\s*,\s*right\s*:\s*(['"])((?:\\.|(?!\3).)*)\3"""
    r"""\s*,\s*display\s*:\s*(true|false)\s*\}""",
    re.DOTALL,
)
_JS_ESCAPE = re.compile(r"\\(.)", re.DOTALL)


@dataclass
class MathJaxConfig:
    inline_delims: list[tuple[str, str]] = field(default_factory=lambda: list(DEFAULT_INLINE))
    display_delims: list[tuple[str, str]] = field(default_factory=lambda: list(DEFAULT_DISPLAY))
    detected: Detection = "none"
    config_error: bool = False


# ── Detection ─────────────────────────────────────────────────────────────────

def _bracket_extent(text: str, start: int) -> Optional[int]:
    """Index just past the "]" closing the "[" at start; quotes are respected."""
    depth, i, quote = 0, start, None
    while i < len(text):
        c = text[i]
        if quote:
            if c == "\\":
                i += 1
            elif c == quote:
                quote = None
        elif c in "'\"":
            quote = c
        elif c == "[":
            depth += 1
        elif c == "]":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


def _js_string(raw: str) -> str:
    return _JS_ESCAPE.sub(r"\1", raw)


def _add_pair(pairs: list[tuple[str, str]], pair: tuple[str, str]) -> None:
    if pair[0] and pair[1] and pair not in pairs:
        pairs.append(pair)


def _parse_page_config(html: str, config: MathJaxConfig) -> None:
    """Append delimiters declared by MathJax (inlineMath/displayMath) or KaTeX auto-render."""
    for m in _MATHJAX_KEYS.finditer(html):
        end = _bracket_extent(html, m.end() - 1)
        pairs = _PAIR.findall(html[m.end() - 1:end]) if end else []
        if not pairs:
            config.config_error = True
            continue
        target = config.inline_delims if m.group(1) == "inlineMath" else config.display_delims
        for _, left, _, right in pairs:
            _add_pair(target, (_js_string(left), _js_string(right)))

    for _, left, _, right, display in _KATEX_DELIM.findall(html):
        target = config.display_delims if display == "true" else config.inline_delims
        _add_pair(target, (_js_string(left), _js_string(right)))


def detect_mathjax(html: str, symbols: Optional[tuple[str, ...]] = None) -> MathJaxConfig:
    """
    script_import if the page mentions MathJax (or loads KaTeX), else symbol_heuristic
    if a listed LaTeX command appears in the visible text, else none.
    """
    symbols = get_default_wordlists().commands if symbols is None else symbols
    config = MathJaxConfig()

    if "MathJax" in html or "katex" in html:
        config.detected = "script_import"
        _parse_page_config(html, config)
        if config.config_error:
            logger.warning("MATHJAX_CONFIG_UNPARSED falling back to default delimiters")
    elif "\\" in html and find_latex_symbol(rough_plain_text(html), symbols):
        config.detected = "symbol_heuristic"
    return config


# ── Span collection ───────────────────────────────────────────────────────────

@dataclass
class _Candidate:
    start: int
    end: int
    latex: str
    display: bool
    kind: str
    config_fallback: bool = False


class _Claims:
    """Sorted, non-overlapping [start, end) regions already turned into spans."""

    def __init__(self):
        self.starts: list[int] = []
        self.ends: list[int] = []

    def free(self, start: int, end: int) -> bool:
        i = bisect.bisect_right(self.starts, start)
        if i and self.ends[i - 1] > start:
            return False
        return i == len(self.starts) or self.starts[i] >= end

    def add(self, start: int, end: int) -> None:
        i = bisect.bisect_right(self.starts, start)
        self.starts.insert(i, start)
        self.ends.insert(i, end)

    def __iter__(self):
        return iter(zip(self.starts, self.ends))


def _attrs(attr_text: str) -> dict[str, str]:
    out = {}
    for name, dq, sq, bare in _ATTR.findall(attr_text):
        out.setdefault(name.lower(), htmllib.unescape(dq or sq or bare))
    return out


def _classes(attrs: dict[str, str]) -> set[str]:
    return set(attrs.get("class", "").lower().split())


def strip_tags(fragment: str) -> str:
    return htmllib.unescape(_TAG.sub("", fragment))


def _clean_latex(latex: str) -> str:
    """Trimmed LaTeX safe to reinflate between $ delimiters."""
    latex = re.sub(r"(?<!\\)\$", r"\\$", latex.strip())
    if latex.endswith("\\"):
        latex += " "
    return latex


def _unwrap_delimiters(text: str) -> tuple[str, bool]:
    """Drop one outer $$..$$, \\[..\\], $..$ or \\(..\\) pair; returns (latex, display)."""
    text = text.strip()
    for left, right, display in (("$$", "$$", True), ("\\[", "\\]", True),
                                 ("$", "$", False), ("\\(", "\\)", False)):
        if len(text) > len(left) + len(right) and text.startswith(left) and text.endswith(right):
            return text[len(left):-len(right)], display
    return text, False


def _element_end(html: str, tag: str, open_end: int) -> Optional[int]:
    """
    End of the element whose start tag ends at open_end, counting nested
    same-name tags. None when the element is never closed, or when an inline
    element runs into a block-level start tag first.
    """
    pattern = re.compile(rf"<(/?){re.escape(tag)}\b[^>]*>", re.IGNORECASE)
    depth = 1
    for m in pattern.finditer(html, open_end):
        depth += -1 if m.group(1) else 1
        if depth == 0:
            if tag not in _BLOCK_TAGS and _BLOCK_START.search(html, open_end, m.start()):
                return None
            return m.end()
    return None


class _Collector:
    def __init__(self, html: str):
        self.html = html
        self.claims = _Claims()
        self.found: list[_Candidate] = []
        # commented-out markup never yields spans
        self.comments = _Claims()
        for m in _COMMENT.finditer(html):
            self.comments.add(m.start(), m.end())

    def add(self, start: int, end: int, latex: str, display: bool, kind: str,
            config_fallback: bool = False) -> bool:
        latex = _clean_latex(latex)
        if not latex.strip() or not self.claims.free(start, end) or not self.comments.free(start, end):
            return False
        self.claims.add(start, end)
        self.found.append(_Candidate(start, end, latex, display, kind, config_fallback))
        return True


def _script_tags(c: _Collector) -> None:
    for m in _SCRIPT.finditer(c.html):
        t = _SCRIPT_TYPE.search(m.group(1))
        mime = t.group(1).strip().lower() if t else ""
        if not mime.startswith(("math/tex", "math/latex", "math/asciimath")):
            continue
        body = _CDATA.sub("", m.group(2))
        c.add(m.start(), m.end(), body, "mode=display" in mime.replace(" ", ""), "script_tag")


def _math_tags(c: _Collector) -> None:
    for m in _MATH.finditer(c.html):
        source = m.group(0)
        ann = _ANNOTATION.search(source)
        if ann:
            c.add(m.start(), m.end(), htmllib.unescape(ann.group(1)), _is_block_math(source), "annotation_tag")
            continue

        attrs = _attrs(_MATH_OPEN.match(source).group(0)[5:-1])
        if attrs.get("alttext", "").strip():
            latex, display = _unwrap_delimiters(attrs["alttext"])
            c.add(m.start(), m.end(), latex, display or _is_block_math(source), "alttext_class")
            continue

        tree = parse_mathml(source)
        latex = mathml_to_latex(tree) if tree is not None else ""
        if not latex:
            latex = " ".join(strip_tags(source).split())
        c.add(m.start(), m.end(), latex, _is_block_math(source), "mathml")


def _is_block_math(source: str) -> bool:
    head = _MATH_OPEN.match(source).group(0).lower()
    return 'display="block"' in head or "display='block'" in head


def _containers(c: _Collector) -> None:
    for m in _START_TAG.finditer(c.html):
        tag = m.group(1).lower()
        attrs = _attrs(m.group(2))
        classes = _classes(attrs)
        if "math-container" in classes:
            end = _element_end(c.html, tag, m.end())
            if end is None:
                logger.debug(f"MATH_CONTAINER_UNCLOSED tag={tag} offset={m.start()}")
                continue
            close = c.html.rfind("<", m.end(), end)
            latex, display = _unwrap_delimiters(strip_tags(c.html[m.end():close]))
            c.add(m.start(), end, latex, display or tag == "div", "math_container")
        elif "tex" in classes and attrs.get("alttext", "").strip():
            end = None
            if tag not in _VOID_TAGS and not m.group(2).rstrip().endswith("/"):
                end = _element_end(c.html, tag, m.end())
            latex, display = _unwrap_delimiters(attrs["alttext"])
            c.add(m.start(), end or m.end(), latex, display, "alttext_class")

    for m in _MATHJAX_TAG.finditer(c.html):
        latex, display = _unwrap_delimiters(strip_tags(m.group(1)))
        c.add(m.start(), m.end(), latex, display, "math_container")


def _host_matches(host: str, services: tuple[str, ...]) -> bool:
    return any(host == s or host.endswith("." + s) for s in services)


def _looks_like_latex(text: str) -> bool:
    text = text.strip()
    if not text:
        return False
    if _COMMAND.search(text):
        return True
    return len(text) > 2 and text.startswith("$") and text.endswith("$")


def _images(c: _Collector, render_services: tuple[str, ...]) -> None:
    for m in _IMG.finditer(c.html):
        attrs = _attrs(m.group(0)[4:-1])
        src = attrs.get("src", "").strip()
        try:
            parts = urlsplit(src) if src else None
            host = (parts.hostname or "") if parts else ""
        except ValueError:
            parts, host = None, ""
        path = parts.path.lower() if parts else ""

        if parts and path.endswith("latex.php"):
            latex = parse_qs(parts.query).get("latex", [""])[0]
            if c.add(m.start(), m.end(), latex, False, "wordpress_plugin"):
                continue
        if parts and host and _host_matches(host, render_services) and parts.query:
            query = parse_qs(parts.query)
            latex = query["chl"][0] if "chl" in query else unquote(parts.query).replace("&space;", " ")
            if c.add(m.start(), m.end(), latex, False, "img_url"):
                continue
        if parts and ("tex.cgi" in path or "mimetex" in path) and parts.query:
            if c.add(m.start(), m.end(), unquote_plus(parts.query), False, "img_url"):
                continue
        alt = attrs.get("alt", "")
        if _looks_like_latex(alt):
            latex, display = _unwrap_delimiters(alt)
            c.add(m.start(), m.end(), latex, display, "img_alt")


def _scan_view(html: str, claims: _Claims) -> str:
    """
    Same-length view of the page for delimiter scanning: tags become NUL
    (transparent), barriers and claimed spans become \\x01 (never crossed).
    """
    view = _BARRIER.sub(lambda m: _BARRIER_CHAR * len(m.group(0)), html)
    view = PLACEHOLDER.sub(lambda m: _BARRIER_CHAR * len(m.group(0)), view)
    view = _TAG.sub(lambda m: _TAG_CHAR * len(m.group(0)), view)
    if claims.starts:
        pieces, pos = [], 0
        for start, end in claims:
            pieces.append(view[pos:start])
            pieces.append(_BARRIER_CHAR * (end - start))
            pos = end
        pieces.append(view[pos:])
        view = "".join(pieces)
    return view


def _escaped(view: str, i: int) -> bool:
    """True if view[i] is preceded by an odd run of backslashes."""
    n = 0
    while i - n - 1 >= 0 and view[i - n - 1] == "\\":
        n += 1
    return n % 2 == 1


def _find_close(view: str, close: str, start: int) -> int:
    j = view.find(close, start)
    while j >= 0 and close.startswith("$") and _escaped(view, j):
        j = view.find(close, j + 1)
    return j


def _delimited(c: _Collector, config: MathJaxConfig, single_dollar_max: int) -> None:
    pairs: dict[str, tuple[str, bool]] = {}
    for delims, display in ((config.inline_delims, False), (config.display_delims, True)):
        for left, right in delims:
            pairs.setdefault(left, (right, display))
    if not pairs:
        return

    opens = sorted(pairs, key=len, reverse=True)
    opener = re.compile("|".join(re.escape(o) for o in opens))
    view = _scan_view(c.html, c.claims)
    fallback = config.config_error

    pos = 0
    while True:
        m = opener.search(view, pos)
        if not m:
            break
        left = m.group(0)
        right, display = pairs[left]
        if left.startswith("$") and _escaped(view, m.start()):
            pos = m.start() + 1
            continue

        j = _find_close(view, right, m.end())
        inner = view[m.end():j] if j >= 0 else ""
        if (
            j < 0
            or _BARRIER_CHAR in inner
            or (left == "$" and ("\n" in inner or len(inner) > single_dollar_max))
            or not strip_tags(c.html[m.end():j]).strip()
        ):
            pos = m.start() + 1
            continue

        end = j + len(right)
        latex = strip_tags(c.html[m.end():j])
        kind = "mathjax_display" if display else "mathjax_inline"
        if c.add(m.start(), end, latex, display, kind, fallback):
            pos = end
        else:
            pos = m.start() + 1


def _environments(c: _Collector) -> None:
    view = _scan_view(c.html, c.claims)
    for m in _ENV.finditer(view):
        if not c.claims.free(m.start(), m.end()):
            continue
        name, star = m.group(1), m.group(2)
        close = f"\\end{{{name}{star}}}"
        j = view.find(close, m.end())
        if j < 0 or _BARRIER_CHAR in view[m.end():j]:
            continue
        end = j + len(close)
        c.add(m.start(), end, strip_tags(c.html[m.start():end]), True, _ENV_KIND[name])


# ── Public API ────────────────────────────────────────────────────────────────

def new_placeholder(taken: set[str], html: str) -> str:
    while True:
        token = PLACEHOLDER_PREFIX + secrets.token_hex(8)
        if token not in taken and token not in html:
            taken.add(token)
            return token


def extract_math(
    html: str,
    config: MathJaxConfig,
    lists: Optional[Wordlists] = None,
    single_dollar_max: int = SINGLE_DOLLAR_MAX_CHARS,
) -> tuple[str, list[MathSpan], list[str]]:
    """
    Replace every formula with a placeholder.
    Returns (html with placeholders, spans in document order, placeholder per span).
    Delimiter scanning runs only when config.detected is not "none".
    """
    lists = lists or get_default_wordlists()
    c = _Collector(html)

    _script_tags(c)
    _math_tags(c)
    _containers(c)
    _images(c, lists.render_services)
    if config.detected != "none":
        _delimited(c, config, single_dollar_max)
    _environments(c)

    found = sorted(c.found, key=lambda x: x.start)
    taken: set[str] = set()
    pieces, spans, tokens = [], [], []
    pos = byte_pos = 0

    for cand in found:
        byte_start = byte_pos + len(html[pos:cand.start].encode("utf-8"))
        byte_end = byte_start + len(html[cand.start:cand.end].encode("utf-8"))
        token = new_placeholder(taken, html)
        pieces.append(html[pos:cand.start])
        pieces.append(token)
        spans.append(MathSpan(
            latex=cand.latex,
            display=cand.display,
            kind=cand.kind,
            origin=(byte_start, byte_end),
            config_fallback=cand.config_fallback,
        ))
        tokens.append(token)
        pos, byte_pos = cand.end, byte_end
    pieces.append(html[pos:])

    if spans:
        logger.debug(f"MATH_EXTRACTED spans={len(spans)} detected={config.detected}")
    return "".join(pieces), spans, tokens


# ── Text helpers ──────────────────────────────────────────────────────────────

_MATH_IN_TEXT = re.compile(r"(?<!\\)\$\$(.+?)(?<!\\)\$\$|(?<!\\)\$(.+?)(?<!\\)\$", re.DOTALL)


def find_math(text: str) -> list[str]:
    """Formulas ($..$ and $$..$$, unescaped delimiters) in extracted text, in order."""
    return [(m.group(1) if m.group(1) is not None else m.group(2)) for m in _MATH_IN_TEXT.finditer(text)]


def strip_math(text: str) -> str:
    """Extracted text with every $..$ / $$..$$ formula removed."""
    return _MATH_IN_TEXT.sub(" ", text)
