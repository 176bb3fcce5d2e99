"""
mathcrawl — MathML to LaTeX
Recursive transform over presentation MathML parsed with lxml.
"""

import logging

import lxml.html
from lxml import etree

logger = logging.getLogger(__name__)

# Operator and identifier characters with a LaTeX command
_SYMBOL_MAP = {
    "→": r"\rightarrow",
    "←": r"\leftarrow",
    "↔": r"\leftrightarrow",
    "⇒": r"\Rightarrow",
    "⇔": r"\Leftrightarrow",
    "↦": r"\mapsto",
    "×": r"\times",
    "·": r"\cdot",
    "⋅": r"\cdot",
    "÷": r"\div",
    "±": r"\pm",
    "∓": r"\mp",
    "−": "-",
    "≤": r"\leq",
    "≥": r"\geq",
    "≠": r"\neq",
    "≈": r"\approx",
    "≡": r"\equiv",
    "∼": r"\sim",
    "∝": r"\propto",
    "∞": r"\infty",
    "∫": r"\int",
    "∮": r"\oint",
    "∑": r"\sum",
    "∏": r"\prod",
    "√": r"\sqrt",
    "∂": r"\partial",
    "∇": r"\nabla",
    "∈": r"\in",
    "∉": r"\notin",
    "⊂": r"\subset",
    "⊃": r"\supset",
    "⊆": r"\subseteq",
    "⊇": r"\supseteq",
    "∪": r"\cup",
    "∩": r"\cap",
    "∅": r"\emptyset",
    "∀": r"\forall",
    "∃": r"\exists",
    "¬": r"\neg",
    "∧": r"\land",
    "∨": r"\lor",
    "…": r"\ldots",
    "⋯": r"\cdots",
    "α": r"\alpha",
    "β": r"\beta",
    "γ": r"\gamma",
    "δ": r"\delta",
    "ε": r"\epsilon",
    "ϵ": r"\epsilon",
    "ζ": r"\zeta",
    "η": r"\eta",
    "θ": r"\theta",
    "κ": r"\kappa",
    "λ": r"\lambda",
    "μ": r"\mu",
    "ν": r"\nu",
    "ξ": r"\xi",
    "π": r"\pi",
    "ρ": r"\rho",
    "σ": r"\sigma",
    "τ": r"\tau",
    "φ": r"\phi",
    "ϕ": r"\phi",
    "χ": r"\chi",
    "ψ": r"\psi",
    "ω": r"\omega",
    "Γ": r"\Gamma",
    "Δ": r"\Delta",
    "Θ": r"\Theta",
    "Λ": r"\Lambda",
    "Π": r"\Pi",
    "Σ": r"\Sigma",
    "Φ": r"\Phi",
    "Ψ": r"\Psi",
    "Ω": r"\Omega",
}

_BIG_OPERATORS = {r"\sum", r"\int", r"\prod", r"\oint", "lim", r"\lim"}
_BRACES = {"{": r"\{", "}": r"\}"}
_SKIP = {"annotation", "annotation-xml", "mphantom"}
# Empty elements; the HTML parser nests following siblings inside them when written "<x/>"
_EMPTY = {"none", "mprescripts", "maligngroup", "malignmark"}


def local_name(el) -> str:
    """Tag without namespace ("{ns}mi") or prefix ("m:mi"), lowercased."""
    tag = el.tag if isinstance(el.tag, str) else ""
    return tag.rsplit("}", 1)[-1].rsplit(":", 1)[-1].lower()


def _symbol(text: str) -> str:
    text = text.strip()
    if text in _SYMBOL_MAP:
        return _SYMBOL_MAP[text] + " "
    return "".join(_SYMBOL_MAP[c] + " " if c in _SYMBOL_MAP else c for c in text)


def _children(el) -> list:
    return [c for c in el if isinstance(c.tag, str)]


def _concat(el) -> str:
    return "".join(_convert(c) for c in _children(el))


def _arg(kids: list, i: int) -> str:
    return _convert(kids[i]).strip() if i < len(kids) else ""


def _convert(el) -> str:
    tag = local_name(el)
    kids = _children(el)

    if tag in _SKIP:
        return ""
    if tag in ("mi", "mn", "mo", "ms"):
        return _symbol(el.text_content() if hasattr(el, "text_content") else "".join(el.itertext()))
    if tag == "mtext":
        text = "".join(el.itertext()).strip()
        return f"\\text{{{text}}}" if text else " "
    if tag == "mspace":
        return r"\, " + _concat(el)
    if tag in _EMPTY:
        return _concat(el)
    if tag == "semantics":
        return _convert(kids[0]) if kids else ""
    if tag == "mfrac":
        return f"\\frac{{{_arg(kids, 0)}}}{{{_arg(kids, 1)}}}"
    if tag == "msqrt":
        return f"\\sqrt{{{_concat(el).strip()}}}"
    if tag == "mroot":
        return f"\\sqrt[{_arg(kids, 1)}]{{{_arg(kids, 0)}}}"
    if tag == "msup":
        return f"{_arg(kids, 0)}^{{{_arg(kids, 1)}}}"
    if tag == "msub":
        return f"{_arg(kids, 0)}_{{{_arg(kids, 1)}}}"
    if tag == "msubsup":
        return f"{_arg(kids, 0)}_{{{_arg(kids, 1)}}}^{{{_arg(kids, 2)}}}"
    if tag == "mover":
        return f"\\overset{{{_arg(kids, 1)}}}{{{_arg(kids, 0)}}}"
    if tag == "munder":
        base = _arg(kids, 0)
        if base in _BIG_OPERATORS:
            return f"{base}_{{{_arg(kids, 1)}}}"
        return f"\\underset{{{_arg(kids, 1)}}}{{{base}}}"
    if tag == "munderover":
        base = _arg(kids, 0)
        if base in _BIG_OPERATORS:
            return f"{base}_{{{_arg(kids, 1)}}}^{{{_arg(kids, 2)}}}"
        return f"\\overset{{{_arg(kids, 2)}}}{{\\underset{{{_arg(kids, 1)}}}{{{base}}}}}"
    if tag == "mfenced":
        open_ = el.get("open", "(")
        close = el.get("close", ")")
        seps = (el.get("separators", ",") or "").split() or [""]
        seps = list("".join(seps)) or [""]
        parts = []
        for i, kid in enumerate(kids):
            if i:
                parts.append(seps[min(i - 1, len(seps) - 1)])
            parts.append(_convert(kid).strip())
        return _BRACES.get(open_, open_) + "".join(parts) + _BRACES.get(close, close)
    if tag == "mtable":
        rows = [_convert(k) for k in kids if local_name(k) in ("mtr", "mlabeledtr")]
        width = max((r.count("&") + 1 for r in rows), default=1)
        return f"\\begin{{array}}{{{'c' * width}}}" + r" \\ ".join(rows) + r"\end{array}"
    if tag in ("mtr", "mlabeledtr"):
        return " & ".join(_convert(k).strip() for k in kids if local_name(k) == "mtd")
    if not kids:
        return _symbol("".join(el.itertext()))
    # math, mrow, mstyle, mpadded, menclose, mtd and unknown containers
    return _concat(el)


def mathml_to_latex(mathml) -> str:
    """Convert a <math> element tree to LaTeX. Lossy at worst, never raises."""
    return " ".join(_convert(mathml).split())


def parse_mathml(source: str):
    """Parse a <math>...</math> fragment; None if lxml cannot make a tree of it."""
    try:
        el = lxml.html.fragment_fromstring(source)
    except (etree.ParserError, ValueError) as e:
        logger.debug(f"MATHML_PARSE_FAILED error={e}")
        return None
    return el if local_name(el) == "math" else None
