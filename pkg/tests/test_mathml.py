"""Tests for MathML to LaTeX conversion."""

import pytest
from lxml import etree

from mathcrawl.services.mathml import local_name, mathml_to_latex, parse_mathml


def convert(inner: str) -> str:
    tree = parse_mathml(f"<math>{inner}</math>")
    assert tree is not None
    return mathml_to_latex(tree)


@pytest.mark.parametrize("inner, expected", [
    ("<mfrac><mi>a</mi><mi>b</mi></mfrac>", r"\frac{a}{b}"),
    ("<msup><mi>x</mi><mn>2</mn></msup>", "x^{2}"),
    ("<msub><mi>a</mi><mi>n</mi></msub>", "a_{n}"),
    ("<msqrt><mi>x</mi></msqrt>", r"\sqrt{x}"),
    ("<mroot><mi>x</mi><mn>3</mn></mroot>", r"\sqrt[3]{x}"),
    (
        "<munderover><mo>∑</mo><mrow><mi>i</mi><mo>=</mo><mn>1</mn></mrow><mi>n</mi></munderover>",
        r"\sum_{i=1}^{n}",
    ),
    ("<mfenced><mi>a</mi><mi>b</mi></mfenced>", "(a,b)"),
    ('<mfenced open="{" close="}"><mi>x</mi></mfenced>', r"\{x\}"),
    (
        "<mtable><mtr><mtd><mi>a</mi></mtd><mtd><mi>b</mi></mtd></mtr>"
        "<mtr><mtd><mi>c</mi></mtd><mtd><mi>d</mi></mtd></mtr></mtable>",
        r"\begin{array}{cc}a & b \\ c & d\end{array}",
    ),
    ("<mtext>if</mtext>", r"\text{if}"),
    ("<mi>α</mi><mo>+</mo><mi>β</mi>", r"\alpha +\beta"),
    ("<mi>x</mi><mo>≤</mo><mn>1</mn>", r"x\leq 1"),
])
def test_conversion(inner, expected):
    assert convert(inner) == expected


def test_annotation_is_ignored():
    inner = (
        "<semantics><mi>y</mi>"
        '<annotation encoding="text/plain">why</annotation></semantics>'
    )
    assert convert(inner) == "y"


def test_namespaced_xml_tree():
    tree = etree.fromstring('<math xmlns="http://www.w3.org/1998/Math/MathML"><mi>x</mi></math>')
    assert local_name(tree) == "math"
    assert mathml_to_latex(tree) == "x"


def test_prefixed_tag_names():
    tree = parse_mathml(
        '<m:math xmlns:m="http://www.w3.org/1998/Math/MathML">'
        "<m:mfrac><m:mi>a</m:mi><m:mi>b</m:mi></m:mfrac></m:math>"
    )
    assert tree is not None
    assert local_name(tree) == "math"
    assert mathml_to_latex(tree) == r"\frac{a}{b}"


def test_non_math_fragment():
    assert parse_mathml("<div>x</div>") is None
