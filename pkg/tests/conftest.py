"""
Shared fixtures: WARC shard builders and small models trained on bundled data
plus the fixture pages.
"""

import io
from dataclasses import dataclass
from pathlib import Path

import pytest
from warcio.statusandheaders import StatusAndHeaders
from warcio.warcwriter import WARCWriter

from mathcrawl.config import DATA_DIR
from mathcrawl.models.schemas import ExtractionParams
from mathcrawl.services.classifier import (
    LabeledExample,
    build_mathscore_corpus,
    load_langid_corpus,
    save_model,
    train,
)
from mathcrawl.services.content_extract import extract_document
from mathcrawl.services.math_extract import strip_math
from mathcrawl.services.ngram_lm import save_arpa, sentences_from_text, train_lm
from tests.fixture_pages import FRENCH_SEQUENCES, MATH_PAGES, PLAIN_PAGES

TEST_HASH_BITS = 16


# ── WARC shards ───────────────────────────────────────────────────────────────

@dataclass
class Rec:
    """One record to write into a test shard."""
    url: str
    body: bytes | str = b""
    fetch_time: str = "2023-01-01T00:00:00Z"
    content_type: str = "text/html; charset=utf-8"
    status: int = 200
    record_id: str | None = None

    @property
    def payload(self) -> bytes:
        return self.body.encode("utf-8") if isinstance(self.body, str) else self.body


def record_bytes(rec: Rec, index: int, gzip: bool = True) -> bytes:
    """A single response record, as written by warcio."""
    out = io.BytesIO()
    writer = WARCWriter(out, gzip=gzip)
    http_headers = StatusAndHeaders(
        f"{rec.status} OK", [("Content-Type", rec.content_type)], protocol="HTTP/1.1"
    )
    record = writer.create_warc_record(
        rec.url,
        "response",
        payload=io.BytesIO(rec.payload),
        http_headers=http_headers,
        warc_headers_dict={
            "WARC-Record-ID": rec.record_id or f"<urn:uuid:00000000-0000-0000-0000-{index:012d}>",
            "WARC-Date": rec.fetch_time,
        },
    )
    writer.write_record(record)
    return out.getvalue()


def warcinfo_bytes(name: str, gzip: bool = True) -> bytes:
    out = io.BytesIO()
    writer = WARCWriter(out, gzip=gzip)
    writer.write_record(writer.create_warcinfo_record(name, {"software": "mathcrawl-tests"}))
    return out.getvalue()


def write_shard(path: Path, records: list[Rec], gzip: bool = True, warcinfo: bool = True,
                first_index: int = 1) -> Path:
    chunks = [warcinfo_bytes(path.name, gzip)] if warcinfo else []
    chunks += [record_bytes(rec, first_index + i, gzip) for i, rec in enumerate(records)]
    path.write_bytes(b"".join(chunks))
    return path


@pytest.fixture
def make_shard(tmp_path):
    def _make(name: str, records: list[Rec], gzip: bool = True, warcinfo: bool = True,
              first_index: int = 1) -> Path:
        return write_shard(tmp_path / name, records, gzip, warcinfo, first_index)
    return _make


# ── Models ────────────────────────────────────────────────────────────────────

def _extract_all(pages, fmt: str):
    params = ExtractionParams(format=fmt, boilerplate_trigger_count=1)
    return [extract_document(p.html, p.url, params=params) for p in pages]


@pytest.fixture(scope="session")
def fixture_docs():
    """Plain and markdown extractions of every fixture page."""
    pages = MATH_PAGES + PLAIN_PAGES
    return _extract_all(pages, "plain") + _extract_all(pages, "markdown")


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, fixture_docs) -> Path:
    """
    lang.bin, math.bin and lm.arpa trained on bundled samples plus the fixture pages,
    so the fixture math pages pass every filter gate.
    """
    out = tmp_path_factory.mktemp("models")

    french_urls = {FRENCH_SEQUENCES.url}
    lang_examples = load_langid_corpus()
    for doc in fixture_docs:
        prose = " ".join(strip_math(doc.text).split())
        if prose:
            lang_examples.append(LabeledExample(prose, "fr" if doc.url in french_urls else "en"))
    save_model(train(lang_examples, epochs=20, seed=1, hash_bits=TEST_HASH_BITS), out / "lang.bin")

    math_examples = build_mathscore_corpus(fixture_docs, ("\\frac", "\\sum", "\\int", "\\sqrt", "\\begin"))
    save_model(train(math_examples, epochs=30, seed=1, hash_bits=TEST_HASH_BITS), out / "math.bin")

    corpus = (DATA_DIR / "lm_sample.txt").read_text(encoding="utf-8")
    corpus += "\n" + "\n".join(doc.text for doc in fixture_docs)
    save_arpa(train_lm(sentences_from_text(corpus), order=3), out / "lm.arpa")
    return out


@pytest.fixture(scope="session")
def model_paths(model_dir) -> dict[str, str]:
    return {
        "lang": str(model_dir / "lang.bin"),
        "math": str(model_dir / "math.bin"),
        "lm": str(model_dir / "lm.arpa"),
    }
