"""Tests for the mathcrawl command line."""

import json
from datetime import datetime, timezone

import pytest

from mathcrawl import __version__
from mathcrawl.cli import main
from mathcrawl.models.schemas import ExtractionParams, FilterScores, OutputRecord
from mathcrawl.services.classifier import load_model
from mathcrawl.services.dedup import Fingerprint, write_sidecar
from mathcrawl.services.ngram_lm import load_arpa
from tests.conftest import Rec
from tests.fixture_pages import HARMONIC, INTEGRALS, LENTIL_SOUP, LIMITS, MATHJAX_HEAD, page


def _record(url: str, text: str) -> OutputRecord:
    return OutputRecord(
        text=text,
        url=url,
        fetch_time=datetime(2023, 1, 1, tzinfo=timezone.utc),
        record_id=url,
        params=ExtractionParams(),
        kind_counts={},
        scores=FilterScores(lang="en", lang_prob=0.9, math_score=0.5, perplexity=100.0, verdict="kept"),
        fingerprint="0" * 16,
        pipeline_version=__version__,
    )


@pytest.fixture
def records_file(tmp_path):
    path = tmp_path / "records.jsonl"
    recs = [
        _record("https://a.example.com/1", "short"),
        _record("https://b.example.com/2", "a much longer document " * 20),
        _record("https://www.example.com/3", "medium length text here"),
        _record("https://c.other.org/4", "other"),
    ]
    path.write_text("".join(r.model_dump_json() + "\n" for r in recs) + "not json\n")
    return path


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [[], ["run", "--seed", "x"], ["nonsense"], ["train-lm"]])
    def test_usage_errors_exit_1(self, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1


class TestExtract:
    @pytest.fixture
    def html_file(self, tmp_path):
        path = tmp_path / "page.html"
        path.write_text(page("<h1>Pythagoras</h1><p>Let $x^2 + y^2 = z^2$ hold.</p>", MATHJAX_HEAD))
        return path

    def test_text(self, html_file, capsys):
        assert main(["extract", str(html_file), "--format", "markdown"]) == 0
        out = capsys.readouterr().out
        assert "# Pythagoras" in out
        assert "$x^2 + y^2 = z^2$" in out

    def test_json(self, html_file, capsys):
        assert main(["extract", str(html_file), "--json", "--url", "https://example.com/p"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["url"] == "https://example.com/p"
        assert [s["kind"] for s in doc["spans"]] == ["mathjax_inline"]

    def test_missing_file_is_io_error(self, tmp_path):
        assert main(["extract", str(tmp_path / "absent.html")]) == 3


class TestTraining:
    def test_train_lm(self, tmp_path, capsys):
        out = tmp_path / "lm.arpa"
        assert main(["train-lm", "--out", str(out), "--order", "3"]) == 0
        assert capsys.readouterr().out.startswith("lm: order 3,")
        assert load_arpa(out).order == 3

    def test_train_lm_empty_corpus(self, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("\n\n")
        assert main(["train-lm", str(empty), "--out", str(tmp_path / "lm.arpa")]) == 1

    def test_train_langid(self, tmp_path, capsys):
        out = tmp_path / "lang.bin"
        assert main(["train-langid", "--out", str(out), "--hash-bits", "12", "--epochs", "2"]) == 0
        assert capsys.readouterr().out.startswith("langid: de,en,es,fr")
        assert load_model(out).hash_bits == 12

    def test_train_mathscore(self, make_shard, tmp_path, capsys):
        shard = make_shard("train.warc.gz", [
            Rec(LIMITS.url, LIMITS.html), Rec(INTEGRALS.url, INTEGRALS.html), Rec(LENTIL_SOUP.url, LENTIL_SOUP.html),
        ])
        out = tmp_path / "math.bin"
        argv = ["train-mathscore", str(shard), "--out", str(out), "--hash-bits", "10", "--epochs", "2"]
        assert main(argv) == 0
        assert capsys.readouterr().out.startswith("mathscore: 3 examples")
        assert load_model(out).class_names == ("math", "other")


class TestDedup:
    def test_clusters(self, tmp_path, capsys):
        one, two = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_sidecar(one, [Fingerprint(0, "a"), Fingerprint((1 << 64) - 1, "z")])
        write_sidecar(two, [Fingerprint(0b111, "b")])
        assert main(["dedup", str(one), str(two), "--max-distance", "3"]) == 0
        captured = capsys.readouterr()
        assert captured.out.splitlines() == ["a\tb"]
        assert "1 duplicates" in captured.err


class TestReports:
    def test_report_domains(self, records_file, capsys):
        assert main(["report-domains", str(records_file)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[2].split() == ["example.com", "3", "75.00%"]

    def test_report_domains_tsv(self, records_file, capsys):
        assert main(["report-domains", str(records_file), "--tsv", "--by", "chars", "--top", "1"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("domain\tdoc_count")
        assert len(lines) == 2 and lines[1].startswith("example.com\t3\t")

    def test_report_on_directory(self, records_file, capsys):
        assert main(["report-domains", str(records_file.parent)]) == 0
        assert "other.org" in capsys.readouterr().out

    def test_inspect(self, records_file, capsys):
        assert main(["inspect", str(records_file), "--longest", "1", "--top", "1"]) == 0
        out = capsys.readouterr().out
        assert "Longest documents (4 records)" in out
        assert "https://b.example.com/2" in out
        assert "https://a.example.com/1" not in out
        assert "top-1 share: 75.00%" in out

    def test_no_record_files(self, tmp_path):
        assert main(["inspect", str(tmp_path)]) == 1


class TestRun:
    def test_no_shards(self):
        assert main(["run"]) == 1

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "x.warc.gz", "--config", str(tmp_path / "absent.toml")]) == 2

    def test_missing_models(self, make_shard):
        shard = make_shard("a.warc.gz", [Rec(HARMONIC.url, HARMONIC.html)])
        assert main(["run", str(shard)]) == 2

    def test_full_run(self, make_shard, tmp_path, model_paths, capsys):
        shard = make_shard("a.warc.gz", [Rec(HARMONIC.url, HARMONIC.html), Rec(LENTIL_SOUP.url, LENTIL_SOUP.html)])
        config = tmp_path / "run.toml"
        config.write_text(
            "rng_seed = 3\n\n"
            "[models]\n"
            f'lang = "{model_paths["lang"]}"\n'
            f'math = "{model_paths["math"]}"\n'
            f'lm = "{model_paths["lm"]}"\n\n'
            "[filters]\n"
            "lang_min = 0.0\n"
        )
        out_dir = tmp_path / "out"
        assert main(["run", str(shard), "--config", str(config), "--output", str(out_dir)]) == 0

        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split() == ["stage", "input", "output", "dropped", "errors"]
        assert lines[1].split() == ["prefilter", "2", "1", "1", "0"]
        assert (out_dir / "a.jsonl").read_text().count("\n") == 1
