"""End-to-end pipeline runs over two small shards."""

import json
from itertools import combinations

import pytest

from mathcrawl.config import load_config
from mathcrawl.core.exceptions import ConfigError, ModelLoadError
from mathcrawl.models.schemas import OutputRecord, RunSummary
from mathcrawl.services.classifier import ClassifierModel, save_model
from mathcrawl.services.dedup import hamming, read_sidecar
from mathcrawl.services.pipeline import SUMMARY_FILE, run_pipeline, shard_stem
from tests.conftest import Rec
from tests.fixture_pages import (
    CUP_FINAL,
    FRENCH_SEQUENCES,
    GEOMETRIC_SERIES,
    HARMONIC,
    INTEGRALS,
    LENTIL_SOUP,
    LIMITS,
    MATH_PAGES,
    PLAIN_PAGES,
    WebPage,
)

MIRROR = "https://mirror.example.net/q/1201"


def _rec(web: WebPage, **kw) -> Rec:
    return Rec(web.url, web.html, **kw)


@pytest.fixture
def shards(make_shard):
    a = make_shard("CC-A-00001.warc.gz", [
        _rec(LIMITS, fetch_time="2023-01-01T00:00:00Z"),
        _rec(INTEGRALS),
        _rec(LENTIL_SOUP),
        Rec(MIRROR, LIMITS.html, fetch_time="2023-02-01T00:00:00Z"),
        Rec("https://www.example.org/logo.png", b"\x89PNG\r\n", content_type="image/png"),
    ])
    b = make_shard("CC-B-00002.warc", [
        _rec(GEOMETRIC_SERIES),
        _rec(FRENCH_SEQUENCES),
        _rec(HARMONIC),
        _rec(CUP_FINAL),
    ], gzip=False, first_index=10)
    return [str(a), str(b)]


def _config(shards, out, model_paths, **kw):
    # distinct fixture pages can sit within 19 bits under character trigrams; 3 only merges true copies
    dedup = {"max_distance": 3, **kw.pop("dedup", {})}
    return load_config(
        None,
        shard_paths=shards,
        output_dir=str(out),
        rng_seed=7,
        models=model_paths,
        dedup=dedup,
        **kw,
    )


def _read(path) -> list[OutputRecord]:
    return [OutputRecord.model_validate_json(line) for line in path.read_text().splitlines()]


class TestRun:
    """Stage accounting and outputs of one run."""

    @pytest.fixture
    def run(self, shards, tmp_path, model_paths):
        out = tmp_path / "out"
        summary = run_pipeline(_config(shards, out, model_paths))
        return summary, out

    def test_ingest_counts(self, run):
        summary, _ = run
        assert summary.ingest["records"] == 8
        assert summary.ingest["non_response"] == 2
        assert summary.ingest["non_html"] == 1

    def test_stage_counts(self, run):
        summary, _ = run
        got = {name: (c.input, c.output, c.dropped, c.errors) for name, c in summary.stages.items()}
        assert got == {
            "prefilter": (8, 6, 2, 0),
            "extract": (6, 6, 0, 0),
            "filter": (6, 5, 1, 0),
            "dedup": (5, 4, 1, 0),
            "domain_rules": (4, 3, 1, 0),
        }
        assert all(c.conserved for c in summary.stages.values())

    def test_verdicts_and_rules(self, run):
        summary, _ = run
        assert summary.verdicts == {"kept": 5, "rejected_language": 1}
        assert summary.domain_rule_drops == {"/user/": 1}
        assert summary.prefilter_tiers["keyword"] >= 3

    def test_outputs_per_shard(self, run):
        _, out = run
        a = _read(out / "CC-A-00001.jsonl")
        b = _read(out / "CC-B-00002.jsonl")
        assert [r.url for r in a] == [LIMITS.url, INTEGRALS.url]
        assert [r.url for r in b] == [HARMONIC.url]

        rec = a[0]
        assert rec.record_id == "<urn:uuid:00000000-0000-0000-0000-000000000001>"
        assert rec.scores.verdict == "kept" and rec.scores.has_latex
        assert rec.kind_counts.get("mathjax_inline", 0) > 0
        assert "$" in rec.text

    def test_sidecars(self, run):
        _, out = run
        fps = read_sidecar(out / "CC-A-00001.fingerprints.tsv")
        records = _read(out / "CC-A-00001.jsonl")
        assert [(fp.doc_id, fp.hex) for fp in fps] == [(r.record_id, r.fingerprint) for r in records]

    def test_summary_file(self, run):
        summary, out = run
        saved = RunSummary.model_validate_json((out / SUMMARY_FILE).read_text())
        assert saved.stages == summary.stages
        assert [s.written for s in saved.shards] == [2, 1]
        assert saved.config["rng_seed"] == 7


class TestDeterminism:
    def test_same_seed_same_bytes(self, shards, tmp_path, model_paths):
        run_pipeline(_config(shards, tmp_path / "one", model_paths))
        run_pipeline(_config(shards, tmp_path / "two", model_paths))
        for name in ("CC-A-00001.jsonl", "CC-B-00002.jsonl", "CC-A-00001.fingerprints.tsv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_summary_stable_apart_from_timings(self, shards, tmp_path, model_paths):
        out = tmp_path / "out"
        run_pipeline(_config(shards, out, model_paths))
        first = json.loads((out / SUMMARY_FILE).read_text())
        run_pipeline(_config(shards, out, model_paths))
        second = json.loads((out / SUMMARY_FILE).read_text())
        assert set(first.pop("timings")) == {"dedup", "domain_rules", "extract", "filter", "prefilter", "total", "write"}
        second.pop("timings")
        assert first == second

    def test_worker_pool_matches_serial(self, shards, tmp_path, model_paths):
        run_pipeline(_config(shards, tmp_path / "serial", model_paths))
        summary = run_pipeline(_config(shards, tmp_path / "pool", model_paths, worker_count=2))
        assert summary.stages["domain_rules"].output == 3
        for name in ("CC-A-00001.jsonl", "CC-B-00002.jsonl"):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()

    def test_limit(self, shards, tmp_path, model_paths):
        summary = run_pipeline(_config(shards, tmp_path / "out", model_paths, limit=1))
        assert summary.stages["prefilter"].input == 2


class TestPriorRun:
    def test_prior_sidecar_removes_repeats(self, shards, tmp_path, model_paths):
        run_pipeline(_config(shards, tmp_path / "first", model_paths))
        prior = [str(tmp_path / "first" / "CC-A-00001.fingerprints.tsv")]
        summary = run_pipeline(_config(
            shards, tmp_path / "second", model_paths, dedup={"prior_sidecars": prior},
        ))
        # LIMITS, its mirror and INTEGRALS all match the first run
        assert (summary.stages["dedup"].output, summary.stages["dedup"].dropped) == (2, 3)
        assert _read(tmp_path / "second" / "CC-A-00001.jsonl") == []
        assert [r.url for r in _read(tmp_path / "second" / "CC-B-00002.jsonl")] == [HARMONIC.url]


class TestDefaultConfig:
    """Twenty fixture pages, eight of them math, through the shipped defaults."""

    MATH_URLS = {p.url for p in MATH_PAGES}

    @pytest.fixture
    def corpus(self, make_shard):
        return [str(make_shard("CC-F-00003.warc.gz", [_rec(p) for p in MATH_PAGES + PLAIN_PAGES]))]

    @staticmethod
    def _run(corpus, out, model_paths, seed: int = 7) -> tuple[RunSummary, list[OutputRecord]]:
        cfg = load_config(None, shard_paths=corpus, output_dir=str(out), rng_seed=seed, models=model_paths)
        return run_pipeline(cfg), _read(out / "CC-F-00003.jsonl")

    def test_math_pages_pass_the_gates(self, corpus, tmp_path, model_paths):
        summary, records = self._run(corpus, tmp_path / "out", model_paths)
        counts = {name: (c.input, c.output, c.dropped, c.errors) for name, c in summary.stages.items()}
        assert counts["prefilter"] == (20, 8, 12, 0)
        assert counts["extract"] == (8, 8, 0, 0)
        assert summary.verdicts == {"kept": 7, "rejected_language": 1}
        assert summary.stages["dedup"].input == 7
        assert all(c.conserved for c in summary.stages.values())

        assert records
        for rec in records:
            assert rec.url in self.MATH_URLS
            assert sum(rec.kind_counts.values()) >= 1 or rec.scores.math_score > 0.8

    def test_survivors_are_pairwise_distinct(self, corpus, tmp_path, model_paths):
        _, records = self._run(corpus, tmp_path / "out", model_paths)
        for a, b in combinations(records, 2):
            assert hamming(int(a.fingerprint, 16), int(b.fingerprint, 16)) > 19, (a.url, b.url)

    def test_seed_changes_formatting_not_survivors(self, corpus, tmp_path, model_paths):
        survivors = []
        for seed in (7, 8, 9, 123):
            _, records = self._run(corpus, tmp_path / f"seed-{seed}", model_paths, seed)
            survivors.append({r.url for r in records})
        assert all(s == survivors[0] for s in survivors)

    def test_same_seed_same_bytes(self, corpus, tmp_path, model_paths):
        self._run(corpus, tmp_path / "one", model_paths)
        self._run(corpus, tmp_path / "two", model_paths)
        for name in ("CC-F-00003.jsonl", "CC-F-00003.fingerprints.tsv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


class TestStartupFailures:
    """Nothing is written when validation or model loading fails."""

    def test_missing_model(self, shards, tmp_path, model_paths):
        out = tmp_path / "out"
        paths = dict(model_paths, lm=str(tmp_path / "absent.arpa"))
        with pytest.raises(ConfigError) as exc:
            run_pipeline(_config(shards, out, paths))
        assert any("models.lm" in e for e in exc.value.detail["errors"])
        assert not out.exists()

    def test_missing_shard_and_unset_model(self, tmp_path, model_paths):
        cfg = load_config(None, shard_paths=[str(tmp_path / "nope.warc.gz")], models={"lang": model_paths["lang"]})
        with pytest.raises(ConfigError) as exc:
            cfg.validate_startup()
        errors = exc.value.detail["errors"]
        assert len(errors) == 3
        assert any("shard not found" in e for e in errors)

    def test_math_model_without_math_class(self, shards, tmp_path, model_paths):
        bad = tmp_path / "bad.bin"
        save_model(ClassifierModel.zeros(("a", "b"), hash_bits=4), bad)
        out = tmp_path / "out"
        with pytest.raises(ModelLoadError):
            run_pipeline(_config(shards, out, dict(model_paths, math=str(bad))))
        assert not out.exists()


@pytest.mark.parametrize("name, stem", [
    ("CC-MAIN-0001.warc.gz", "CC-MAIN-0001"),
    ("plain.warc", "plain"),
    ("old.arc.gz", "old"),
    ("records.bin", "records.bin"),
])
def test_shard_stem(name, stem):
    assert shard_stem(name) == stem


def test_duplicate_stems_get_suffixes(make_shard, tmp_path, model_paths):
    one = make_shard("x.warc.gz", [_rec(HARMONIC)])
    (tmp_path / "sub").mkdir()
    two = tmp_path / "sub" / "x.warc"
    two.write_bytes(one.read_bytes())
    summary = run_pipeline(_config([str(one), str(two)], tmp_path / "out", model_paths))
    assert [s.output.rsplit("/", 1)[-1] for s in summary.shards] == ["x.jsonl", "x-1.jsonl"]
    assert json.loads((tmp_path / "out" / SUMMARY_FILE).read_text())["stages"]["dedup"]["dropped"] == 1
