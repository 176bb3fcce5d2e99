"""
mathcrawl — Pipeline
prefilter -> extract -> filter -> dedup -> domain rules over a list of WARC shards.
Shards are processed independently (optionally in a process pool); dedup and
domain rules run once over all survivors; outputs are written per shard.
"""

import logging
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from tqdm import tqdm

import mathcrawl
from mathcrawl.config import PipelineConfig, settings
from mathcrawl.core.exceptions import ModelLoadError, OutputError
from mathcrawl.core.wordlists import BLACKLIST_FILE, URL_RULES_FILE, Wordlists, load_wordlists
from mathcrawl.models.schemas import OutputRecord, RunSummary, ShardSummary, StageCounts
from mathcrawl.services.classifier import ClassifierModel, load_model
from mathcrawl.services.content_extract import document_seed, draw_params, extract_document
from mathcrawl.services.dedup import DedupDoc, Fingerprint, dedup_corpus, read_sidecar, simhash, write_sidecar
from mathcrawl.services.domains import apply_domain_rules, load_blacklist, load_url_rules
from mathcrawl.services.filters import apply_filters
from mathcrawl.services.ngram_lm import NgramModel, load_arpa
from mathcrawl.services.prefilter import MathScorer, prefilter_page
from mathcrawl.services.warc_reader import decode_html, open_shard

logger = logging.getLogger(__name__)

STAGES = ("prefilter", "extract", "filter", "dedup", "domain_rules")
SUMMARY_FILE = "run_summary.json"


@dataclass
class Resources:
    """Models and lists one worker needs; loaded once per process."""
    cfg: PipelineConfig
    lists: Wordlists
    lang_model: ClassifierModel
    scorer: MathScorer
    lm: NgramModel


@dataclass
class ShardResult:
    path: str
    records: list[OutputRecord] = field(default_factory=list)
    stages: dict[str, StageCounts] = field(default_factory=lambda: {s: StageCounts() for s in STAGES[:3]})
    ingest: dict[str, int] = field(default_factory=dict)
    tiers: Counter = field(default_factory=Counter)
    verdicts: Counter = field(default_factory=Counter)
    scorer_invocations: int = 0
    timings: Counter = field(default_factory=Counter)


# ── Resources ─────────────────────────────────────────────────────────────────

def load_resources(cfg: PipelineConfig) -> Resources:
    """Load every model and list; any failure raises before a shard is touched."""
    lang_model = load_model(cfg.models.lang)
    math_model = load_model(cfg.models.math)
    lm = load_arpa(cfg.models.lm)

    if cfg.filters.lang_target not in lang_model.class_names:
        raise ModelLoadError(
            f"language model has no '{cfg.filters.lang_target}' class",
            {"classes": list(lang_model.class_names)},
        )
    try:
        scorer = MathScorer(math_model)
    except ValueError as e:
        raise ModelLoadError(str(e), {"classes": list(math_model.class_names)})

    lists = load_wordlists(cfg.prefilter, cfg.extraction)
    logger.info(f"MODELS_LOADED langs={','.join(lang_model.class_names)} lm_order={lm.order}")
    return Resources(cfg=cfg, lists=lists, lang_model=lang_model, scorer=scorer, lm=lm)


_worker: Optional[Resources] = None


def _init_worker(cfg_json: str, log_level: int) -> None:
    global _worker
    logging.basicConfig(level=log_level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    _worker = load_resources(PipelineConfig.model_validate_json(cfg_json))


def _run_in_worker(path: str) -> ShardResult:
    return process_shard(path, _worker)


# ── Per shard ─────────────────────────────────────────────────────────────────

def process_shard(path: Path | str, res: Resources) -> ShardResult:
    """
    Stream one shard through prefilter, extraction, filtering and fingerprinting.
    A failing document is logged and counted under its stage's errors.
    """
    cfg = res.cfg
    result = ShardResult(path=str(path))
    pre, ext, flt = (result.stages[s] for s in ("prefilter", "extract", "filter"))
    invocations_before = res.scorer.invocations
    seen = 0

    with open_shard(path, cfg.ingest.max_record_bytes) as reader:
        for record in reader:
            if cfg.limit is not None and seen >= cfg.limit:
                break
            seen += 1
            doc_id = record.record_id or f"{Path(path).name}:{seen}"

            pre.input += 1
            t0 = time.perf_counter()
            try:
                html = decode_html(record)
                decision = prefilter_page(html, res.lists.keywords, res.scorer, cfg.prefilter.threshold)
            except Exception as e:
                pre.errors += 1
                logger.error(f"DOC_ERROR stage=prefilter url={record.url} error={e!r}")
                continue
            finally:
                result.timings["prefilter"] += time.perf_counter() - t0
            result.tiers[decision.tier] += 1
            if not decision.keep:
                pre.dropped += 1
                continue
            pre.output += 1

            ext.input += 1
            t0 = time.perf_counter()
            try:
                seed = document_seed(cfg.rng_seed, doc_id)
                params = draw_params(seed, cfg.extraction.markdown_share, cfg.extraction.trigger_counts)
                doc = extract_document(
                    html, record.url, record.fetch_time, params, res.lists, cfg.extraction, doc_id
                )
            except Exception as e:
                ext.errors += 1
                logger.error(f"DOC_ERROR stage=extract url={record.url} error={e!r}")
                continue
            finally:
                result.timings["extract"] += time.perf_counter() - t0
            ext.output += 1

            flt.input += 1
            t0 = time.perf_counter()
            try:
                scores = apply_filters(doc, res.lang_model, res.scorer, res.lm, cfg.filters)
                fingerprint = simhash(doc.text, doc_id, cfg.dedup.feature, cfg.dedup.ngram) \
                    if scores.verdict == "kept" else None
            except Exception as e:
                flt.errors += 1
                logger.error(f"DOC_ERROR stage=filter url={record.url} error={e!r}")
                continue
            finally:
                result.timings["filter"] += time.perf_counter() - t0
            result.verdicts[scores.verdict] += 1
            if fingerprint is None:
                flt.dropped += 1
                continue
            flt.output += 1

            result.records.append(OutputRecord(
                text=doc.text,
                url=doc.url,
                fetch_time=record.fetch_time,
                record_id=doc_id,
                params=doc.params,
                kind_counts=doc.kind_counts,
                scores=scores,
                fingerprint=fingerprint.hex,
                pipeline_version=mathcrawl.__version__,
            ))

        result.ingest = reader.stats.as_dict()

    result.scorer_invocations = res.scorer.invocations - invocations_before
    logger.info(
        f"SHARD_DONE shard={Path(path).name} records={result.ingest.get('records', 0)} "
        f"prefilter_kept={pre.output} survivors={flt.output} errors={pre.errors + ext.errors + flt.errors}"
    )
    return result


# ── Output ────────────────────────────────────────────────────────────────────

def shard_stem(path: Path | str) -> str:
    name = Path(path).name
    for suffix in (".gz", ".warc", ".arc"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name or "shard"


def _unique_stems(paths: list[Path]) -> list[str]:
    used: Counter = Counter()
    stems = []
    for p in paths:
        stem = shard_stem(p)
        used[stem] += 1
        stems.append(stem if used[stem] == 1 else f"{stem}-{used[stem] - 1}")
    return stems


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(content)
    os.replace(tmp, path)


# ── Run ───────────────────────────────────────────────────────────────────────

def run_pipeline(cfg: PipelineConfig, progress: bool = False) -> RunSummary:
    """
    Full run over cfg.shard_paths. Aborts with ConfigError / ModelLoadError before
    any output exists; raises OutputError if outputs cannot be written.
    With worker_count == 1 the run is deterministic byte for byte.
    """
    started = time.perf_counter()
    cfg.validate_startup()
    res = load_resources(cfg)
    paths = [Path(p) for p in cfg.shard_paths]

    if cfg.worker_count > 1 and len(paths) > 1:
        with ProcessPoolExecutor(
            max_workers=min(cfg.worker_count, len(paths)),
            initializer=_init_worker,
            initargs=(cfg.model_dump_json(), settings.log_level),
        ) as pool:
            results = list(tqdm(pool.map(_run_in_worker, [str(p) for p in paths]),
                                total=len(paths), desc="shards", unit="shard", disable=not progress))
    else:
        results = [process_shard(p, res) for p in tqdm(paths, desc="shards", unit="shard", disable=not progress)]

    summary = RunSummary(
        pipeline_version=mathcrawl.__version__,
        config=cfg.model_dump(mode="json"),
        stages={s: StageCounts() for s in STAGES},
    )
    ingest: Counter = Counter()
    timings: Counter = Counter()
    tiers: Counter = Counter()
    verdicts: Counter = Counter()
    for r in results:
        for name, counts in r.stages.items():
            summary.stages[name].merge(counts)
        ingest.update(r.ingest)
        timings.update(r.timings)
        tiers.update(r.tiers)
        verdicts.update(r.verdicts)
        summary.scorer_invocations += r.scorer_invocations

    # dedup, global over the run plus any prior sidecars
    t0 = time.perf_counter()
    records = [(i, rec) for i, r in enumerate(results) for rec in r.records]
    prior: list[Fingerprint] = []
    for sidecar in cfg.dedup.prior_sidecars:
        prior.extend(read_sidecar(sidecar))
    dd_docs = [
        DedupDoc(doc_id=rec.record_id, url=rec.url, fetch_time=rec.fetch_time, fingerprint=int(rec.fingerprint, 16))
        for _, rec in records
    ]
    deduped = dedup_corpus(dd_docs, cfg.dedup.max_distance, prior)
    survivors_ids = {id(d) for d in deduped.kept}
    after_dedup = [pair for pair, d in zip(records, dd_docs) if id(d) in survivors_ids]
    summary.stages["dedup"] = StageCounts(
        input=len(records), output=len(after_dedup), dropped=len(deduped.dropped)
    )
    timings["dedup"] += time.perf_counter() - t0

    # domain rules
    t0 = time.perf_counter()
    blacklist = load_blacklist(settings.data_path(BLACKLIST_FILE, cfg.domains.blacklist_path))
    rules = load_url_rules(settings.data_path(URL_RULES_FILE, cfg.domains.url_rules_path))
    ruled = apply_domain_rules([rec for _, rec in after_dedup], blacklist, rules)
    kept_ids = {id(rec) for rec in ruled.kept}
    final = [(i, rec) for i, rec in after_dedup if id(rec) in kept_ids]
    summary.stages["domain_rules"] = StageCounts(
        input=len(after_dedup), output=len(final), dropped=len(ruled.dropped)
    )
    summary.domain_rule_drops = dict(sorted(ruled.counters.items()))
    timings["domain_rules"] += time.perf_counter() - t0

    # outputs
    t0 = time.perf_counter()
    by_shard: dict[int, list[OutputRecord]] = defaultdict(list)
    for i, rec in final:
        by_shard[i].append(rec)
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, (path, stem) in enumerate(zip(paths, _unique_stems(paths))):
            recs = by_shard.get(i, [])
            out_path = out_dir / f"{stem}.jsonl"
            _atomic_write(out_path, "".join(rec.model_dump_json() + "\n" for rec in recs))
            if cfg.dedup.write_sidecars:
                write_sidecar(
                    out_dir / f"{stem}.fingerprints.tsv",
                    (Fingerprint(int(rec.fingerprint, 16), rec.record_id) for rec in recs),
                )
            summary.shards.append(ShardSummary(
                path=str(path),
                output=str(out_path),
                records=results[i].ingest.get("records", 0),
                skipped=results[i].ingest.get("skipped", 0),
                written=len(recs),
            ))
        timings["write"] += time.perf_counter() - t0
        timings["total"] = time.perf_counter() - started

        summary.ingest = dict(sorted(ingest.items()))
        summary.prefilter_tiers = dict(sorted(tiers.items()))
        summary.verdicts = dict(sorted(verdicts.items()))
        summary.timings = {k: round(v, 6) for k, v in sorted(timings.items())}
        _atomic_write(out_dir / SUMMARY_FILE, summary.model_dump_json(indent=2) + "\n")
    except OSError as e:
        raise OutputError(f"cannot write outputs to {out_dir}", {"reason": str(e)})

    broken = [name for name, counts in summary.stages.items() if not counts.conserved]
    if broken:
        logger.error(f"STAGE_COUNTS_NOT_CONSERVED stages={broken}")
    logger.info(
        f"RUN_DONE shards={len(paths)} written={len(final)} "
        f"scorer_invocations={summary.scorer_invocations} seconds={timings['total']:.2f}"
    )
    return summary
