"""
mathcrawl — Command Line
`python -m mathcrawl <subcommand>`: run the pipeline, train models, inspect outputs.
Exit codes: 0 ok, 1 usage, 2 config/model error, 3 I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Iterator, Optional, Sequence

from mathcrawl import __description__, __version__
from mathcrawl.config import DATA_DIR, PipelineConfig, load_config, settings
from mathcrawl.core.exceptions import MathCrawlError, UsageError
from mathcrawl.core.wordlists import load_wordlists
from mathcrawl.models.schemas import OutputRecord

logger = logging.getLogger(__name__)

LM_SAMPLE = DATA_DIR / "lm_sample.txt"
IO_EXIT_CODE = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; usage errors here exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


# ── Helpers ───────────────────────────────────────────────────────────────────

def _config(args, shard_paths: Optional[list[str]] = None) -> PipelineConfig:
    return load_config(
        args.config,
        rng_seed=args.seed,
        worker_count=args.workers,
        output_dir=args.output,
        limit=args.limit,
        shard_paths=shard_paths or None,
    )


def _record_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.jsonl")))
        else:
            files.append(p)
    if not files:
        raise UsageError("no record files found", {"paths": list(paths)})
    return files


def iter_records(paths: Sequence[str]) -> Iterator[OutputRecord]:
    """OutputRecords from .jsonl files or directories of them."""
    for path in _record_files(paths):
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    yield OutputRecord.model_validate_json(line)
                except ValueError as e:
                    logger.warning(f"RECORD_BAD_LINE path={path} line={lineno} error={e!r}")


# ── Subcommands ───────────────────────────────────────────────────────────────

def cmd_run(args) -> int:
    from mathcrawl.services.pipeline import run_pipeline

    cfg = _config(args, args.shards)
    if not cfg.shard_paths:
        raise UsageError("no shards given (positional SHARDS or shard_paths in --config)")
    summary = run_pipeline(cfg, progress=sys.stderr.isatty())

    width = max(len(name) for name in summary.stages)
    print(f"{'stage':<{width}}  {'input':>8}  {'output':>8}  {'dropped':>8}  {'errors':>8}")
    for name, c in summary.stages.items():
        print(f"{name:<{width}}  {c.input:>8}  {c.output:>8}  {c.dropped:>8}  {c.errors:>8}")
    print(f"written to {cfg.output_dir}")
    return 0


def cmd_extract(args) -> int:
    from mathcrawl.services.content_extract import draw_params, extract_document
    from mathcrawl.services.warc_reader import decode_bytes

    cfg = _config(args)
    html = decode_bytes(Path(args.file).read_bytes())
    params = draw_params(cfg.rng_seed, cfg.extraction.markdown_share, cfg.extraction.trigger_counts)
    if args.format:
        params = params.model_copy(update={"format": args.format})

    lists = load_wordlists(cfg.prefilter, cfg.extraction)
    doc = extract_document(html, args.url, None, params, lists, cfg.extraction)
    if args.json:
        print(doc.model_dump_json(indent=2))
    else:
        print(doc.text)
    return 0


def cmd_train_mathscore(args) -> int:
    from mathcrawl.services.classifier import accuracy, build_mathscore_corpus, save_model, train
    from mathcrawl.services.content_extract import document_seed, draw_params, extract_document
    from mathcrawl.services.warc_reader import decode_html, open_shard

    cfg = _config(args, args.shards)
    lists = load_wordlists(cfg.prefilter, cfg.extraction)

    docs = []
    for shard in cfg.shard_paths:
        with open_shard(shard, cfg.ingest.max_record_bytes) as reader:
            for n, record in enumerate(reader, start=1):
                if cfg.limit is not None and n > cfg.limit:
                    break
                key = record.record_id or f"{Path(shard).name}:{n}"
                params = draw_params(
                    document_seed(cfg.rng_seed, key),
                    cfg.extraction.markdown_share,
                    cfg.extraction.trigger_counts,
                )
                try:
                    docs.append(extract_document(
                        decode_html(record), record.url, record.fetch_time, params, lists, cfg.extraction, key
                    ))
                except Exception as e:
                    logger.error(f"DOC_ERROR stage=extract url={record.url} error={e!r}")

    examples = build_mathscore_corpus(docs, lists.commands)
    model = train(examples, epochs=args.epochs, lr=args.lr, seed=cfg.rng_seed, hash_bits=args.hash_bits)
    save_model(model, args.out)
    print(f"mathscore: {len(examples)} examples, train accuracy {accuracy(model, examples):.4f} -> {args.out}")
    return 0


def cmd_train_lm(args) -> int:
    from mathcrawl.services.ngram_lm import save_arpa, sentences_from_text, train_lm

    sentences = []
    for path in args.texts or [LM_SAMPLE]:
        sentences.extend(sentences_from_text(Path(path).read_text(encoding="utf-8")))
    try:
        model = train_lm(sentences, order=args.order, unk_hapax=args.unk_hapax)
    except ValueError as e:
        raise UsageError(str(e))
    save_arpa(model, args.out)
    counts = " ".join(f"{n}-grams={c}" for n, c in model.counts().items())
    print(f"lm: order {model.order}, {counts} -> {args.out}")
    return 0


def cmd_train_langid(args) -> int:
    from mathcrawl.services.classifier import accuracy, load_langid_corpus, save_model, train_langid

    seed = args.seed if args.seed is not None else 0
    model = train_langid(args.data, epochs=args.epochs, lr=args.lr, seed=seed, hash_bits=args.hash_bits)
    examples = load_langid_corpus(args.data)
    save_model(model, args.out)
    print(f"langid: {','.join(model.class_names)}, train accuracy {accuracy(model, examples):.4f} -> {args.out}")
    return 0


def cmd_dedup(args) -> int:
    from datetime import datetime, timezone

    from mathcrawl.services.dedup import DedupDoc, dedup_corpus, read_sidecar

    epoch = datetime.fromtimestamp(0, tz=timezone.utc)
    docs = [
        DedupDoc(doc_id=fp.doc_id, url="", fetch_time=epoch, fingerprint=fp.bits)
        for path in args.sidecars
        for fp in read_sidecar(path)
    ]
    result = dedup_corpus(docs, args.max_distance)
    for cluster in result.clusters:
        print("\t".join(cluster))
    print(
        f"{len(docs)} fingerprints, {len(result.clusters)} clusters, {len(result.dropped)} duplicates",
        file=sys.stderr,
    )
    return 0


def cmd_report_domains(args) -> int:
    from mathcrawl.services.domains import aggregate_domains, render_table, render_tsv

    stats = aggregate_domains(iter_records(args.records), by=args.by)
    if args.tsv:
        print(render_tsv(stats[: args.top] if args.top else stats))
    else:
        print(render_table(stats, by=args.by, top=args.top))
    return 0


def cmd_inspect(args) -> int:
    from mathcrawl.services.domains import aggregate_domains, render_table, top_share

    records = list(iter_records(args.records))
    longest = sorted(records, key=lambda r: (-len(r.text), r.url))[: args.longest]

    print(f"Longest documents ({len(records)} records)")
    for r in longest:
        preview = " ".join(r.text.split())[:80]
        print(f"{len(r.text):>10,}  {r.url}\n            {preview}")

    for by in ("docs", "chars"):
        stats = aggregate_domains(records, by=by)
        print()
        print(render_table(stats, by=by, top=args.top))
        print(f"top-{args.top} share: {100 * top_share(stats, args.top, by=by):.2f}%")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("mathcrawl.main:app", host=args.host or settings.host, port=args.port or settings.port)
    return 0


# ── Parser ────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML pipeline config")
    common.add_argument("--seed", type=int, metavar="N", help="run seed (rng_seed)")
    common.add_argument("--workers", type=int, metavar="N", help="worker processes (worker_count)")
    common.add_argument("--output", metavar="DIR", help="output directory (output_dir)")
    common.add_argument("--limit", type=int, metavar="N", help="max HTML records per shard")

    parser = _Parser(prog="mathcrawl", description=__description__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="full pipeline over WARC shards")
    p.add_argument("shards", nargs="*", metavar="SHARDS")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("extract", parents=[common], help="extract one local HTML file to stdout")
    p.add_argument("file", metavar="FILE")
    p.add_argument("--format", choices=("plain", "markdown"), help="force the output format")
    p.add_argument("--url", default="", help="source URL recorded on the document")
    p.add_argument("--json", action="store_true", help="print the ExtractedDoc instead of its text")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-mathscore", parents=[common], help="train the MathScore classifier")
    p.add_argument("shards", nargs="+", metavar="SHARDS")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--hash-bits", type=int, default=21)
    p.set_defaults(func=cmd_train_mathscore)

    p = sub.add_parser("train-lm", parents=[common], help="train the Kneser-Ney n-gram model")
    p.add_argument("texts", nargs="*", metavar="TEXT", help="one sentence per line (default: bundled sample)")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--unk-hapax", action="store_true", help="map singleton words to <unk>")
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("train-langid", parents=[common], help="train the language-ID classifier")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--data", metavar="DIR", help="directory of <lang>.txt files (default: bundled)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--hash-bits", type=int, default=21)
    p.set_defaults(func=cmd_train_langid)

    p = sub.add_parser("dedup", parents=[common], help="cluster fingerprint sidecars")
    p.add_argument("sidecars", nargs="+", metavar="SIDECARS")
    p.add_argument("--max-distance", type=int, default=19)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("report-domains", parents=[common], help="top domains of output records")
    p.add_argument("records", nargs="+", metavar="RECORDS")
    p.add_argument("--by", choices=("docs", "chars"), default="docs")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--tsv", action="store_true")
    p.set_defaults(func=cmd_report_domains)

    p = sub.add_parser("inspect", parents=[common], help="longest documents and top domains")
    p.add_argument("records", nargs="+", metavar="RECORDS")
    p.add_argument("--longest", type=int, default=10)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("serve", parents=[common], help="debugging API")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except MathCrawlError as e:
        logger.critical(f"ABORT error={e.error} message={e.message!r}")
        print(f"mathcrawl: {e.message}", file=sys.stderr)
        if e.detail:
            print(json.dumps(e.detail, indent=2, default=str), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.critical(f"ABORT error=OSError message={e!r}")
        print(f"mathcrawl: {e}", file=sys.stderr)
        return IO_EXIT_CODE
