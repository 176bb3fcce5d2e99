"""
mathcrawl — WARC Shard Reader
Streams HTML response records out of WARC/1.0 and WARC/1.1 shards (plain or per-record gzip).
"""

import codecs
import io
import logging
import mmap
import re
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator
from urllib.parse import urlsplit

from warcio.archiveiterator import ArchiveIterator

from mathcrawl.core.exceptions import ShardOpenError

logger = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b\x08"
WARC_MAGIC = b"WARC/1."
HTML_TYPES = frozenset({"text/html", "application/xhtml+xml"})
DEFAULT_MAX_RECORD_BYTES = 2 * 1024 * 1024

_CHUNK = 1 << 16
_CONTENT_LENGTH = re.compile(rb"(?im)^content-length:[ \t]*(\d+)[ \t]*\r?$")
_CHARSET = re.compile(r"""charset\s*=\s*["']?([\w.:-]+)""", re.IGNORECASE)
_META_CHARSET = re.compile(rb"""<meta[^>]+charset\s*=\s*["']?([\w.:-]+)""", re.IGNORECASE)


@dataclass(frozen=True)
class ArchiveRecord:
    """One fetched HTML page"""
    url: str
    fetch_time: datetime
    content_type: str
    status_code: int
    body: bytes
    record_id: str
    truncated: bool = False


@dataclass
class IngestStats:
    records: int = 0
    skipped: int = 0
    non_response: int = 0
    non_html: int = 0
    truncated: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "records": self.records,
            "skipped": self.skipped,
            "non_response": self.non_response,
            "non_html": self.non_html,
            "truncated": self.truncated,
        }


# ── Record framing ────────────────────────────────────────────────────────────

def _gzip_members(data, stats: IngestStats, label: str) -> Iterator[bytes]:
    """Split a multi-member gzip file into decompressed member payloads."""
    pos, n = 0, len(data)
    while pos < n:
        start = pos
        d = zlib.decompressobj(wbits=31)
        out = []
        try:
            while not d.eof and pos < n:
                chunk = data[pos:pos + _CHUNK]
                out.append(d.decompress(chunk))
                pos += len(chunk)
            if not d.eof:
                raise zlib.error("truncated gzip member")
        except zlib.error as e:
            stats.skipped += 1
            logger.warning(f"WARC_SKIP_RECORD shard={label} offset={start} error={e}")
            nxt = data.find(GZIP_MAGIC, start + 1)
            pos = n if nxt < 0 else nxt
            continue
        pos -= len(d.unused_data)
        yield b"".join(out)


def _plain_records(data, stats: IngestStats, label: str) -> Iterator[bytes]:
    """Split an uncompressed WARC file on header block + Content-Length."""
    pos, n = 0, len(data)
    while pos < n:
        while pos < n and data[pos:pos + 1] in (b"\r", b"\n"):
            pos += 1
        if pos >= n:
            break

        header_end = data.find(b"\r\n\r\n", pos)
        header = data[pos:header_end] if header_end >= 0 else b""
        length = _CONTENT_LENGTH.search(header) if header else None

        if not header.startswith(WARC_MAGIC) or length is None:
            stats.skipped += 1
            logger.warning(f"WARC_SKIP_RECORD shard={label} offset={pos} error=bad header block")
            nxt = data.find(b"\n" + WARC_MAGIC, pos + 1)
            pos = n if nxt < 0 else nxt + 1
            continue

        end = header_end + 4 + int(length.group(1))
        if end > n:
            stats.skipped += 1
            logger.warning(f"WARC_SKIP_RECORD shard={label} offset={pos} error=truncated payload")
            break
        yield bytes(data[pos:end])
        pos = end


# ── Record parsing ────────────────────────────────────────────────────────────

def _media_type(content_type: str) -> str:
    return content_type.split(";", 1)[0].strip().lower()


def _parse_warc_date(value: str) -> datetime:
    ts = datetime.fromisoformat(value.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _to_record(blob: bytes, stats: IngestStats, max_bytes: int) -> ArchiveRecord | None:
    """Parse one framed record with warcio; None for records the pipeline ignores."""
    for rec in ArchiveIterator(io.BytesIO(blob)):
        if rec.rec_type != "response":
            stats.non_response += 1
            return None

        content_type = ""
        status = 0
        if rec.http_headers is not None:
            content_type = rec.http_headers.get_header("Content-Type") or ""
            status = int(rec.http_headers.get_statuscode() or 0)
        if not content_type:
            content_type = rec.rec_headers.get_header("WARC-Identified-Payload-Type") or ""
        if _media_type(content_type) not in HTML_TYPES:
            stats.non_html += 1
            return None

        url = (rec.rec_headers.get_header("WARC-Target-URI") or "").strip()
        parts = urlsplit(url)
        if not parts.scheme or not parts.hostname:
            raise ValueError(f"not an absolute URL: {url!r}")

        body = rec.content_stream().read(max_bytes + 1)
        truncated = len(body) > max_bytes
        if truncated:
            body = body[:max_bytes]
            stats.truncated += 1

        return ArchiveRecord(
            url=url,
            fetch_time=_parse_warc_date(rec.rec_headers.get_header("WARC-Date") or ""),
            content_type=content_type,
            status_code=status,
            body=body,
            record_id=rec.rec_headers.get_header("WARC-Record-ID") or "",
            truncated=truncated,
        )
    raise ValueError("no WARC record in block")


class ShardReader:
    """
    Single-consumer record stream over one shard.
    Iterating yields ArchiveRecord for HTML responses in on-disk order;
    malformed records are skipped and counted in stats.skipped.
    """

    def __init__(self, path: Path, max_record_bytes: int = DEFAULT_MAX_RECORD_BYTES):
        self.path = Path(path)
        self.max_record_bytes = max_record_bytes
        self.stats = IngestStats()
        self._file = None
        self._data = b""

        try:
            self._file = open(self.path, "rb")
            size = self.path.stat().st_size
            if size:
                self._data = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        except OSError as e:
            self.close()
            raise ShardOpenError(f"cannot open shard: {self.path}", {"reason": str(e)})

        head = self._data[:_CHUNK]
        self.gzipped = head.startswith(GZIP_MAGIC)
        if head and not self.gzipped and WARC_MAGIC not in head:
            self.close()
            raise ShardOpenError(f"not a WARC file: {self.path}")

    def __iter__(self) -> Iterator[ArchiveRecord]:
        label = self.path.name
        blobs = (_gzip_members if self.gzipped else _plain_records)(self._data, self.stats, label)
        try:
            for offset, blob in enumerate(blobs):
                try:
                    record = _to_record(blob, self.stats, self.max_record_bytes)
                except Exception as e:
                    self.stats.skipped += 1
                    logger.warning(f"WARC_SKIP_RECORD shard={label} index={offset} error={e}")
                    continue
                if record is not None:
                    self.stats.records += 1
                    yield record
        finally:
            logger.debug(f"WARC_SHARD_DONE shard={label} {self.stats.as_dict()}")

    def close(self):
        if isinstance(self._data, mmap.mmap):
            self._data.close()
        self._data = b""
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_shard(path: Path | str, max_record_bytes: int = DEFAULT_MAX_RECORD_BYTES) -> ShardReader:
    """Open a shard for streaming; raises ShardOpenError if it cannot be read."""
    return ShardReader(Path(path), max_record_bytes)


# ── Decoding ──────────────────────────────────────────────────────────────────

def _lookup(name: str) -> str | None:
    try:
        return codecs.lookup(name).name
    except LookupError:
        return None


def decode_bytes(body: bytes, content_type: str = "") -> str:
    """
    Decode HTML bytes: HTTP charset, then <meta> charset in the first 1024 bytes,
    then UTF-8 with replacement. Never raises.
    """
    candidates = []
    m = _CHARSET.search(content_type or "")
    if m:
        candidates.append(m.group(1))
    m = _META_CHARSET.search(body[:1024])
    if m:
        candidates.append(m.group(1).decode("ascii", "ignore"))

    for name in candidates:
        encoding = _lookup(name)
        if encoding:
            try:
                return body.decode(encoding, errors="replace")
            except LookupError:
                continue
    return body.decode("utf-8", errors="replace")


def decode_html(record: ArchiveRecord) -> str:
    return decode_bytes(record.body, record.content_type)
