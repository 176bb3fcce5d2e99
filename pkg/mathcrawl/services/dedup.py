"""
mathcrawl — Near-Duplicate Removal
64-bit SimHash fingerprints, banded candidate search with exact Hamming
verification, union-find clustering with one representative per cluster.
"""

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Literal, Protocol, Sequence

import mmh3
import numpy as np

logger = logging.getLogger(__name__)

FINGERPRINT_SEED = 0x51D
DEFAULT_MAX_DISTANCE = 19   # similarity 0.7 on 64 bits
FEATURE_CHUNK = 4096

Feature = Literal["word", "char"]

_BITS = np.arange(64, dtype=np.uint64)
_MARKDOWN = re.compile(r"(?m)^[ \t]*(?:#{1,6}[ \t]+|[-*][ \t]+|```.*$)")
_TABLE_RULE = re.compile(r"\|[ \t]*-{3,}[ \t]*(?=\|)|\|")


@dataclass(frozen=True)
class Fingerprint:
    bits: int
    doc_id: str = ""

    def __post_init__(self):
        if not 0 <= self.bits < 1 << 64:
            raise ValueError("fingerprint must be an unsigned 64-bit integer")

    @property
    def hex(self) -> str:
        return f"{self.bits:016x}"


@dataclass(frozen=True, order=True)
class DuplicatePair:
    i: int
    j: int
    distance: int


class Dedupable(Protocol):
    doc_id: str
    url: str
    fetch_time: datetime
    fingerprint: int


@dataclass(frozen=True)
class DedupDoc:
    doc_id: str
    url: str
    fetch_time: datetime
    fingerprint: int


@dataclass
class DedupResult:
    kept: list = field(default_factory=list)
    dropped: list[tuple[object, str]] = field(default_factory=list)   # (doc, cluster id)
    clusters: list[list[str]] = field(default_factory=list)


# ── Fingerprinting ────────────────────────────────────────────────────────────

def normalize(text: str) -> str:
    """Lowercase, markdown markers removed, whitespace collapsed."""
    text = _MARKDOWN.sub(" ", text)
    text = _TABLE_RULE.sub(" ", text)
    return " ".join(text.lower().split())


def features(text: str, feature: Feature = "char", ngram: int = 3) -> Counter:
    text = normalize(text)
    if not text:
        return Counter()
    if feature == "word":
        tokens = text.split()
        if len(tokens) <= ngram:
            return Counter([" ".join(tokens)])
        return Counter(" ".join(tokens[i:i + ngram]) for i in range(len(tokens) - ngram + 1))
    if len(text) <= ngram:
        return Counter([text])
    return Counter(text[i:i + ngram] for i in range(len(text) - ngram + 1))


def simhash(text: str, doc_id: str = "", feature: Feature = "char", ngram: int = 3) -> Fingerprint:
    """
    Each feature's 64-bit hash votes +count / -count per bit position; a bit is
    set where the total is positive (ties give 0). Empty text gives 0.
    """
    counts = features(text, feature, ngram)
    if not counts:
        return Fingerprint(0, doc_id)

    keys = list(counts)
    hashes = np.fromiter(
        (mmh3.hash64(k, FINGERPRINT_SEED, signed=False)[0] for k in keys), dtype=np.uint64, count=len(keys)
    )
    weights = np.fromiter((counts[k] for k in keys), dtype=np.int64, count=len(keys))

    acc = np.zeros(64, dtype=np.int64)
    for start in range(0, len(keys), FEATURE_CHUNK):
        h = hashes[start:start + FEATURE_CHUNK]
        w = weights[start:start + FEATURE_CHUNK]
        bits = ((h[:, None] >> _BITS) & np.uint64(1)).astype(np.int64)
        acc += ((2 * bits - 1) * w[:, None]).sum(axis=0)

    return Fingerprint(sum(1 << int(i) for i in np.flatnonzero(acc > 0)), doc_id)


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


# ── Candidate search ──────────────────────────────────────────────────────────

def _as_array(fps: Sequence) -> np.ndarray:
    return np.fromiter(
        (fp.bits if isinstance(fp, Fingerprint) else int(fp) for fp in fps), dtype=np.uint64, count=len(fps)
    )


def _pairs_within(arr: np.ndarray, i: np.ndarray, j: np.ndarray, max_distance: int) -> np.ndarray:
    """Encoded i * n + j for candidate pairs within max_distance."""
    dist = np.bitwise_count(arr[i] ^ arr[j])
    keep = dist <= max_distance
    return i[keep].astype(np.int64) * len(arr) + j[keep].astype(np.int64)


def find_duplicates(fps: Sequence, max_distance: int = DEFAULT_MAX_DISTANCE) -> list[DuplicatePair]:
    """
    All pairs (i < j) with Hamming distance <= max_distance.
    The 64 bits are split into max_distance + 1 bands; by pigeonhole any such
    pair agrees exactly on at least one band, so banding loses nothing.
    """
    if max_distance < 0:
        raise ValueError("max_distance must be >= 0")
    arr = _as_array(fps)
    n = len(arr)
    if n < 2:
        return []

    found: list[np.ndarray] = []
    if max_distance >= 64:
        i, j = np.triu_indices(n, 1)
        found.append(_pairs_within(arr, i, j, max_distance))
    else:
        edges = np.linspace(0, 64, min(max_distance + 1, 64) + 1).astype(int)
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = np.uint64((1 << int(hi - lo)) - 1)
            keys = (arr >> np.uint64(lo)) & mask
            order = np.argsort(keys, kind="stable")
            _, starts, sizes = np.unique(keys[order], return_index=True, return_counts=True)
            for start, size in zip(starts[sizes > 1], sizes[sizes > 1]):
                members = np.sort(order[start:start + size])
                a, b = np.triu_indices(size, 1)
                found.append(_pairs_within(arr, members[a], members[b], max_distance))

    if not found:
        return []
    encoded = np.unique(np.concatenate(found))
    i, j = encoded // n, encoded % n
    dist = np.bitwise_count(arr[i] ^ arr[j])
    return [DuplicatePair(int(a), int(b), int(d)) for a, b, d in zip(i, j, dist)]


# ── Clustering ────────────────────────────────────────────────────────────────

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def dedup_corpus(
    docs: Sequence[Dedupable],
    max_distance: int = DEFAULT_MAX_DISTANCE,
    prior: Sequence[Fingerprint] = (),
) -> DedupResult:
    """
    Cluster near-duplicates transitively and keep one document per cluster:
    earliest fetch_time, then smallest URL, then smallest doc id. Kept docs stay
    in input order. A cluster touching a prior-run fingerprint keeps nothing.
    """
    docs = list(docs)
    fps = [d.fingerprint for d in docs] + [p.bits for p in prior]
    uf = _UnionFind(len(fps))
    for pair in find_duplicates(fps, max_distance):
        uf.union(pair.i, pair.j)

    groups: dict[int, list[int]] = defaultdict(list)
    for idx in range(len(fps)):
        groups[uf.find(idx)].append(idx)

    result = DedupResult()
    cluster_of: dict[int, str] = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        current = [m for m in members if m < len(docs)]
        old = [prior[m - len(docs)].doc_id for m in members if m >= len(docs)]
        if not current:
            continue
        if old:
            cid = min(old)
        else:
            rep = min(current, key=lambda m: (docs[m].fetch_time, docs[m].url, docs[m].doc_id))
            cid = docs[rep].doc_id
            current = [m for m in current if m != rep]
        for m in current:
            cluster_of[m] = cid
        result.clusters.append(sorted([docs[m].doc_id for m in members if m < len(docs)] + old))

    for idx, doc in enumerate(docs):
        if idx in cluster_of:
            result.dropped.append((doc, cluster_of[idx]))
        else:
            result.kept.append(doc)

    result.clusters.sort()
    logger.info(
        f"DEDUP_DONE docs={len(docs)} prior={len(prior)} clusters={len(result.clusters)} "
        f"dropped={len(result.dropped)}"
    )
    return result


# ── Sidecars ──────────────────────────────────────────────────────────────────

def write_sidecar(path: Path | str, fps: Iterable[Fingerprint]) -> None:
    """One "doc_id<TAB>16 hex digits" line per fingerprint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for fp in fps:
            f.write(f"{fp.doc_id}\t{fp.hex}\n")


def read_sidecar(path: Path | str) -> list[Fingerprint]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            doc_id, _, bits = line.rpartition("\t")
            if not doc_id or len(bits) != 16:
                logger.warning(f"SIDECAR_BAD_LINE path={path} line={lineno}")
                continue
            try:
                out.append(Fingerprint(int(bits, 16), doc_id))
            except ValueError:
                logger.warning(f"SIDECAR_BAD_LINE path={path} line={lineno}")
    return out
