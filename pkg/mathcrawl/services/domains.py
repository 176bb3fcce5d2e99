"""
mathcrawl — Domain Report
Registrable-domain statistics for manual inspection, plus blacklist and URL-rule filtering.
"""

import fnmatch
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence
from urllib.parse import urlsplit

import tldextract

from mathcrawl.core.wordlists import load_wordlist
from mathcrawl.models.schemas import DomainStats

logger = logging.getLogger(__name__)

INVALID_DOMAIN = "<invalid>"
ANY_DOMAIN = "*"

Measure = Literal["docs", "chars"]

_COLUMN = {"docs": "Documents", "chars": "Characters"}


# ── Registrable domains ───────────────────────────────────────────────────────

# Bundled public suffix snapshot only; never fetched
_extractor: Optional[tldextract.TLDExtract] = None


def get_extractor() -> tldextract.TLDExtract:
    global _extractor
    if _extractor is None:
        _extractor = tldextract.TLDExtract(suffix_list_urls=())
    return _extractor


def host_of(url: str) -> str:
    try:
        return (urlsplit(url).hostname or "").rstrip(".").lower()
    except ValueError:
        return ""


def registrable_domain(url: str) -> str:
    """Public-suffix aware: math.stackexchange.com -> stackexchange.com. Hosts without a suffix are kept whole."""
    host = host_of(url)
    if not host:
        return INVALID_DOMAIN
    ext = get_extractor()(host)
    if ext.domain and ext.suffix:
        return f"{ext.domain}.{ext.suffix}"
    return host


# ── Aggregation ───────────────────────────────────────────────────────────────

@dataclass
class DomainTally:
    """Partial per-domain counts; merge() is order independent."""
    docs: Counter = field(default_factory=Counter)
    chars: Counter = field(default_factory=Counter)

    def add(self, url: str, char_count: int) -> None:
        domain = registrable_domain(url)
        self.docs[domain] += 1
        self.chars[domain] += char_count

    def merge(self, other: "DomainTally") -> "DomainTally":
        self.docs.update(other.docs)
        self.chars.update(other.chars)
        return self

    def stats(self, by: Measure = "docs") -> list[DomainStats]:
        total_docs = sum(self.docs.values())
        total_chars = sum(self.chars.values())
        measure = self.docs if by == "docs" else self.chars
        rows = [
            DomainStats(
                domain=d,
                doc_count=self.docs[d],
                char_count=self.chars[d],
                share_docs=self.docs[d] / total_docs if total_docs else 0.0,
                share_chars=self.chars[d] / total_chars if total_chars else 0.0,
            )
            for d in self.docs
        ]
        return sorted(rows, key=lambda s: (-measure[s.domain], s.domain))


def aggregate_domains(docs: Iterable, by: Measure = "docs") -> list[DomainStats]:
    """Group docs (anything with .url and .text) by registrable domain, sorted by the chosen count."""
    if by not in _COLUMN:
        raise ValueError(f"by must be one of {sorted(_COLUMN)}")
    tally = DomainTally()
    for doc in docs:
        tally.add(doc.url, len(doc.text))
    return tally.stats(by)


def top_share(stats: Sequence[DomainStats], k: int, by: Measure = "chars") -> float:
    """Fraction of documents or characters held by the k largest domains."""
    key = "share_docs" if by == "docs" else "share_chars"
    shares = sorted((getattr(s, key) for s in stats), reverse=True)
    return sum(shares[:k])


def render_table(stats: Sequence[DomainStats], by: Measure = "docs", top: Optional[int] = None) -> str:
    col = _COLUMN[by]
    rows = list(stats)[:top] if top else list(stats)
    body = [
        (s.domain, f"{s.doc_count if by == 'docs' else s.char_count:,}",
         f"{100 * (s.share_docs if by == 'docs' else s.share_chars):.2f}%")
        for s in rows
    ]
    header = ("Domain", f"# {col}", f"% of {col}")
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(3)]

    lines = [f"{header[0]:<{widths[0]}}  {header[1]:>{widths[1]}}  {header[2]:>{widths[2]}}"]
    lines.append("  ".join("-" * w for w in widths))
    lines += [f"{d:<{widths[0]}}  {c:>{widths[1]}}  {p:>{widths[2]}}" for d, c, p in body]
    return "\n".join(lines)


def render_tsv(stats: Sequence[DomainStats]) -> str:
    lines = ["domain\tdoc_count\tchar_count\tshare_docs\tshare_chars"]
    lines += [
        f"{s.domain}\t{s.doc_count}\t{s.char_count}\t{s.share_docs:.6f}\t{s.share_chars:.6f}" for s in stats
    ]
    return "\n".join(lines)


# ── Rules ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class UrlRule:
    domain: str      # glob over host or registrable domain, "*" for any
    pattern: str     # substring of path + "?" + query

    @property
    def label(self) -> str:
        return self.pattern if self.domain == ANY_DOMAIN else f"{self.domain} {self.pattern}"

    def matches(self, host: str, domain: str, target: str) -> bool:
        if self.pattern not in target:
            return False
        return self.domain == ANY_DOMAIN or fnmatch.fnmatch(host, self.domain) or fnmatch.fnmatch(domain, self.domain)


@dataclass
class RuleResult:
    kept: list = field(default_factory=list)
    dropped: list[tuple[object, str]] = field(default_factory=list)   # (doc, counter key)
    counters: Counter = field(default_factory=Counter)


def parse_url_rules(lines: Iterable[str]) -> list[UrlRule]:
    """One rule per line, "domain-glob path-pattern"; a single field applies to every domain."""
    rules = []
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if len(parts) == 1:
            rules.append(UrlRule(ANY_DOMAIN, parts[0]))
        else:
            rules.append(UrlRule(parts[0].lower(), " ".join(parts[1:])))
    return rules


def load_url_rules(path: Path | str) -> list[UrlRule]:
    return parse_url_rules(load_wordlist(path))


def load_blacklist(path: Path | str) -> list[str]:
    return [d.lower().strip(".") for d in load_wordlist(path)]


def _url_target(url: str) -> str:
    try:
        parts = urlsplit(url)
    except ValueError:
        return url
    return parts.path + ("?" + parts.query if parts.query else "")


def apply_domain_rules(docs: Iterable, blacklist: Iterable[str], url_rules: Sequence[UrlRule]) -> RuleResult:
    """
    Drop docs whose host or registrable domain is blacklisted, then docs whose
    URL matches a rule. Each drop is counted under the first match only, so
    kept + sum(counters) equals the input count.
    """
    blocked = frozenset(d.lower() for d in blacklist)
    result = RuleResult()

    for doc in docs:
        host = host_of(doc.url)
        domain = registrable_domain(doc.url)
        reason = None

        if blocked:
            labels = host.split(".")
            suffixes = {".".join(labels[i:]) for i in range(len(labels))}
            hit = sorted((suffixes | {domain}) & blocked)
            if hit:
                reason = f"blacklist:{hit[0]}"

        if reason is None:
            target = _url_target(doc.url)
            rule = next((r for r in url_rules if r.matches(host, domain, target)), None)
            if rule is not None:
                reason = rule.label

        if reason is None:
            result.kept.append(doc)
        else:
            result.dropped.append((doc, reason))
            result.counters[reason] += 1

    if result.dropped:
        logger.info(f"DOMAIN_RULES kept={len(result.kept)} dropped={len(result.dropped)} rules={dict(result.counters)}")
    return result
