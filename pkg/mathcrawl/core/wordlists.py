"""
mathcrawl — Wordlists
Plain-text config lists (one entry per line, "#" comments) and the bundled defaults.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

from mathcrawl.config import ExtractionSettings, PrefilterSettings, settings
from mathcrawl.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

# Bundled resource names under mathcrawl/data
KEYWORDS_FILE = "math_keywords.txt"
COMMANDS_FILE = "latex_commands.txt"
BOILERPLATE_FILE = "boilerplate_phrases.txt"
BLOCKLIST_FILE = "element_blocklist.txt"
RENDER_SERVICES_FILE = "render_services.txt"
URL_RULES_FILE = "url_rules.txt"
BLACKLIST_FILE = "domain_blacklist.txt"


def load_wordlist(path: Path | str) -> list[str]:
    """
    Read one entry per line. Blank lines and lines starting with "#" are skipped;
    order is preserved and duplicates are dropped.
    """
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read list file: {path}", {"reason": str(e)})

    entries: list[str] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        entry = line.strip()
        if not entry or entry.startswith("#") or entry in seen:
            continue
        seen.add(entry)
        entries.append(entry)
    return entries


@dataclass(frozen=True)
class KeywordList:
    """Prefilter tier-1 terms and tier-2 LaTeX commands"""
    terms: tuple[str, ...]
    symbols: tuple[str, ...]

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("keyword list is empty")
        bad = [s for s in self.symbols if not s.startswith("\\")]
        if bad:
            raise ConfigError("every LaTeX symbol must start with a backslash", {"symbols": bad[:10]})

    def with_term(self, term: str) -> "KeywordList":
        return KeywordList(self.terms + (term,), self.symbols)


@dataclass(frozen=True)
class Wordlists:
    """Everything extraction reads from config lists, loaded once per worker"""
    keywords: KeywordList
    boilerplate: tuple[str, ...]
    blocklist: tuple[str, ...]
    render_services: tuple[str, ...]

    @property
    def commands(self) -> tuple[str, ...]:
        return self.keywords.symbols


def load_keywords(cfg: PrefilterSettings | None = None) -> KeywordList:
    cfg = cfg or PrefilterSettings()
    return KeywordList(
        terms=tuple(load_wordlist(settings.data_path(KEYWORDS_FILE, cfg.keywords_path))),
        symbols=tuple(load_wordlist(settings.data_path(COMMANDS_FILE, cfg.symbols_path))),
    )


def load_wordlists(
    prefilter: PrefilterSettings | None = None,
    extraction: ExtractionSettings | None = None,
) -> Wordlists:
    extraction = extraction or ExtractionSettings()
    lists = Wordlists(
        keywords=load_keywords(prefilter),
        boilerplate=tuple(p.lower() for p in load_wordlist(
            settings.data_path(BOILERPLATE_FILE, extraction.boilerplate_path))),
        blocklist=tuple(t.lower() for t in load_wordlist(
            settings.data_path(BLOCKLIST_FILE, extraction.blocklist_path))),
        render_services=tuple(h.lower() for h in load_wordlist(
            settings.data_path(RENDER_SERVICES_FILE, extraction.render_services_path))),
    )
    logger.debug(
        f"WORDLISTS_LOADED terms={len(lists.keywords.terms)} symbols={len(lists.commands)} "
        f"boilerplate={len(lists.boilerplate)} blocklist={len(lists.blocklist)}"
    )
    return lists


# Module-level default lists (bundled files, loaded on first use)
_default_lists: Wordlists | None = None


def get_default_wordlists() -> Wordlists:
    global _default_lists
    if _default_lists is None:
        _default_lists = load_wordlists()
    return _default_lists
