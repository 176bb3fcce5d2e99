"""
mathcrawl — N-gram Language Model
Interpolated modified Kneser-Ney, stored ARPA-style (log10 probs + backoffs).
Scores documents by perplexity for the quality filter.
"""

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from mathcrawl.core.exceptions import EmptyDocumentError, ModelFormatError, ModelLoadError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
NUM = "<num>"

MAX_ORDER = 5
FALLBACK_DISCOUNT = 0.75
BOS_LOG_PROB = -99.0

_COMMAND_SPLIT = re.compile(r"\\[A-Za-z]+|[^\\]+|\\")
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")
_DIGITS = re.compile(r"\d+")


@dataclass
class NgramModel:
    """
    probs:    n-gram tuple -> log10 P(w | h), interpolated, for every observed n-gram
              (the unigram table covers the whole vocabulary)
    backoffs: context tuple -> log10 backoff weight
    """
    order: int
    probs: dict[tuple[str, ...], float]
    backoffs: dict[tuple[str, ...], float]
    vocab: frozenset[str]
    discounts: dict[int, tuple[float, float, float]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise ModelFormatError("n-gram order must be >= 1")
        missing = {BOS, EOS, UNK} - self.vocab
        if missing:
            raise ModelFormatError("vocabulary lacks special tokens", {"missing": sorted(missing)})

    def counts(self) -> dict[int, int]:
        sizes = Counter(len(g) for g in self.probs)
        return {n: sizes.get(n, 0) for n in range(1, self.order + 1)}


# ── Tokenization ──────────────────────────────────────────────────────────────

def tokenize(text: str) -> list[str]:
    """
    Whitespace split; LaTeX commands stay whole and keep their case; other
    pieces are lowercased, trimmed of edge punctuation, digit runs -> <num>.
    """
    tokens = []
    for piece in text.split():
        for part in _COMMAND_SPLIT.findall(piece):
            if part.startswith("\\") and len(part) > 1:
                tokens.append(part)
                continue
            tok = _EDGE_PUNCT.sub("", part.lower())
            if tok:
                tokens.append(_DIGITS.sub(NUM, tok))
    return tokens


def sentences_from_text(text: str) -> list[list[str]]:
    """One sentence per line; lines without tokens are skipped."""
    return [toks for toks in (tokenize(line) for line in text.splitlines()) if toks]


# ── Estimation ────────────────────────────────────────────────────────────────

def _raw_counts(sentences: Sequence[Sequence[str]], order: int) -> list[Counter]:
    raw = [Counter() for _ in range(order + 1)]
    for sent in sentences:
        padded = [BOS, *sent, EOS]
        for n in range(1, order + 1):
            table = raw[n]
            for i in range(len(padded) - n + 1):
                table[tuple(padded[i:i + n])] += 1
    return raw


def _adjusted_counts(raw: list[Counter], order: int) -> list[dict]:
    """Raw counts at the top order and for n-grams starting with <s>; left-continuation counts otherwise."""
    adjusted: list[dict] = [{} for _ in range(order + 1)]
    adjusted[order] = dict(raw[order])
    for n in range(order - 1, 0, -1):
        continuation = Counter(g[1:] for g in raw[n + 1])
        adjusted[n] = {g: (c if g[0] == BOS else continuation[g]) for g, c in raw[n].items()}
    return adjusted


def _discounts(adjusted: dict, n: int) -> tuple[float, float, float]:
    """D1, D2, D3+ from counts of counts; 0.75 throughout when the statistics are degenerate."""
    coc = Counter(a for g, a in adjusted.items() if g != (BOS,))
    n1, n2, n3, n4 = (coc.get(k, 0) for k in (1, 2, 3, 4))

    fallback = (FALLBACK_DISCOUNT,) * 3
    if n1 == 0 or n2 == 0 or n3 == 0:
        logger.warning(f"LM_DISCOUNT_FALLBACK order={n} n1={n1} n2={n2} n3={n3}")
        return fallback

    y = n1 / (n1 + 2 * n2)
    d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    if any(not 0.0 < dk <= k for k, dk in enumerate(d, start=1)):
        logger.warning(f"LM_DISCOUNT_FALLBACK order={n} discounts={d}")
        return fallback
    return d


def _discount(d: tuple[float, float, float], count: int) -> float:
    return 0.0 if count == 0 else d[min(count, 3) - 1]


def _query(probs: dict, backoffs: dict, word: str, context: tuple[str, ...]) -> float:
    total = 0.0
    while True:
        lp = probs.get(context + (word,))
        if lp is not None:
            return total + lp
        if not context:
            raise KeyError(word)
        total += backoffs.get(context, 0.0)
        context = context[1:]


def train_lm(sentences: Iterable[Sequence[str]], order: int = MAX_ORDER, unk_hapax: bool = False) -> NgramModel:
    """
    Estimate an interpolated modified Kneser-Ney model from tokenized sentences.
    Each sentence is padded with one <s> and one </s>. With unk_hapax, tokens
    seen once are mapped to <unk> before counting.
    """
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}]")
    sentences = [list(s) for s in sentences]
    if not sentences:
        raise ValueError("corpus must contain at least one sentence")

    if unk_hapax:
        freq = Counter(tok for s in sentences for tok in s)
        sentences = [[tok if freq[tok] > 1 else UNK for tok in s] for s in sentences]

    raw = _raw_counts(sentences, order)
    adjusted = _adjusted_counts(raw, order)
    vocab = frozenset({BOS, EOS, UNK} | {g[0] for g in raw[1]})
    predictable = sorted(vocab - {BOS})

    probs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    discounts: dict[int, tuple[float, float, float]] = {}

    for n in range(1, order + 1):
        d = _discounts(adjusted[n], n)
        discounts[n] = d

        totals: dict[tuple, int] = defaultdict(int)
        mass: dict[tuple, float] = defaultdict(float)
        for g, a in adjusted[n].items():
            if g == (BOS,):
                continue
            totals[g[:-1]] += a
            mass[g[:-1]] += _discount(d, a)
        gamma = {h: mass[h] / totals[h] for h in totals}

        if n == 1:
            s, g1 = totals[()], gamma[()]
            for w in predictable:
                a = adjusted[1].get((w,), 0)
                p = max(a - _discount(d, a), 0.0) / s + g1 / len(predictable)
                probs[(w,)] = math.log10(p)
            probs[(BOS,)] = BOS_LOG_PROB
            continue

        for h, g_h in gamma.items():
            backoffs[h] = math.log10(g_h)
        for g, a in adjusted[n].items():
            h = g[:-1]
            lower = 10.0 ** _query(probs, backoffs, g[-1], h[1:])
            p = max(a - _discount(d, a), 0.0) / totals[h] + gamma[h] * lower
            probs[g] = math.log10(p)

    model = NgramModel(order=order, probs=probs, backoffs=backoffs, vocab=vocab, discounts=discounts)
    logger.info(f"LM_TRAINED order={order} sentences={len(sentences)} vocab={len(vocab)} ngrams={model.counts()}")
    return model


# ── Scoring ───────────────────────────────────────────────────────────────────

def _map(model: NgramModel, token: str) -> str:
    return token if token in model.vocab else UNK


def log_prob(model: NgramModel, word: str, history: Sequence[str] = ()) -> float:
    """log10 P(word | history); OOV tokens score as <unk>."""
    word = _map(model, word)
    if word == BOS:
        return BOS_LOG_PROB
    context = tuple(_map(model, t) for t in history[len(history) - model.order + 1:]) if model.order > 1 else ()
    return _query(model.probs, model.backoffs, word, context)


def sentence_log_prob(model: NgramModel, tokens: Sequence[str]) -> float:
    """log10 probability of tokens followed by </s>, history starting at <s>."""
    history = [BOS]
    total = 0.0
    for tok in [*tokens, EOS]:
        total += log_prob(model, tok, history)
        history.append(tok)
    return total


def perplexity(model: NgramModel, text: str) -> float:
    """
    10 ** (-(1/T) * sum log10 P) over every token and each sentence's </s>;
    <s> is not counted. Raises EmptyDocumentError when nothing tokenizes.
    """
    sentences = sentences_from_text(text)
    if not sentences:
        raise EmptyDocumentError()
    total = sum(sentence_log_prob(model, s) for s in sentences)
    scored = sum(len(s) + 1 for s in sentences)
    return 10.0 ** (-total / scored)


# ── ARPA ──────────────────────────────────────────────────────────────────────

def save_arpa(model: NgramModel, path: Path | str) -> None:
    path = Path(path)
    by_order: dict[int, list] = defaultdict(list)
    for g, lp in model.probs.items():
        by_order[len(g)].append((g, lp))

    lines = ["\\data\\"]
    lines += [f"ngram {n}={len(by_order[n])}" for n in range(1, model.order + 1)]
    for n in range(1, model.order + 1):
        lines += ["", f"\\{n}-grams:"]
        for g, lp in sorted(by_order[n]):
            row = f"{lp!r}\t{' '.join(g)}"
            if g in model.backoffs:
                row += f"\t{model.backoffs[g]!r}"
            lines.append(row)
    lines += ["", "\\end\\", ""]

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines), encoding="utf-8")
    logger.info(f"LM_SAVED path={path} order={model.order}")


def load_arpa(path: Path | str) -> NgramModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ModelLoadError(f"cannot read ARPA model: {path}", {"reason": str(e)})

    declared: dict[int, int] = {}
    probs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    section = None

    try:
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line == "\\data\\":
                section = 0
            elif line == "\\end\\":
                break
            elif line.startswith("\\") and line.endswith("-grams:"):
                section = int(line[1:line.index("-")])
            elif section == 0 and line.startswith("ngram "):
                n, count = line[6:].split("=")
                declared[int(n)] = int(count)
            elif section:
                parts = line.split()
                if len(parts) not in (section + 1, section + 2):
                    raise ValueError(f"line {lineno}: expected {section} words")
                g = tuple(parts[1:section + 1])
                probs[g] = float(parts[0])
                if len(parts) == section + 2:
                    backoffs[g] = float(parts[-1])
    except ValueError as e:
        raise ModelFormatError(f"malformed ARPA model: {path}", {"reason": str(e)})

    if not declared:
        raise ModelFormatError(f"ARPA model has no \\data\\ header: {path}")
    actual = Counter(len(g) for g in probs)
    if any(actual.get(n, 0) != c for n, c in declared.items()):
        raise ModelFormatError(
            f"ARPA n-gram counts do not match header: {path}",
            {"declared": declared, "actual": dict(actual)},
        )

    vocab = frozenset(g[0] for g in probs if len(g) == 1)
    return NgramModel(order=max(declared), probs=probs, backoffs=backoffs, vocab=vocab)
