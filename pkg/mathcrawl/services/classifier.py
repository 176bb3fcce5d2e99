"""
mathcrawl — Linear Text Classifier
Hashed unigram+bigram softmax classifier used for language ID and MathScore.
"""

import logging
import re
import struct
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import mmh3
import numpy as np

from mathcrawl.config import settings
from mathcrawl.core.exceptions import ConfigError, DegenerateLabelSetError, ModelFormatError, ModelLoadError
from mathcrawl.core.wordlists import load_wordlist

logger = logging.getLogger(__name__)

# Feature hash: MurmurHash3 x64-128, first 64-bit word, unsigned, fixed seed.
HASH_SEED = 0x5EED
DEFAULT_HASH_BITS = 21
DEFAULT_ORDERS = (1, 2)

MAGIC = b"OWMC"
FORMAT_VERSION = 1

MATH_LABEL = "math"
OTHER_LABEL = "other"
LANGID_DIR = "langid"

_TOKEN = re.compile(r"\w+")
_COMMAND = re.compile(r"\\[A-Za-z]+")


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: str


@dataclass
class ClassifierModel:
    """weights[bucket, class]; rows are hashed n-gram buckets."""
    hash_bits: int
    orders: tuple[int, ...]
    class_names: tuple[str, ...]
    weights: np.ndarray
    norm: str = "l1_token_count"
    loss_history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        if len(self.class_names) < 2 or len(set(self.class_names)) != len(self.class_names):
            raise ModelFormatError("class names must be unique with at least two entries")
        expected = (1 << self.hash_bits, len(self.class_names))
        if self.weights.shape != expected:
            raise ModelFormatError(
                "weight matrix does not match buckets x classes",
                {"expected": list(expected), "actual": list(self.weights.shape)},
            )

    @classmethod
    def zeros(cls, class_names: Sequence[str], hash_bits: int = DEFAULT_HASH_BITS,
              orders: Sequence[int] = DEFAULT_ORDERS) -> "ClassifierModel":
        return cls(
            hash_bits=hash_bits,
            orders=tuple(sorted(orders)),
            class_names=tuple(class_names),
            weights=np.zeros((1 << hash_bits, len(class_names)), dtype=np.float64),
        )

    @property
    def buckets(self) -> int:
        return 1 << self.hash_bits


# ── Features ──────────────────────────────────────────────────────────────────

def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def feature_hash(ngram: str, hash_bits: int) -> int:
    """Bucket of one n-gram ("w" or "w1 w2"); stable across runs and platforms."""
    return mmh3.hash64(ngram, HASH_SEED, signed=False)[0] & ((1 << hash_bits) - 1)


def extract_features(text: str, hash_bits: int, orders: Sequence[int] = DEFAULT_ORDERS
                     ) -> tuple[np.ndarray, np.ndarray]:
    """
    Sparse feature vector of a text: (unique bucket ids, weights).
    Weights are n-gram counts divided by the total n-gram count.
    """
    tokens = tokenize(text)
    grams: list[str] = []
    for n in orders:
        grams.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    if not grams:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)

    ids = np.fromiter((feature_hash(g, hash_bits) for g in grams), dtype=np.int64, count=len(grams))
    buckets, counts = np.unique(ids, return_counts=True)
    return buckets, counts / len(grams)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _probabilities(weights: np.ndarray, ids: np.ndarray, vals: np.ndarray) -> np.ndarray:
    if ids.size == 0:
        return np.full(weights.shape[1], 1.0 / weights.shape[1])
    return _softmax(vals @ weights[ids])


# ── Inference ─────────────────────────────────────────────────────────────────

def predict(model: ClassifierModel, text: str) -> dict[str, float]:
    """Class probabilities; empty text gives the uniform distribution."""
    ids, vals = extract_features(text, model.hash_bits, model.orders)
    probs = _probabilities(model.weights, ids, vals)
    return {name: float(p) for name, p in zip(model.class_names, probs)}


def predict_label(model: ClassifierModel, text: str) -> tuple[str, float]:
    probs = predict(model, text)
    label = max(model.class_names, key=lambda c: probs[c])
    return label, probs[label]


# ── Training ──────────────────────────────────────────────────────────────────

def _featurize(model: ClassifierModel, examples: Sequence[LabeledExample]):
    index = {c: i for i, c in enumerate(model.class_names)}
    feats = [extract_features(ex.text, model.hash_bits, model.orders) for ex in examples]
    labels = np.array([index[ex.label] for ex in examples], dtype=np.int64)
    return feats, labels


def loss_and_grad(model: ClassifierModel, examples: Sequence[LabeledExample]
                  ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over examples and its dense gradient w.r.t. model.weights."""
    feats, labels = _featurize(model, examples)
    grad = np.zeros_like(model.weights, dtype=np.float64)
    loss = 0.0
    for (ids, vals), y in zip(feats, labels):
        p = _probabilities(model.weights, ids, vals)
        loss -= np.log(p[y])
        if ids.size:
            g = p.copy()
            g[y] -= 1.0
            grad[ids] += np.outer(vals, g)
    n = max(len(examples), 1)
    return loss / n, grad / n


def _mean_loss(weights: np.ndarray, feats, labels) -> float:
    total = 0.0
    for (ids, vals), y in zip(feats, labels):
        total -= np.log(_probabilities(weights, ids, vals)[y])
    return total / max(len(labels), 1)


def train(
    examples: Sequence[LabeledExample],
    epochs: int = 5,
    lr: float = 0.5,
    seed: int = 0,
    hash_bits: int = DEFAULT_HASH_BITS,
    orders: Sequence[int] = DEFAULT_ORDERS,
) -> ClassifierModel:
    """
    Averaged SGD on the softmax loss, one example per step, linear lr decay.
    Each step is divided by the squared norm of the example's features, so an
    update moves that example's own logits by lr * (p - y) however many grams
    it has. The returned weights are the running average of the iterates,
    kept sparse with the lazy-average trick (w - u / c). Deterministic for a seed.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    class_names = tuple(sorted({ex.label for ex in examples}))
    if len(class_names) < 2:
        raise DegenerateLabelSetError(detail={"classes": list(class_names)})

    model = ClassifierModel.zeros(class_names, hash_bits, orders)
    feats, labels = _featurize(model, examples)
    n = len(feats)

    w = np.zeros_like(model.weights)
    u = np.zeros_like(model.weights)
    rng = np.random.default_rng(seed)
    total_steps = epochs * n
    step = 0

    for epoch in range(epochs):
        for i in rng.permutation(n):
            ids, vals = feats[i]
            step += 1
            if ids.size == 0:
                continue
            rate = lr * (1.0 - (step - 1) / total_steps) / float(vals @ vals)
            g = _probabilities(w, ids, vals)
            g[labels[i]] -= 1.0
            update = rate * np.outer(vals, g)
            w[ids] -= update
            u[ids] -= step * update

        averaged = w - u / step
        loss = _mean_loss(averaged, feats, labels)
        model.loss_history.append(loss)
        logger.debug(f"CLASSIFIER_EPOCH epoch={epoch + 1} loss={loss:.6f}")

    model.weights = w - u / step
    logger.info(
        f"CLASSIFIER_TRAINED classes={','.join(class_names)} examples={n} "
        f"epochs={epochs} loss={model.loss_history[-1]:.6f}"
    )
    return model


def accuracy(model: ClassifierModel, examples: Iterable[LabeledExample]) -> float:
    examples = list(examples)
    if not examples:
        return 0.0
    hits = sum(predict_label(model, ex.text)[0] == ex.label for ex in examples)
    return hits / len(examples)


# ── MathScore corpus ──────────────────────────────────────────────────────────

@lru_cache(maxsize=16)
def command_pattern(commands: tuple[str, ...]) -> re.Pattern:
    """Match any listed LaTeX command not followed by another letter; longest first."""
    alts = sorted(set(commands), key=len, reverse=True)
    return re.compile("(?:" + "|".join(re.escape(c) for c in alts) + r")(?![A-Za-z])")


def build_mathscore_corpus(docs, command_list: Sequence[str]) -> list[LabeledExample]:
    """
    Label each ExtractedDoc "math" iff one of its spans uses a listed command,
    then delete all math (and any stray backslash command) from the text.
    Docs left empty are excluded.
    """
    from mathcrawl.services.math_extract import strip_math

    if not command_list:
        raise ValueError("command_list must not be empty")
    pattern = command_pattern(tuple(command_list))

    examples = []
    excluded = 0
    for doc in docs:
        positive = any(pattern.search(span.latex) for span in doc.spans)
        text = _COMMAND.sub(" ", strip_math(doc.text))
        text = " ".join(text.split())
        if not text:
            excluded += 1
            continue
        examples.append(LabeledExample(text, MATH_LABEL if positive else OTHER_LABEL))

    positives = sum(ex.label == MATH_LABEL for ex in examples)
    logger.info(f"MATHSCORE_CORPUS examples={len(examples)} positive={positives} excluded={excluded}")
    return examples


# ── Language ID ───────────────────────────────────────────────────────────────

def load_langid_corpus(directory: Path | str | None = None) -> list[LabeledExample]:
    """One <lang>.txt per language, one example per line."""
    directory = settings.data_path(LANGID_DIR, directory)
    files = sorted(Path(directory).glob("*.txt"))
    if not files:
        raise ConfigError(f"no language samples in {directory}")
    return [LabeledExample(line, path.stem) for path in files for line in load_wordlist(path)]


def train_langid(
    directory: Path | str | None = None,
    epochs: int = 20,
    lr: float = 0.5,
    seed: int = 0,
    hash_bits: int = DEFAULT_HASH_BITS,
) -> ClassifierModel:
    examples = load_langid_corpus(directory)
    return train(examples, epochs=epochs, lr=lr, seed=seed, hash_bits=hash_bits)


# ── Serialization ─────────────────────────────────────────────────────────────
# Layout (little endian):
#   magic "OWMC" | u16 version | u8 hash_bits | u8 n_orders | u8[n_orders] orders
#   u16 n_classes | n_classes x (u16 len, utf-8 name) | float32[buckets * n_classes] row-major

def save_model(model: ClassifierModel, path: Path | str) -> None:
    path = Path(path)
    header = bytearray(MAGIC)
    header += struct.pack("<HBB", FORMAT_VERSION, model.hash_bits, len(model.orders))
    header += bytes(model.orders)
    header += struct.pack("<H", len(model.class_names))
    for name in model.class_names:
        raw = name.encode("utf-8")
        header += struct.pack("<H", len(raw)) + raw

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(model.weights, dtype="<f4").tobytes())
    logger.info(f"CLASSIFIER_SAVED path={path} buckets={model.buckets} classes={len(model.class_names)}")


def load_model(path: Path | str) -> ClassifierModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ModelLoadError(f"cannot read classifier model: {path}", {"reason": str(e)})

    try:
        if data[:4] != MAGIC:
            raise ModelFormatError(f"bad magic in classifier model: {path}")
        version, hash_bits, n_orders = struct.unpack_from("<HBB", data, 4)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported classifier format version {version}: {path}")
        pos = 8
        orders = tuple(data[pos:pos + n_orders])
        pos += n_orders
        (n_classes,) = struct.unpack_from("<H", data, pos)
        pos += 2
        names = []
        for _ in range(n_classes):
            (size,) = struct.unpack_from("<H", data, pos)
            pos += 2
            names.append(data[pos:pos + size].decode("utf-8"))
            pos += size
    except (struct.error, UnicodeDecodeError) as e:
        raise ModelFormatError(f"corrupt classifier header: {path}", {"reason": str(e)})

    expected = (1 << hash_bits) * n_classes * 4
    if len(data) - pos != expected:
        raise ModelFormatError(
            f"classifier weight block has wrong size: {path}",
            {"expected_bytes": expected, "actual_bytes": len(data) - pos},
        )
    weights = np.frombuffer(data, dtype="<f4", offset=pos).reshape(1 << hash_bits, n_classes)
    return ClassifierModel(
        hash_bits=hash_bits,
        orders=orders,
        class_names=tuple(names),
        weights=weights.astype(np.float64),
    )
