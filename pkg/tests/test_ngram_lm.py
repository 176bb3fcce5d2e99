"""Tests for the Kneser-Ney n-gram model, perplexity scoring and ARPA files."""

from collections import Counter
from functools import lru_cache
from itertools import product

import numpy as np
import pytest

from mathcrawl.config import DATA_DIR
from mathcrawl.core.exceptions import EmptyDocumentError, ModelFormatError, ModelLoadError
from mathcrawl.services.ngram_lm import (
    BOS,
    BOS_LOG_PROB,
    EOS,
    UNK,
    load_arpa,
    log_prob,
    perplexity,
    save_arpa,
    sentence_log_prob,
    sentences_from_text,
    tokenize,
    train_lm,
)


def random_corpus(seed: int, words: str = "abcde", n: int = 40) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    return [list(rng.choice(list(words), size=rng.integers(1, 7))) for _ in range(n)]


def kn_oracle(sentences, order):
    """
    Interpolated modified Kneser-Ney written directly from its recursive definition,
    discounts included. Returns (prob(w, h), predictable words, discounts by order).
    """
    raw = [Counter() for _ in range(order + 2)]
    for sent in sentences:
        padded = [BOS, *sent, EOS]
        for n in range(1, order + 1):
            for i in range(len(padded) - n + 1):
                raw[n][tuple(padded[i:i + n])] += 1
    predictable = sorted({EOS, UNK} | {tok for sent in sentences for tok in sent})

    def adjusted(g):
        n = len(g)
        if n == order or g[0] == BOS:
            return raw[n].get(g, 0)
        return sum(1 for longer in raw[n + 1] if longer[1:] == g)

    def estimate(n):
        coc = Counter(adjusted(g) for g in raw[n] if g != (BOS,))
        n1, n2, n3, n4 = coc[1], coc[2], coc[3], coc[4]
        if 0 in (n1, n2, n3):
            return (0.75, 0.75, 0.75)
        y = n1 / (n1 + 2 * n2)
        d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
        if not (0 < d[0] <= 1 and 0 < d[1] <= 2 and 0 < d[2] <= 3):
            return (0.75, 0.75, 0.75)
        return d

    discounts = {n: estimate(n) for n in range(1, order + 1)}

    def discount(n, c):
        return 0.0 if c == 0 else discounts[n][min(c, 3) - 1]

    @lru_cache(maxsize=None)
    def prob(w, h):
        n = len(h) + 1
        lower = 1.0 / len(predictable) if n == 1 else prob(w, h[1:])
        entries = {g: adjusted(g) for g in raw[n] if g[:-1] == h and g != (BOS,)}
        total = sum(entries.values())
        if total == 0:
            return lower
        gamma = sum(discount(n, c) for c in entries.values()) / total
        a = entries.get(h + (w,), 0)
        return max(a - discount(n, a), 0.0) / total + gamma * lower

    return prob, predictable, discounts


def assert_matches_oracle(sentences, order):
    model = train_lm(sentences, order=order)
    prob, words, discounts = kn_oracle(sentences, order)
    assert words == sorted(model.vocab - {BOS})
    for n in range(1, order + 1):
        np.testing.assert_allclose(model.discounts[n], discounts[n], rtol=1e-12)
    for h in product(sorted(model.vocab), repeat=order - 1):
        got = [10 ** log_prob(model, w, list(h)) for w in words]
        expected = [prob(w, h) for w in words]
        np.testing.assert_allclose(got, expected, rtol=1e-9, err_msg=f"{sentences} {h}")
        assert abs(sum(got) - 1.0) <= 1e-6, (sentences, h)


class TestTokenize:
    def test_basic(self):
        assert tokenize(r"Let \alpha be 42, OK!") == ["let", r"\alpha", "be", "<num>", "ok"]

    def test_commands_split_from_words(self):
        assert tokenize(r"x\Gamma") == ["x", r"\Gamma"]

    def test_sentences_skip_empty_lines(self):
        assert sentences_from_text("One two.\n\n  ...  \nThree") == [["one", "two"], ["three"]]


class TestEstimation:
    """Probabilities of the trained model."""

    def test_single_token_unigram(self):
        model = train_lm([["x"]], order=1)
        assert model.discounts[1] == (0.75, 0.75, 0.75)
        assert 10 ** log_prob(model, "x") == pytest.approx(0.375)
        assert 10 ** log_prob(model, UNK) == pytest.approx(0.25)
        assert perplexity(model, "x") == pytest.approx(1 / 0.375)

    def test_bos_is_never_predicted(self):
        model = train_lm([["a", "b"]], order=2)
        assert log_prob(model, BOS, ["a"]) == BOS_LOG_PROB

    def test_oov_scores_as_unk(self):
        model = train_lm(random_corpus(1), order=2)
        assert log_prob(model, "zzz", ["a"]) == log_prob(model, UNK, ["a"])

    def test_unk_hapax(self):
        model = train_lm([["a", "b"], ["a"]], order=1, unk_hapax=True)
        assert "b" not in model.vocab
        assert log_prob(model, "b") == log_prob(model, UNK)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_distributions_are_normalized(self, order):
        model = train_lm(random_corpus(order), order=order)
        words = sorted(model.vocab - {BOS})
        for context in [(), *model.backoffs]:
            total = sum(10 ** log_prob(model, w, list(context)) for w in words)
            assert total == pytest.approx(1.0, abs=1e-9), context

    @pytest.mark.parametrize("order", [
        1, 2, 3,
        pytest.param(4, marks=pytest.mark.slow),
        pytest.param(5, marks=pytest.mark.slow),
    ])
    def test_matches_recursive_definition(self, order):
        assert_matches_oracle(random_corpus(100 + order, words="abc"), order)

    @pytest.mark.slow
    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_every_short_corpus(self, order):
        for length in range(1, 9):
            for tokens in product("abc", repeat=length):
                assert_matches_oracle([list(tokens)], order)

    @pytest.mark.slow
    def test_random_small_corpora(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            tokens = list(rng.choice(list("abcd"), size=int(rng.integers(1, 11))))
            cuts = sorted(set(int(c) for c in rng.integers(1, len(tokens) + 1, size=int(rng.integers(0, 3)))))
            sentences = [tokens[a:b] for a, b in zip([0, *cuts], [*cuts, len(tokens)]) if b > a]
            assert_matches_oracle(sentences, int(rng.integers(1, 6)))

    def test_discount_statistics_use_exact_counts(self):
        # bigram counts 1, 2, 3, 4 and 6, two of each; the sixes must stay out of n4
        sentences = [[w] for w, k in zip("abcde", (1, 2, 3, 4, 6)) for _ in range(k)]
        model = train_lm(sentences, order=2)
        assert model.discounts[2] == pytest.approx((1 / 3, 1.0, 5 / 3))
        assert model.discounts[1] == (0.75, 0.75, 0.75)
        assert_matches_oracle(sentences, 2)

    def test_counts_by_order(self):
        model = train_lm([["a", "b"]], order=2)
        # unigrams: <s> a b </s> <unk>; bigrams: <s> a, a b, b </s>
        assert model.counts() == {1: 5, 2: 3}

    @pytest.mark.parametrize("order", [0, 6])
    def test_bad_order(self, order):
        with pytest.raises(ValueError):
            train_lm([["a"]], order=order)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            train_lm([], order=2)


class TestPerplexity:
    @pytest.fixture(scope="class")
    def english_lm(self):
        rng = np.random.default_rng(42)
        letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
        synthetic = [
            " ".join("".join(rng.choice(letters, size=4)) for _ in range(10)) for _ in range(3000)
        ]
        corpus = (DATA_DIR / "lm_sample.txt").read_text(encoding="utf-8") + "\n" + "\n".join(synthetic)
        return train_lm(sentences_from_text(corpus), order=3)

    def test_gibberish_scores_above_cutoff(self, english_lm):
        rng = np.random.default_rng(7)
        gibberish = " ".join(rng.bytes(6).hex() for _ in range(50))
        assert perplexity(english_lm, gibberish) > 15000

    def test_word_order_matters(self, english_lm):
        line = next(
            line for line in (DATA_DIR / "lm_sample.txt").read_text(encoding="utf-8").splitlines()
            if len(tokenize(line)) > 8 and not line.startswith("#")
        )
        reversed_line = " ".join(reversed(line.split()))
        assert perplexity(english_lm, line) < perplexity(english_lm, reversed_line)

    def test_sentence_log_prob_includes_end(self):
        model = train_lm([["x"]], order=1)
        expected = 2 * np.log10(0.375)
        assert sentence_log_prob(model, ["x"]) == pytest.approx(expected)

    def test_empty_document(self):
        model = train_lm([["x"]], order=1)
        with pytest.raises(EmptyDocumentError):
            perplexity(model, "  ...  \n")


class TestArpa:
    def test_round_trip(self, tmp_path):
        model = train_lm(random_corpus(3), order=3)
        path = tmp_path / "lm.arpa"
        save_arpa(model, path)
        loaded = load_arpa(path)

        assert loaded.order == 3
        assert loaded.probs == model.probs
        assert loaded.backoffs == model.backoffs
        assert loaded.vocab == model.vocab

    def test_header(self, tmp_path):
        path = tmp_path / "lm.arpa"
        save_arpa(train_lm([["a", "b"]], order=2), path)
        lines = path.read_text().splitlines()
        assert lines[:3] == ["\\data\\", "ngram 1=5", "ngram 2=3"]
        assert lines[-1] == "\\end\\"

    @pytest.mark.parametrize("body", [
        "\\data\\\nngram 1=2\n\n\\1-grams:\n-1.0\t<s>\n\\end\\\n",
        "\\data\\\nngram 1=1\n\n\\1-grams:\nnot-a-number\t<s>\n\\end\\\n",
        "\\1-grams:\n-1.0\t<s>\n",
        "\\data\\\nngram 1=3\n\n\\1-grams:\n-99\t<s>\n-1\t</s>\n-1\tword\n\\end\\\n",
    ])
    def test_malformed(self, tmp_path, body):
        path = tmp_path / "bad.arpa"
        path.write_text(body)
        with pytest.raises(ModelFormatError):
            load_arpa(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelLoadError):
            load_arpa(tmp_path / "absent.arpa")
