"""Tokenization, vocabulary, Flesch reading ease and FE-based partitioning."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

Sentence = list  # list[str] of lowercase tokens

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED = (PAD, BOS, EOS, UNK)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


class EmptyInputError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, path, lineno: int, detail: str):
        super().__init__(f"{path}:{lineno}: {detail}")
        self.lineno = lineno


def tokenize(text: str) -> Sentence:
    """Lowercase, split on whitespace, isolate every punctuation character."""
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise EmptyInputError("cannot tokenize empty or whitespace-only input")
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# readability


def is_word(token: str) -> bool:
    return token.isalpha()


def count_syllables(word: str) -> int:
    """Vowel-group heuristic; non-alphabetic tokens have 0 syllables."""
    if not is_word(word):
        return 0
    w = word.lower()
    groups = _VOWEL_GROUP_RE.findall(w)
    n = len(groups)
    # a lone trailing "e" after a consonant is silent, unless it is the only group
    if n > 1 and w.endswith("e") and groups[-1] == "e" and len(w) > 1 and w[-2] not in "aeiouy":
        n -= 1
    return max(n, 1)


def flesch_counts(sentences: Sequence[Sequence[str]]) -> tuple[int, int, int]:
    """(sentences, words, syllables) with punctuation excluded from words."""
    words = syllables = 0
    for sent in sentences:
        for tok in sent:
            if is_word(tok):
                words += 1
                syllables += count_syllables(tok)
    return len(sentences), words, syllables


def flesch_ease(sentences: Sequence[Sequence[str]]) -> float:
    n_sent, n_words, n_syl = flesch_counts(sentences)
    if n_sent == 0 or n_words == 0:
        raise ValueError("Flesch reading ease needs at least one alphabetic word")
    return 206.835 - 1.015 * (n_words / n_sent) - 84.6 * (n_syl / n_words)


def sentence_fe(tokens: Sequence[str]) -> float:
    return flesch_ease([tokens])


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Dense token <-> id table with fixed reserved ids."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], max_size: int | None = None, min_count: int = 1) -> "Vocabulary":
        counts = Counter(t for s in sentences for t in s)
        ranked = sorted((t for t, c in counts.items() if c >= min_count and t not in RESERVED),
                        key=lambda t: (-counts[t], t))
        if max_size is not None:
            ranked = ranked[: max(0, max_size - len(RESERVED))]
        return cls(ranked)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos[len(RESERVED):]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line for line in lines if line)


# ---------------------------------------------------------------------------
# corpora


@dataclass
class Corpus:
    simple: list = field(default_factory=list)
    complex: list = field(default_factory=list)
    parallel_simple: list = field(default_factory=list)
    parallel_complex: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.parallel_simple) != len(self.parallel_complex):
            raise ValueError("parallel halves must have equal length")

    @property
    def parallel(self) -> list[tuple[list, list]]:
        """(complex, simple) pairs."""
        return list(zip(self.parallel_complex, self.parallel_simple))

    def sentences(self) -> Iterable[list]:
        yield from self.simple
        yield from self.complex
        yield from self.parallel_simple
        yield from self.parallel_complex


@dataclass
class PartitionStats:
    kept_simple: int
    kept_complex: int
    discarded: int

    @property
    def total(self) -> int:
        return self.kept_simple + self.kept_complex + self.discarded


def partition_corpus(sentences: Iterable[Sequence[str]], complex_max_fe: float = 10.0,
                     simple_min_fe: float = 70.0) -> tuple[Corpus, PartitionStats]:
    """FE <= complex_max_fe goes to the complex side, FE > simple_min_fe to the simple side.

    Sentences in between, or without any alphabetic word, are discarded.
    """
    simple, complex_, dropped = [], [], 0
    for s in sentences:
        s = list(s)
        try:
            fe = sentence_fe(s)
        except ValueError:
            dropped += 1
            continue
        if fe <= complex_max_fe:
            complex_.append(s)
        elif fe > simple_min_fe:
            simple.append(s)
        else:
            dropped += 1
    return Corpus(simple=simple, complex=complex_), PartitionStats(len(simple), len(complex_), dropped)


def read_sentences(path) -> list[Sentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(tokenize(line))
    return out


def write_sentences(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(detokenize(s) + "\n")


def load_parallel(path) -> list[tuple[Sentence, Sentence]]:
    """Read ``complex<TAB>simple`` lines into tokenized (complex, simple) pairs."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected exactly one tab, found {len(parts) - 1}")
            try:
                pairs.append((tokenize(parts[0]), tokenize(parts[1])))
            except EmptyInputError:
                raise ParseError(path, lineno, "empty side in parallel pair") from None
    return pairs


def write_parallel(path, pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cx, sx in pairs:
            fh.write(f"{detokenize(cx)}\t{detokenize(sx)}\n")
