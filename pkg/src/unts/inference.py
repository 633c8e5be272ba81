"""Greedy E -> G_s simplification and output post-processing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .model import ModelState, decode_free_running, encode_ids
from .text import UNK, EmptyInputError, tokenize, write_sentences


@dataclass
class Generation:
    tokens: list                   # output tokens before post-processing (EOS excluded)
    contexts: np.ndarray           # (len(tokens), 2*hidden)
    weights: np.ndarray            # (len(tokens), n) attention over the source
    source_index: np.ndarray       # argmax source position per output step

    def __len__(self) -> int:
        return len(self.tokens)


def simplify_batch(sentences: Sequence[Sequence[str]], state: ModelState, which: str = "Gs",
                   batch_size: int = 64) -> list[Generation]:
    if state.vocab is None:
        raise ValueError("model state has no vocabulary")
    out: list[Generation] = []
    for lo in range(0, len(sentences), batch_size):
        chunk = sentences[lo:lo + batch_size]
        for s in chunk:
            if len(s) == 0:
                raise EmptyInputError("cannot simplify an empty sentence")
        ids = [state.vocab.encode(s) for s in chunk]
        with T.no_grad():
            enc = encode_ids(state, ids)
            dec = decode_free_running(state, which, enc)
        for b, toks in enumerate(dec.tokens):
            k = len(toks)
            w = dec.weights[b, :k, : len(chunk[b])]
            out.append(Generation(
                tokens=state.vocab.decode(toks),
                contexts=dec.contexts.data[b, :k].copy(),
                weights=w.copy(),
                source_index=w.argmax(axis=1) if k else np.zeros(0, dtype=np.int64),
            ))
    return out


def simplify(sentence: Sequence[str], state: ModelState) -> Generation:
    return simplify_batch([list(sentence)], state)[0]


def replace_oov(gen: Generation, source: Sequence[str], unk: str = UNK) -> list:
    """Swap each UNK for the source token with the highest attention weight (lowest index on ties)."""
    out = list(gen.tokens)
    for t, tok in enumerate(out):
        if tok == unk:
            # argmax returns the first maximal index
            out[t] = source[int(np.argmax(gen.weights[t]))]
    return out


def merge_repeats(tokens: Sequence) -> list:
    out = []
    for tok in tokens:
        if not out or out[-1] != tok:
            out.append(tok)
    return out


def postprocess(gen: Generation, source: Sequence[str]) -> list:
    return merge_repeats(replace_oov(gen, source))


def simplify_sentences(sentences: Sequence[Sequence[str]], state: ModelState, which: str = "Gs") -> list[list]:
    gens = simplify_batch(sentences, state, which=which)
    return [postprocess(g, s) for g, s in zip(gens, sentences)]


def simplify_file(state: ModelState, in_path, out_path) -> int:
    """One sentence per line in, one simplification per line out; returns line count."""
    with open(in_path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    sents = []
    for i, line in enumerate(lines, start=1):
        try:
            sents.append(tokenize(line))
        except EmptyInputError:
            raise EmptyInputError(f"{in_path}:{i}: empty line") from None
    outs = simplify_sentences(sents, state)
    write_sentences(out_path, outs)
    return len(outs)

