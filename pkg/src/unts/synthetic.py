"""Seeded synthetic simple/complex corpus with known ground truth.

Every sentence renders a proposition ``(adj1, noun1, verb, adj2, noun2)``.
The simple rendering uses short frequent words::

    the big dog saw the cat .

The complex rendering swaps most content words for rare polysyllabic
synonyms and adds discourse material (a leading marker, an adverb, a
trailing conjunctive clause) that the simple rendering drops::

    nevertheless , the kamilotous dog pirunally sorabated the vuketion , whereupon the ...

Because the rendering is known, held-out complex sentences come with their
exact simple reference, and the rare -> frequent synonym table is an oracle
for lexical substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import write_embeddings
from .text import Corpus, count_syllables, detokenize, sentence_fe, write_parallel, write_sentences

_NOUNS = """dog cat man boy girl king fox pig cow hen duck fish bird frog bear wolf horse mouse
goat sheep lamb crow owl bat bee ant rat ship car bus cup hat box bed ball book pen key door hill
tree rock ring coin bell drum lamp desk shoe sock bag map nest cake bread milk egg""".split()
_VERBS = """saw hit fed met led bit got took found held kept left lost made paid sold sent told
caught bought brought drew chose threw ate won struck stole broke shook fought sought dug spun hid""".split()
_ADJS = """big red old new hot cold tall short small fat thin wet dry dark sad glad kind bad good
fast slow soft hard warm cool young rich poor blue pink green brown gray black white bright loud
calm""".split()
_CONJ = ["whereupon", "whereas", "notwithstanding", "albeit", "inasmuch"]

_CONS = "bdfgklmnprstvz"
_VOWELS = "aiou"
_SUFFIX = {"noun": "tion", "verb": "ated", "adj": "ous", "adv": "ally"}


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_concepts: int = 100          # content concepts, split 40/30/30 over nouns/verbs/adjectives
    n_fillers: int = 16            # rare discourse adverbs
    n_simple: int = 2000
    n_complex: int = 2000
    n_parallel: int = 1000
    n_dev: int = 200
    n_test: int = 200
    rare_prob: float = 0.8         # chance each content word is rendered rare
    adj_prob: float = 0.5
    complex_max_fe: float = 10.0
    simple_min_fe: float = 70.0
    emb_dim: int = 32
    synonym_noise: float = 0.25    # relative distance of a rare word from its frequent synonym
    seed: int = 7

    def validate(self) -> None:
        if self.n_concepts < 10:
            raise SynthConfigError("n_concepts must be at least 10")
        if self.n_fillers < 1:
            raise SynthConfigError("n_fillers must be at least 1")
        for name in ("n_simple", "n_complex", "n_parallel", "n_dev", "n_test"):
            if getattr(self, name) < 0:
                raise SynthConfigError(f"{name} must be non-negative")
        if not 0.0 < self.rare_prob <= 1.0:
            raise SynthConfigError("rare_prob must be in (0, 1]")


@dataclass
class Lexicon:
    nouns: list
    verbs: list
    adjs: list
    rare: dict                     # frequent -> rare form
    fillers: list

    @property
    def synonyms(self) -> dict:
        """rare -> frequent."""
        return {r: f for f, r in self.rare.items()}


@dataclass
class SynthCorpus:
    corpus: Corpus
    dev: list                      # (complex source, simple reference) pairs
    test: list
    test_simple: list              # held-out simple sentences
    synonyms: dict                 # rare -> frequent
    lexicon: Lexicon
    config: SynthConfig
    embeddings: dict = field(default_factory=dict)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sentences(out / "simple.txt", self.corpus.simple)
        write_sentences(out / "complex.txt", self.corpus.complex)
        write_parallel(out / "parallel.tsv", self.corpus.parallel)
        for split, pairs in (("dev", self.dev), ("test", self.test)):
            write_sentences(out / f"{split}.src", [c for c, _ in pairs])
            write_sentences(out / f"{split}.ref.0", [s for _, s in pairs])
            write_parallel(out / f"{split}.align.tsv", pairs)
        write_sentences(out / "test_simple.txt", self.test_simple)
        with open(out / "synonyms.tsv", "w", encoding="utf-8") as fh:
            for r, f in sorted(self.synonyms.items()):
                fh.write(f"{r}\t{f}\n")
        if self.embeddings:
            write_embeddings(out / "embeddings.txt", self.embeddings)


def _pseudo_word(rng: np.random.Generator, kind: str, taken: set) -> str:
    while True:
        n = int(rng.integers(2, 4))
        stem = "".join(_CONS[rng.integers(len(_CONS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(n))
        word = stem + _SUFFIX[kind]
        if word not in taken:
            taken.add(word)
            return word


def _short_word(rng: np.random.Generator, taken: set) -> str:
    while True:
        w = _CONS[rng.integers(len(_CONS))] + _VOWELS[rng.integers(len(_VOWELS))] + _CONS[rng.integers(len(_CONS))]
        if w not in taken:
            taken.add(w)
            return w


def build_lexicon(cfg: SynthConfig) -> Lexicon:
    rng = np.random.default_rng([cfg.seed, 1])
    n_n = int(round(cfg.n_concepts * 0.4))
    n_v = int(round(cfg.n_concepts * 0.3))
    n_a = cfg.n_concepts - n_n - n_v
    taken = set(_NOUNS) | set(_VERBS) | set(_ADJS) | set(_CONJ) | {"the"}

    def pick(pool, n):
        pool = [w for w in pool if count_syllables(w) == 1]
        chosen = list(rng.permutation(pool)[: min(n, len(pool))])
        while len(chosen) < n:
            chosen.append(_short_word(rng, taken))
        return [str(w) for w in chosen]

    nouns, verbs, adjs = pick(_NOUNS, n_n), pick(_VERBS, n_v), pick(_ADJS, n_a)
    rare = {}
    for kind, words in (("noun", nouns), ("verb", verbs), ("adj", adjs)):
        for w in words:
            rare[w] = _pseudo_word(rng, kind, taken)
    fillers = [_pseudo_word(rng, "adv", taken) for _ in range(cfg.n_fillers)]
    return Lexicon(nouns, verbs, adjs, rare, fillers)


def render_simple(prop) -> list:
    a1, n1, v, a2, n2 = prop
    out = ["the"] + ([a1] if a1 else []) + [n1, v, "the"] + ([a2] if a2 else []) + [n2, "."]
    return out


def render_complex(prop, lex: Lexicon, rng: np.random.Generator, cfg: SynthConfig) -> list:
    a1, n1, v, a2, n2 = prop
    content = [w for w in (a1, n1, v, a2, n2) if w]
    for _ in range(50):
        use_rare = {w: rng.random() < cfg.rare_prob for w in content}
        if not any(use_rare.values()):
            use_rare[content[int(rng.integers(len(content)))]] = True
        marker, adverb, clause = (rng.random() < 0.5 for _ in range(3))
        if not (marker or adverb or clause):
            clause = True
        r = lambda w: lex.rare[w] if use_rare[w] else w  # noqa: E731
        toks = []
        if marker:
            toks += [lex.fillers[int(rng.integers(len(lex.fillers)))], ","]
        toks += ["the"] + ([r(a1)] if a1 else []) + [r(n1)]
        if adverb:
            toks.append(lex.fillers[int(rng.integers(len(lex.fillers)))])
        toks += [r(v), "the"] + ([r(a2)] if a2 else []) + [r(n2)]
        if clause:
            n3 = lex.nouns[int(rng.integers(len(lex.nouns)))]
            v3 = lex.verbs[int(rng.integers(len(lex.verbs)))]
            toks += [",", _CONJ[int(rng.integers(len(_CONJ)))], "the", lex.rare[n3], lex.rare[v3]]
        toks.append(".")
        if sentence_fe(toks) <= cfg.complex_max_fe:
            return toks
    raise SynthConfigError("could not render a complex sentence under the FE bound; lower complex_max_fe pressure")


def _sample_props(lex: Lexicon, rng: np.random.Generator, n: int, cfg: SynthConfig, used: set) -> list:
    props = []
    while len(props) < n:
        a1 = lex.adjs[int(rng.integers(len(lex.adjs)))] if rng.random() < cfg.adj_prob else None
        a2 = lex.adjs[int(rng.integers(len(lex.adjs)))] if rng.random() < cfg.adj_prob else None
        n1 = lex.nouns[int(rng.integers(len(lex.nouns)))]
        n2 = lex.nouns[int(rng.integers(len(lex.nouns)))]
        v = lex.verbs[int(rng.integers(len(lex.verbs)))]
        prop = (a1, n1, v, a2, n2)
        if prop in used:
            continue
        used.add(prop)
        props.append(prop)
    return props


def synonym_embeddings(tokens, synonyms: dict, dim: int, noise: float, seed: int) -> dict:
    """Random vectors where each rare word sits near its frequent synonym.

    Stands in for synonymy-aware pretrained embeddings.
    """
    rng = np.random.default_rng([seed, 2])
    scale = 1.0 / np.sqrt(dim)
    vecs = {}
    for t in sorted(set(tokens)):
        if t not in synonyms:
            vecs[t] = rng.normal(0.0, scale, dim)
    for r in sorted(synonyms):
        base = vecs.get(synonyms[r])
        if base is None:
            base = vecs[synonyms[r]] = rng.normal(0.0, scale, dim)
        vecs[r] = base + noise * rng.normal(0.0, scale, dim)
    return vecs


def generate_synthetic_corpus(cfg: SynthConfig | None = None) -> SynthCorpus:
    cfg = cfg or SynthConfig()
    cfg.validate()
    lex = build_lexicon(cfg)
    n_a = len(lex.adjs) + 1
    capacity = len(lex.nouns) ** 2 * len(lex.verbs) * n_a ** 2
    needed = cfg.n_simple + cfg.n_complex + cfg.n_parallel + cfg.n_dev + 2 * cfg.n_test
    if capacity < 4 * needed:
        raise SynthConfigError(
            f"vocabulary too small: {capacity} distinct propositions for {needed} requested sentences")

    rng = np.random.default_rng([cfg.seed, 3])
    used: set = set()
    simple_props = _sample_props(lex, rng, cfg.n_simple, cfg, used)
    complex_props = _sample_props(lex, rng, cfg.n_complex, cfg, used)
    par_props = _sample_props(lex, rng, cfg.n_parallel, cfg, used)
    dev_props = _sample_props(lex, rng, cfg.n_dev, cfg, used)
    test_props = _sample_props(lex, rng, cfg.n_test, cfg, used)
    test_simple_props = _sample_props(lex, rng, cfg.n_test, cfg, used)

    simple = [render_simple(p) for p in simple_props]
    for s in simple:
        if sentence_fe(s) <= cfg.simple_min_fe:
            raise SynthConfigError(f"simple rendering above FE bound: {detokenize(s)}")
    complex_ = [render_complex(p, lex, rng, cfg) for p in complex_props]
    par = [(render_complex(p, lex, rng, cfg), render_simple(p)) for p in par_props]
    dev = [(render_complex(p, lex, rng, cfg), render_simple(p)) for p in dev_props]
    test = [(render_complex(p, lex, rng, cfg), render_simple(p)) for p in test_props]
    test_simple = [render_simple(p) for p in test_simple_props]

    corpus = Corpus(simple=simple, complex=complex_,
                    parallel_simple=[s for _, s in par], parallel_complex=[c for c, _ in par])
    synonyms = lex.synonyms
    all_tokens = {t for s in corpus.sentences() for t in s}
    for c, s in dev + test:
        all_tokens.update(c)
        all_tokens.update(s)
    all_tokens.update(t for s in test_simple for t in s)
    emb = synonym_embeddings(all_tokens, synonyms, cfg.emb_dim, cfg.synonym_noise, cfg.seed)
    return SynthCorpus(corpus, dev, test, test_simple, synonyms, lex, cfg, emb)
