"""SARI, multi-reference BLEU, FE-diff and word-diff.

SARI follows the usual add/keep/delete decomposition: keep and delete use
reference-frequency weighted n-gram counts (source and prediction counts are
multiplied by the number of references), add uses n-gram sets, delete is
scored by precision only.  A ratio whose denominator is empty evaluates to 1
when the matching target set is empty too (nothing to do, nothing done) and 0
otherwise.  Corpus SARI is the mean of sentence SARI.

BLEU is corpus level: clipped n-gram precision against the per-n-gram max
reference count, geometric mean over n = 1..4, brevity penalty against the
closest reference length (shorter wins ties).  N-gram orders that no
prediction is long enough to have are left out of the geometric mean.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .text import detokenize, flesch_ease, tokenize


@dataclass
class EvalInstance:
    source: list
    prediction: list
    references: list               # 1..8 token lists

    def __post_init__(self):
        if not self.references:
            raise ValueError("an evaluation instance needs at least one reference")


def ngrams(tokens: Sequence[str], n: int) -> list[tuple]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _require(instances) -> None:
    if len(instances) == 0:
        raise ValueError("empty evaluation corpus")


# ---------------------------------------------------------------------------
# SARI


def _ratio(num: float, den: int, target_empty: bool) -> float:
    if den == 0:
        return 1.0 if target_empty else 0.0
    return num / den


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def sari_ngram(src: list[tuple], pred: list[tuple], refs: list[list[tuple]]) -> tuple[float, float, float]:
    """(F_keep, P_del, F_add) for one n-gram order."""
    r = len(refs)
    ref_all = Counter(g for ref in refs for g in ref)
    s_rep = Counter({g: c * r for g, c in Counter(src).items()})
    c_rep = Counter({g: c * r for g, c in Counter(pred).items()})

    keep_sys = s_rep & c_rep
    keep_good = keep_sys & ref_all
    keep_all = s_rep & ref_all
    p_keep = _ratio(sum(keep_good[g] / keep_sys[g] for g in keep_good), len(keep_sys), not keep_all)
    r_keep = _ratio(sum(keep_good[g] / keep_all[g] for g in keep_good), len(keep_all), not keep_sys)
    f_keep = _f1(p_keep, r_keep)

    del_sys = s_rep - c_rep
    del_good = del_sys - ref_all
    del_all = s_rep - ref_all
    p_del = _ratio(sum(del_good[g] / del_sys[g] for g in del_good), len(del_sys), not del_all)

    src_set, pred_set, ref_set = set(src), set(pred), set(ref_all)
    add_sys = pred_set - src_set
    add_good = add_sys & ref_set
    add_all = ref_set - src_set
    p_add = _ratio(len(add_good), len(add_sys), not add_all)
    r_add = _ratio(len(add_good), len(add_all), not add_sys)
    f_add = _f1(p_add, r_add)
    return f_keep, p_del, f_add


def sentence_sari(source: Sequence[str], prediction: Sequence[str], references: Sequence[Sequence[str]],
                  max_n: int = 4) -> float:
    """SARI in [0, 1] for one instance."""
    total = 0.0
    for n in range(1, max_n + 1):
        keep, dele, add = sari_ngram(ngrams(source, n), ngrams(prediction, n), [ngrams(r, n) for r in references])
        total += (keep + dele + add) / 3.0
    return total / max_n


def sari(instances: Sequence[EvalInstance], max_n: int = 4) -> float:
    """Corpus SARI in [0, 100]: mean of sentence scores."""
    _require(instances)
    return 100.0 * sum(sentence_sari(i.source, i.prediction, i.references, max_n) for i in instances) / len(instances)


# ---------------------------------------------------------------------------
# BLEU


def bleu_stats(instances: Sequence[EvalInstance], max_n: int = 4) -> dict:
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for inst in instances:
        hyp = inst.prediction
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in inst.references)[1]
        for n in range(1, max_n + 1):
            counts = Counter(ngrams(hyp, n))
            max_ref: Counter = Counter()
            for r in inst.references:
                max_ref |= Counter(ngrams(r, n))
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    return {"matches": matches, "totals": totals, "hyp_len": hyp_len, "ref_len": ref_len}


def bleu(instances: Sequence[EvalInstance], max_n: int = 4, smooth: bool = False) -> float:
    _require(instances)
    st = bleu_stats(instances, max_n)
    c, r = st["hyp_len"], st["ref_len"]
    if c == 0:
        return 0.0
    logs = []
    for n, (m, t) in enumerate(zip(st["matches"], st["totals"]), start=1):
        if t == 0:
            continue
        if smooth and n > 1:
            m, t = m + 1, t + 1
        if m == 0:
            return 0.0
        logs.append(math.log(m / t))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(sum(logs) / len(logs))


# ---------------------------------------------------------------------------
# readability / length


def instance_fe_diff(inst: EvalInstance) -> float | None:
    try:
        return flesch_ease([inst.prediction]) - flesch_ease([inst.source])
    except ValueError:
        return None


def fe_diff(instances: Sequence[EvalInstance]) -> tuple[float, int]:
    """(mean FE(prediction) - FE(source), number of instances skipped)."""
    _require(instances)
    vals = [instance_fe_diff(i) for i in instances]
    kept = [v for v in vals if v is not None]
    skipped = len(vals) - len(kept)
    if skipped:
        warnings.warn(f"fe_diff skipped {skipped} instance(s) without alphabetic words", stacklevel=2)
    return (sum(kept) / len(kept) if kept else float("nan")), skipped


def word_diff(instances: Sequence[EvalInstance]) -> float:
    _require(instances)
    return sum(len(i.source) - len(i.prediction) for i in instances) / len(instances)


# ---------------------------------------------------------------------------
# report


@dataclass
class InstanceRow:
    source: str
    prediction: str
    references: list
    sari: float
    fe_diff: float | None
    word_diff: int


@dataclass
class EvalReport:
    n: int
    sari: float
    bleu: float
    fe_diff: float
    word_diff: float
    fe_skipped: int = 0
    rows: list = field(default_factory=list)

    HEADER_KEYS = ("n", "sari", "bleu", "fe_diff", "word_diff", "fe_skipped")

    def metrics(self) -> dict:
        return {"sari": self.sari, "bleu": self.bleu, "fe_diff": self.fe_diff, "word_diff": self.word_diff}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k in self.HEADER_KEYS:
                fh.write(f"{k}: {getattr(self, k)!r}\n")
            fh.write("\nindex\tsari\tfe_diff\tword_diff\tsource\tprediction\treferences\n")
            for i, row in enumerate(self.rows):
                fe = "nan" if row.fe_diff is None else repr(row.fe_diff)
                fh.write(f"{i}\t{row.sari!r}\t{fe}\t{row.word_diff}\t{row.source}\t{row.prediction}\t"
                         f"{' ||| '.join(row.references)}\n")

    @classmethod
    def read(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        head, _, table = text.partition("\n\n")
        vals = {}
        for line in head.splitlines():
            k, _, v = line.partition(": ")
            vals[k] = int(v) if k in ("n", "fe_skipped") else float(v)
        rows = []
        for line in table.splitlines()[1:]:
            if not line:
                continue
            _, s, fe, wd, src, pred, refs = line.split("\t")
            rows.append(InstanceRow(src, pred, refs.split(" ||| "), float(s),
                                    None if fe == "nan" else float(fe), int(wd)))
        return cls(rows=rows, **vals)


def evaluate(instances: Sequence[EvalInstance], max_n: int = 4, smooth_bleu: bool = False) -> EvalReport:
    _require(instances)
    rows = []
    for inst in instances:
        rows.append(InstanceRow(
            source=detokenize(inst.source),
            prediction=detokenize(inst.prediction),
            references=[detokenize(r) for r in inst.references],
            sari=100.0 * sentence_sari(inst.source, inst.prediction, inst.references, max_n),
            fe_diff=instance_fe_diff(inst),
            word_diff=len(inst.source) - len(inst.prediction),
        ))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fe, skipped = fe_diff(instances)
    return EvalReport(
        n=len(instances),
        sari=sari(instances, max_n),
        bleu=bleu(instances, max_n, smooth=smooth_bleu),
        fe_diff=fe,
        word_diff=word_diff(instances),
        fe_skipped=skipped,
        rows=rows,
    )


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _tok(line: str) -> list:
    return tokenize(line) if line.strip() else []


def load_instances(src_path, pred_path, ref_paths: Sequence) -> list[EvalInstance]:
    """Line-aligned source, prediction and reference files."""
    if not ref_paths:
        raise ValueError("at least one reference file is required")
    src = _read_lines(src_path)
    pred = _read_lines(pred_path)
    refs = [_read_lines(p) for p in ref_paths]
    lens = {len(src), len(pred), *(len(r) for r in refs)}
    if len(lens) != 1:
        raise ValueError(f"misaligned files: line counts {sorted(lens)}")
    return [EvalInstance(_tok(s), _tok(p), [_tok(r[i]) for r in refs])
            for i, (s, p) in enumerate(zip(src, pred))]
