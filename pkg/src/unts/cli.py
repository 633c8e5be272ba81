"""Batch command-line tools: partition, synth, train, simplify, evaluate, sweep.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Set ``UNTS_VERBOSE=1`` for progress logging.

Config files are plain ``key = value`` lines (``#`` starts a comment); keys
are the fields of the command's config dataclass and ``--set key=value``
overrides them.  The effective config is written to ``config.txt`` in every
output directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .evaluation import EvalInstance, evaluate, load_instances
from .inference import simplify_file, simplify_sentences
from .model import load_checkpoint, load_embeddings
from .synthetic import SynthConfig, SynthConfigError, generate_synthetic_corpus
from .text import (Corpus, ParseError, flesch_counts, flesch_ease, load_parallel, partition_corpus,
                   read_sentences, tokenize, write_sentences)
from .training import ConfigError, TrainingConfig, Trainer

log = logging.getLogger("unts")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling


def _coerce(value: str, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {value!r}")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise UsageError(f"cannot parse {value!r} as {type(default).__name__}") from None
    return value.strip()


def parse_kv(lines) -> dict:
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(cls, path=None, overrides=(), **fixed):
    """Build a config dataclass from defaults, a config file, ``--set`` overrides and fixed values."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw.update(parse_kv(fh))
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    raw.update(parse_kv(overrides))
    defaults = cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    vals = {k: _coerce(v, getattr(defaults, k)) for k, v in raw.items()}
    vals.update({k: v for k, v in fixed.items() if v is not None})
    return cls(**vals)


def echo_config(out_dir: Path, cfg, **extra) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.txt", "w", encoding="utf-8") as fh:
        for k, v in {**asdict(cfg), **extra}.items():
            fh.write(f"{k} = {v}\n")


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    return p


# ---------------------------------------------------------------------------
# data directories


def load_data_dir(data_dir, parallel_size: int | None = None):
    """(corpus, dev instances, test instances, embeddings) from a corpus directory.

    Required: simple.txt, complex.txt.  Optional: parallel.tsv, dev.src with
    dev.ref.*, test.src with test.ref.*, embeddings.txt.
    """
    d = Path(data_dir)
    simple = read_sentences(_need_file(d / "simple.txt"))
    complex_ = read_sentences(_need_file(d / "complex.txt"))
    pairs = load_parallel(d / "parallel.tsv") if (d / "parallel.tsv").is_file() else []
    if parallel_size is not None:
        if parallel_size > len(pairs):
            raise UsageError(f"requested {parallel_size} parallel pairs but only {len(pairs)} available")
        pairs = pairs[:parallel_size]
    corpus = Corpus(simple=simple, complex=complex_, parallel_simple=[s for _, s in pairs],
                    parallel_complex=[c for c, _ in pairs])

    def split(name):
        src = d / f"{name}.src"
        refs = sorted(d.glob(f"{name}.ref.*"))
        if not src.is_file() or not refs:
            return []
        return load_instances(src, src, refs)

    emb = load_embeddings(d / "embeddings.txt") if (d / "embeddings.txt").is_file() else None
    return corpus, split("dev"), split("test"), emb


# ---------------------------------------------------------------------------
# commands


def cmd_partition(args) -> int:
    src = _need_file(args.input)
    with open(src, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    corpus, stats = partition_corpus((tokenize(x) for x in lines), args.complex_max_fe, args.simple_min_fe)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sentences(out / "simple.txt", corpus.simple)
    write_sentences(out / "complex.txt", corpus.complex)
    rows = []
    for name, sents in (("simple", corpus.simple), ("complex", corpus.complex)):
        n, words, _ = flesch_counts(sents)
        avg_w = words / n if n else float("nan")
        fe = flesch_ease(sents) if words else float("nan")
        rows.append(f"{name}\t{n}\t{avg_w:.2f}\t{fe:.2f}")
    table = "dataset\tsentences\taverage words\taverage FE\n" + "\n".join(rows) + "\n"
    (out / "stats.tsv").write_text(table + f"# discarded\t{stats.discarded}\n", encoding="utf-8")
    with open(out / "config.txt", "w", encoding="utf-8") as fh:
        fh.write(f"input = {src}\ncomplex_max_fe = {args.complex_max_fe}\nsimple_min_fe = {args.simple_min_fe}\n")
    print(table, end="")
    return 0


def cmd_synth(args) -> int:
    cfg = load_config(SynthConfig, args.config, args.set, seed=args.seed)
    try:
        sc = generate_synthetic_corpus(cfg)
    except SynthConfigError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out_dir)
    sc.write(out)
    echo_config(out, cfg)
    fe_s = flesch_ease(sc.corpus.simple)
    fe_c = flesch_ease(sc.corpus.complex)
    print(f"simple {len(sc.corpus.simple)} (FE {fe_s:.1f})  complex {len(sc.corpus.complex)} (FE {fe_c:.1f})  "
          f"parallel {len(sc.corpus.parallel_simple)}  dev {len(sc.dev)}  test {len(sc.test)}")
    return 0


def _training_config(args, **fixed) -> TrainingConfig:
    cfg = load_config(TrainingConfig, args.config, args.set, seed=args.seed, **fixed)
    try:
        cfg.validate()
    except ConfigError as e:
        raise UsageError(str(e)) from None
    return cfg


def _train_one(cfg: TrainingConfig, data_dir, out_dir: Path, parallel_size=None):
    corpus, dev, test, emb = load_data_dir(data_dir, parallel_size)
    if cfg.mode == "semisupervised" and not corpus.parallel_simple:
        raise UsageError("mode=semisupervised needs a non-empty parallel.tsv in the data directory")
    echo_config(out_dir, cfg, data=str(data_dir), parallel_size=parallel_size)
    trainer = Trainer(corpus, cfg, embeddings=emb, dev=dev)
    state, _ = trainer.train(out_dir)
    held_out = test or dev
    report = None
    if held_out:
        preds = simplify_sentences([i.source for i in held_out], state)
        report = evaluate([EvalInstance(i.source, p, i.references) for i, p in zip(held_out, preds)])
        report.write(out_dir / "report.txt")
    return state, report


def cmd_train(args) -> int:
    cfg = _training_config(args, mode=args.mode, variant=args.variant)
    out = Path(args.out_dir)
    _, report = _train_one(cfg, args.data, out)
    if report is not None:
        print(" ".join(f"{k}={v:.3f}" for k, v in report.metrics().items()))
    return 0


def cmd_simplify(args) -> int:
    model = _need_file(args.model)
    _need_file(args.input)
    state, _, _ = load_checkpoint(model)
    n = simplify_file(state, args.input, args.output)
    print(f"wrote {n} lines to {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    for p in (args.src, args.pred, *args.refs):
        _need_file(p)
    try:
        instances = load_instances(args.src, args.pred, args.refs)
    except ValueError as e:
        raise UsageError(str(e)) from None
    report = evaluate(instances, smooth_bleu=args.smooth)
    if args.report:
        report.write(args.report)
    print(" ".join(f"{k}={v:.3f}" for k, v in report.metrics().items()))
    return 0


def _parse_ints(text: str, what: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers") from None
    if not vals or any(v < 0 for v in vals):
        raise UsageError(f"{what} must be non-empty and non-negative")
    return vals


def cmd_sweep(args) -> int:
    sizes = _parse_ints(args.sizes, "--sizes")
    seeds = _parse_ints(args.seeds, "--seeds")
    base = _training_config(args)
    out = Path(args.out_dir)
    echo_config(out, base, data=str(args.data), sizes=args.sizes, seeds=args.seeds)
    rows = []
    for size in sizes:
        metrics = []
        for seed in seeds:
            mode = "semisupervised" if size > 0 else "unsupervised"
            cfg = TrainingConfig(**{**asdict(base), "mode": mode, "seed": seed})
            run_dir = out / f"delta{size}" / f"seed{seed}"
            _, report = _train_one(cfg, args.data, run_dir, parallel_size=size)
            if report is None:
                raise UsageError("sweep needs dev or test references in the data directory")
            metrics.append(report.metrics())
        mean = {k: float(np.mean([m[k] for m in metrics])) for k in metrics[0]}
        rows.append((size, mean))
    lines = ["System\tFE-diff\tSARI\tBLEU\tWord-diff"]
    for size, m in rows:
        name = "UNTS" if size == 0 else f"UNTS+{size}"
        lines.append(f"{name}\t{m['fe_diff']:.2f}\t{m['sari']:.2f}\t{m['bleu']:.2f}\t{m['word_diff']:.2f}")
    table = "\n".join(lines) + "\n"
    (out / "sweep.tsv").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="unts", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("partition", help="split raw sentences into simple/complex by Flesch reading ease")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--complex-max-fe", type=float, default=10.0)
    p.add_argument("--simple-min-fe", type=float, default=70.0)
    p.set_defaults(fn=cmd_partition)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus with oracle tables")
    p.add_argument("out_dir")
    add_config(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model on a corpus directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", default=None)
    p.add_argument("--variant", default=None)
    add_config(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("simplify", help="simplify one sentence per line")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_simplify)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--src", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--refs", required=True, nargs="+")
    p.add_argument("--report")
    p.add_argument("--smooth", action="store_true", help="add-one BLEU smoothing for n > 1")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep", help="train over several parallel-set sizes and tabulate")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated parallel-set sizes, e.g. 0,100,1000")
    p.add_argument("--seeds", default="0", help="comma-separated seeds averaged per size")
    add_config(p)
    p.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None) -> int:
    if os.environ.get("UNTS_VERBOSE"):
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (UsageError, ConfigError, ParseError) as e:
        print(f"unts {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"unts {args.command}: failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
