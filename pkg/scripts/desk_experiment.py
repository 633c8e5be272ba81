"""Desk-scale synthetic run: train with the default config, then score held-out data.

    python3 scripts/desk_experiment.py --out runs/desk --seed 0

Prints test metrics, the synonym-replacement rate and the auto-encoding overlap
of both paths, and leaves the run directory (trainlog, checkpoints, model) behind.
"""
import argparse
import logging
import time
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from unts.evaluation import EvalInstance, evaluate
from unts.inference import simplify_sentences
from unts.synthetic import SynthConfig, generate_synthetic_corpus
from unts.training import Trainer, TrainingConfig


def overlap(a, b):
    return sum((Counter(a) & Counter(b)).values()) / max(len(a), len(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr-gen", type=float, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    sc = generate_synthetic_corpus(SynthConfig())
    cfg = replace(TrainingConfig(), seed=args.seed)
    if args.lr_gen is not None:
        cfg = replace(cfg, lr_gen=args.lr_gen)
    dev = [EvalInstance(c, s, [s]) for c, s in sc.dev]
    t0 = time.time()
    state, log = Trainer(sc.corpus, cfg, embeddings=sc.embeddings, dev=dev).train(Path(args.out))
    print(f"trained in {time.time() - t0:.0f}s")

    src = [c for c, _ in sc.test]
    pred = simplify_sentences(src, state)
    rep = evaluate([EvalInstance(c, p, [s]) for (c, s), p in zip(sc.test, pred)])
    print(" ".join(f"{k}={v:.3f}" for k, v in rep.metrics().items()))
    hit = np.mean([any(sc.synonyms[t] in p for t in c if t in sc.synonyms) for c, p in zip(src, pred)])
    gs = np.mean([overlap(a, b) for a, b in zip(sc.test_simple, simplify_sentences(sc.test_simple, state, "Gs"))])
    gd = np.mean([overlap(a, b) for a, b in zip(src, simplify_sentences(src, state, "Gd"))])
    print(f"synonym replacement {hit:.3f}  Gs overlap {gs:.3f}  Gd overlap {gd:.3f}")
    for c, p in list(zip(src, pred))[:5]:
        print(" ", " ".join(c), "=>", " ".join(p))


if __name__ == "__main__":
    main()
