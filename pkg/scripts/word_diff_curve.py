"""Dev word-diff and SARI per checkpoint, read back from a run's trainlog.jsonl.

    python3 scripts/word_diff_curve.py runs/desk

Writes curve.tsv next to the log and prints a text bar per checkpoint.
"""
import sys
from pathlib import Path

from unts.training import TrainLog


def main():
    run = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/desk")
    log = TrainLog.read(run / "trainlog.jsonl")
    if not log.checkpoints:
        raise SystemExit(f"{run}: no checkpoints in trainlog")
    lines = ["step\tword_diff\tsari"]
    top = max(abs(c["word_diff"]) for c in log.checkpoints) or 1.0
    for c in log.checkpoints:
        lines.append(f"{c['step']}\t{c['word_diff']:.3f}\t{c['sari']:.2f}")
        bar = "#" * int(round(30 * max(c["word_diff"], 0.0) / top))
        print(f"{c['step']:>6}  wd {c['word_diff']:6.2f}  sari {c['sari']:6.2f}  {bar}")
    (run / "curve.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
