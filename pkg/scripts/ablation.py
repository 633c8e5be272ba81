"""Train UNTS, UNTS-adv and UNTS-div on one corpus directory and tabulate test metrics.

    unts synth data/synth
    python3 scripts/ablation.py --data data/synth --out runs/ablation --set init_steps=300
"""
import argparse
from pathlib import Path

from unts.cli import main as unts_main
from unts.evaluation import EvalReport


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", required=True)
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()
    sets = [a for kv in args.set for a in ("--set", kv)]
    rows = ["System\tFE-diff\tSARI\tBLEU\tWord-diff"]
    for variant in ("UNTS", "UNTS-adv", "UNTS-div"):
        out = Path(args.out) / variant
        code = unts_main(["train", "--data", args.data, "--out-dir", str(out), "--variant", variant, *sets])
        if code:
            raise SystemExit(code)
        r = EvalReport.read(out / "report.txt")
        rows.append(f"{variant}\t{r.fe_diff:.2f}\t{r.sari:.2f}\t{r.bleu:.2f}\t{r.word_diff:.2f}")
    table = "\n".join(rows) + "\n"
    (Path(args.out) / "ablation.tsv").write_text(table, encoding="utf-8")
    print(table, end="")


if __name__ == "__main__":
    main()
