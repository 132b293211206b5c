"""Generator-depth ablation on the toy task: same budget and seed for every depth.

    python scripts/generator_ablation.py --steps 300 --depths 1 2 3 5 --out runs/ablation
"""

import argparse
import pathlib

from aiscyclegen.bench import run_ablation, write_ablation_table
from aiscyclegen.metrics import random_projection
from aiscyclegen.toy import toy_domains, toy_train_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3, 5, 7])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("runs/ablation"))
    args = ap.parse_args()

    S, Tt = toy_domains(200, 32, 3, seed=args.seed)
    rows = run_ablation((S[:160], Tt[:160]), tuple(args.depths), toy_train_config(args.steps, args.seed),
                        val_data=(S[160:], Tt[160:]), extractor=random_projection(0, 16))
    for r in rows:
        cells = "FAILED" if r.failed else f"PSNR {r.psnr:7.3f}  FID {r.fid:8.4f}"
        print(f"{r.configuration:18s} layers {r.cnn_layers}  {cells}")
    args.out.mkdir(parents=True, exist_ok=True)
    write_ablation_table(rows, args.out / "ablation_table.csv")


if __name__ == "__main__":
    main()
