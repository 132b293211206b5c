"""Grid search, random search and GWO on the toy task at the same proxy-run budget.

Each evaluation trains a short proxy CycleGAN and scores validation PSNR/FID.

    python scripts/compare_tuners.py --budget 12 --proxy-steps 100 --out runs/tune
"""

import argparse
import pathlib

from aiscyclegen.gwo import default_space, tune_training, write_tune_report
from aiscyclegen.toy import toy_domains, toy_train_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--budget", type=int, default=12)
    ap.add_argument("--proxy-steps", type=int, default=100)
    ap.add_argument("--pack-size", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("runs/tune"))
    args = ap.parse_args()

    S, Tt = toy_domains(200, 32, 3, seed=args.seed)
    train, val = (S[:160], Tt[:160]), (S[160:], Tt[160:])
    base = toy_train_config(args.proxy_steps, args.seed)
    reports = []
    for method in ("grid", "random", "gwo"):
        rep = tune_training(train, default_space(3), args.budget, method, args.seed, base_config=base,
                            val_data=val, pack_size=args.pack_size)
        reports.append(rep)
        print(f"{rep.technique:24s} PSNR {rep.psnr:7.3f}  FID {rep.fid:8.4f}  {rep.seconds:6.1f}s  "
              f"evals {rep.evaluations}{' (truncated)' if rep.truncated else ''}  best {rep.best_params}")
    args.out.mkdir(parents=True, exist_ok=True)
    write_tune_report(reports, args.out / "tuning_report.csv")


if __name__ == "__main__":
    main()
