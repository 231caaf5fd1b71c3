"""BHTS posterior AUC against the best thresholded B-score AUC on synthetic campaigns.

    python3 scripts/desk_comparison.py --n-plates 100 --seeds 0 1 2 --out desk.csv
"""

import argparse
import csv
import time

from bhts.baseline import score_campaign
from bhts.evaluation import auc_mann_whitney, bscore_threshold_auc
from bhts.hyper import ChainConfig, default_hyperparameters
from bhts.sampler import run_chain
from bhts.synth import build_campaign, benchmark_campaign_spec


def run(frac, seed, n_plates, n_iter, burn_in, threads):
    campaign, truth = build_campaign(benchmark_campaign_spec(frac, n_plates=n_plates, seed=seed))
    hp = default_hyperparameters([w.value for p in campaign.plates for w in p.compounds])
    res = run_chain(campaign, hp, ChainConfig(n_iter=n_iter, burn_in=burn_in, seed=seed, record_traces=False),
                    threads=threads)
    y = [truth[(res.data.plate_ids[m], int(r), int(c))]
         for m, r, c in zip(res.data.plate, res.data.rows, res.data.cols)]
    table = score_campaign(campaign, "b")
    scan = bscore_threshold_auc(table, [truth[k] for k in table.keys()])
    return auc_mann_whitney(res.posterior, y), scan.best_auc, scan.best_threshold, res.means["pi"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.40, 0.10, 0.05])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--n-plates", type=int, default=100)
    ap.add_argument("--n-iter", type=int, default=2000)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="desk_comparison.csv")
    args = ap.parse_args()

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["active_fraction", "seed", "bhts_auc", "bscore_best_auc", "bscore_best_threshold", "pi_mean"])
        for frac in args.fractions:
            for seed in args.seeds:
                t0 = time.perf_counter()
                row = run(frac, seed, args.n_plates, args.n_iter, args.burn_in, args.threads)
                w.writerow([frac, seed, *row])
                print(f"fraction {frac:.2f} seed {seed}: BHTS {row[0]:.4f}  B-score {row[1]:.4f} "
                      f"(t={row[2]:.3f})  pi {row[3]:.4f}  [{time.perf_counter() - t0:.0f} s]", flush=True)


if __name__ == "__main__":
    main()
