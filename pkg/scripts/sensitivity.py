"""Posterior AUC as the prior gap mu10 - mu00 varies around its default.

    python3 scripts/sensitivity.py --fraction 0.1 --factors 0.5 0.75 1 1.25 1.5
"""

import argparse

from bhts.evaluation import sensitivity_scan, write_sensitivity_csv
from bhts.hyper import ChainConfig, default_hyperparameters
from bhts.synth import build_campaign, benchmark_campaign_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fraction", type=float, default=0.10)
    ap.add_argument("--factors", type=float, nargs="+", default=[0.5, 0.75, 1.0, 1.25, 1.5],
                    help="multiples of the default gap")
    ap.add_argument("--n-plates", type=int, default=100)
    ap.add_argument("--n-iter", type=int, default=2000)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="sensitivity.csv")
    args = ap.parse_args()

    campaign, truth = build_campaign(benchmark_campaign_spec(args.fraction, n_plates=args.n_plates, seed=args.seed))
    hp = default_hyperparameters([w.value for p in campaign.plates for w in p.compounds])
    gap = hp.mu10 - hp.mu00
    cfg = ChainConfig(n_iter=args.n_iter, burn_in=args.burn_in, seed=args.seed, record_traces=False)
    rows = sensitivity_scan(campaign, truth, hp, [gap * f for f in args.factors], cfg, threads=args.threads)
    write_sensitivity_csv(rows, args.out)
    for d, a in rows:
        print(f"gap {d:.4f}: AUC {a:.4f}")
    aucs = [a for _, a in rows]
    print(f"spread {max(aucs) - min(aucs):.4f}")


if __name__ == "__main__":
    main()
