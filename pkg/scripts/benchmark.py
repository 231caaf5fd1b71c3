"""Wall-clock time of a sampler run on a synthetic campaign (default: full 1000-plate scale).

    python3 scripts/benchmark.py --n-iter 7000 --burn-in 3500
"""

import argparse
import time

from bhts.hyper import ChainConfig, default_hyperparameters
from bhts.sampler import CompoundData, run_chain
from bhts.synth import build_campaign, benchmark_campaign_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-plates", type=int, default=1000)
    ap.add_argument("--fraction", type=float, default=0.10)
    ap.add_argument("--n-iter", type=int, default=7000)
    ap.add_argument("--burn-in", type=int, default=3500)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    campaign, _ = build_campaign(benchmark_campaign_spec(args.fraction, n_plates=args.n_plates, seed=args.seed))
    data = CompoundData.from_campaign(campaign)
    hp = default_hyperparameters(data.z)
    t0 = time.perf_counter()
    res = run_chain(data, hp, ChainConfig(n_iter=args.n_iter, burn_in=args.burn_in, seed=args.seed,
                                          record_traces=False), threads=args.threads)
    dt = time.perf_counter() - t0
    print(f"{data.n} compounds, {args.n_iter} sweeps, {args.threads} thread(s): "
          f"{dt:.1f} s ({dt / args.n_iter * 1e3:.2f} ms/sweep), pi {res.means['pi']:.4f}")


if __name__ == "__main__":
    main()
