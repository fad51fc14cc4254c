"""How often AIC picks the right number of Borel components.

Runs select_k_bmm over many independent corpora for a single-regime and a
bimodal population and reports the selection rate under both penalties.

    python scripts/aic_selection_rates.py --seeds 100
"""
import argparse
from collections import Counter

import numpy as np

from dmhp.mixtures import select_k_bmm
from dmhp.simulate import simulate_sizes


def corpus(kind, rng, n):
    if kind == "single":
        return simulate_sizes(0.5, n, rng)
    return np.concatenate([simulate_sizes(0.1, n // 2, rng), simulate_sizes(0.85, n - n // 2, rng)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--sizes", type=int, default=10_000)
    ap.add_argument("--max-k", type=int, default=5)
    args = ap.parse_args()

    for kind, truth in (("single", 1), ("bimodal", 2)):
        picks = {"components": Counter(), "parameters": Counter()}
        for seed in range(args.seeds):
            sizes = corpus(kind, np.random.default_rng(seed), args.sizes)
            for penalty in picks:
                k = select_k_bmm(sizes, range(1, args.max_k + 1), penalty=penalty)[0]
                picks[penalty][k] += 1
        for penalty, counts in picks.items():
            rate = counts[truth] / args.seeds
            print(f"{kind:8s} penalty={penalty:10s} correct={rate:.2f} picks={dict(sorted(counts.items()))}")


if __name__ == "__main__":
    main()
