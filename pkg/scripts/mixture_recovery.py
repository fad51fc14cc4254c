"""Parameter recovery for the Borel and kernel mixtures on simulated data."""
import argparse
import time

import numpy as np

from dmhp.kernels import KernelParams
from dmhp.mixtures import BMMConfig, KMMConfig, fit_bmm, fit_kmm
from dmhp.simulate import SimConfig, simulate_cascades, simulate_sizes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cascades", type=int, default=1000, help="per regime")
    ap.add_argument("--solver", choices=["nelder-mead", "lbfgs"], default="nelder-mead")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    t0 = time.perf_counter()
    sizes = np.concatenate([simulate_sizes(0.2, 5000, rng), simulate_sizes(0.8, 5000, rng)])
    bmm, rep = fit_bmm(sizes, 2, BMMConfig(restarts=5))
    print(f"BMM  truth n*=(0.2, 0.8) w=(0.5, 0.5)")
    print(f"     fit   n*={np.round(bmm.n_stars, 4)} w={np.round(bmm.weights, 4)} "
          f"L={rep.final_log_likelihood:.2f} iters={rep.iterations} {time.perf_counter() - t0:.1f}s")

    for family, kernels in (("exp", [KernelParams.exponential(0.2), KernelParams.exponential(5.0)]),
                            ("pl", [KernelParams.power_law(0.8, 0.1), KernelParams.power_law(2.5, 2.0)])):
        t0 = time.perf_counter()
        group = [c for k in kernels for c in simulate_cascades(SimConfig(0.8, k), args.cascades, rng)]
        kmm, rep = fit_kmm(group, 2, family, KMMConfig(solver=args.solver))
        truth = ", ".join(f"theta={k.theta}" + ("" if k.c is None else f" c={k.c}") for k in kernels)
        fit = ", ".join(f"theta={k.theta:.3f}" + ("" if k.c is None else f" c={k.c:.3f}") for k in kmm.kernels)
        print(f"KMM  {family:3s} truth {truth}")
        print(f"         fit   {fit} w={np.round(kmm.weights, 3)} iters={rep.iterations} "
              f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
