#!/usr/bin/env python3
"""Second shape derivative along boundary-response eigenmodes.

On concentric disks the rigidity is critical; this script tabulates, per
eigenmode xi_k of the boundary response operator, the eigenvalue
lambda_k, the second derivative d2T(xi_k), and the upper bound
-2c^2/lambda_k + 2c min d2nn(u).  Every d2T is negative and the product
d2T * lambda_k tends to -2c^2 as k grows: no shape is a local minimizer.
"""
import argparse
import sys

from torsionlab.geometry import StarBoundary, TwoPhaseConfig
from torsionlab.ntd import theorem1_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rho", type=float, default=0.5, help="core radius")
    ap.add_argument("--sigma-c", type=float, default=2.0)
    ap.add_argument("--k-max", type=int, default=12,
                    help="number of spectral ranks to tabulate")
    ap.add_argument("--target-h", type=float, default=0.05)
    args = ap.parse_args(argv)

    cfg = TwoPhaseConfig(outer=StarBoundary(),
                         cores=(StarBoundary(r0=args.rho),),
                         sigma_c=args.sigma_c)
    out = theorem1_experiment(cfg, range(1, args.k_max + 1),
                              target_h=args.target_h)
    c = out["c_hat"]
    print(f"c = {c:.6f}   min d2nn(u) = {out['d2nn_min']:.6f}   "
          f"-2c^2 = {-2 * c * c:.4f}")
    print(f"{'k':>3} {'lambda_k':>10} {'d2T':>12} {'bound':>12} "
          f"{'d2T*lambda':>12}")
    for r in out["rows"]:
        print(f"{r.k:>3} {r.lam:>10.6f} {r.d2T:>12.6f} {r.bound:>12.6f} "
              f"{r.d2T * r.lam:>12.6f}")
    print(f"first rank with d2T < 0: {out['k_neg']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
