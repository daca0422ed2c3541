"""Brute-force minimax of the linear closed-loop rate against the optimal damping formula.

    python scripts/optimal_damping.py [--m 0.5 1 2 4] [--sigma 1]
"""

import argparse
import time

from lurecert.boundary import destabilizing_k, hessian_damped_minimax
from lurecert.oscillator import optimal_linear_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--sigma", type=float, default=1.0)
    args = ap.parse_args()
    s = args.sigma
    print(f"{'m':>6} | {'r_star':>10} {'r_hat':>10} | {'tau_star':>10} {'tau_hat':>10} | "
          f"{'k breaking r*+0.05 (tau*/2, tau*, 2tau*)':<40} {'sec':>5}")
    for m in args.m:
        t0 = time.perf_counter()
        r_star, tau_star = optimal_linear_rate(m, s)
        r_hat, tau_hat = hessian_damped_minimax(m, s)
        ks = [destabilizing_k(s, f * tau_star, r_star + 0.05, m / 2, 100 * m)
              for f in (0.5, 1.0, 2.0)]
        shown = ", ".join("none" if k is None else f"{k:.4g}" for k in ks)
        print(f"{m:6.3g} | {r_star:10.6f} {r_hat:10.6f} | {tau_star:10.6f} {tau_hat:10.6f} | "
              f"{shown:<40} {time.perf_counter() - t0:5.2f}")


if __name__ == "__main__":
    main()
