"""Closed-form sector bounds next to their grid-bisected counterparts.

    python scripts/sector_bounds_table.py [--grid-points N]
"""

import argparse

from lurecert.boundary import grid_width
from lurecert.dissipativity import FrequencyGrid
from lurecert.oscillator import circle_bound, popov_ti_bound, quasi_lambda0_bound

CASES = [(1.0, 1.0, 0.5), (2.0, 1.0, 0.5), (0.75, 1.0, 0.5), (3.0, 0.7, 0.2), (1.0, 1.0, 0.75),
         (1.2, 1.0, 0.8)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid-points", type=int, default=4001)
    args = ap.parse_args()
    grid = FrequencyGrid(n_points=args.grid_points)
    print(f"{'m':>5} {'sigma':>5} {'r':>5} | {'criterion':<22} {'closed form':>14} "
          f"{'grid':>14} {'rel err':>9}")
    for m, sigma, r in CASES:
        rows = []
        if r < sigma and m >= 2 * r * sigma - r * r:
            rows.append(("circle", circle_bound(m, sigma, r), dict()))
            if m > 2 * r * sigma:
                l_best, mu_best = popov_ti_bound(m, sigma, r)
                rows.append(("popov (mu=%.4g)" % mu_best, l_best, dict(mu=mu_best)))
        if 2 * sigma / 3 < r < sigma and m >= 2 * r * sigma - r * r:
            alpha, mu_star = quasi_lambda0_bound(m, sigma, r)
            rows.append(("quasi lam=0 (mu=%.3g)" % mu_star, alpha,
                         dict(lam=0.0, mu=mu_star, nu=1.0)))
        for name, closed, kw in rows:
            est = grid_width(m, sigma, r, grid=grid, **kw)
            err = abs(est - closed) / max(closed, 1e-300)
            print(f"{m:5.3g} {sigma:5.3g} {r:5.3g} | {name:<22} {closed:14.10f} {est:14.10f} "
                  f"{err:9.2e}")


if __name__ == "__main__":
    main()
