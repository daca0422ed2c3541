"""Certify and simulate every scenario in a directory; prints one summary row per file.

    python scripts/simulate_scenarios.py [--dir scenarios] [--n 50]
"""

import argparse
from pathlib import Path

from lurecert.errors import DivergenceDetected, LureError
from lurecert.oscillator import certify
from lurecert.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dir", default=str(ROOT / "scenarios"))
    ap.add_argument("--n", type=int, default=None, help="override initial-condition count")
    args = ap.parse_args()
    print(f"{'scenario':<26} {'verdict':<20} {'criterion':<22} {'r':>8} {'min r_hat':>10} "
          f"{'max C':>8}")
    for path in sorted(Path(args.dir).glob("*.toml")):
        sc = load_scenario(path)
        if sc.oscillator is None or sc.nonlinearity is None:
            continue
        cert = certify(sc.oscillator, sc.quasi_convex, sc.time_varying)
        if args.n:
            sc.simulation.n_initial_conditions = args.n
        try:
            _, rates = sc.simulate()
            r_min = min(e.r_hat for e in rates)
            c_max = max(e.amplitude_C for e in rates)
            sim = f"{r_min:10.4f} {c_max:8.3f}"
        except (DivergenceDetected, LureError) as exc:
            sim = f"failed: {exc}"
        print(f"{sc.name:<26} {cert.verdict:<20} {cert.theorem_id:<22} {sc.oscillator.r:8.4f} "
              f"{sim}")


if __name__ == "__main__":
    main()
