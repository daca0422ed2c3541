"""Command-line front end.

Exit codes: 0 certified / success, 1 not certified, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import coefficient_sweep, coefficient_width
from .dissipativity import FrequencyGrid, fdi_grid_check, popov_supply
from .errors import DivergenceDetected, LureError, ScenarioError
from .oscillator import (OscillatorParams, build_oscillator, certify, circle_bound,
                         optimal_linear_rate, popov_ti_bound, quasi_lambda0_bound,
                         quasi_mu0_bound)
from .scenario import load_scenario
from .systems import system_matrix_kernel_dim, zero_dynamics

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _num(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return repr(x)
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def _dump(obj):
    return json.dumps(_num(obj), indent=2, sort_keys=True) + "\n"


def _out_dir(args, scenario=None):
    if args.out:
        d = Path(args.out)
    elif os.environ.get("LURE_OUT_DIR"):
        d = Path(os.environ["LURE_OUT_DIR"])
    elif scenario is not None and scenario.output_dir:
        d = Path(scenario.output_dir)
    else:
        d = Path("lurecert_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _grid(args):
    n = args.grid_points if args.grid_points else 4001
    if n < 1:
        raise UsageError("--grid-points must be positive")
    return FrequencyGrid(n_points=n)


def _envelope(kind, scenario, body):
    return {"tool": "lurecert", "version": __version__, "command": kind,
            "scenario": scenario.resolved() if scenario is not None else None, **body}


def _certify_payload(sc, args):
    if sc.criterion == "raw_fdi":
        rep = fdi_grid_check(sc.system, sc.supply, r=float(sc.fdi.get("r", 0.0)),
                             grid=_grid(args), half_plane=sc.fdi.get("mode", "axis"),
                             tol=args.tol)
        return rep.feasible, {"fdi": rep.to_dict()}
    if sc.oscillator is None:
        raise ScenarioError("scenario needs [oscillator] or criterion = 'raw_fdi'")
    p = sc.oscillator
    cert = certify(p, quasi_convex=sc.quasi_convex, time_varying=sc.time_varying)
    if sc.criterion not in ("auto", cert.theorem_id) and cert.certified:
        if sc.criterion not in cert.applicable:
            cert.verdict = "hypotheses_violated"
            cert.diagnostics["reason"] = f"requested criterion {sc.criterion} does not apply"
        else:
            cert.diagnostics["requested"] = sc.criterion
    body = {"certificate": cert.to_dict()}
    # independent grid check of the residual-sector condition with the chosen multipliers
    if cert.certified and p.tau == 0 and np.isfinite(p.L) and cert.multipliers:
        sys_, _ = build_oscillator(OscillatorParams(d=1, m=p.m, L=p.L, sigma=p.sigma, r=p.r))
        lam, mu, nu = cert.multipliers
        M = popov_supply(sys_, p.r, p.L - p.m, lam, mu, nu)
        body["grid_check"] = fdi_grid_check(sys_, M, r=p.r, grid=_grid(args),
                                            tol=args.tol).to_dict()
    return cert.certified, body


def cmd_certify(args):
    sc = _load(args)
    ok, body = _certify_payload(sc, args)
    out = _out_dir(args, sc)
    (out / "certificate.json").write_text(_dump(_envelope("certify", sc, body)))
    verdict = "certified" if ok else "not certified"
    print(f"{sc.name}: {verdict}")
    if "certificate" in body:
        c = body["certificate"]
        print(f"  criterion={c['theorem_id']} bound_L={c['bound_L']} rate={c['rate']}")
    return EXIT_OK if ok else EXIT_FAIL


def _parse_range(text):
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}; use lo:hi:count") from exc
    if len(parts) != 3 or int(parts[2]) < 1:
        raise UsageError(f"bad range {text!r}; use lo:hi:count with count >= 1")
    lo, hi, n = parts[0], parts[1], int(parts[2])
    if hi < lo:
        raise UsageError("empty range (hi < lo)")
    return np.linspace(lo, hi, n)


_SCAN_CRITERIA = {"circle", "popov_time_invariant", "quasi_lambda0", "quasi_lambda1",
                  "quasi_infinite", "hessian_damped"}


def _closed_form(criterion, m, sigma, r):
    try:
        if criterion == "circle":
            return circle_bound(m, sigma, r)
        if criterion == "popov_time_invariant":
            return popov_ti_bound(m, sigma, r)[0]
        if criterion == "quasi_lambda0":
            return quasi_lambda0_bound(m, sigma, r)[0]
        if criterion == "quasi_lambda1":
            return quasi_mu0_bound(m, sigma, r)[0]
    except LureError:
        return float("nan")
    return float("inf")


def cmd_scan(args):
    if args.criterion not in _SCAN_CRITERIA:
        raise UsageError(f"unknown criterion {args.criterion!r}; choose from "
                         f"{sorted(_SCAN_CRITERIA)}")
    values = _parse_range(args.range)
    m, sigma, r = args.m, args.sigma, args.r
    tau = args.tau
    if args.criterion == "hessian_damped" and tau is None:
        tau = optimal_linear_rate(m, sigma)[1]
    tau = tau or 0.0
    bound = _closed_form(args.criterion, m, sigma, r)
    l_fixed = args.l if args.l is not None else (bound if np.isfinite(bound) else None)
    if args.param != "l" and args.criterion in ("circle", "popov_time_invariant",
                                                "quasi_lambda0", "quasi_lambda1") \
            and l_fixed is None:
        raise UsageError("give --l for multiplier sweeps without a finite closed form")
    try:
        rows = coefficient_sweep(args.criterion, m, sigma, r, values, param=args.param,
                                 lam=args.lam, mu=args.mu, nu=args.nu, l=l_fixed, tau=tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = ["value,beta,gamma,feasible,l_hat,closed_form_bound"]
    for (v, beta, gamma, feas) in rows:
        l_hat = ""
        if args.param in ("mu", "nu", "lam") and args.criterion != "hessian_damped":
            kw = {"lam": args.lam, "mu": args.mu, "nu": args.nu, args.param: v}
            w = coefficient_width(args.criterion, m, sigma, r, **kw)
            l_hat = f"{w:.17g}"
        lines.append(f"{v:.17g},{beta:.17g},{gamma:.17g},{int(feas)},{l_hat},{bound:.17g}")
    text = "\n".join(lines) + "\n"
    out = _out_dir(args)
    (out / f"scan_{args.criterion}_{args.param}.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args):
    sc = _load(args)
    if args.seed is not None:
        sc.simulation.seed = args.seed
    out = _out_dir(args, sc)
    try:
        trajs, rates = sc.simulate()
    except DivergenceDetected as exc:
        print(f"{sc.name}: diverged ({exc})")
        return EXIT_FAIL
    for i, tr in enumerate(trajs[: args.keep]):
        (out / f"trajectory_{i:03d}.csv").write_text(tr.to_csv())
    lines = ["index,r_hat,residual,amplitude_C"]
    for i, est in enumerate(rates):
        lines.append(f"{i},{est.r_hat:.17g},{est.residual:.17g},{est.amplitude_C:.17g}")
    (out / "rates.csv").write_text("\n".join(lines) + "\n")
    r_min = min(e.r_hat for e in rates)
    c_max = max(e.amplitude_C for e in rates)
    summary = {"n_trajectories": len(trajs), "r_hat_min": r_min, "amplitude_C_max": c_max}
    (out / "simulation.json").write_text(_dump(_envelope("simulate", sc, summary)))
    print(f"{sc.name}: {len(trajs)} trajectories, min r_hat={r_min:.6g}, max C={c_max:.6g}")
    return EXIT_OK


def cmd_zerodyn(args):
    sc = _load(args)
    if sc.system is None:
        raise ScenarioError("zerodyn needs a [system] section")
    res = zero_dynamics(sc.system)
    zeros = [complex(z) for z in res.zero_eigenvalues]
    checks = [int(system_matrix_kernel_dim(sc.system, z, rtol=1e-8)) for z in zeros]
    body = {"F": [[_num(complex(v)) if np.iscomplexobj(res.F) else float(v) for v in row]
                  for row in res.F],
            "S_basis": [[_num(complex(v)) if np.iscomplexobj(res.S_basis) else float(v)
                         for v in row] for row in res.S_basis],
            "zeros": [[z.real, z.imag] for z in zeros],
            "kernel_dims": checks, "stages": res.stages}
    out = _out_dir(args, sc)
    (out / "zero_dynamics.json").write_text(_dump(_envelope("zerodyn", sc, body)))
    if zeros:
        for z in zeros:
            print(f"zero {z.real:.12g}{z.imag:+.12g}j" if z.imag else f"zero {z.real:.12g}")
    else:
        print("no zeros (trivial zero dynamics)")
    return EXIT_OK


def cmd_report(args):
    sc = _load(args)
    ok, body = _certify_payload(sc, args)
    if sc.nonlinearity is not None:
        if args.seed is not None:
            sc.simulation.seed = args.seed
        try:
            _, rates = sc.simulate()
            body["simulation"] = {"r_hat_min": min(e.r_hat for e in rates),
                                  "amplitude_C_max": max(e.amplitude_C for e in rates),
                                  "n_trajectories": len(rates)}
        except DivergenceDetected as exc:
            body["simulation"] = {"diverged": str(exc)}
    out = _out_dir(args, sc)
    (out / "report.json").write_text(_dump(_envelope("report", sc, body)))
    sys.stdout.write(_dump(body))
    return EXIT_OK if ok else EXIT_FAIL


def _load(args):
    if not args.scenario:
        raise UsageError("--scenario is required")
    return load_scenario(args.scenario)


def build_parser():
    p = argparse.ArgumentParser(prog="lurecert", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lurecert {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario TOML file")
    common.add_argument("--out", help="output directory (overrides LURE_OUT_DIR)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--grid-points", type=int, default=None,
                        help="positive log-spaced frequencies per grid check")
    common.add_argument("--tol", type=float, default=None, help="absolute FDI tolerance")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="certify a scenario")
    s = sub.add_parser("scan", parents=[common], help="sweep frequency-polynomial coefficients")
    s.add_argument("--criterion", required=True)
    s.add_argument("--param", default="l", choices=["l", "mu", "nu", "lam", "r"])
    s.add_argument("--range", required=True, help="lo:hi:count")
    s.add_argument("--m", type=float, default=1.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--r", type=float, default=0.5)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--l", type=float, default=None)
    s.add_argument("--lam", type=float, default=1.0)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--nu", type=float, default=0.0)
    s = sub.add_parser("simulate", parents=[common], help="simulate a scenario")
    s.add_argument("--keep", type=int, default=1, help="trajectories written as CSV")
    sub.add_parser("zerodyn", parents=[common], help="zero dynamics of a [system]")
    sub.add_parser("report", parents=[common], help="certificate plus simulation summary")
    return p


_COMMANDS = {"certify": cmd_certify, "scan": cmd_scan, "simulate": cmd_simulate,
             "zerodyn": cmd_zerodyn, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
