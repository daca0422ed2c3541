"""Numerical oracles for feasibility boundaries.

These locate sector bounds and multipliers without using any closed form:
bisection on a feasibility predicate, one-dimensional multiplier searches,
and grid-based frequency checks built from `popov_supply`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from .dissipativity import FrequencyGrid, fdi_grid_check, popov_supply
from .oscillator import (FeasibilityCoefficients, OscillatorParams, build_oscillator,
                         fdi_coefficients, quartic_nonneg)


def bisect_sup(feasible, lo, hi, rtol=1e-12, max_iter=200):
    """Largest ``x`` in ``[lo, hi]`` with ``feasible(x)``, assuming ``lo`` is feasible
    and ``hi`` is not, and a single flip in between."""
    for _ in range(max_iter):
        if hi - lo <= rtol * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def sup_feasible(feasible, lo=0.0, hi=1.0, n_scan=0, rtol=1e-12, grow=2.0, max_grow=60):
    """Supremum of a downward-closed feasible set.

    The upper end is doubled until infeasible (returns ``inf`` if it never
    becomes infeasible).  With ``n_scan > 0`` a coarse scan first locates the
    first infeasible point, which guards against a flip missed by pure
    bisection.  ``lo`` must be feasible; otherwise ``nan`` is returned.
    """
    if not feasible(lo):
        return float("nan")
    k = 0
    while feasible(hi):
        lo, hi = hi, hi * grow if hi > 0 else 1.0
        k += 1
        if k > max_grow:
            return math.inf
    if n_scan > 0:
        xs = np.linspace(lo, hi, n_scan + 2)[1:-1]
        for x in xs:
            if feasible(x):
                lo = x
            else:
                hi = x
                break
    return bisect_sup(feasible, lo, hi, rtol)


def maximize_1d(f, lo, hi, n_grid=201, xatol=1e-12):
    """Maximize ``f`` on ``[lo, hi]``: grid, then bounded refinement around the best
    grid point.  Ties go to the smaller argument."""
    xs = np.linspace(lo, hi, n_grid)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmax(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n_grid - 1)]
    res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                          options={"xatol": xatol})
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(xs[i]), float(vals[i])


def coefficient_width(criterion, m, sigma, r, lam=1.0, mu=0.0, nu=0.0, hi=None):
    """Supremal ``l`` with `quartic_nonneg` true for fixed multipliers."""
    par = {"m": m, "sigma": sigma, "r": r}

    def ok(l):
        if l <= 0:
            return True
        return quartic_nonneg(fdi_coefficients(criterion, par, lam, mu, nu, l=l))

    tiny = 1e-14 * (1 + m)
    if not ok(tiny):
        return 0.0
    return sup_feasible(ok, tiny, hi or (1.0 + m), n_scan=64)


def grid_width(m, sigma, r, lam=1.0, mu=0.0, nu=0.0, grid=None, hi=None, d=1, tol=None):
    """Supremal ``l`` passing the axis-mode grid check for the given multipliers."""
    sys, _ = build_oscillator(OscillatorParams(d=d, m=m, sigma=sigma, r=min(r, sigma)))
    grid = grid or FrequencyGrid()

    def ok(l):
        M = popov_supply(sys, r, l, lam, mu, nu)
        return fdi_grid_check(sys, M, r=r, grid=grid, tol=tol).feasible

    tiny = 1e-9
    return sup_feasible(ok, tiny, hi or (1.0 + m), rtol=1e-10)


def popov_ti_scan(m, sigma, r, n_grid=201, mu_hi=None):
    """Best ``(l, mu)`` for the Popov condition by scanning ``mu`` (``lam = 1``).

    The width as a function of ``mu`` is unimodal but has a kink at the
    maximizer, so the scan is refined by bounded Brent search.
    """
    def width(mu):
        return coefficient_width("popov_time_invariant", m, sigma, r, 1.0, mu, 0.0)
    mu_hi = mu_hi or 2.0 / (2 * sigma - r)
    mu_hat, l_hat = maximize_1d(width, 0.0, mu_hi, n_grid=n_grid, xatol=1e-10)
    return l_hat, mu_hat


def quasi_lambda0_scan(m, sigma, r, mu_hi=None, n_grid=401):
    """Best ``(l, mu)`` for the ``lam = 0, nu = 1`` quasi-convex condition."""
    mu_hi = mu_hi or 4.0

    def width(mu):
        if mu <= 0:
            return 0.0
        w = coefficient_width("quasi_lambda0", m, sigma, r, 0.0, mu, 1.0, hi=1.0 + m)
        return 0.0 if not np.isfinite(w) else w
    mu_hat, l_hat = maximize_1d(width, 0.0, mu_hi, n_grid=n_grid, xatol=1e-12)
    return l_hat, mu_hat


def quasi_mu0_scan(m, sigma, r, nu_hi=4.0, n_grid=401):
    """Best ``(l, nu)`` for the ``lam = 1, mu = 0`` quasi-convex condition."""
    def width(nu):
        w = coefficient_width("quasi_lambda1", m, sigma, r, 1.0, 0.0, nu)
        return 0.0 if not np.isfinite(w) else w
    nu_hat, l_hat = maximize_1d(width, 0.0, nu_hi, n_grid=n_grid, xatol=1e-12)
    return l_hat, nu_hat


def hessian_damped_minimax(m, sigma, n_k=600, n_tau=2000, tau_hi=10.0, k_ratio=1e5):
    """Best uniform linear rate over ``k in [m, k_ratio m]`` by brute force in ``tau``.

    Returns ``(r_hat, tau_hat)`` where ``r_hat = max_tau min_k (-abscissa)``.
    Coarse grids are followed by a bounded refinement in ``tau``.
    """
    ks = np.geomspace(m, k_ratio * m, n_k)

    def worst_rate(tau):
        taus = np.atleast_1d(tau)
        # eigenvalues of [[-k tau, 1], [-k, -2 sigma]] in closed form
        tr = -(ks[None, :] * taus[:, None]) - 2 * sigma
        det = 2 * sigma * ks[None, :] * taus[:, None] + ks[None, :]
        disc = tr * tr / 4 - det
        sq = np.sqrt(disc.astype(complex))
        absc = np.maximum((tr / 2 + sq).real, (tr / 2 - sq).real)
        return -absc.max(axis=1)

    taus = np.linspace(tau_hi / n_tau, tau_hi, n_tau)
    rates = worst_rate(taus)
    i = int(np.argmax(rates))
    a, b = taus[max(i - 1, 0)], taus[min(i + 1, n_tau - 1)]
    res = minimize_scalar(lambda t: -worst_rate(t)[0], bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    return float(-res.fun), float(res.x)


def destabilizing_k(sigma, tau, r, k_lo, k_hi, n_k=4001):
    """Smallest sampled ``k`` for which the linear closed loop decays slower than ``r``."""
    ks = np.geomspace(k_lo, k_hi, n_k)
    for k in ks:
        A = np.array([[-k * tau, 1.0], [-k, -2 * sigma]])
        if np.max(np.linalg.eigvals(A).real) > -r:
            return float(k)
    return None


def coefficient_sweep(criterion, m, sigma, r, values, param="l", lam=1.0, mu=0.0, nu=0.0,
                      l=None, tau=0.0):
    """Rows ``(value, beta, gamma, feasible)`` sweeping one of ``l, mu, nu, r``."""
    rows = []
    for v in values:
        kw = {"lam": lam, "mu": mu, "nu": nu}
        par = {"m": m, "sigma": sigma, "r": r, "tau": tau}
        ll = l
        if param == "l":
            ll = v
        elif param in kw:
            kw[param] = v
        elif param == "r":
            par["r"] = v
        else:
            raise ValueError(f"cannot sweep {param!r}")
        c = fdi_coefficients(criterion, par, l=ll, **kw)
        if criterion == "hessian_damped":
            feas = quartic_nonneg(FeasibilityCoefficients(0.0, -c.beta, -c.gamma))
        else:
            feas = quartic_nonneg(c)
        rows.append((float(v), c.beta, c.gamma, feas))
    return rows
