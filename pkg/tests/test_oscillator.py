import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lurecert.boundary import coefficient_width
from lurecert.dissipativity import FrequencyGrid, fdi_grid_check, popov_eval, popov_supply
from lurecert.errors import HypothesesViolated, PoleProximity
from lurecert.oscillator import (
    CIRCLE_TIME_VARYING, HESSIAN_DAMPED, POPOV_TIME_INVARIANT, QUASI_FINITE, QUASI_INFINITE,
    FeasibilityCoefficients, OscillatorParams, build_oscillator, certify, circle_bound,
    closed_loop_charpoly, fdi_coefficients, hessian_damped_feasible, linear_rate_region,
    marginal_matrix, optimal_linear_rate, popov_ti_bound, quartic_nonneg, quasi_bounds,
    quasi_lambda0_bound, quasi_mu0_bound, tau_certificate, transfer_den, transfer_eval,
)
from lurecert.systems import observability_rank, reachability_rank


def _admissible(t):
    m, sigma, frac = t
    r = frac * sigma
    return max(m, 2 * r * sigma - r * r + 1e-3), sigma, r


admissible = st.tuples(st.floats(0.2, 5.0), st.floats(0.2, 3.0),
                       st.floats(0.05, 0.95)).map(_admissible)


def test_params_validation():
    with pytest.raises(ValueError):
        OscillatorParams(m=0.0)
    with pytest.raises(ValueError):
        OscillatorParams(m=1.0, L=1.0)
    with pytest.raises(ValueError):
        OscillatorParams(tau=-1.0)
    with pytest.raises(ValueError):
        OscillatorParams(d=0)
    assert OscillatorParams(m=1.0, L=3.0).l == 2.0


def test_build_oscillator_matrices():
    sys, shift = build_oscillator(OscillatorParams(m=1, sigma=1, tau=0, r=0.5))
    assert np.array_equal(sys.A, [[0, 1], [-1, -2]])
    assert np.array_equal(sys.B, [[0], [-1]])
    assert np.array_equal(sys.C, [[1, 0]])
    assert shift.m == 1 and shift.residual_sector == (0.0, math.inf)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_build_oscillator_controllable_observable(d):
    sys, _ = build_oscillator(OscillatorParams(d=d, m=1.3, sigma=0.7, tau=0.4, r=0.5))
    assert reachability_rank(sys.A, sys.B) == 2 * d
    assert observability_rank(sys.A, sys.C) == 2 * d


def test_transfer_examples():
    assert transfer_eval(1.0, 1.0, 0.0, 0.0) == pytest.approx(-1.0)
    m, sigma, tau = 1.5, 0.8, 0.7
    assert abs(transfer_eval(m, sigma, tau, -(1 + 2 * sigma * tau) / tau)) <= 1e-15
    with pytest.raises(PoleProximity):
        transfer_eval(1.0, 1.0, 0.0, -1.0)


def test_transfer_matches_resolvent():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m, sigma, tau = rng.uniform(0.2, 3, size=3)
        sys, _ = build_oscillator(OscillatorParams(m=m, sigma=sigma, tau=tau, r=0.1))
        s = complex(*rng.normal(size=2))
        assert transfer_eval(m, sigma, tau, s) == pytest.approx(sys.transfer(s)[0, 0], abs=1e-10)


def test_charpoly_examples():
    assert closed_loop_charpoly(1.0, 1.0, 0.0, 0.0) == (2.0, 1.0)
    sigma, r = 1.3, 0.4
    m = 2 * r * sigma - r * r
    assert closed_loop_charpoly(m, sigma, 0.0, r)[1] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(k=st.floats(0.1, 10), sigma=st.floats(0.1, 3), tau=st.floats(0, 3), r=st.floats(0, 3))
def test_charpoly_matches_marginal_matrix(k, sigma, tau, r):
    c1, c0 = closed_loop_charpoly(k, sigma, tau, r)
    roots = np.sort_complex(np.roots([1.0, c1, c0]))
    eig = np.sort_complex(np.linalg.eigvals(marginal_matrix(k, sigma, tau, r)))
    assert np.allclose(roots, eig, atol=1e-9 * (1 + abs(c0) + abs(c1)))


def test_linear_rate_region_examples():
    reg = linear_rate_region(1.0, 1.0, 0.0, 0.5)
    assert reg.admissible and reg.strict
    reg = linear_rate_region(1.0, 1.0, 0.0, 1.0)
    assert not reg.admissible and reg.boundary_case
    r_star, tau_star = optimal_linear_rate(2.0, 1.0)
    reg = linear_rate_region(2.0, 1.0, tau_star, r_star)
    assert reg.admissible and reg.boundary_case and not reg.strict


def test_optimal_linear_rate_examples():
    r, t = optimal_linear_rate(2.0, 1.0)
    assert r == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)
    assert t == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-12)
    assert r == pytest.approx(2 * 1.0 + 1 / t, abs=1e-12)
    assert r == pytest.approx(1.0 + t * 2.0 / 2, abs=1e-12)
    r0, t0 = optimal_linear_rate(1e-10, 1.0)
    assert r0 == pytest.approx(2.0, abs=1e-9) and t0 > 1e9


@settings(max_examples=20, deadline=None)
@given(m=st.floats(0.05, 20), sigma=st.floats(0.05, 5))
def test_tau_optimum_coefficients_vanish(m, sigma):
    cert = tau_certificate(m, sigma)
    assert cert.certified and math.isinf(cert.bound_L)
    scale = 1 + m + sigma ** 2
    assert abs(cert.diagnostics["beta"]) <= 1e-10 * scale
    assert abs(cert.diagnostics["gamma_factor"]) <= 1e-10 * scale
    assert abs(cert.diagnostics["gamma"]) <= 1e-10 * scale ** 2


def test_quartic_examples():
    assert quartic_nonneg(FeasibilityCoefficients(1.0, -1.0, 1.0))
    assert not quartic_nonneg(FeasibilityCoefficients(1.0, -3.0, 1.0))
    assert quartic_nonneg(FeasibilityCoefficients(1.0, -1.5, 0.5625))
    assert quartic_nonneg(FeasibilityCoefficients(0.0, 1.0, 0.0))
    assert not quartic_nonneg(FeasibilityCoefficients(0.0, -1.0, 2.0))
    assert not quartic_nonneg(FeasibilityCoefficients(0.0, -0.03125, 1.0))
    with pytest.raises(ValueError):
        quartic_nonneg(FeasibilityCoefficients(-1.0, 0.0, 0.0))


@settings(max_examples=100, deadline=None)
@given(a=st.sampled_from([0.0, 0.5, 1.0, 2.0]), beta=st.floats(-5, 5), gamma=st.floats(-5, 5))
def test_quartic_matches_brute_force(a, beta, gamma):
    c = FeasibilityCoefficients(a, beta, gamma)
    x = np.concatenate([np.linspace(0, 20, 20001), [max(-beta / (2 * a), 0.0) if a else 0.0]])
    brute = np.min(a * x * x + beta * x + gamma)
    if a == 0 and abs(beta) <= 1e-6:
        return  # slope inside the tolerance band
    if a == 0 and beta < 0:
        brute = -np.inf  # negative slope, unbounded below past the grid
    if brute > 1e-6:
        assert quartic_nonneg(c)
    elif brute < -1e-6:
        assert not quartic_nonneg(c)


def test_bound_examples():
    assert circle_bound(1.0, 1.0, 0.5) == pytest.approx(2.0)
    assert circle_bound(0.75, 1.0, 0.5) == pytest.approx(1.0)
    assert circle_bound(2.0, 1.0, 0.5) == pytest.approx(4 * (0.25 + 0.5 * math.sqrt(1.25)))
    assert popov_ti_bound(2.0, 1.0, 0.5) == pytest.approx((4.0, 1 / 3))
    assert popov_ti_bound(1.0, 1.0, 0.5) == pytest.approx((2.0, 0.0))
    with pytest.raises(HypothesesViolated):
        circle_bound(1.0, 1.0, 1.0)
    with pytest.raises(HypothesesViolated):
        circle_bound(0.5, 1.0, 0.5)
    with pytest.raises(HypothesesViolated):
        quasi_lambda0_bound(1.0, 1.0, 0.5)


def test_quasi_bounds_examples():
    q = quasi_bounds(1.0, 1.0, 2 / 3)
    assert q.certified and q.theorem_id == QUASI_INFINITE and math.isinf(q.bound_L)
    q = quasi_bounds(1.0, 1.0, 0.75)
    assert q.certified and q.theorem_id == QUASI_FINITE
    assert q.bound_L == pytest.approx(1.5)
    assert q.diagnostics["l_star_mu0"] == pytest.approx(0.5)
    assert q.diagnostics["alpha"] == pytest.approx(0.25)
    assert q.multipliers[1] == 0.0
    assert not quasi_bounds(1.0, 1.0, 1.0).certified
    assert not quasi_bounds(0.1, 1.0, 0.5).certified


def test_coefficient_examples():
    c = fdi_coefficients("circle", {"m": 1, "sigma": 1, "r": 0.5}, l=2.0)
    assert tuple(c) == pytest.approx((1.0, -1.5, 0.5625))
    assert c.discriminant() == pytest.approx(0.0, abs=1e-14)
    c = fdi_coefficients("popov_time_invariant", {"m": 2, "sigma": 1, "r": 0.5},
                         lam=1.0, mu=1 / 3, l=4.0)
    assert tuple(c) == pytest.approx((1.0, -3.5, 3.0625))
    assert abs(c.discriminant()) <= 1e-12
    r, t = optimal_linear_rate(2.0, 1.0)
    c = fdi_coefficients("hessian_damped", {"m": 2, "sigma": 1, "r": r, "tau": t})
    assert np.allclose(tuple(c), 0.0, atol=1e-10)


def test_coefficient_rules():
    p = {"m": 1, "sigma": 1, "r": 0.5}
    with pytest.raises(ValueError, match="nonnegative"):
        fdi_coefficients("circle", p, lam=-1.0, l=1.0)
    with pytest.raises(ValueError, match="mu must be 0"):
        fdi_coefficients("quasi_infinite", p, mu=1.0)
    with pytest.raises(ValueError, match="sector width"):
        fdi_coefficients("circle", p)
    with pytest.raises(ValueError, match="unknown criterion"):
        fdi_coefficients("nope", p, l=1.0)
    with pytest.raises(ValueError, match="tau > 0"):
        fdi_coefficients("hessian_damped", p)


def _popov_poly(m, sigma, r, l, lam, mu, nu, w):
    sys, _ = build_oscillator(OscillatorParams(m=m, sigma=sigma, r=r))
    M = popov_supply(sys, r, l, lam, mu, nu)
    s = 1j * w - r
    den = abs(transfer_den(m, sigma, 0.0, s)) ** 2
    return popov_eval(sys, M, s)[..., 0, 0].real * den


@settings(max_examples=40, deadline=None)
@given(p=admissible, l=st.floats(0.1, 5), lam=st.floats(0, 2), mu=st.floats(0, 2),
       nu=st.floats(0, 2))
def test_coefficients_match_popov_function(p, l, lam, mu, nu):
    m, sigma, r = p
    w = np.array([0.0, 0.3, 1.1, 2.9])
    base = {"m": m, "sigma": sigma, "r": r}
    cases = [("circle", 1.0, 0.0, 0.0, l, l),
             ("popov_time_invariant", lam, mu, 0.0, l, l),
             ("quasi_lambda0", 0.0, mu, 1.0, l, 1.0),
             ("quasi_lambda1", 1.0, mu, nu, l, l),
             ("quasi_infinite", lam, 0.0, nu, math.inf, 1.0)]
    for name, a, b, c, width, weight in cases:
        coef = fdi_coefficients(name, base, lam=a, mu=b, nu=c,
                                l=None if math.isinf(width) else width)
        want = _popov_poly(m, sigma, r, width, a, b, c, w) * weight
        got = coef.evaluate(w)
        assert np.allclose(got, want, atol=1e-8 * (1 + np.abs(want).max())), name


@settings(max_examples=40, deadline=None)
@given(m=st.floats(0.2, 5), sigma=st.floats(0.2, 3), tau=st.floats(0.05, 4),
       r=st.floats(0.05, 6))
def test_hessian_damped_verdict_matches_transfer(m, sigma, tau, r):
    poles = np.roots([1.0, 2 * sigma + tau * m, m * (1 + 2 * sigma * tau)])
    w = np.linspace(0, 50, 2001)
    s = 1j * w - r
    if np.min(np.abs(s[:, None] - poles[None])) < 1e-4:
        return
    vals = -transfer_eval(m, sigma, tau, s).real * np.abs(transfer_den(m, sigma, tau, s)) ** 2
    c = fdi_coefficients("hessian_damped", {"m": m, "sigma": sigma, "r": r, "tau": tau})
    assert np.allclose(vals, -c.evaluate(w), atol=1e-8 * (1 + np.abs(vals).max()))
    verdict = hessian_damped_feasible(m, sigma, tau, r)
    if vals.min() > 1e-6 * (1 + np.abs(vals).max()):
        assert verdict
    if c.beta > 1e-6 and c.gamma > 1e-6:
        assert not verdict


@settings(max_examples=40, deadline=None)
@given(p=admissible)
def test_boundary_sharpness(p):
    m, sigma, r = p
    base = {"m": m, "sigma": sigma, "r": r}
    l_sup = circle_bound(m, sigma, r)
    if l_sup > 1e-6:
        for f in (0.1, 0.5, 1.0):
            assert quartic_nonneg(fdi_coefficients("circle", base, l=f * l_sup))
        assert not quartic_nonneg(fdi_coefficients("circle", base, l=l_sup * (1 + 1e-3)))
    if m > 2 * r * sigma:
        l_best, mu_best = popov_ti_bound(m, sigma, r)
        for f in (0.1, 0.5, 1.0):
            assert quartic_nonneg(fdi_coefficients("popov_time_invariant", base, mu=mu_best,
                                                   l=f * l_best))
        assert not quartic_nonneg(fdi_coefficients("popov_time_invariant", base, mu=mu_best,
                                                   l=l_best * (1 + 1e-3)))
    if 2 * sigma / 3 < r < sigma:
        alpha, mu_star = quasi_lambda0_bound(m, sigma, r)
        if alpha > 1e-6:
            for f in (0.1, 0.5, 1.0):
                assert quartic_nonneg(fdi_coefficients("quasi_lambda0", base, mu=mu_star,
                                                       l=f * alpha))
            assert not quartic_nonneg(fdi_coefficients("quasi_lambda0", base, mu=mu_star,
                                                       l=alpha * (1 + 1e-3)))


@settings(max_examples=40, deadline=None)
@given(p=admissible)
def test_popov_dominates_circle(p):
    m, sigma, r = p
    if m >= 2 * r * sigma:
        assert popov_ti_bound(m, sigma, r)[0] >= circle_bound(m, sigma, r) * (1 - 1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_fdi_verdicts_independent_of_dimension(d):
    grid = FrequencyGrid(n_points=401)
    for l, want in ((1.8, True), (2.3, False)):
        verdicts = []
        for dim in (1, d):
            sys, _ = build_oscillator(OscillatorParams(d=dim, m=1, sigma=1, r=0.5))
            verdicts.append(fdi_grid_check(sys, popov_supply(sys, 0.5, l), r=0.5,
                                           grid=grid).feasible)
        assert verdicts == [want, want]


def test_quasi_width_matches_scan():
    assert coefficient_width("quasi_lambda0", 1.0, 1.0, 0.75, lam=0.0, mu=0.2, nu=1.0) == pytest.approx(0.25, rel=1e-9)
    l0, nu0 = quasi_mu0_bound(1.0, 1.0, 0.75)
    assert coefficient_width("quasi_lambda1", 1.0, 1.0, 0.75, mu=0.0, nu=nu0) == \
        pytest.approx(l0, rel=1e-9)


def test_storage_correction_positive_definite_when_strict():
    rng = np.random.default_rng(8)
    for _ in range(50):
        sigma = rng.uniform(0.2, 3)
        r = rng.uniform(0.05, 2 / 3) * sigma
        m = 2 * r * sigma - r * r + rng.uniform(1e-3, 3)
        P = np.array([[r * r, r], [r, 0.5]]) + np.diag([m / 2, 0.0])
        assert np.min(np.linalg.eigvalsh(P)) > 0


def test_certify_selects_largest_bound():
    c = certify(OscillatorParams(m=2, L=6, sigma=1, r=0.5))
    assert c.certified and c.theorem_id == POPOV_TIME_INVARIANT and c.bound_L == pytest.approx(6)
    assert set(c.applicable) == {POPOV_TIME_INVARIANT}
    c = certify(OscillatorParams(m=2, L=4, sigma=1, r=0.5))
    assert c.applicable == [POPOV_TIME_INVARIANT, CIRCLE_TIME_VARYING]
    c = certify(OscillatorParams(m=2, L=6, sigma=1, r=0.5), time_varying=True)
    assert not c.certified
    c = certify(OscillatorParams(m=1, sigma=1, r=0.6), quasi_convex=True)
    assert c.certified and c.theorem_id == QUASI_INFINITE
    assert not certify(OscillatorParams(m=1, sigma=1, r=0.6)).certified
    r, t = optimal_linear_rate(2.0, 1.0)
    c = certify(OscillatorParams(m=2, sigma=1, tau=t, r=r))
    assert c.certified and c.theorem_id == HESSIAN_DAMPED
    c = certify(OscillatorParams(m=2, sigma=1, tau=1.5 * t, r=r))
    assert not c.certified and c.diagnostics["tau_star"] == pytest.approx(t)
    assert not certify(OscillatorParams(m=2, sigma=1, tau=t, r=1.01 * r)).certified
    d = certify(OscillatorParams(m=2, L=6, sigma=1, r=0.5)).to_dict()
    assert d["verdict"] == "certified" and d["multipliers"] == pytest.approx([1, 1 / 3, 0])
