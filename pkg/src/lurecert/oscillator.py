"""Damped Hamiltonian oscillators as Lur'e systems.

The family is

    q' = p - tau grad f(q),      p' = -2 sigma p - grad f(q),

with ``grad f`` in the sector ``[m, L]``.  Shifting the loop by the quadratic
``(m/2)|q|^2`` leaves a residual nonlinearity ``grad g = grad f - m q`` in
``[0, l]`` with ``l = L - m``, acting on the block

    A = [[-m tau I, I], [-m I, -2 sigma I]],  B = [-tau I; -I],  C = [I, 0].

All frequency conditions decouple across the ``d`` coordinates, so the
closed-form bounds below are stated for the scalar transfer function

    H(s) = -(1 + 2 sigma tau + tau s) / (s^2 + (2 sigma + tau m) s + m (1 + 2 sigma tau)).

Each bound is the supremal residual width ``l`` (or the corresponding ``L``)
for which a rate-shifted frequency inequality holds with optimally chosen
multipliers.  The inequalities reduce to polynomials ``a w^4 + beta w^2 + gamma``
in the frequency; `fdi_coefficients` returns their coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesesViolated, PoleProximity
from .systems import LtiSystem, spectral_abscissa

# criterion ids used by certificates
QUASI_INFINITE = "quasi_infinite"
QUASI_FINITE = "quasi_finite"
POPOV_TIME_INVARIANT = "popov_time_invariant"
CIRCLE_TIME_VARYING = "circle_time_varying"
HESSIAN_DAMPED = "hessian_damped"
CERTIFICATE_IDS = (QUASI_INFINITE, QUASI_FINITE, POPOV_TIME_INVARIANT,
                   CIRCLE_TIME_VARYING, HESSIAN_DAMPED)

# coefficient families used by fdi_coefficients
COEFFICIENT_CRITERIA = ("circle", "popov_time_invariant", "quasi_lambda0",
                        "quasi_lambda1", "quasi_infinite", "hessian_damped")

EQ_TOL = 1e-12


@dataclass(frozen=True)
class OscillatorParams:
    """Parameters of the oscillator family plus a target rate ``r``."""

    d: int = 1
    m: float = 1.0
    L: float = math.inf
    sigma: float = 1.0
    tau: float = 0.0
    r: float = 0.5

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        for name in ("m", "sigma", "r"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be finite and nonnegative, got {self.tau}")
        if np.isnan(self.L) or not self.L > self.m:
            raise ValueError(f"L must exceed m, got L={self.L}, m={self.m}")

    @property
    def l(self):
        return self.L - self.m

    def to_dict(self):
        return {"d": int(self.d), "m": self.m, "L": self.L, "sigma": self.sigma,
                "tau": self.tau, "r": self.r}


@dataclass(frozen=True)
class LoopShift:
    """Record of the quadratic loop shift applied by `build_oscillator`."""

    m: float
    residual_sector: tuple


def build_oscillator(p):
    """Lur'e block of the loop-shifted oscillator and its shift record."""
    d, m, s, t = int(p.d), p.m, p.sigma, p.tau
    I, Z = np.eye(d), np.zeros((d, d))
    A = np.block([[-m * t * I, I], [-m * I, -2 * s * I]])
    B = np.vstack([-t * I, -I])
    C = np.hstack([I, Z])
    return LtiSystem(A, B, C), LoopShift(m=m, residual_sector=(0.0, p.L - m))


def transfer_den(m, sigma, tau, s):
    return s * s + (2 * sigma + tau * m) * s + m * (1 + 2 * sigma * tau)


def transfer_eval(m, sigma, tau, s, tol_pole=None):
    """Scalar transfer function ``H(s)`` of the loop-shifted oscillator."""
    s = np.asarray(s, dtype=complex)
    if tol_pole is None:
        tol_pole = 1e-6 * (1.0 + math.hypot(m, 2 * sigma + tau * m + 1))
    poles = np.roots([1.0, 2 * sigma + tau * m, m * (1 + 2 * sigma * tau)])
    dist = np.min(np.abs(np.atleast_1d(s)[:, None] - poles[None, :]), axis=1)
    if np.any(dist < tol_pole):
        raise PoleProximity("evaluation point too close to a pole of H")
    out = -(1 + 2 * sigma * tau + tau * s) / transfer_den(m, sigma, tau, s)
    return out if out.ndim else complex(out)


def closed_loop_charpoly(k, sigma, tau, r):
    """Linear and constant coefficients of ``det(sI - (A_k + rI))``."""
    c1 = 2 * sigma - 2 * r + k * tau
    c0 = k + r * r - 2 * r * sigma + (2 * sigma - r) * k * tau
    return c1, c0


def marginal_matrix(k, sigma, tau, r):
    """``A + (k - m) BC + rI`` for the scalar oscillator (independent of m)."""
    return np.array([[r - k * tau, 1.0], [-k, r - 2 * sigma]])


@dataclass(frozen=True)
class LinearRateRegion:
    admissible: bool
    strict: bool
    boundary_case: bool


def _ge(a, b):
    return a >= b - EQ_TOL * (1 + abs(b))


def _eq(a, b):
    return abs(a - b) <= EQ_TOL * (1 + abs(b))


def linear_rate_region(m, sigma, tau, r):
    """Necessary conditions for the rate ``r`` over linear sector members ``k >= m``."""
    if tau == 0:
        ineqs = [(sigma, r), (m, 2 * r * sigma - r * r)]
    else:
        ineqs = [(2 * sigma + 1 / tau, r), (sigma + m * tau / 2, r),
                 (m * tau * (2 * sigma + 1 / tau - r), 2 * r * sigma - r * r)]
    holds = [_ge(a, b) for a, b in ineqs]
    equal = [_eq(a, b) for a, b in ineqs]
    strict = all(h and not e for h, e in zip(holds, equal))
    if tau == 0:
        admissible = all(holds) and not all(equal)
    else:
        admissible = all(holds)
    return LinearRateRegion(admissible=admissible, strict=strict,
                            boundary_case=any(equal))


def optimal_linear_rate(m, sigma):
    """Rate and Hessian damping maximizing the uniform linear rate over ``[m, inf]``."""
    if m <= 0 or sigma <= 0:
        raise ValueError("m and sigma must be positive")
    root = math.sqrt(2 * m + sigma * sigma)
    return (3 * sigma + root) / 2, (sigma + root) / m


@dataclass(frozen=True)
class FeasibilityCoefficients:
    """Coefficients of ``quartic_coeff w^4 + beta w^2 + gamma``."""

    quartic_coeff: float
    beta: float
    gamma: float

    def __iter__(self):
        return iter((self.quartic_coeff, self.beta, self.gamma))

    def discriminant(self):
        """``4 a gamma - beta^2``."""
        return 4 * self.quartic_coeff * self.gamma - self.beta ** 2

    def evaluate(self, w):
        w2 = np.asarray(w) ** 2
        return self.quartic_coeff * w2 * w2 + self.beta * w2 + self.gamma


def quartic_nonneg(c, tol=EQ_TOL):
    """Whether ``a x^2 + beta x + gamma >= 0`` for every ``x = w^2 >= 0``.

    Boundary equalities count as feasible; ``tol`` is relative to the size of
    the coefficients.
    """
    a, beta, gamma = c.quartic_coeff, c.beta, c.gamma
    if a < 0:
        raise ValueError("quartic coefficient must be nonnegative")
    if a > 0:
        beta, gamma = beta / a, gamma / a
        t = tol * (1.0 + abs(gamma) + abs(beta))
        # 4 gamma >= beta^2 with beta < 0, written linearly in beta so the
        # tolerance does not turn into its square root
        return bool(gamma >= -t and (beta >= -t or beta + 2 * math.sqrt(max(gamma, 0.0)) >= -t))
    t = tol * (1.0 + abs(beta) + abs(gamma))
    return bool(beta >= -t and gamma >= -t)


def _c(m, sigma, r):
    return m - 2 * r * sigma + r * r


def fdi_coefficients(criterion, params, lam=1.0, mu=0.0, nu=0.0, l=None):
    """Frequency polynomial coefficients for one criterion.

    ``params`` is an `OscillatorParams` (``l`` defaults to ``L - m``) or a
    mapping with keys ``m, sigma, r`` and optionally ``tau``.  The
    polynomial equals the scalar Popov function at ``s = i w - r`` times
    ``l |den|^2`` (circle, Popov and ``quasi_lambda1``) or ``|den|^2``
    (``quasi_lambda0`` and ``quasi_infinite``).

    ``hessian_damped`` returns the printed boundary coefficients for
    ``tau > 0``, whose sign convention is opposite to the others: the
    condition holds iff ``beta w^2 + gamma <= 0`` (see
    `hessian_damped_feasible`).
    """
    if isinstance(params, OscillatorParams):
        m, sigma, r, tau = params.m, params.sigma, params.r, params.tau
        l = params.l if l is None else l
    else:
        m, sigma, r = params["m"], params["sigma"], params["r"]
        tau = params.get("tau", 0.0)
    if criterion not in COEFFICIENT_CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; choose from {COEFFICIENT_CRITERIA}")
    if min(lam, mu, nu) < 0:
        raise ValueError("multipliers must be nonnegative")
    c = _c(m, sigma, r)
    needs_l = criterion in ("circle", "popov_time_invariant", "quasi_lambda0", "quasi_lambda1")
    if needs_l:
        if l is None or not np.isfinite(l) or l < 0:
            raise ValueError(f"criterion {criterion!r} needs a finite sector width l >= 0")
    if criterion in ("quasi_infinite", "hessian_damped") and mu != 0:
        raise ValueError("mu must be 0 when the sector is infinite")
    if criterion == "circle":
        beta = 2 * (sigma ** 2 - m) + 2 * (sigma - r) ** 2 - l
        return FeasibilityCoefficients(1.0, beta, c * (l + c))
    if criterion == "popov_time_invariant":
        gamma = -(l + c) * (l * r * mu - lam * c)
        beta = (2 * lam * (sigma ** 2 - m) + 2 * lam * (sigma - r) ** 2
                - l * (lam - mu * (2 * sigma - r)))
        return FeasibilityCoefficients(lam, beta, gamma)
    if criterion == "quasi_lambda0":
        beta = 2 * sigma - 3 * r + mu * (2 * sigma - r)
        gamma = r * (c - mu * (l + c))
        return FeasibilityCoefficients(0.0, beta, gamma)
    if criterion == "quasi_lambda1":
        gamma = -mu * r * l * l + (1 + r * (nu - mu)) * c * l + c * c
        beta = (2 * (sigma ** 2 - m) + 2 * (sigma - r) ** 2
                - l * (1 + (3 * r - 2 * sigma) * nu - (2 * sigma - r) * mu))
        return FeasibilityCoefficients(1.0, beta, gamma)
    if criterion == "quasi_infinite":
        return FeasibilityCoefficients(0.0, -lam + nu * (2 * sigma - 3 * r),
                                       (lam + nu * r) * c)
    # hessian_damped
    if tau <= 0:
        raise ValueError("hessian_damped coefficients need tau > 0")
    beta = 1 + tau * (r - m * tau)
    gamma = (r * tau - 1 - 2 * sigma * tau) * (c + m * tau * (2 * sigma - r))
    return FeasibilityCoefficients(0.0, beta, gamma)


def hessian_damped_feasible(m, sigma, tau, r, tol=EQ_TOL):
    """Infinite-sector condition ``-Re H(i w - r) >= 0`` for ``tau > 0``."""
    c = fdi_coefficients("hessian_damped", {"m": m, "sigma": sigma, "r": r, "tau": tau})
    return quartic_nonneg(FeasibilityCoefficients(0.0, -c.beta, -c.gamma), tol)


def _require(cond, msg):
    if not cond:
        raise HypothesesViolated(msg)


def circle_bound(m, sigma, r):
    """Supremal residual width ``l`` for the rate-shifted circle condition."""
    c = _c(m, sigma, r)
    _require(r < sigma, f"need r < sigma (r={r}, sigma={sigma})")
    _require(c >= -EQ_TOL * (1 + m), f"need m >= 2 r sigma - r^2 (m={m})")
    c = max(c, 0.0)
    return 4 * ((sigma - r) ** 2 + (sigma - r) * math.sqrt(c))


def popov_ti_bound(m, sigma, r):
    """Best width ``l`` and multiplier ``mu`` (with ``lam = 1``) of the Popov condition."""
    c = _c(m, sigma, r)
    _require(r < sigma, f"need r < sigma (r={r}, sigma={sigma})")
    _require(c >= -EQ_TOL * (1 + m), f"need m >= 2 r sigma - r^2 (m={m})")
    if m > 2 * r * sigma:
        return 2 * m * (sigma - r) / r, (m - 2 * r * sigma) / (2 * m * sigma - m * r)
    return circle_bound(m, sigma, r), 0.0


def quasi_lambda0_bound(m, sigma, r):
    """Width and ``mu`` for the ``lam = 0``, ``nu = 1`` quasi-convex condition."""
    _require(2 * sigma / 3 < r < sigma, "need 2 sigma / 3 < r < sigma")
    c = _c(m, sigma, r)
    _require(c >= -EQ_TOL * (1 + m), "need m >= 2 r sigma - r^2")
    alpha = 4 * (sigma - r) * max(c, 0.0) / (3 * r - 2 * sigma)
    return alpha, (3 * r - 2 * sigma) / (2 * sigma - r)


def quasi_mu0_bound(m, sigma, r):
    """Width and ``nu`` for the ``lam = 1``, ``mu = 0`` quasi-convex condition."""
    _require(2 * sigma / 3 < r < sigma, "need 2 sigma / 3 < r < sigma")
    k = m - 4 * r * sigma + 4 * r * r
    l0 = 2 * (sigma - r) * k / (3 * r - 2 * sigma)
    nu0 = (m - 8 * r * r + 10 * r * sigma - 4 * sigma ** 2) / (k * (3 * r - 2 * sigma))
    return l0, nu0


@dataclass
class RateCertificate:
    """Verdict for one parameter set.

    ``bound_L`` is the largest upper sector bound covered (``inf`` for an
    unbounded sector); ``multipliers`` is ``(lam, mu, nu)``.
    """

    theorem_id: str
    verdict: str
    bound_L: float
    multipliers: tuple = None
    rate: float = None
    params: dict = None
    applicable: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.verdict == "certified"

    def to_dict(self):
        def num(x):
            if x is None:
                return None
            x = float(x)
            return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")
        return {
            "theorem_id": self.theorem_id,
            "verdict": self.verdict,
            "bound_L": num(self.bound_L),
            "rate": num(self.rate),
            "multipliers": None if self.multipliers is None else [num(v) for v in self.multipliers],
            "params": None if self.params is None else {k: num(v) if k != "d" else v
                                                        for k, v in self.params.items()},
            "applicable": list(self.applicable),
            "diagnostics": {k: (num(v) if isinstance(v, (int, float)) and not isinstance(v, bool)
                                else v) for k, v in self.diagnostics.items()},
        }


def _violated(tid, msg, **extra):
    return RateCertificate(theorem_id=tid, verdict="hypotheses_violated",
                           bound_L=float("nan"), diagnostics={"reason": msg, **extra})


def quasi_bounds(m, sigma, r):
    """Certificate for a quasi-strongly convex potential with ``grad f`` in ``[m, L]``."""
    c = _c(m, sigma, r)
    pdict = {"m": m, "sigma": sigma, "r": r}
    if r <= 2 * sigma / 3 + EQ_TOL * sigma and c >= -EQ_TOL * (1 + m):
        return RateCertificate(QUASI_INFINITE, "certified", math.inf, (0.0, 0.0, 1.0), r,
                               pdict, [QUASI_INFINITE])
    if 2 * sigma / 3 < r < sigma and c >= -EQ_TOL * (1 + m):
        alpha, mu_star = quasi_lambda0_bound(m, sigma, r)
        diag = {"alpha": alpha, "mu_lambda0": mu_star}
        if m >= 8 * r * r - 10 * r * sigma + 4 * sigma ** 2 - EQ_TOL * (1 + m):
            l0, nu0 = quasi_mu0_bound(m, sigma, r)
            diag.update({"l_star_mu0": l0, "nu_star_mu0": nu0})
            width = 2 * (sigma - r) / (3 * r - 2 * sigma) * max(
                m - 4 * r * sigma + 4 * r * r, 2 * m - 4 * r * sigma + 2 * r * r)
            mult = (1.0, 0.0, nu0) if l0 >= alpha else (0.0, mu_star, 1.0)
            diag["branch"] = "lambda1_mu0" if l0 >= alpha else "lambda0"
        else:
            width, mult = alpha, (0.0, mu_star, 1.0)
            diag["branch"] = "lambda0"
        if width <= 0:
            return _violated(QUASI_FINITE, "zero admissible sector width", **diag)
        return RateCertificate(QUASI_FINITE, "certified", m + width, mult, r, pdict,
                               [QUASI_FINITE], diag)
    return _violated(QUASI_INFINITE, "need r < sigma and m >= 2 r sigma - r^2")


def tau_certificate(m, sigma):
    """Certificate at the optimal Hessian damping for the sector ``[m, inf]``."""
    r_star, tau_star = optimal_linear_rate(m, sigma)
    coef = fdi_coefficients("hessian_damped", {"m": m, "sigma": sigma, "r": r_star,
                                                "tau": tau_star})
    diag = {"beta": coef.beta, "gamma": coef.gamma,
            "gamma_factor": r_star * tau_star - 1 - 2 * sigma * tau_star}
    return RateCertificate(HESSIAN_DAMPED, "certified", math.inf, (1.0, 0.0, 0.0), r_star,
                           {"m": m, "sigma": sigma, "tau": tau_star, "r": r_star},
                           [HESSIAN_DAMPED], diag)


def candidate_bounds(p, quasi_convex=False, time_varying=False):
    """All criteria whose parameter hypotheses hold, with their bounds on ``L``."""
    m, sigma, r, tau = p.m, p.sigma, p.r, p.tau
    out = {}
    if tau > 0:
        r_star, tau_star = optimal_linear_rate(m, sigma)
        if abs(tau - tau_star) <= 1e-9 * tau_star and r <= r_star * (1 + EQ_TOL):
            out[HESSIAN_DAMPED] = (math.inf, (1.0, 0.0, 0.0))
        return out
    if quasi_convex and not time_varying:
        q = quasi_bounds(m, sigma, r)
        if q.certified:
            out[q.theorem_id] = (q.bound_L, q.multipliers)
    c = _c(m, sigma, r)
    if r < sigma and c >= -EQ_TOL * (1 + m):
        if not time_varying and m >= 2 * r * sigma:
            l_best, mu_best = popov_ti_bound(m, sigma, r)
            out[POPOV_TIME_INVARIANT] = (m + l_best, (1.0, mu_best, 0.0))
        l_sup = circle_bound(m, sigma, r)
        if l_sup > 0:
            out[CIRCLE_TIME_VARYING] = (m + l_sup, (1.0, 0.0, 0.0))
    return out


def certify(p, quasi_convex=False, time_varying=False):
    """Pick the criterion with the largest bound that covers ``p.L``.

    ``quasi_convex`` states that the potential is quasi-strongly convex;
    ``time_varying`` that the nonlinearity may depend on time (which rules
    out the Popov and quasi-convex criteria).
    """
    cands = candidate_bounds(p, quasi_convex, time_varying)
    pdict = p.to_dict()
    if not cands:
        if p.tau > 0:
            r_star, tau_star = optimal_linear_rate(p.m, p.sigma)
            return RateCertificate(HESSIAN_DAMPED, "hypotheses_violated", float("nan"),
                                   None, p.r, pdict, [],
                                   {"reason": "need tau = tau_star and r <= r_star",
                                    "r_star": r_star, "tau_star": tau_star})
        return RateCertificate(CIRCLE_TIME_VARYING, "hypotheses_violated", float("nan"),
                               None, p.r, pdict, [],
                               {"reason": "no criterion applies at this rate"})
    covering = {k: v for k, v in cands.items() if p.L <= v[0] * (1 + EQ_TOL)}
    pool = covering if covering else cands
    best = max(pool, key=lambda k: (pool[k][0], -CERTIFICATE_IDS.index(k)))
    bound, mult = pool[best]
    diag = {"candidate_bounds": {k: (v[0] if np.isfinite(v[0]) else "inf")
                                 for k, v in cands.items()}}
    if not covering:
        diag["reason"] = f"L = {p.L} exceeds every available bound"
        return RateCertificate(best, "hypotheses_violated", bound, mult, p.r, pdict, [], diag)
    return RateCertificate(best, "certified", bound, mult, p.r, pdict,
                           sorted(covering, key=CERTIFICATE_IDS.index), diag)


def linear_rate_abscissa(k, sigma, tau):
    """Spectral abscissa of the closed loop with ``grad f(q) = k q``."""
    return spectral_abscissa(np.array([[-k * tau, 1.0], [-k, -2 * sigma]]))
