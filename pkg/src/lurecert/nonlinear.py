"""Nonlinearity library, samplers, RK4 simulation and rate estimation.

Every library member acts componentwise, vanishes at the origin and carries
its declared sector.  Members built from a potential also expose ``f`` with
``grad f = phi``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceDetected, RateUnresolvable
from .oscillator import OscillatorParams
from .systems import LtiSystem

DIVERGENCE_NORM = 1e12
RATE_FLOOR = 1e-12


@dataclass(frozen=True)
class Sector:
    """Sector ``[m, L]`` with ``L`` possibly infinite."""

    m: float
    L: float = math.inf

    def __post_init__(self):
        if np.isnan(self.m) or np.isnan(self.L) or self.L < self.m:
            raise ValueError(f"invalid sector [{self.m}, {self.L}]")

    def margin(self, w, phi):
        """``Re <m w - phi, w - phi / L>`` along the last axis (``<= 0`` inside)."""
        w = np.asarray(w)
        phi = np.asarray(phi)
        a = self.m * w - phi
        if np.isinf(self.L):
            b = w
        elif self.L > 0:
            b = w - phi / self.L
        else:
            # degenerate or shifted sectors: (m w - phi)(L w - phi) <= 0
            b = self.L * w - phi
        return np.real(np.sum(np.conj(b) * a, axis=-1))

    def shifted(self, k):
        return Sector(self.m - k, self.L - k)


@dataclass(frozen=True)
class Nonlinearity:
    """Componentwise map ``phi(w)`` or ``phi(t, w)`` with its declared sector."""

    kind: str
    params: dict
    sector: Sector
    func: Callable = field(repr=False)
    potential: Optional[Callable] = field(default=None, repr=False)
    time_varying: bool = False

    def __call__(self, w, t=0.0):
        w = np.asarray(w, dtype=float)
        if self.time_varying:
            return self.func(t, w)
        return self.func(w)

    def f(self, q):
        """Potential summed over the last axis (``f(0) = 0``)."""
        if self.potential is None:
            raise ValueError(f"{self.kind} carries no potential")
        return np.sum(self.potential(np.asarray(q, dtype=float)), axis=-1)


def _logcosh(x):
    # log1p(2 sinh^2(x/2)) keeps full relative accuracy near 0
    ax = np.abs(x)
    small = np.minimum(ax, 20.0)
    near = np.log1p(2.0 * np.sinh(0.5 * small) ** 2)
    far = ax + np.log1p(np.exp(-2 * ax)) - math.log(2.0)
    return np.where(ax < 20.0, near, far)


def _softplus_centered(x):
    # log(1 + e^x) - log 2 - x / 2 == log cosh(x / 2); h'' <= 1/4
    return _logcosh(0.5 * x)


def _pseudo_huber(x):
    return x * x / (np.sqrt(1 + x * x) + 1)


def _q_minus_log1p(q2):
    # q2 - log(1 + q2) without cancellation for small q2
    series = q2 * q2 * (0.5 - q2 / 3 + q2 * q2 / 4)
    return np.where(q2 < 1e-3, series, q2 - np.log1p(q2))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


CONVEX_PARTS = {
    # name: (h, h', sup h'')
    "logcosh": (_logcosh, np.tanh, 1.0),
    "softplus": (_softplus_centered, lambda x: _sigmoid(x) - 0.5, 0.25),
    "pseudo_huber": (_pseudo_huber, lambda x: x / np.sqrt(1 + x * x), 1.0),
}


def linear(k):
    return Nonlinearity("linear", {"k": k}, Sector(k, k), lambda w: k * w,
                        lambda q: 0.5 * k * q * q)


def sector_saturating(m, L):
    """``m w + (L - m) w^3 / (1 + w^2)``: slope ratio climbs from ``m`` towards ``L``."""
    if not (0 <= m < L < math.inf):
        raise ValueError("need 0 <= m < L < inf")
    gap = L - m

    def func(w):
        w2 = w * w
        return m * w + gap * w * w2 / (1 + w2)

    def pot(q):
        q2 = q * q
        return 0.5 * m * q2 + gap * 0.5 * _q_minus_log1p(q2)

    return Nonlinearity("sector_saturating", {"m": m, "L": L}, Sector(m, L), func, pot)


def tanh_shift(m, gain=1.0):
    """``m w + gain tanh(w)``, in ``[m, m + gain]``."""
    if gain < 0:
        raise ValueError("gain must be nonnegative")
    return Nonlinearity("tanh_shift", {"m": m, "gain": gain}, Sector(m, m + gain),
                        lambda w: m * w + gain * np.tanh(w),
                        lambda q: 0.5 * m * q * q + gain * _logcosh(q))


def quasi_convex_potential(m, convex_part="logcosh", gain=1.0):
    """``f(q) = (m/2)|q|^2 + gain * h(q)`` with ``h`` convex, even and ``h(0) = 0``.

    Convexity of ``h`` gives ``h(w) - <h'(w), w> <= h(0)``, so ``f`` is
    ``m``-quasi-strongly convex, and ``h'' <= c`` puts ``grad f`` in
    ``[m, m + gain c]``.
    """
    if convex_part not in CONVEX_PARTS:
        raise ValueError(f"unknown convex part {convex_part!r}; choose from {sorted(CONVEX_PARTS)}")
    if gain < 0:
        raise ValueError("gain must be nonnegative")
    h, dh, curv = CONVEX_PARTS[convex_part]
    return Nonlinearity("quasi_convex_potential",
                        {"m": m, "convex_part": convex_part, "gain": gain},
                        Sector(m, m + gain * curv),
                        lambda w: m * w + gain * dh(w),
                        lambda q: 0.5 * m * q * q + gain * h(q))


def time_varying(a, b, freq=1.0):
    """``theta(t) a(w) + (1 - theta(t)) b(w)`` with ``theta = (1 + sin 2 pi f t) / 2``.

    Sector sets are convex in ``phi`` for fixed ``w``, so the blend stays in
    the hull ``[min m, max L]``.
    """
    if a.time_varying or b.time_varying:
        raise ValueError("members must be time-invariant")

    def func(t, w):
        t = np.asarray(t, dtype=float)
        th = 0.5 * (1 + np.sin(2 * math.pi * freq * t))
        th = th.reshape(th.shape + (1,) * (np.ndim(w) - th.ndim))
        return th * a(w) + (1 - th) * b(w)

    sec = Sector(min(a.sector.m, b.sector.m), max(a.sector.L, b.sector.L))
    return Nonlinearity("time_varying", {"a": a.kind, "b": b.kind, "freq": freq,
                                         "a_params": a.params, "b_params": b.params},
                        sec, func, None, time_varying=True)


def zero():
    return Nonlinearity("zero", {}, Sector(0.0, 0.0), lambda w: 0.0 * w, lambda q: 0.0 * q)


_FACTORY = {
    "linear": linear,
    "sector_saturating": sector_saturating,
    "tanh_shift": tanh_shift,
    "quasi_convex_potential": quasi_convex_potential,
    "zero": zero,
}


def make_nonlinearity(kind, **params):
    """Build a library member by name.

    ``time_varying`` takes ``a`` and ``b`` as nested ``{"kind": ..., ...}``
    mappings (or ready members) and an optional ``freq``.
    """
    if kind == "time_varying":
        a, b = params["a"], params["b"]
        if isinstance(a, dict):
            a = make_nonlinearity(**a)
        if isinstance(b, dict):
            b = make_nonlinearity(**b)
        return time_varying(a, b, params.get("freq", 1.0))
    if kind not in _FACTORY:
        raise ValueError(f"unknown nonlinearity kind {kind!r}")
    return _FACTORY[kind](**params)


def ball_sample(rng, n, dim, radius):
    g = rng.normal(size=(n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.uniform(size=(n, 1)) ** (1.0 / dim)
    return g * rad


@dataclass(frozen=True)
class SampleReport:
    n_samples: int
    violations: int
    worst_margin: float
    worst_point: np.ndarray


def sector_membership_sample(phi, sector, n_samples=10_000, radius=10.0, seed=0, dim=1,
                             t_max=10.0, tol=1e-12):
    """Evaluate the sector form at random points of a ball.

    A sample counts as a violation when its margin exceeds
    ``tol * (1 + |w|^2 + |phi(w)|^2)``.  Time-varying maps are also sampled
    at uniform times in ``[0, t_max]``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    W = ball_sample(rng, n_samples, dim, radius)
    if getattr(phi, "time_varying", False):
        t = rng.uniform(0, t_max, size=n_samples)
        Phi = phi(W, t)
    else:
        Phi = phi(W)
    Phi = np.asarray(Phi, dtype=float).reshape(W.shape)
    marg = sector.margin(W, Phi)
    scale = 1.0 + np.sum(W * W, axis=1) + np.sum(Phi * Phi, axis=1)
    viol = marg > tol * scale
    i = int(np.argmax(marg))
    return SampleReport(n_samples, int(viol.sum()), float(marg[i]), W[i])


def quasi_convexity_sample(f, grad, m, n_samples=10_000, radius=10.0, seed=0, dim=1,
                           tol=1e-12):
    """Evaluate ``f(w) - <grad f(w), w> + (m/2)|w|^2 - f(0)`` at random points."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    W = ball_sample(rng, n_samples, dim, radius)
    fw = np.asarray(f(W), dtype=float).reshape(n_samples)
    gw = np.asarray(grad(W), dtype=float).reshape(W.shape)
    f0 = float(np.asarray(f(np.zeros((1, dim)))).reshape(-1)[0])
    marg = fw - np.sum(gw * W, axis=1) + 0.5 * m * np.sum(W * W, axis=1) - f0
    scale = 1.0 + np.abs(fw) + np.abs(np.sum(gw * W, axis=1))
    viol = marg > tol * scale
    i = int(np.argmax(marg))
    return SampleReport(n_samples, int(viol.sum()), float(marg[i]), W[i])


@dataclass
class Trajectory:
    """Sampled solution; ``states`` has shape ``(N, n)`` and ``inputs`` ``(N, k)``."""

    times: np.ndarray
    states: np.ndarray
    inputs: Optional[np.ndarray] = None
    dt: float = None
    integrator: str = "rk4"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if len(self.states) != len(self.times):
            raise ValueError("times and states differ in length")
        if self.inputs is not None:
            self.inputs = np.asarray(self.inputs)
            if self.inputs.ndim == 1:
                self.inputs = self.inputs[:, None]
            if len(self.inputs) != len(self.times):
                raise ValueError("times and inputs differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def norms(self):
        return np.linalg.norm(self.states, axis=1)

    def to_csv(self, lyapunov=None):
        """CSV text with columns ``t, z_1.., u_1.., norm_z[, lyapunov_V]``."""
        n = self.states.shape[1]
        k = 0 if self.inputs is None else self.inputs.shape[1]
        cols = ["t"] + [f"z_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(k)]
        cols.append("norm_z")
        parts = [self.times[:, None], self.states.real]
        if k:
            parts.append(np.real(self.inputs))
        parts.append(self.norms[:, None])
        if lyapunov is not None:
            cols.append("lyapunov_V")
            parts.append(np.asarray(lyapunov, dtype=float)[:, None])
        data = np.hstack(parts)
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        np.savetxt(buf, data, delimiter=",", fmt="%.17g")
        return buf.getvalue()


def _rhs_factory(target, phi):
    tv = phi.time_varying
    if isinstance(target, OscillatorParams):
        d, s, tau = int(target.d), target.sigma, target.tau

        def rhs(t, Z):
            q, p = Z[:, :d], Z[:, d:]
            g = phi(q, np.full(len(Z), t)) if tv else phi(q)
            return np.hstack([p - tau * g, -2 * s * p - g]), g
        return rhs, 2 * d
    if isinstance(target, LtiSystem):
        A, B, C = target.A, target.B, target.C
        if C.shape[0] != B.shape[1]:
            raise ValueError("feedback loop needs as many outputs as inputs")

        def rhs(t, Z):
            w = Z @ C.T
            u = phi(w, np.full(len(Z), t)) if tv else phi(w)
            return Z @ A.T + u @ B.T, u
        return rhs, target.n_states
    raise TypeError("target must be an LtiSystem or OscillatorParams")


def simulate_batch(target, phi, Z0, T, dt=1e-3, record_every=1):
    """Classical RK4 for a batch of initial conditions ``Z0`` of shape ``(N, n)``.

    Returns one `Trajectory` per initial condition.  Inputs are ``phi`` at
    the recorded states.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 10 * dt:
        raise ValueError("need T >= 10 dt")
    rhs, n = _rhs_factory(target, phi)
    Z = np.array(np.atleast_2d(Z0), dtype=float)
    if Z.shape[1] != n:
        raise ValueError(f"initial condition must have {n} entries")
    n_steps = int(round(T / dt))
    idx = np.arange(0, n_steps + 1, record_every)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    times = idx * dt
    states = np.empty((len(idx), Z.shape[0], n))
    _, u0 = rhs(0.0, Z)
    inputs = np.empty((len(idx), Z.shape[0], u0.shape[1]))
    states[0], inputs[0] = Z, u0
    rec = 1
    h = dt
    for step in range(1, n_steps + 1):
        t = (step - 1) * h
        k1, _ = rhs(t, Z)
        k2, _ = rhs(t + h / 2, Z + h / 2 * k1)
        k3, _ = rhs(t + h / 2, Z + h / 2 * k2)
        k4, _ = rhs(t + h, Z + h * k3)
        Z = Z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(Z)) or np.max(np.abs(Z)) > DIVERGENCE_NORM:
            part = [Trajectory(times[:rec], states[:rec, j], inputs[:rec, j], dt)
                    for j in range(Z.shape[0])]
            raise DivergenceDetected(f"state norm exceeded {DIVERGENCE_NORM:g} at t={step * h:.4g}",
                                     trajectory=part)
        if rec < len(idx) and step == idx[rec]:
            _, u = rhs(step * h, Z)
            states[rec], inputs[rec] = Z, u
            rec += 1
    return [Trajectory(times, states[:, j], inputs[:, j], dt) for j in range(Z.shape[0])]


def simulate(target, phi, z0, T, dt=1e-3, record_every=1):
    """Single-trajectory wrapper around `simulate_batch`."""
    try:
        return simulate_batch(target, phi, np.atleast_2d(z0), T, dt, record_every)[0]
    except DivergenceDetected as exc:
        part = exc.trajectory[0] if exc.trajectory else None
        raise DivergenceDetected(str(exc), trajectory=part) from None


def default_horizon(r):
    return max(50.0 / r, 20.0)


@dataclass(frozen=True)
class RateEstimate:
    r_hat: float
    fit_window: tuple
    residual: float
    amplitude_C: float
    n_fit: int = 0

    def to_dict(self):
        return {"r_hat": self.r_hat, "fit_window": list(self.fit_window),
                "residual": self.residual, "amplitude_C": self.amplitude_C,
                "n_fit": self.n_fit}


def estimate_decay_rate(traj, window_fractions=(0.2, 0.8), floor=RATE_FLOOR):
    """Least-squares slope of ``log |z(t)|`` over a window of the horizon.

    ``amplitude_C`` is the largest ``|z(t)| e^{r t} / |z(0)|`` over the samples
    above ``floor``.
    """
    t = traj.times
    nz = traj.norms
    if len(t) < 2 or nz[0] == 0:
        raise ValueError("trajectory is degenerate")
    span = t[-1] - t[0]
    lo = t[0] + window_fractions[0] * span
    hi = t[0] + window_fractions[1] * span
    sel = (t >= lo) & (t <= hi) & (nz > floor)
    if sel.sum() < 2:
        est = RateEstimate(math.inf, (lo, hi), 0.0, float(np.max(nz) / nz[0]), int(sel.sum()))
        raise RateUnresolvable("all window samples lie below the floor; decay too fast",
                               estimate=est)
    coef, res, *_ = np.polyfit(t[sel], np.log(nz[sel]), 1, full=True)
    r_hat = -float(coef[0])
    resid = float(np.sqrt(res[0] / sel.sum())) if len(res) else 0.0
    keep = nz > floor
    amp = float(np.max(nz[keep] * np.exp(r_hat * (t[keep] - t[0]))) / nz[0])
    return RateEstimate(r_hat, (float(lo), float(hi)), resid, amp, int(sel.sum()))


def lyapunov_values(traj, P, potential=None, d=None):
    """``V(z) = <Pz, z> + f(q) - f(0)`` along the trajectory (``q`` = first ``d`` states)."""
    Pm = getattr(P, "P", P)
    Z = traj.states.real
    V = np.einsum("ni,ij,nj->n", Z, np.asarray(Pm).real, Z)
    if potential is not None:
        d = Z.shape[1] // 2 if d is None else d
        q = Z[:, :d]
        V = V + potential(q) - potential(np.zeros((1, d)))[0]
    return V


def lyapunov_monotonicity(traj, P, potential, r, d=None):
    """Largest relative increase of ``e^{2rt} V(z(t))`` between consecutive samples."""
    V = lyapunov_values(traj, P, potential, d)
    s = np.exp(2 * r * traj.times) * V
    inc = (s[1:] - s[:-1]) / np.maximum(1.0, np.abs(s[:-1]))
    return float(np.max(inc)) if len(inc) else 0.0
