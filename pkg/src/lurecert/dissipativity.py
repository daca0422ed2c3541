"""Quadratic supply rates, the storage LMI and frequency-domain checks.

Conventions
-----------
A supply rate is ``sigma(x, u) = <Qx, x> + 2 Re <Sx, u> + <Ru, u>`` with
``S`` of shape ``n x m``.  Its block matrix is ``[[Q, S*], [S, R]]`` acting on
``(x, u)``.  For a candidate storage ``P`` the dissipation LMI reads

    Lambda(P) = [[A*P + PA, PB], [B*P, 0]] - [[Q, S*], [S, R]] <= 0,

and the Popov function is

    Pi(eta, zeta) = [(conj(eta) I - A)^{-1} B; I]* M [(zeta I - A)^{-1} B; I].

`popov_eval` evaluates the Hermitian diagonal ``Pi(conj(s), s)``.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import FdiGridError, LmiInfeasible, PoleProximity
from .systems import is_hurwitz

log = logging.getLogger(__name__)

HERM_TOL = 1e-12


def _herm(X):
    X = np.atleast_2d(np.asarray(X))
    return 0.5 * (X + X.conj().T)


def _freeze(X):
    X = np.array(X)
    X.setflags(write=False)
    return X


@dataclass(frozen=True)
class SupplyRate:
    """Hermitian supply data ``(Q, S, R)``; ``Q`` and ``R`` are symmetrized."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q))
        R = np.atleast_2d(np.asarray(self.R))
        m, n = Q.shape[0], R.shape[0]
        S = np.asarray(self.S).reshape(n, m)
        if Q.shape != (m, m) or R.shape != (n, n):
            raise ValueError("Q and R must be square")
        for name, X in (("Q", Q), ("S", S), ("R", R)):
            if not np.all(np.isfinite(X)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "Q", _freeze(_herm(Q)))
        object.__setattr__(self, "S", _freeze(S))
        object.__setattr__(self, "R", _freeze(_herm(R)))

    @property
    def n_states(self):
        return self.Q.shape[0]

    @property
    def n_inputs(self):
        return self.R.shape[0]

    @property
    def block(self):
        return np.block([[self.Q, self.S.conj().T], [self.S, self.R]])

    def norm(self):
        return float(np.linalg.norm(self.block, 2))

    def __add__(self, other):
        return SupplyRate(self.Q + other.Q, self.S + other.S, self.R + other.R)

    def scaled(self, c):
        return SupplyRate(c * self.Q, c * self.S, c * self.R)

    @classmethod
    def zero(cls, m, n):
        return cls(np.zeros((m, m)), np.zeros((n, m)), np.zeros((n, n)))


@dataclass(frozen=True)
class CandidateStorage:
    """Hermitian storage matrix ``P`` (symmetrized on construction)."""

    P: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P))
        if P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if np.linalg.norm(P - P.conj().T) > 1e-9 * (1 + np.linalg.norm(P)):
            raise ValueError("P is not Hermitian")
        object.__setattr__(self, "P", _freeze(_herm(P)))

    def value(self, x):
        x = np.asarray(x)
        return float(np.real(np.vdot(x, self.P @ x)))


def default_tol(M):
    return 1e-9 * (1.0 + M.norm())


def supply_eval(M, x, u):
    """``<Qx,x> + 2 Re <Sx,u> + <Ru,u>``."""
    x = np.atleast_1d(np.asarray(x))
    u = np.atleast_1d(np.asarray(u))
    if x.shape[-1] != M.n_states or u.shape[-1] != M.n_inputs:
        raise ValueError("dimension mismatch between supply and (x, u)")
    val = (np.vdot(x, M.Q @ x) + 2.0 * np.vdot(u, M.S @ x).real
           + np.vdot(u, M.R @ u))
    return float(np.real(val))


def _supply_samples(M, X, U):
    # row-wise supply for sample arrays X (N, m), U (N, n)
    qx = np.einsum("ij,nj->ni", M.Q, X)
    sx = np.einsum("ij,nj->ni", M.S, X)
    ru = np.einsum("ij,nj->ni", M.R, U)
    val = (np.sum(X.conj() * qx, axis=1) + 2 * np.sum(U.conj() * sx, axis=1).real
           + np.sum(U.conj() * ru, axis=1))
    return np.real(val)


def energy_integral(M, traj, t0=None, t1=None):
    """Trapezoid quadrature of the supply along a trajectory with inputs.

    The trajectory must expose ``times``, ``states`` and ``inputs``.  An
    optional window ``[t0, t1]`` selects the samples inside it.
    """
    t = np.asarray(traj.times)
    if traj.inputs is None:
        raise ValueError("trajectory carries no inputs")
    X = np.asarray(traj.states).reshape(len(t), -1)
    U = np.asarray(traj.inputs).reshape(len(t), -1)
    sel = np.ones(len(t), dtype=bool)
    if t0 is not None:
        sel &= t >= t0
    if t1 is not None:
        sel &= t <= t1
    if sel.sum() < 2:
        raise ValueError("energy integral needs at least 2 samples")
    vals = _supply_samples(M, X[sel], U[sel])
    return float(np.trapezoid(vals, t[sel]))


def lmi_matrix(sys, M, P):
    """Assemble ``Lambda(P)``."""
    Pm = P.P if isinstance(P, CandidateStorage) else np.asarray(P)
    A, B = sys.A, sys.B
    top = np.hstack([A.conj().T @ Pm + Pm @ A, Pm @ B])
    bottom = np.hstack([B.conj().T @ Pm, np.zeros((sys.n_inputs, sys.n_inputs))])
    return _herm(np.vstack([top, bottom]) - M.block)


def lmi_max_eig(sys, M, P):
    return float(np.max(np.linalg.eigvalsh(lmi_matrix(sys, M, P))))


def lmi_satisfied(sys, M, P, tol=None):
    tol = default_tol(M) if tol is None else tol
    return lmi_max_eig(sys, M, P) <= tol


def _resolvent_B(A, B, s):
    # (s I - A)^{-1} B for a batch of points, shape (N, m, n)
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    m = A.shape[0]
    stack = s[:, None, None] * np.eye(m)[None] - A[None]
    rhs = np.broadcast_to(B.astype(complex), (len(s),) + B.shape)
    return np.linalg.solve(stack, rhs)


def _check_poles(sys, s, tol_pole):
    lam = np.linalg.eigvals(sys.A)
    s = np.atleast_1d(s)
    dist = np.min(np.abs(s[:, None] - lam[None, :]), axis=1)
    return dist >= tol_pole


def pole_tolerance(sys):
    return 1e-6 * (1.0 + np.linalg.norm(sys.A, 2))


def popov_function(sys, M, eta, zeta):
    """Two-variable Popov function ``Pi(eta, zeta)`` (not Hermitian in general)."""
    Xz = _resolvent_B(sys.A, sys.B, zeta)[0]
    Xe = _resolvent_B(sys.A, sys.B, np.conj(eta))[0]
    n = sys.n_inputs
    left = np.vstack([Xe, np.eye(n)])
    right = np.vstack([Xz, np.eye(n)])
    return left.conj().T @ M.block @ right


def popov_eval(sys, M, s, tol_pole=None):
    """Hermitian Popov matrix ``Pi(conj(s), s)`` at one point or a batch.

    A scalar ``s`` returns an ``n x n`` matrix; an array returns shape
    ``(N, n, n)``.
    """
    tol_pole = pole_tolerance(sys) if tol_pole is None else tol_pole
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    ok = _check_poles(sys, s, tol_pole)
    if not np.all(ok):
        raise PoleProximity(f"evaluation point within {tol_pole:.3g} of a pole of A")
    X = _resolvent_B(sys.A, sys.B, s)
    Xh = np.conj(np.swapaxes(X, 1, 2))
    out = (Xh @ M.Q @ X + Xh @ M.S.conj().T + M.S @ X + M.R[None])
    out = 0.5 * (out + np.conj(np.swapaxes(out, 1, 2)))
    return out[0] if scalar else out


def _min_eigs(sys, M, s):
    Pi = popov_eval(sys, M, s, tol_pole=0.0)
    return np.linalg.eigvalsh(Pi)[:, 0]


@dataclass
class FdiReport:
    """Outcome of a frequency-grid check.

    ``omegas``/``min_eigs`` hold the sampled curve (after refinement points
    are merged in).  In ``closed-right`` mode ``re_parts`` gives the real
    offset of each sample and the verdict is a necessary condition only.
    """

    feasible: bool
    omegas: np.ndarray
    min_eigs: np.ndarray
    worst_frequency: float
    worst_value: float
    skipped_pole_count: int
    tol: float
    mode: str = "axis"
    re_parts: np.ndarray = None
    note: str = ""

    @property
    def min_eigenvalue_curve(self):
        return list(zip(self.omegas.tolist(), self.min_eigs.tolist()))

    def to_csv(self):
        buf = io.StringIO()
        if self.mode == "axis":
            buf.write("omega,min_eig\n")
            for w, v in zip(self.omegas, self.min_eigs):
                buf.write(f"{w:.17g},{v:.17g}\n")
        else:
            buf.write("re_offset,omega,min_eig\n")
            for a, w, v in zip(self.re_parts, self.omegas, self.min_eigs):
                buf.write(f"{a:.17g},{w:.17g},{v:.17g}\n")
        return buf.getvalue()

    def to_dict(self):
        return {
            "feasible": bool(self.feasible),
            "mode": self.mode,
            "worst_frequency": float(self.worst_frequency),
            "worst_value": float(self.worst_value),
            "skipped_pole_count": int(self.skipped_pole_count),
            "tol": float(self.tol),
            "n_samples": int(len(self.omegas)),
            "note": self.note,
        }


@dataclass(frozen=True)
class FrequencyGrid:
    """Log-spaced positive frequencies, mirrored, plus ``omega = 0``."""

    n_points: int = 4001
    w_min: float = 1e-4
    w_max: float = 1e4
    n_refine: int = 5

    def omegas(self):
        if self.n_points < 1:
            raise FdiGridError("grid must be nonempty")
        pos = np.geomspace(self.w_min, self.w_max, self.n_points)
        return np.concatenate([-pos[::-1], [0.0], pos])


RIGHT_OFFSETS = (0.0, 1e-2, 1e-1, 1.0, 10.0, 100.0)


def _argmin_tiebreak(values, omegas):
    order = np.lexsort((np.abs(omegas), values))
    return int(order[0])


def _refine_axis(f, w, vals, n_refine):
    """Bounded Brent search around the smallest local minima of the curve."""
    k = len(w)
    interior = np.arange(1, k - 1)
    is_min = (vals[interior] <= vals[interior - 1]) & (vals[interior] <= vals[interior + 1])
    cand = list(interior[is_min])
    for end in (0, k - 1):
        cand.append(end)
    cand = sorted(set(cand), key=lambda i: (vals[i], abs(w[i])))[:n_refine]
    extra_w, extra_v = [], []
    for i in cand:
        lo = w[max(i - 1, 0)]
        hi = w[min(i + 1, k - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(w[i]))})
        if np.isfinite(res.fun):
            extra_w.append(float(res.x))
            extra_v.append(float(res.fun))
    return np.array(extra_w), np.array(extra_v)


def fdi_grid_check(sys, M, r=0.0, grid=None, half_plane="axis", tol=None,
                   tol_pole=None):
    """Check ``Pi(conj(s), s) >= 0`` on ``s = i omega - r`` (plus offsets).

    Axis mode samples the shifted imaginary axis and refines the smallest
    minima with bounded Brent searches.  ``closed-right`` mode adds the
    offsets in `RIGHT_OFFSETS` to the real part.  Points closer than
    ``tol_pole`` to the spectrum of ``A`` are skipped and counted.
    """
    if half_plane not in ("axis", "closed-right"):
        raise ValueError("half_plane must be 'axis' or 'closed-right'")
    grid = FrequencyGrid() if grid is None else grid
    tol = default_tol(M) if tol is None else tol
    tol_pole = pole_tolerance(sys) if tol_pole is None else tol_pole
    w = grid.omegas()
    offsets = (0.0,) if half_plane == "axis" else RIGHT_OFFSETS

    W = np.concatenate([w for _ in offsets])
    Aoff = np.concatenate([np.full(len(w), a) for a in offsets])
    s = Aoff + 1j * W - r
    ok = _check_poles(sys, s, tol_pole)
    skipped = int(np.sum(~ok))
    if not np.any(ok):
        raise FdiGridError("every grid point lies within the pole tolerance")
    W, Aoff, s = W[ok], Aoff[ok], s[ok]
    vals = _min_eigs(sys, M, s)

    if half_plane == "axis" and grid.n_refine > 0:
        lam = np.linalg.eigvals(sys.A)

        def f(om):
            z = 1j * om - r
            if np.min(np.abs(lam - z)) < tol_pole:
                return np.inf
            return float(_min_eigs(sys, M, np.array([z]))[0])

        ew, ev = _refine_axis(f, W, vals, grid.n_refine)
        if len(ew):
            W = np.concatenate([W, ew])
            vals = np.concatenate([vals, ev])
            Aoff = np.concatenate([Aoff, np.zeros(len(ew))])
            order = np.argsort(W, kind="stable")
            W, vals, Aoff = W[order], vals[order], Aoff[order]

    i = _argmin_tiebreak(vals, W)
    note = ""
    if half_plane == "closed-right":
        note = "closed right half-plane sampling is a necessary-condition check only"
    return FdiReport(
        feasible=bool(vals[i] >= -tol),
        omegas=W,
        min_eigs=vals,
        worst_frequency=float(W[i]),
        worst_value=float(vals[i]),
        skipped_pole_count=skipped,
        tol=float(tol),
        mode=half_plane,
        re_parts=Aoff if half_plane == "closed-right" else None,
        note=note,
    )


@dataclass(frozen=True)
class FactorizationResult:
    """``Lambda(P) = -[K L]*[K L]`` with linearly independent rows."""

    K: np.ndarray
    L: np.ndarray
    q: int
    residual: float

    def G(self, sys, s):
        """Spectral factor ``L + K (sI - A)^{-1} B``."""
        return self.L + self.K @ np.linalg.solve(s * np.eye(sys.n_states) - sys.A, sys.B)


def factorize(sys, M, P, tol=None, rank_rtol=1e-10):
    """Factor ``-Lambda(P)`` from its eigendecomposition."""
    tol = default_tol(M) if tol is None else tol
    Lam = lmi_matrix(sys, M, P)
    vals, vecs = np.linalg.eigh(-Lam)
    if -vals[0] > tol:
        raise LmiInfeasible(f"Lambda(P) has eigenvalue {-vals[0]:.3e} > tol {tol:.3e}")
    vals = np.clip(vals, 0.0, None)
    lmax = vals[-1]
    keep = vals > rank_rtol * lmax if lmax > 0 else np.zeros(len(vals), dtype=bool)
    KL = (np.sqrt(vals[keep])[:, None] * vecs[:, keep].conj().T)
    m = sys.n_states
    K, L = KL[:, :m], KL[:, m:]
    residual = float(np.linalg.norm(Lam + KL.conj().T @ KL, 2)) if KL.size else \
        float(np.linalg.norm(Lam, 2))
    return FactorizationResult(K=K, L=L, q=int(keep.sum()), residual=residual)


def minimal_stability_witness(sys, M, delta_grid=None, tol=None):
    """Search ``F = -delta S`` with ``A + BF`` Hurwitz and ``delta <= 2/||R||``.

    Only meaningful when ``Q <= 0``; otherwise None is returned and the reason
    logged.  Returns the first working feedback in grid order.
    """
    tol = default_tol(M) if tol is None else tol
    qmax = float(np.max(np.linalg.eigvalsh(M.Q)))
    if qmax > tol:
        log.info("Q has eigenvalue %.3e > 0; the -delta S family does not apply", qmax)
        return None
    rnorm = float(np.linalg.norm(M.R, 2))
    dmax = 2.0 / rnorm if rnorm > 0 else np.inf
    if delta_grid is None:
        top = dmax if np.isfinite(dmax) else 1e3
        delta_grid = np.concatenate([[0.0], np.geomspace(1e-6 * top, top, 200)])
    for delta in delta_grid:
        if delta < 0 or delta > dmax * (1 + 1e-12):
            continue
        F = -delta * M.S
        if is_hurwitz(sys.A + sys.B @ F):
            return F
    log.info("no delta in the grid stabilizes A - delta B S")
    return None


def transform_supply(M, F, T=None):
    """Supply data after ``x = T x~`` and ``u = F x + u~``."""
    m = M.n_states
    T = np.eye(m) if T is None else np.asarray(T)
    F = np.asarray(F).reshape(M.n_inputs, m)
    Q = M.Q + M.S.conj().T @ F + F.conj().T @ M.S + F.conj().T @ M.R @ F
    return SupplyRate(T.conj().T @ Q @ T, (M.S + M.R @ F) @ T, M.R)


def transform_storage(P, T):
    Pm = P.P if isinstance(P, CandidateStorage) else np.asarray(P)
    return CandidateStorage(T.conj().T @ Pm @ T)


def circle_supply(C, l):
    """``-Re <u, Cx> + |u|^2 / l`` (``l = inf`` drops the last term)."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, m = C.shape
    Rc = 0.0 if np.isinf(l) else 1.0 / l
    return SupplyRate(np.zeros((m, m)), -0.5 * C, Rc * np.eye(n))


def popov_supply(sys, r, l, lam=1.0, mu=0.0, nu=0.0):
    """Multiplier combination ``lam*s0 + mu*s1 + nu*s2`` for the ``[0, l]`` sector.

    With ``y = Cx`` and the unshifted ``A``::

        s0 = -Re<u, y> + |u|^2 / l
        s1 = -Re<u, CAx + CBu> - r l |y|^2
        s2 = -Re<u, C(A + 2r I)x + CBu>

    Evaluating the Popov function at ``s = i omega - r`` gives the rate-shifted
    frequency conditions; the matching LMI lives on ``sys.shifted(r)``.
    """
    if min(lam, mu, nu) < 0:
        raise ValueError("multipliers must be nonnegative")
    if np.isinf(l) and mu != 0:
        raise ValueError("mu must vanish for an infinite sector")
    A, B, C = sys.A, sys.B, sys.C
    m, n = sys.n_states, sys.n_inputs
    CB = C @ B
    total = SupplyRate.zero(m, n)
    if lam:
        total = total + circle_supply(C, l).scaled(lam)
    if mu:
        s1 = SupplyRate(-r * l * C.conj().T @ C, -0.5 * C @ A, -_herm(CB))
        total = total + s1.scaled(mu)
    if nu:
        s2 = SupplyRate(np.zeros((m, m)), -0.5 * C @ (A + 2 * r * np.eye(m)), -_herm(CB))
        total = total + s2.scaled(nu)
    return total
