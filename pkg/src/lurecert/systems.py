"""Linear state-space substrate.

Holds the `LtiSystem` container, eigenvalue-based stability predicates,
Kalman ranks, state-feedback / similarity transforms and the constructive
zero-dynamics algorithm (iterated Markov-parameter feedback).

Numerical ranks are decided from singular values with the threshold
``max(shape) * sigma_max * rtol`` (``rtol = 1e-12`` unless stated).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EigenvalueError,
    NotFullColumnRank,
    SingularTransform,
    ZeroDynamicsError,
)

RANK_RTOL = 1e-12
TOL_EIG = 1e-10
COND_MAX = 1e12


def _as_matrix(x, name):
    a = np.atleast_2d(np.asarray(x))
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {a.shape}")
    if np.iscomplexobj(a):
        a = a.astype(complex)
    else:
        a = a.astype(float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LtiSystem:
    """State-space block ``x' = A x + B u``, ``y = C x + D u``.

    Arrays are copied, checked for finiteness and frozen on construction.
    ``C`` defaults to an empty output map and ``D`` to zeros.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray = None
    D: np.ndarray = None
    field_: str = field(init=False, repr=False)

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        m = A.shape[0]
        if A.shape != (m, m) or m < 1:
            raise ValueError(f"A must be square with m >= 1, got {A.shape}")
        B = np.asarray(self.B)
        if B.ndim == 1:
            B = B.reshape(m, -1)
        B = _as_matrix(B, "B")
        if B.shape[0] != m or B.shape[1] < 1:
            raise ValueError(f"B must be {m} x n with n >= 1, got {B.shape}")
        n = B.shape[1]
        C = np.zeros((0, m)) if self.C is None else np.asarray(self.C)
        if C.ndim == 1:
            C = C.reshape(-1, m)
        C = _as_matrix(C, "C") if C.size else np.zeros((0, m))
        if C.shape[1] != m:
            raise ValueError(f"C must have {m} columns, got {C.shape}")
        p = C.shape[0]
        D = np.zeros((p, n)) if self.D is None else np.asarray(self.D)
        D = _as_matrix(D, "D") if D.size else np.zeros((p, n))
        if D.shape != (p, n):
            raise ValueError(f"D must be {p} x {n}, got {D.shape}")
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        is_complex = any(np.iscomplexobj(v) for v in (A, B, C, D))
        object.__setattr__(self, "field_", "complex" if is_complex else "real")

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    def transfer(self, s):
        """Evaluate ``D + C (sI - A)^{-1} B`` at a complex point."""
        m = self.n_states
        X = np.linalg.solve(s * np.eye(m) - self.A, self.B)
        return self.D + self.C @ X

    def shifted(self, r):
        """System with ``A + r I`` (rate-weighted coordinates ``x = e^{rt} z``)."""
        return LtiSystem(self.A + r * np.eye(self.n_states), self.B, self.C, self.D)


def numerical_rank(M, rtol=RANK_RTOL):
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > max(M.shape) * sv[0] * rtol))


def null_space(M, rtol=RANK_RTOL, atol=0.0):
    """Orthonormal kernel basis (columns).

    Singular values at or below ``max(atol, max(shape) * sigma_max * rtol)``
    count as zero.
    """
    M = np.atleast_2d(M)
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n, dtype=M.dtype)
    _, sv, vh = np.linalg.svd(M)
    if sv.size == 0 or sv[0] <= atol or sv[0] == 0.0:
        return np.eye(n, dtype=vh.dtype)
    thresh = max(atol, max(M.shape) * sv[0] * rtol)
    rank = int(np.sum(sv > thresh))
    return vh[rank:].conj().T


def _eigvals(A):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueError(f"eigenvalue solver failed: {exc}") from exc


def spectral_abscissa(A):
    """Largest real part over the spectrum of ``A``."""
    return float(np.max(_eigvals(A).real))


def is_hurwitz(A, margin=0.0, tol_eig=TOL_EIG):
    """True iff every eigenvalue satisfies ``Re < -margin - tol_eig``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return spectral_abscissa(A) < -margin - tol_eig


def is_marginally_stable(A, tol=1e-8, cluster_tol=1e-6):
    """Closed left half-plane spectrum with semisimple imaginary-axis eigenvalues.

    Eigenvalues within ``cluster_tol * (1 + ||A||)`` of each other are pooled;
    the algebraic multiplicity of a pool is compared with the kernel dimension
    of ``A - mean(pool) I``.
    """
    lam = _eigvals(A)
    if np.any(lam.real > tol):
        return False
    A = np.asarray(A)
    scale = 1.0 + np.linalg.norm(A, 2)
    ctol = cluster_tol * scale
    crit = list(lam[np.abs(lam.real) <= tol])
    while crit:
        seed = crit.pop(0)
        pool = [seed] + [z for z in crit if abs(z - seed) <= ctol]
        crit = [z for z in crit if abs(z - seed) > ctol]
        centre = np.mean(pool)
        alg = sum(1 for z in lam if abs(z - centre) <= ctol)
        sv = np.linalg.svd(A - centre * np.eye(A.shape[0]), compute_uv=False)
        geo = int(np.sum(sv <= ctol))
        if geo < alg:
            return False
    return True


def reachability_matrix(A, B):
    A = np.asarray(A)
    B = np.atleast_2d(np.asarray(B)).reshape(A.shape[0], -1)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def reachability_rank(A, B, rtol=RANK_RTOL):
    return numerical_rank(reachability_matrix(A, B), rtol)


def observability_matrix(A, C):
    A = np.asarray(A)
    C = np.atleast_2d(np.asarray(C)).reshape(-1, A.shape[0])
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def observability_rank(A, C, rtol=RANK_RTOL):
    return numerical_rank(observability_matrix(A, C), rtol)


def apply_feedback(sys, F, T=None):
    """Change variables ``x~ = T^{-1} x``, ``u~ = u - F x``.

    Returns ``(T^{-1}(A+BF)T, T^{-1}B, (C+DF)T, D)``.
    """
    m, n = sys.n_states, sys.n_inputs
    F = np.atleast_2d(np.asarray(F)).reshape(n, m)
    T = np.eye(m) if T is None else np.atleast_2d(np.asarray(T))
    if T.shape != (m, m):
        raise ValueError(f"T must be {m} x {m}")
    if not np.all(np.isfinite(T)) or np.linalg.cond(T) > COND_MAX:
        raise SingularTransform("transform T is singular or badly conditioned")
    A_new = np.linalg.solve(T, (sys.A + sys.B @ F) @ T)
    B_new = np.linalg.solve(T, sys.B)
    C_new = (sys.C + sys.D @ F) @ T
    return LtiSystem(A_new, B_new, C_new, sys.D)


def system_matrix(sys, s):
    """Rosenbrock matrix ``[[A - sI, B], [C, D]]``."""
    m = sys.n_states
    top = np.hstack([sys.A - s * np.eye(m), sys.B])
    bottom = np.hstack([sys.C, sys.D])
    return np.vstack([top, bottom])


def system_matrix_kernel_dim(sys, s, rtol=RANK_RTOL):
    """Kernel dimension of the Rosenbrock matrix at ``s``."""
    Msys = system_matrix(sys, s)
    return Msys.shape[1] - numerical_rank(Msys, rtol)


def companion_system(num, den, d=0.0):
    """Controllable canonical realization of ``d + num(s)/den(s)`` (SISO).

    ``den`` is monic of degree ``m``; ``num`` has degree < ``m``.  Coefficients
    are listed highest power first, as in `numpy.polyval`.
    """
    den = np.asarray(den, dtype=complex if np.iscomplexobj(den) else float)
    if den[0] != 1:
        den = den / den[0]
    m = len(den) - 1
    num = np.atleast_1d(np.asarray(num))
    if len(num) > m:
        raise ValueError("numerator degree must be below denominator degree")
    num = np.concatenate([np.zeros(m - len(num), dtype=num.dtype), num])
    A = np.zeros((m, m), dtype=den.dtype)
    A[:-1, 1:] = np.eye(m - 1)
    A[-1, :] = -den[1:][::-1]
    B = np.zeros((m, 1))
    B[-1, 0] = 1.0
    C = num[::-1].reshape(1, m)
    return LtiSystem(A, B, C, np.array([[d]]))


@dataclass(frozen=True)
class ZeroDynamicsResult:
    """Output-zeroing feedback ``F``, basis of the invariant subspace, and zeros."""

    F: np.ndarray
    S_basis: np.ndarray
    zero_eigenvalues: np.ndarray
    stages: int = 0


def _normal_column_rank_ok(sys, n_probe=3, seed=12345):
    rng = np.random.default_rng(seed)
    poles = np.linalg.eigvals(sys.A)
    scale = 1.0 + np.linalg.norm(sys.A, 2)
    n = sys.n_inputs
    for _ in range(n_probe):
        while True:
            s = scale * (rng.normal() + 1j * rng.normal())
            if np.min(np.abs(poles - s)) > 1e-3 * scale:
                break
        if numerical_rank(sys.transfer(s), 1e-10) < n:
            return False
    return True


def _unobservable_basis(A, C, atol_c, atol_a):
    """Largest A-invariant subspace inside ker C, by subspace intersection.

    Starts from ker C and repeatedly keeps the part of the basis that A maps
    back into it.  Absolute thresholds are needed because, after output
    zeroing feedback, C and the residual maps are pure rounding noise.
    """
    m = A.shape[0]
    V = null_space(C, atol=atol_c) if C.shape[0] else np.eye(m)
    for _ in range(m):
        if V.shape[1] == 0:
            break
        AV = A @ V
        resid = AV - V @ (V.conj().T @ AV)
        K = null_space(resid, atol=atol_a)
        if K.shape[1] == V.shape[1]:
            break
        V = V @ K
        V, _ = np.linalg.qr(V) if V.shape[1] else (V, None)
    return V


def zero_dynamics(sys, markov_rtol=1e-10, rtol=1e-10):
    """Constructive output-zeroing feedback.

    Stage 0 removes the feedthrough with ``F0 = -D^+ C`` and restricts inputs
    to ``ker D``.  Each later stage finds the first nonvanishing Markov
    parameter ``C A^p B`` on the current input subspace, applies
    ``F_k = -(C A^p B)^+ C A^{p+1}`` and shrinks the inputs to its kernel.
    The input dimension strictly drops, so at most ``n`` stages run.
    """
    if sys.n_outputs < sys.n_inputs or not _normal_column_rank_ok(sys):
        raise NotFullColumnRank("transfer matrix lacks full normal column rank")
    m, n = sys.n_states, sys.n_inputs
    dtype = complex if sys.field_ == "complex" else float
    A, B, C, D = (np.array(sys.A, dtype=dtype), np.array(sys.B, dtype=dtype),
                  np.array(sys.C, dtype=dtype), np.array(sys.D, dtype=dtype))

    F = np.zeros((n, m), dtype=dtype)
    V = np.eye(n, dtype=dtype)  # basis of the current input subspace
    stages = 0
    if numerical_rank(D, rtol) > 0:
        F = -np.linalg.pinv(D) @ C
        V = null_space(D, rtol)
        stages += 1
    Acl = A + B @ F
    Ccl = C + D @ F

    while V.shape[1] > 0:
        Bv = B @ V
        scale_b = np.linalg.norm(Bv, 2)
        scale_c = np.linalg.norm(Ccl, 2)
        CAp = Ccl.copy()
        p = None
        for k in range(m):
            G = CAp @ Bv
            scale = scale_c * scale_b * max(1.0, np.linalg.norm(Acl, 2)) ** k
            if scale > 0 and np.linalg.norm(G, 2) > markov_rtol * scale:
                p = k
                break
            CAp = CAp @ Acl
        if p is None:
            raise ZeroDynamicsError(
                "transfer vanishes on a nonzero input subspace; "
                "pseudo-inverse tolerance cascade did not converge")
        Fk = -np.linalg.pinv(G) @ (CAp @ Acl)
        F = F + V @ Fk
        Acl = A + B @ F
        Ccl = C + D @ F
        kernel = null_space(G, rtol)
        if kernel.shape[1] >= V.shape[1]:
            raise ZeroDynamicsError("input subspace failed to shrink")
        V = V @ kernel
        stages += 1

    scale_c = np.linalg.norm(C, 2) + np.linalg.norm(D, 2) * np.linalg.norm(F, 2)
    scale_a = np.linalg.norm(A, 2) + np.linalg.norm(B, 2) * np.linalg.norm(F, 2)
    S_basis = _unobservable_basis(Acl, Ccl, 1e-9 * max(scale_c, 1e-300),
                                  1e-9 * max(scale_a, 1e-300))
    if S_basis.shape[1]:
        restricted = S_basis.conj().T @ Acl @ S_basis
        zeros = np.linalg.eigvals(restricted)
    else:
        zeros = np.zeros(0, dtype=complex)
    order = np.lexsort((zeros.imag, zeros.real))
    return ZeroDynamicsResult(F=F, S_basis=S_basis, zero_eigenvalues=zeros[order],
                              stages=stages)
