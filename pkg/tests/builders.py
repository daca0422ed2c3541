"""Test-system builders with known transmission zeros."""

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from lurecert.systems import LtiSystem, companion_system


def random_zeros(rng, k):
    """k well-separated zeros, mixing real values and conjugate pairs."""
    out = []
    while len(out) < k:
        if k - len(out) >= 2 and rng.uniform() < 0.4:
            re, im = rng.uniform(-2.5, 0.8), rng.uniform(0.3, 1.5)
            cand = [complex(re, im), complex(re, -im)]
        else:
            cand = [complex(rng.uniform(-2.5, 0.8), 0.0)]
        if all(min(abs(c - z) for z in out) > 0.25 for c in cand) if out else True:
            out.extend(cand)
    return np.array(out)


def random_poles(rng, m):
    return -rng.uniform(0.5, 3.0, size=m) + 0.0j


def siso_with_zeros(rng, n_states, zeros, feedthrough=0.0):
    """Companion realization of ``d + num/den`` whose zeros are ``zeros``.

    Strictly proper: ``num = prod(s - z)`` must have degree < n_states.
    With ``d != 0`` the zeros are the roots of ``d den + num``, so the
    numerator is ``d (zpoly - den)`` with ``zpoly`` monic of degree n_states.
    """
    den = np.real(np.poly(random_poles(rng, n_states)))
    zpoly = np.real(np.poly(zeros)) if len(zeros) else np.array([1.0])
    if feedthrough == 0.0:
        if len(zeros) >= n_states:
            raise ValueError("too many zeros for a strictly proper system")
        gain = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        return companion_system(gain * zpoly, den)
    if len(zeros) != n_states:
        raise ValueError("biproper system needs n_states zeros")
    num = feedthrough * (zpoly - den)
    return companion_system(num[1:], den, d=feedthrough)


def block_diag_system(*systems):
    A = scipy.linalg.block_diag(*[s.A for s in systems])
    B = scipy.linalg.block_diag(*[s.B for s in systems])
    C = scipy.linalg.block_diag(*[s.C for s in systems])
    D = scipy.linalg.block_diag(*[s.D for s in systems])
    return LtiSystem(A, B, C, D)


def mix(rng, sys):
    """Orthogonal input/output mixing and a well-conditioned state similarity."""
    n, p, m = sys.n_inputs, sys.n_outputs, sys.n_states
    U = ortho_group.rvs(p, random_state=rng) if p > 1 else np.eye(1)
    V = ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    T = np.eye(m) + 0.3 * rng.normal(size=(m, m)) / np.sqrt(m)
    Ti = np.linalg.inv(T)
    return LtiSystem(Ti @ sys.A @ T, Ti @ sys.B @ V, U @ sys.C @ T, U @ sys.D @ V)


def prescribed_zero_systems(seed=2024, count=20):
    """List of ``(system, zeros)`` covering SISO, MIMO and singular-D cases."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind = i % 4
        if kind == 0:  # strictly proper SISO, relative degree 1..3
            m = int(rng.integers(2, 6))
            k = int(rng.integers(max(0, m - 3), m))
            z = random_zeros(rng, k)
            sys = siso_with_zeros(rng, m, z)
        elif kind == 1:  # biproper SISO (D != 0, invertible)
            m = int(rng.integers(2, 5))
            z = random_zeros(rng, m)
            sys = siso_with_zeros(rng, m, z, feedthrough=rng.uniform(0.5, 2.0))
        elif kind == 2:  # 2x2 strictly proper, mixed
            m1, m2 = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            z1 = random_zeros(rng, int(rng.integers(0, m1)))
            z2 = random_zeros(rng, int(rng.integers(0, m2)))
            while len(z1) and len(z2) and np.min(np.abs(z1[:, None] - z2[None])) < 0.25:
                z2 = random_zeros(rng, len(z2))
            sys = mix(rng, block_diag_system(siso_with_zeros(rng, m1, z1),
                                             siso_with_zeros(rng, m2, z2)))
            z = np.concatenate([z1, z2])
        else:  # 2x2 with singular nonzero D, mixed
            m1, m2 = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            z1 = random_zeros(rng, m1)
            z2 = random_zeros(rng, int(rng.integers(0, m2)))
            while len(z2) and np.min(np.abs(z1[:, None] - z2[None])) < 0.25:
                z2 = random_zeros(rng, len(z2))
            sys = mix(rng, block_diag_system(
                siso_with_zeros(rng, m1, z1, feedthrough=rng.uniform(0.5, 2.0)),
                siso_with_zeros(rng, m2, z2)))
            z = np.concatenate([z1, z2])
        out.append((sys, z))
    return out
