"""Independent reference solutions used across the test modules."""

import math

import numpy as np


def cubic_roots(tau, c, b, zeta):
    """Roots of tau s^3 + s^2 + b zeta s + c^2 zeta via numpy's polynomial solver."""
    return np.roots([tau, 1.0, b * zeta, c * c * zeta])


def analytic_mode(tau, c, b, lam, u0, u1, u2, t):
    """Single-mode linear solution u = sum a_k exp(s_k t) and its first two derivatives.

    Assumes simple roots; coefficients from the Vandermonde system.
    """
    s = cubic_roots(tau, c, b, lam).astype(complex)
    V = np.vstack([np.ones(3), s, s * s])
    a = np.linalg.solve(V, np.array([u0, u1, u2], dtype=complex))
    t = np.asarray(t, dtype=float)[:, None]
    e = a * np.exp(s * t)
    return np.real(e.sum(1)), np.real((e * s).sum(1)), np.real((e * s * s).sum(1))


def analytic_mode_tau0(c, b, lam, u0, u1, t):
    """Single-mode strongly damped wave u'' + b lam u' + c^2 lam u = 0."""
    s = np.roots([1.0, b * lam, c * c * lam]).astype(complex)
    V = np.vstack([np.ones(2), s])
    a = np.linalg.solve(V, np.array([u0, u1], dtype=complex))
    t = np.asarray(t, dtype=float)[:, None]
    e = a * np.exp(s * t)
    return np.real(e.sum(1)), np.real((e * s).sum(1))


def dense_quadratic(basis_lengths, ks, a, b_, n_quad=4000):
    """P[(sum a_k sin) * (sum b_k sin)] on (0, L) by a fine midpoint rule."""
    L = basis_lengths
    x = (np.arange(n_quad) + 0.5) * L / n_quad
    norm = math.sqrt(2.0 / L)
    S = np.array([norm * np.sin(k * math.pi * x / L) for k in ks])
    prod = (a @ S) * (b_ @ S)
    return S @ prod * (L / n_quad)
