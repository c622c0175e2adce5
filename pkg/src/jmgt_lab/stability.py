"""Per-mode linear stability of tau*s^3 + s^2 + b*zeta*s + c^2*zeta = 0."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import PhysicalParams

MARGINAL_TOL = 1e-9

STABLE = "stable"
MARGINAL = "marginal"
UNSTABLE = "unstable"


@dataclass(frozen=True, eq=False)
class ModeAnalysis:
    zeta: float
    minors: tuple
    roots: np.ndarray
    abscissa: float
    regime: str


def _require_tau(params: PhysicalParams):
    if params.tau <= 0:
        raise ValueError("the third-order characteristic polynomial needs tau > 0")


def hurwitz_minors(params: PhysicalParams, zeta: float) -> tuple:
    """Leading principal minors of the Hurwitz matrix (closed forms)."""
    _require_tau(params)
    if zeta < 0:
        raise ValueError(f"zeta must be >= 0, got {zeta}")
    m2 = params.delta * zeta
    return (1.0, m2, params.c**2 * zeta * m2)


def companion_matrix(params: PhysicalParams, zeta: float) -> np.ndarray:
    """First-order system matrix for (u, u_t, u_tt) of one mode."""
    tau, c, b = params.tau, params.c, params.b
    return np.array(
        [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [-(c**2) * zeta / tau, -b * zeta / tau, -1.0 / tau],
        ]
    )


def characteristic_polynomial(params: PhysicalParams, zeta: float) -> np.ndarray:
    """Coefficients, highest degree first."""
    return np.array([params.tau, 1.0, params.b * zeta, params.c**2 * zeta])


def characteristic_roots(params: PhysicalParams, zeta: float) -> np.ndarray:
    """Companion eigenvalues refined by one Newton step, sorted by real part descending."""
    _require_tau(params)
    coeffs = characteristic_polynomial(params, zeta)
    roots = np.linalg.eigvals(companion_matrix(params, zeta)).astype(complex)
    dcoeffs = np.polyder(coeffs)
    p = np.polyval(coeffs, roots)
    dp = np.polyval(dcoeffs, roots)
    # skip the correction at (near) multiple roots where p' vanishes
    ok = np.abs(dp) > 1e-8 * np.max(np.abs(coeffs))
    refined = roots.copy()
    refined[ok] = roots[ok] - p[ok] / dp[ok]
    better = np.abs(np.polyval(coeffs, refined)) <= np.abs(p)
    roots = np.where(better, refined, roots)
    order = np.lexsort((-roots.imag, -roots.real))
    return roots[order]


def spectral_abscissa(params: PhysicalParams, zeta: float) -> float:
    return float(characteristic_roots(params, zeta)[0].real)


def regime_of(abscissa: float, tol: float = MARGINAL_TOL) -> str:
    if abscissa < -tol:
        return STABLE
    if abs(abscissa) <= tol:
        return MARGINAL
    return UNSTABLE


def analyze_mode(params: PhysicalParams, zeta: float, tol: float = MARGINAL_TOL) -> ModeAnalysis:
    roots = characteristic_roots(params, zeta)
    abscissa = float(roots[0].real)
    return ModeAnalysis(
        zeta=float(zeta),
        minors=hurwitz_minors(params, zeta),
        roots=roots,
        abscissa=abscissa,
        regime=regime_of(abscissa, tol),
    )


def classify_regime(params: PhysicalParams, zetas: Iterable[float], tol: float = MARGINAL_TOL):
    """Per-mode analyses and a global verdict over the modes with zeta > 0.

    The verdict is the worst regime present (unstable > marginal > stable).
    """
    zetas = [float(z) for z in zetas]
    if not zetas:
        raise ValueError("need at least one zeta")
    modes = [analyze_mode(params, z, tol) for z in zetas]
    active = [m.regime for m in modes if m.zeta > 0]
    if UNSTABLE in active:
        verdict = UNSTABLE
    elif MARGINAL in active or not active:
        verdict = MARGINAL
    else:
        verdict = STABLE
    return modes, verdict


def low_frequency_decay_factor(xi_norm):
    """|xi|^2 / (|xi|^2 + 1): the frequency dependence of whole-space decay rates."""
    xi = np.asarray(xi_norm, dtype=float)
    if np.any(xi < 0):
        raise ValueError("xi_norm must be >= 0")
    out = xi * xi / (xi * xi + 1.0)
    return float(out) if out.ndim == 0 else out


def cardano_roots(params: PhysicalParams, zeta: float) -> np.ndarray:
    """Closed-form cubic roots; kept as an independent check of the companion path."""
    a, b, c, d = characteristic_polynomial(params, zeta).astype(complex)
    delta0 = b * b - 3 * a * c
    delta1 = 2 * b**3 - 9 * a * b * c + 27 * a * a * d
    root = np.sqrt(delta1 * delta1 - 4 * delta0**3)
    C = ((delta1 + root) / 2) ** (1 / 3)
    if abs(C) < 1e-14:
        C = ((delta1 - root) / 2) ** (1 / 3)
    xi = (-1 + np.sqrt(3) * 1j) / 2
    if abs(C) < 1e-14:
        return np.full(3, -b / (3 * a))
    return np.array([-(b + xi**k * C + delta0 / (xi**k * C)) / (3 * a) for k in range(3)])
