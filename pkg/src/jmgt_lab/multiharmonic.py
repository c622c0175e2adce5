"""Frequency-domain (multiharmonic) solver for time-periodic JMGT-Westervelt solutions.

With u = Re sum_m uhat_m exp(i m omega t), substituting into

    tau u_ttt + u_tt - c^2 Lap u - b Lap u_t = -eta (u^2)_tt - r_tt

and collecting exp(i m omega t) gives, per harmonic m and spatial mode j,

    S_m,j uhat_m = (eta/2) (m omega)^2 [sum_{l<m} uhat_l uhat_{m-l}
                                        + 2 sum_k conj(uhat_k) uhat_{k+m}]
                   + (m omega)^2 rhat_m,
    S_m,j = -i tau (m omega)^3 - (m omega)^2 + c^2 lam_j + i b (m omega) lam_j.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ForcingSpec, PhysicalParams, SpectralBasis, from_physical, to_physical
from .errors import NearSingularError, NonConvergenceError

log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HarmonicField:
    """coeffs[m-1, j] = uhat_{m, j}; the field is Re sum_m uhat_m exp(i m omega t)."""

    omega: float
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("harmonic coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    def harmonic(self, m: int) -> np.ndarray:
        return self.coeffs[m - 1]

    def h1_norms(self, basis: SpectralBasis) -> np.ndarray:
        """||grad uhat_m|| for m = 1..M."""
        return np.sqrt(np.sum(basis.lambdas * np.abs(self.coeffs) ** 2, axis=1))

    def evaluate(self, t) -> np.ndarray:
        """Modal time signal at times t, shape (len(t), n_modes); complex dtype."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = np.arange(1, self.M + 1)
        phase = np.exp(1j * np.outer(t, m) * self.omega)
        full = phase @ self.coeffs
        return 0.5 * (full + np.conj(full))


def helmholtz_symbol(params: PhysicalParams, m: int, omega: float, lam):
    """Diagonal symbol S of harmonic m acting on eigenmode(s) with eigenvalue lam."""
    if m < 1:
        raise ValueError("harmonic index m must be >= 1")
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be > 0")
    w = m * omega
    value = -1j * params.tau * w**3 - w**2 + params.c**2 * lam + 1j * params.b * w * lam
    if np.any(np.abs(value) < SINGULAR_TOL):
        j = int(np.argmin(np.abs(np.atleast_1d(value))))
        raise NearSingularError(f"near-singular symbol at harmonic m={m}, mode j={j}", m=m, j=j)
    return complex(value) if value.ndim == 0 else value


def symbol_matrix(params: PhysicalParams, basis: SpectralBasis, omega: float, M: int) -> np.ndarray:
    out = np.empty((M, basis.size), dtype=complex)
    for m in range(1, M + 1):
        out[m - 1] = helmholtz_symbol(params, m, omega, basis.lambdas)
    return out


def _products(field_phys, m, M):
    """Physical-space bracket for harmonic m with sums cut at k + m <= M."""
    acc = np.zeros(field_phys.shape[0], dtype=complex)
    for l in range(1, m):
        acc += field_phys[:, l - 1] * field_phys[:, m - l - 1]
    for k in range(1, M - m + 1):
        # the two cross sums of the expansion are equal
        acc += 2.0 * np.conj(field_phys[:, k - 1]) * field_phys[:, k + m - 1]
    return acc


def convolution_rhs(field: HarmonicField, eta: float, m: int, basis: SpectralBasis) -> np.ndarray:
    """(eta/2)(m omega)^2 times the projected quadratic bracket for harmonic m."""
    M = field.M
    if not 1 <= m <= M:
        raise ValueError(f"harmonic m={m} outside 1..{M}")
    if eta == 0.0:
        return np.zeros(basis.size, dtype=complex)
    phys = to_physical(field.coeffs.T, basis)
    return 0.5 * eta * (m * field.omega) ** 2 * from_physical(_products(phys, m, M), basis)


def _all_rhs(coeffs, eta, omega, basis, rhat):
    M = coeffs.shape[0]
    m = np.arange(1, M + 1)[:, None]
    out = (m * omega) ** 2 * rhat
    if eta != 0.0:
        phys = to_physical(coeffs.T, basis)
        brackets = np.stack([_products(phys, k, M) for k in range(1, M + 1)], axis=1)
        out = out + 0.5 * eta * (m * omega) ** 2 * from_physical(brackets, basis).T
    return out


def _h1(basis, v):
    return float(np.sqrt(np.sum(basis.lambdas * np.abs(v) ** 2)))


@dataclass
class IterationReport:
    history: list = field(default_factory=list)  # (iteration, residual)
    converged: bool = False
    residual: float = math.nan
    relaxation: float = math.nan
    iterations: int = 0


def system_residual(params, basis, fld: HarmonicField, rhat) -> float:
    """||S uhat - rhs(uhat)||_H1 / ||rhs(uhat)||_H1 over all harmonics."""
    S = symbol_matrix(params, basis, fld.omega, fld.M)
    rhs = _all_rhs(fld.coeffs, params.eta, fld.omega, basis, rhat)
    ref = _h1(basis, rhs)
    diff = _h1(basis, S * fld.coeffs - rhs)
    return diff / ref if ref > 0 else diff


def solve_fixed_point(
    params: PhysicalParams,
    basis: SpectralBasis,
    source,
    omega: float,
    M: int = 8,
    tol: float = 1e-12,
    relaxation: float = 0.5,
    max_iter: int = 2000,
):
    """Under-relaxed Picard iteration on the coupled Helmholtz system.

    ``source`` is a ForcingSpec or an array of rhat_m with shape (<= M, n).
    Returns (HarmonicField, IterationReport).  The relaxation is halved
    whenever the residual grows; ten consecutive growths abort.
    """
    if params.delta <= 0:
        raise ValueError(f"multiharmonic solver needs delta > 0, got delta = {params.delta}")
    if not omega > 0:
        raise ValueError("omega must be > 0")
    if M < 1:
        raise ValueError("M must be >= 1")
    n = basis.size
    if isinstance(source, ForcingSpec):
        rhat = source.harmonics(M, n)
    else:
        src = np.atleast_2d(np.asarray(source, dtype=complex))
        rhat = np.zeros((M, n), dtype=complex)
        rhat[: min(M, src.shape[0])] = src[:M]
    S = symbol_matrix(params, basis, omega, M)
    report = IterationReport(relaxation=relaxation)

    coeffs = _all_rhs(np.zeros((M, n), dtype=complex), 0.0, omega, basis, rhat) / S
    if params.eta == 0.0 or not np.any(rhat):
        fld = HarmonicField(omega, coeffs)
        report.residual = system_residual(params, basis, fld, rhat)
        report.history.append((1, report.residual))
        report.converged = True
        report.iterations = 1
        return fld, report

    theta = relaxation
    prev_res = math.inf
    growth = 0
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = _all_rhs(coeffs, params.eta, omega, basis, rhat)
            res = _h1(basis, S * coeffs - rhs) / max(_h1(basis, rhs), 1e-300)
        report.history.append((it, res))
        if not math.isfinite(res):
            raise NonConvergenceError(f"fixed-point iteration overflowed at iteration {it}", last=None)
        if res > prev_res:
            growth += 1
            theta = max(theta / 2.0, 1.0 / 1024)
            if growth >= 10:
                raise NonConvergenceError(
                    f"fixed-point iteration diverging (residual {res:.3e} at iteration {it})",
                    last=HarmonicField(omega, coeffs),
                )
        else:
            growth = 0
        prev_res = res
        new = (1.0 - theta) * coeffs + theta * rhs / S
        if not np.all(np.isfinite(new)):
            raise NonConvergenceError(f"fixed-point iteration overflowed at iteration {it}", last=None)
        change = _h1(basis, new - coeffs) / max(_h1(basis, new), 1e-300)
        coeffs = new
        if change < tol:
            report.converged = True
            break
    else:
        raise NonConvergenceError(
            f"fixed-point iteration did not converge in {max_iter} iterations", last=HarmonicField(omega, coeffs)
        )
    fld = HarmonicField(omega, coeffs)
    report.residual = system_residual(params, basis, fld, rhat)
    report.iterations = it
    report.relaxation = theta
    log.debug("fixed point converged in %d iterations, residual %.3e", it, report.residual)
    return fld, report


def harmonic_spectrum(traj, M: int, omega: Optional[float] = None) -> HarmonicField:
    """DFT in time over exactly one period of uniform samples (endpoint excluded).

    ``traj`` is a Trajectory or any object with ``t`` and ``u`` arrays.
    """
    t = np.asarray(traj.t, dtype=float)
    u = np.asarray(traj.u)
    N = t.size
    if N < 4 * M:
        raise ValueError(f"{N} samples cannot resolve {M} harmonics (need >= {4 * M})")
    dt = (t[-1] - t[0]) / (N - 1)
    if omega is None:
        omega = 2.0 * math.pi / (N * dt)
    m = np.arange(1, M + 1)
    phase = np.exp(-1j * np.outer(m, t) * omega)
    coeffs = (2.0 / N) * (phase @ u)
    return HarmonicField(omega, coeffs)
