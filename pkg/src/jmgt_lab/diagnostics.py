"""Energy, energy-identity residual, decay fits, blow-up detection and the z-variable checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammainc

from .core import ForcingSpec, ModalState, PhysicalParams, SpectralBasis, from_physical
from .timedomain import Trajectory


@dataclass(frozen=True)
class EnergyWeights:
    sigma: float
    rho: float
    epsilon: float = 0.5

    def __post_init__(self):
        if not 0 < self.sigma <= 1:
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


def default_weights(params: PhysicalParams, basis: SpectralBasis) -> EnergyWeights:
    """sigma = 1 - min(delta/(2b), tau*delta/c^2) when delta > 0, else 1.

    rho = min(sigma/(2 tau), delta*lam_min/(4 c^2), sigma/(4 C^2)) clipped to
    (0, 1], with C = 1/sqrt(lam_min); the delta term is dropped when delta <= 0.
    """
    tau, c, b, delta = params.tau, params.c, params.b, params.delta
    sigma = 1.0 - min(delta / (2 * b), tau * delta / c**2) if delta > 0 else 1.0
    candidates = [sigma * basis.lambda_min / 4.0] if basis.lambda_min > 0 else []
    if tau > 0:
        candidates.append(sigma / (2 * tau))
    if delta > 0:
        candidates.append(delta * basis.lambda_min / (4 * c**2))
    candidates = [v for v in candidates if v > 0]
    rho = min(candidates + [1.0])
    return EnergyWeights(sigma=sigma, rho=rho)


@dataclass(frozen=True, eq=False)
class EnergyTrace:
    """Energy time series; ``components`` rows are tau^2|grad u_tt|^2,
    tau|Lap u_t|^2, |grad u_t|^2, |Lap u|^2."""

    t: np.ndarray
    energy: np.ndarray
    components: np.ndarray
    linf: np.ndarray


def _components(tau, lam, u, ut, utt):
    return np.stack(
        [
            tau**2 * np.sum(lam * utt**2, axis=-1),
            tau * np.sum(lam**2 * ut**2, axis=-1),
            np.sum(lam * ut**2, axis=-1),
            np.sum(lam**2 * u**2, axis=-1),
        ]
    )


def energy(params: PhysicalParams, basis: SpectralBasis, state: ModalState):
    """Return (E, (c1, c2, c3, c4)) for one state; E is the sum of the components."""
    comps = _components(params.tau, basis.lambdas, state.u, state.ut, state.utt)
    comps = tuple(float(v) for v in comps)
    return math.fsum(comps), comps


def energy_trace(params: PhysicalParams, basis: SpectralBasis, traj: Trajectory) -> EnergyTrace:
    comps = _components(params.tau, basis.lambdas, traj.u, traj.ut, traj.utt)
    return EnergyTrace(t=traj.t, energy=comps.sum(axis=0), components=comps, linf=traj.linf)


def source_term(params: PhysicalParams, basis: SpectralBasis, traj: Trajectory, forcing: Optional[ForcingSpec] = None):
    """Modal f = -eta*(u^2)_tt - r_tt = -2 eta P[u u_tt + u_t^2] - r_tt at every sample."""
    n = basis.size
    f = np.zeros_like(traj.u)
    if params.eta != 0.0:
        phi = basis.phi
        u, ut, utt = phi @ traj.u.T, phi @ traj.ut.T, phi @ traj.utt.T
        f -= 2.0 * params.eta * from_physical(u * utt + ut * ut, basis).T
    if forcing is not None and forcing.kind != "none":
        f -= np.array([forcing.r_tt(t, n) for t in traj.t])
    return f


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def energy_identity_terms(
    params: PhysicalParams,
    basis: SpectralBasis,
    traj: Trajectory,
    weights: Optional[EnergyWeights] = None,
    forcing: Optional[ForcingSpec] = None,
):
    """Every left-hand term of the tested energy identity and its right-hand side.

    The equation is tested with -Lap(tau u_tt + sigma u_t + rho u);
    time integrals use the composite trapezoid rule.  Returns (lhs_terms,
    rhs) with lhs_terms of shape (12, n_samples).
    """
    if len(traj) < 3:
        raise ValueError("energy identity needs at least 3 samples")
    w = weights or default_weights(params, basis)
    tau, c, b = params.tau, params.c, params.b
    sig, rho = w.sigma, w.rho
    lam = basis.lambdas
    u, ut, utt, t = traj.u, traj.ut, traj.utt, traj.t

    def g(a, bb):  # <grad a, grad b>
        return np.sum(lam * a * bb, axis=1)

    def L(a, bb):  # <Lap a, Lap b>
        return np.sum(lam**2 * a * bb, axis=1)

    def jump(v):
        return v - v[0]

    terms = np.stack(
        [
            0.5 * tau**2 * jump(g(utt, utt)),
            tau * (1 - sig) * _cumtrapz(g(utt, utt), t),
            0.5 * tau * b * jump(L(ut, ut)),
            (b * sig - tau * c**2) * _cumtrapz(L(ut, ut), t),
            0.5 * (sig * c**2 + b * rho) * jump(L(u, u)),
            c**2 * rho * _cumtrapz(L(u, u), t),
            0.5 * (sig - tau * rho) * jump(g(ut, ut)),
            -rho * _cumtrapz(g(ut, ut), t),
            tau * c**2 * jump(L(ut, u)),
            tau * sig * jump(g(utt, ut)),
            tau * rho * jump(g(utt, u)),
            rho * jump(g(ut, u)),
        ]
    )
    f = source_term(params, basis, traj, forcing)
    rhs = _cumtrapz(g(f, tau * utt + sig * ut + rho * u), t)
    return terms, rhs


def energy_identity_residual(
    params: PhysicalParams,
    basis: SpectralBasis,
    traj: Trajectory,
    weights: Optional[EnergyWeights] = None,
    forcing: Optional[ForcingSpec] = None,
) -> np.ndarray:
    """|LHS - RHS| at every sample, normalized by the largest term magnitude."""
    terms, rhs = energy_identity_terms(params, basis, traj, weights, forcing)
    scale = max(float(np.max(np.abs(terms))), float(np.max(np.abs(rhs))))
    resid = np.abs(terms.sum(axis=0) - rhs)
    return resid / scale if scale > 0 else resid


def fit_decay_rate(t, energy=None, window=None):
    """Least-squares fit log E = log A - rate * t over ``window``; returns (rate, A).

    ``t`` may be an EnergyTrace, in which case ``energy`` is taken from it.
    """
    if isinstance(t, EnergyTrace):
        t, energy = t.t, t.energy
    t = np.asarray(t, dtype=float)
    energy = np.asarray(energy, dtype=float)
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
        t, energy = t[mask], energy[mask]
    if t.size < 2:
        raise ValueError("need at least two samples in the fit window")
    if np.any(energy <= 0):
        raise ValueError("energy must be strictly positive on the fit window")
    slope, intercept = np.polyfit(t, np.log(energy), 1)
    return float(-slope), float(math.exp(intercept))


@dataclass(frozen=True)
class BlowupEvent:
    t_detect: float
    growth_exponent: float


def detect_blowup(t, linf=None, threshold: float = 1e6, fit_points: int = 5) -> Optional[BlowupEvent]:
    """First threshold crossing of the L-inf series, or None.

    The crossing time interpolates log L-inf between the bracketing samples;
    ``growth_exponent`` is the local slope of log L-inf over the last
    ``fit_points`` samples before the crossing.
    """
    if isinstance(t, (EnergyTrace, Trajectory)):
        t, linf = t.t, t.linf
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    t = np.asarray(t, dtype=float)
    linf = np.asarray(linf, dtype=float)
    above = np.nonzero(linf > threshold)[0]
    if above.size == 0:
        return None
    k = int(above[0])
    if k == 0:
        return BlowupEvent(float(t[0]), math.nan)
    lo, hi = linf[k - 1], linf[k]
    t_cross = float(t[k])
    if lo > 0 and np.isfinite(hi):
        frac = (math.log(threshold) - math.log(lo)) / (math.log(hi) - math.log(lo))
        t_cross = float(t[k - 1] + frac * (t[k] - t[k - 1]))
    start = max(0, k - fit_points)
    seg_t, seg = t[start : k + 1], linf[start : k + 1]
    ok = (seg > 0) & np.isfinite(seg)
    growth = math.nan
    if np.count_nonzero(ok) >= 2:
        growth = float(np.polyfit(seg_t[ok], np.log(seg[ok]), 1)[0])
    return BlowupEvent(t_cross, growth)


# --- z = tau*u_t + u -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ZTrajectory:
    t: np.ndarray
    z: np.ndarray
    zt: np.ndarray
    tau: float


def z_transform(traj, tau: float):
    """z = tau u_t + u (and z_t = tau u_tt + u_t) for a state or a trajectory."""
    if tau <= 0:
        raise ValueError("the z variable needs tau > 0")
    if isinstance(traj, ModalState):
        return tau * traj.ut + traj.u, tau * traj.utt + traj.ut
    return ZTrajectory(traj.t, tau * traj.ut + traj.u, tau * traj.utt + traj.ut, tau)


def _uniform_step(t):
    if t.size < 3:
        raise ValueError("need at least 3 samples")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(t[-1])):
        raise ValueError("samples must be uniformly spaced")
    return float(dt[0])


def _kernel_moments(h, tau, kmax=3):
    """J_k = int_0^h (1/tau) exp(-w/tau) w^k dw for k = 0..kmax."""
    x = h / tau
    return np.array([tau**k * math.factorial(k) * gammainc(k + 1, x) for k in range(kmax + 1)])


def exponential_convolution(t, v, vt, tau: float, v0_weight=None):
    """(e_tau * v)(t_n) with e_tau(s) = exp(-s/tau)/tau, by exact integration.

    v is replaced by its piecewise cubic Hermite interpolant (values ``v`` and
    derivatives ``vt`` at the samples), and exp x cubic is integrated in
    closed form on each interval.  The recursion
    I_{n+1} = exp(-h/tau) I_n + int_{t_n}^{t_{n+1}} holds for uniform steps.
    """
    t = np.asarray(t, dtype=float)
    h = _uniform_step(t)
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if h > 50 * tau:
        # the kernel would be unresolved by the samples' derivative data
        raise ValueError(f"sampling too coarse: dt = {h:g} > 50 tau = {50 * tau:g}")
    J = _kernel_moments(h, tau)
    decay = math.exp(-h / tau)
    out = np.zeros_like(v)
    for n in range(t.size - 1):
        # Hermite cubic in w = t_{n+1} - s: p(0) = v_{n+1}, p(h) = v_n
        A, B = v[n + 1], v[n]
        dA, dB = -vt[n + 1], -vt[n]
        q2 = (3 * (B - A) / h - 2 * dA - dB) / h
        q3 = (2 * (A - B) / h + dA + dB) / h**2
        out[n + 1] = decay * out[n] + A * J[0] + dA * J[1] + q2 * J[2] + q3 * J[3]
    return out


def reconstruct_u_from_z(zt: ZTrajectory, u0, tau: Optional[float] = None) -> np.ndarray:
    """u(t) = tau e_tau(t) u(0) + (e_tau * z)(t); returns shape (n_samples, n_modes)."""
    tau = zt.tau if tau is None else tau
    if tau <= 0:
        raise ValueError("tau must be > 0")
    u0 = np.asarray(u0, dtype=float)
    conv = exponential_convolution(zt.t, zt.z, zt.zt, tau)
    return np.exp(-(zt.t - zt.t[0]) / tau)[:, None] * u0[None, :] + conv


def _second_derivative(v, h):
    out = np.full_like(v, np.nan)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    return out


def _relative(resid, *terms):
    scale = max(float(np.nanmax(np.abs(term))) for term in terms)
    interior = np.abs(resid[1:-1])
    return float(np.max(interior) / scale) if scale > 0 else float(np.max(interior, initial=0.0))


def wave_z_residual(
    params: PhysicalParams,
    basis: SpectralBasis,
    traj: Trajectory,
    forcing: Optional[ForcingSpec] = None,
) -> float:
    """Relative residual of z_tt - (c^2 + delta/tau) Lap z - f + (delta/tau) Lap u.

    z_tt comes from central second differences of the stored z samples.
    """
    tau = params.tau
    if tau <= 0:
        raise ValueError("the z variable needs tau > 0")
    h = _uniform_step(traj.t)
    zt = z_transform(traj, tau)
    lam = basis.lambdas
    ztt = _second_derivative(zt.z, h)
    k = params.c**2 + params.delta / tau
    wave = -k * (-lam * zt.z)
    f = source_term(params, basis, traj, forcing)
    couple = (params.delta / tau) * (-lam * traj.u)
    resid = ztt + wave - f + couple
    return _relative(resid, ztt[1:-1], wave, f, couple)


def wave_z_memory_residual(
    params: PhysicalParams,
    basis: SpectralBasis,
    traj: Trajectory,
    forcing: Optional[ForcingSpec] = None,
) -> float:
    """Relative residual of the memory form in z alone:

    z_tt - (c^2 + delta/tau) Lap z + (delta/tau) e_tau * Lap z - f + delta e_tau Lap u(0).
    """
    tau = params.tau
    if tau <= 0:
        raise ValueError("the z variable needs tau > 0")
    h = _uniform_step(traj.t)
    zt = z_transform(traj, tau)
    lam = basis.lambdas
    ztt = _second_derivative(zt.z, h)
    k = params.c**2 + params.delta / tau
    wave = -k * (-lam * zt.z)
    mem = (params.delta / tau) * exponential_convolution(zt.t, -lam * zt.z, -lam * zt.zt, tau)
    kern = np.exp(-(traj.t - traj.t[0]) / tau) / tau
    init = params.delta * kern[:, None] * (-lam * traj.u[0])[None, :]
    f = source_term(params, basis, traj, forcing)
    resid = ztt + wave + mem - f + init
    return _relative(resid, ztt[1:-1], wave, mem, f, init)


# --- empirical small-data and per-frequency studies --------------------------


def sup_energy_ratio(params: PhysicalParams, basis: SpectralBasis, traj: Trajectory) -> float:
    """sup_t E(t) / E(0)."""
    E = energy_trace(params, basis, traj).energy
    return float(np.max(E) / E[0]) if E[0] > 0 else math.inf


def calibrate_small_data_energy(
    params: PhysicalParams,
    basis: SpectralBasis,
    shape,
    config,
    bound: float = 10.0,
    safety: float = 0.5,
    a_max: float = 10.0,
    iterations: int = 12,
):
    """Empirical small-data threshold for data a*shape (u1 = 0, consistent u2).

    Bisects on the amplitude for the largest a whose run over ``config``
    completes with sup E <= bound*E(0), then backs off by ``safety``.
    Returns (rho1, amplitude) where rho1 = E(0) at the backed-off amplitude.
    """
    from .timedomain import COMPLETED, simulate_ivp, consistent_utt

    shape = np.asarray(shape, dtype=float)
    zero = np.zeros_like(shape)

    def ok(a):
        try:
            traj = simulate_ivp(params, basis, (a * shape, zero), config=config)
        except Exception:
            return False
        return traj.termination == COMPLETED and sup_energy_ratio(params, basis, traj) <= bound

    lo, hi = 0.0, a_max
    if ok(hi):
        lo = hi
    else:
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
    a = safety * lo
    u2 = consistent_utt(params, basis, a * shape, zero)
    rho1, _ = energy(params, basis, ModalState(0.0, a * shape, zero, u2))
    return rho1, a


def fourier_mode_energy(params: PhysicalParams, xi: float, t, u, ut, utt):
    """|V|^2 = |tau u_tt + u_t|^2 + xi^2 |tau u_t + u|^2 + xi^2 |u_t|^2 for one wavenumber."""
    tau = params.tau
    return (tau * utt + ut) ** 2 + xi**2 * (tau * ut + u) ** 2 + xi**2 * ut**2


def measure_mode_decay_rates(params: PhysicalParams, xis, periods: int = 20, samples_per_period: int = 64):
    """Measured decay rate of |V|^2 for the linear Fourier ODE at each |xi|.

    Each wavenumber is propagated exactly (companion-matrix exponential) from
    u = 1, u_t = 0, u_tt = -c^2 xi^2 over ``periods`` oscillation periods
    2 pi/(c xi), but at least 50 tau, and log|V|^2 is fit by least squares
    after the first 10 tau (the relaxation transient).
    """
    import scipy.linalg

    from .stability import companion_matrix

    rates = []
    for xi in np.asarray(xis, dtype=float):
        if xi <= 0:
            raise ValueError("xi must be > 0")
        zeta = xi * xi
        period = 2 * math.pi / (params.c * xi)
        h = min(period / samples_per_period, params.tau / 4)
        n = int(math.ceil(max(periods * period, 50 * params.tau) / h))
        E = scipy.linalg.expm(h * companion_matrix(params, zeta))
        y = np.array([1.0, 0.0, -(params.c**2) * zeta])
        ys = np.empty((n + 1, 3))
        ys[0] = y
        for k in range(n):
            y = E @ y
            ys[k + 1] = y
        t = h * np.arange(n + 1)
        V = fourier_mode_energy(params, xi, t, ys[:, 0], ys[:, 1], ys[:, 2])
        rate, _ = fit_decay_rate(t, V, window=(10 * params.tau, t[-1]))
        rates.append(rate)
    return np.array(rates)


def basis_mode_decay_rates(params: PhysicalParams, basis: SpectralBasis, t_end: float, dt: float, save_every: int = 1):
    """Per-mode decay rates of |V|^2 from one linear run on ``basis``.

    Every mode starts from u = 1, u_t = 0 with the consistent u_tt; the
    modes decouple when eta = 0, so each coefficient is a Fourier-mode
    solution with |xi| = sqrt(lambda).  The fit skips the first 10 tau.
    Returns (xi, rates) ordered like the basis.
    """
    from .timedomain import SolverConfig, simulate_ivp

    if params.eta != 0:
        raise ValueError("per-mode rates need the linear equation (eta = 0)")
    if np.any(basis.lambdas <= 0):
        raise ValueError("the zero mode has no decay rate; build the basis without it")
    n = basis.size
    traj = simulate_ivp(params, basis, (np.ones(n), np.zeros(n)), config=SolverConfig(dt=dt, t_end=t_end, save_every=save_every))
    xi = np.sqrt(basis.lambdas)
    window = (10 * params.tau, traj.t[-1])
    rates = np.empty(n)
    for j in range(n):
        V = fourier_mode_energy(params, xi[j], traj.t, traj.u[:, j], traj.ut[:, j], traj.utt[:, j])
        rates[j] = fit_decay_rate(traj.t, V, window=window)[0]
    return xi, rates
