"""Time integration of the modal Galerkin JMGT-Westervelt system.

For tau > 0 the unknowns per mode are (u, u_t, u_tt) and

    tau*u_ttt = -u_tt - b*lam*u_t - c^2*lam*u - 2*eta*P[u*u_tt + u_t^2] - r_tt,

with P the L2 projection of grid products.  For tau = 0 the unknowns are
(u, u_t) and u_tt is recovered pointwise from
(1 + 2*eta*u) u_tt = c^2 Lap u + b Lap u_t - 2*eta*u_t^2 - r_tt.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .core import (
    ForcingSpec,
    ModalState,
    PhysicalParams,
    SpectralBasis,
    from_physical,
    linf_norm,
)
from .errors import DegeneracyError, NonConvergenceError
from .stability import characteristic_roots

log = logging.getLogger(__name__)

SCHEMES = ("exponential-imex", "rk4-explicit")
COMPLETED = "completed"
BLOWUP = "blowup-detected"
STEP_FAILURE = "step-failure"


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    scheme: str = "exponential-imex"
    dealias: bool = True
    blowup_threshold: Optional[float] = None  # None: 1e6 x initial L-inf norm
    newton_tol: float = 1e-12
    margin_min: float = 1e-3
    save_every: int = 1
    steady_tol: float = 1e-8
    max_periods: int = 400

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end must be >= dt, got t_end={self.t_end}, dt={self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.blowup_threshold is not None and not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be > 0")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled modal states; arrays have shape (n_samples, n_modes)."""

    t: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    utt: np.ndarray
    linf: np.ndarray
    termination: str = COMPLETED
    dt: float = 0.0
    tau: float = 0.0
    message: str = ""

    def __len__(self):
        return self.t.size

    def state(self, i: int) -> ModalState:
        return ModalState(self.t[i], self.u[i], self.ut[i], self.utt[i])

    @property
    def final(self) -> ModalState:
        return self.state(-1)


class _StepFailure(FloatingPointError):
    pass


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise _StepFailure("non-finite values in state")


class _ThirdOrderModel:
    """Semidiscrete tau > 0 system; state y has rows (u, u_t, u_tt)."""

    def __init__(self, params: PhysicalParams, basis: SpectralBasis, forcing: ForcingSpec):
        if params.tau <= 0:
            raise ValueError("third-order model needs tau > 0")
        self.p = params
        self.basis = basis
        self.forcing = forcing
        lam = basis.lambdas
        tau, c, b = params.tau, params.c, params.b
        self.lin = np.zeros((basis.size, 3, 3))
        self.lin[:, 0, 1] = 1.0
        self.lin[:, 1, 2] = 1.0
        self.lin[:, 2, 0] = -(c**2) * lam / tau
        self.lin[:, 2, 1] = -b * lam / tau
        self.lin[:, 2, 2] = -1.0 / tau

    def nonlinear(self, y, t):
        """Contribution of -eta*(u^2)_tt - r_tt to u_ttt (already divided by tau)."""
        n = self.basis.size
        out = -self.forcing.r_tt(t, n) / self.p.tau
        if self.p.eta != 0.0:
            phi = self.basis.phi
            u, ut, utt = phi @ y[0], phi @ y[1], phi @ y[2]
            _check_finite(u, ut, utt)
            out = out - (2.0 * self.p.eta / self.p.tau) * from_physical(u * utt + ut * ut, self.basis)
        return out

    def rhs(self, y, t):
        dutt = np.einsum("jb,bj->j", self.lin[:, 2, :], y) + self.nonlinear(y, t)
        return np.stack([y[1], y[2], dutt])

    def propagators(self, h):
        return np.stack([scipy.linalg.expm(h * A) for A in self.lin])

    def nonlinear_flow(self, y, t, h):
        """Exact flow over h of u_ttt = N(u, u_t, u_tt) with u, u_t frozen.

        Frozen (u, u_t) make the increment linear in u_tt,
        u_tt' = B u_tt + g with B = -(2 eta / tau) P[u * .], so one
        augmented matrix exponential integrates it.  The forcing enters
        at the midpoint.
        """
        n = self.basis.size
        tau, eta = self.p.tau, self.p.eta
        g = -self.forcing.r_tt(t + 0.5 * h, n) / tau
        if eta == 0.0:
            return np.stack([y[0], y[1], y[2] + h * g])
        phi, w = self.basis.phi, self.basis.weights
        u, ut = phi @ y[0], phi @ y[1]
        _check_finite(u, ut)
        g = g - (2.0 * eta / tau) * (phi.T @ (w * ut * ut))
        B = -(2.0 * eta / tau) * (phi.T @ ((w * u)[:, None] * phi))
        X = np.zeros((n + 1, n + 1))
        X[:n, :n] = h * B
        X[:n, n] = h * g
        E = scipy.linalg.expm(X)
        return np.stack([y[0], y[1], E[:n, :n] @ y[2] + E[:n, n]])


class _WesterveltModel:
    """Degenerate tau = 0 system; state y has rows (u, u_t)."""

    def __init__(self, params, basis, forcing, margin_min):
        if params.tau != 0:
            raise ValueError("Westervelt model needs tau = 0")
        self.p = params
        self.basis = basis
        self.forcing = forcing
        self.margin_min = margin_min
        lam = basis.lambdas
        self.lin = np.zeros((basis.size, 2, 2))
        self.lin[:, 0, 1] = 1.0
        self.lin[:, 1, 0] = -(params.c**2) * lam
        self.lin[:, 1, 1] = -params.b * lam

    def linear_acc(self, y):
        return np.einsum("jb,bj->j", self.lin[:, 1, :], y)

    def utt(self, y, t):
        n = self.basis.size
        L = self.linear_acc(y) - self.forcing.r_tt(t, n)
        if self.p.eta == 0.0:
            return L
        phi = self.basis.phi
        u, ut, Lx = phi @ y[0], phi @ y[1], phi @ L
        _check_finite(u, ut, Lx)
        coef = 1.0 + 2.0 * self.p.eta * u
        worst = float(np.min(coef))
        if worst <= self.margin_min:
            raise DegeneracyError(
                f"1 + 2*eta*u = {worst:.3e} <= margin {self.margin_min:g} at t = {t:.6g}"
            )
        return from_physical((Lx - 2.0 * self.p.eta * ut * ut) / coef, self.basis)

    def rhs(self, y, t):
        return np.stack([y[1], self.utt(y, t)])

    def propagators(self, h):
        return np.stack([scipy.linalg.expm(h * A) for A in self.lin])

    def nonlinear_flow(self, y, t, h):
        # u frozen; explicit midpoint on u_t' = utt(u, u_t) - linear part
        def incr(z, s):
            return self.utt(z, s) - self.linear_acc(z)

        k1 = incr(y, t)
        mid = np.stack([y[0], y[1] + 0.5 * h * k1])
        k2 = incr(mid, t + 0.5 * h)
        return np.stack([y[0], y[1] + h * k2])


def _rk4_bound(params: PhysicalParams, basis: SpectralBasis) -> float:
    """Largest |characteristic root| over the basis."""
    if params.tau > 0:
        zs = [basis.lambdas[0], basis.lambdas[-1]]
        return max(float(np.max(np.abs(characteristic_roots(params, z)))) for z in zs)
    lam = basis.lambdas[-1]
    return float(np.max(np.abs(np.roots([1.0, params.b * lam, params.c**2 * lam]))))


class _Stepper:
    def __init__(self, model, scheme: str, h: float):
        self.model = model
        self.scheme = scheme
        self.h = h
        self._half = None
        if scheme == "exponential-imex":
            self.E_half = model.propagators(0.5 * h)

    @property
    def half(self) -> "_Stepper":
        if self._half is None:
            self._half = _Stepper(self.model, self.scheme, 0.5 * self.h)
        return self._half

    def _apply(self, y):
        return np.einsum("jab,bj->aj", self.E_half, y)

    def step(self, y, t):
        # overflow near blow-up is expected; it surfaces as _StepFailure
        with np.errstate(over="ignore", invalid="ignore"):
            return self._step(y, t)

    def _step(self, y, t):
        h = self.h
        if self.scheme == "exponential-imex":
            y = self._apply(y)
            y = self.model.nonlinear_flow(y, t, h)
            y = self._apply(y)
        else:
            f = self.model.rhs
            k1 = f(y, t)
            k2 = f(y + 0.5 * h * k1, t + 0.5 * h)
            k3 = f(y + 0.5 * h * k2, t + 0.5 * h)
            k4 = f(y + h * k3, t + h)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_finite(y)
        return y


def _make_model(params, basis, forcing, config):
    if params.tau > 0:
        return _ThirdOrderModel(params, basis, forcing)
    return _WesterveltModel(params, basis, forcing, config.margin_min)


def _make_stepper(model, params, basis, config, h):
    if config.scheme == "rk4-explicit":
        bound = _rk4_bound(params, basis)
        if h * bound > 2.78:
            raise ValueError(
                f"rk4-explicit unstable: dt*max|root| = {h * bound:.3g} > 2.78; use dt < {2.78 / bound:.3g}"
            )
    return _Stepper(model, config.scheme, h)


def rhs(params: PhysicalParams, basis: SpectralBasis, state: ModalState, forcing: Optional[ForcingSpec] = None, t=None):
    """(du, dut, dutt) of the tau > 0 semidiscrete system at ``state``."""
    if params.tau <= 0:
        raise ValueError("rhs needs tau > 0; use simulate_westervelt_tau0 for tau = 0")
    model = _ThirdOrderModel(params, basis, forcing or ForcingSpec())
    y = np.stack([state.u, state.ut, state.utt])
    try:
        d = model.rhs(y, state.t if t is None else t)
    except _StepFailure as exc:
        raise FloatingPointError(str(exc)) from None
    return d[0], d[1], d[2]


def consistent_utt(params: PhysicalParams, basis: SpectralBasis, u0, u1, forcing: Optional[ForcingSpec] = None, t0=0.0):
    """u_tt from the tau = 0 relation at t0; the default third datum."""
    forcing = forcing or ForcingSpec()
    model = _WesterveltModel(params.replace(tau=0.0), basis, forcing, margin_min=0.0)
    return model.utt(np.stack([np.asarray(u0, float), np.asarray(u1, float)]), t0)


def _effective_steps(config: SolverConfig):
    n = int(math.ceil(config.t_end / config.dt - 1e-9))
    return n, config.t_end / n


MAX_REFINE = 30


def _refine(stepper, y, t, threshold, basis, depth=0):
    """Redo a failed step as two half steps, recursively, watching the threshold.

    Finite-time growth can overflow within one step; halving locates the
    threshold crossing instead of reporting a bare step failure.  Returns
    (y, t, crossed).
    """
    if depth >= MAX_REFINE or threshold is None:
        raise _StepFailure("non-finite values persist under step refinement")
    half = stepper.half
    for _ in range(2):
        try:
            y = half.step(y, t)
            t = t + half.h
        except _StepFailure:
            y, t, crossed = _refine(half, y, t, threshold, basis, depth + 1)
            if crossed:
                return y, t, True
            continue
        if linf_norm(y[0], basis) > threshold:
            return y, t, True
    return y, t, False


def _run(model, stepper, y0, t0, n_steps, config, basis, utt_of, threshold, tau):
    save = config.save_every
    ts, us, uts, utts, linfs = [], [], [], [], []

    def record(y, t):
        utt = utt_of(y, t)
        ts.append(t)
        us.append(y[0].copy())
        uts.append(y[1].copy())
        utts.append(utt)
        linfs.append(linf_norm(y[0], basis))

    y, t = y0, t0
    record(y, t)
    termination, message = COMPLETED, ""
    h = stepper.h
    for k in range(1, n_steps + 1):
        crossed = False
        try:
            y = stepper.step(y, t)
            t = t0 + k * h
        except _StepFailure:
            try:
                y, t_sub, crossed = _refine(stepper, y, t, threshold, basis)
            except _StepFailure as exc:
                termination, message = STEP_FAILURE, f"{exc} at t = {t + h:.6g}"
                break
            t = t_sub if crossed else t0 + k * h
        linf = linf_norm(y[0], basis)
        if threshold is not None and (crossed or linf > threshold):
            record(y, t)
            termination = BLOWUP
            message = f"L-inf norm {linf:.3e} exceeded {threshold:.3e} at t = {t:.6g}"
            break
        if k % save == 0 or k == n_steps:
            record(y, t)
    return Trajectory(
        t=np.array(ts),
        u=np.array(us),
        ut=np.array(uts),
        utt=np.array(utts),
        linf=np.array(linfs),
        termination=termination,
        dt=h,
        tau=tau,
        message=message,
    )


def _threshold(config: SolverConfig, u0, basis):
    if config.blowup_threshold is not None:
        return config.blowup_threshold
    linf0 = linf_norm(u0, basis)
    return 1e6 * linf0 if linf0 > 0 else 1e6


def simulate_ivp(
    params: PhysicalParams,
    basis: SpectralBasis,
    initial,
    forcing: Optional[ForcingSpec] = None,
    config: Optional[SolverConfig] = None,
) -> Trajectory:
    """Integrate from ``initial = (u0, u1[, u2])``; u2 defaults to the consistent value.

    tau = 0 is routed to :func:`simulate_westervelt_tau0`.
    """
    forcing = forcing or ForcingSpec()
    if config is None:
        raise ValueError("a SolverConfig is required")
    u0, u1 = (np.asarray(v, dtype=float) for v in initial[:2])
    if params.tau == 0:
        return simulate_westervelt_tau0(params, basis, (u0, u1), forcing, config)
    if len(initial) > 2 and initial[2] is not None:
        u2 = np.asarray(initial[2], dtype=float)
    else:
        u2 = consistent_utt(params, basis, u0, u1, forcing)
    n_steps, h = _effective_steps(config)
    model = _ThirdOrderModel(params, basis, forcing)
    stepper = _make_stepper(model, params, basis, config, h)
    y0 = np.stack([u0, u1, u2])
    return _run(model, stepper, y0, 0.0, n_steps, config, basis, lambda y, t: y[2].copy(), _threshold(config, u0, basis), params.tau)


def simulate_westervelt_tau0(
    params: PhysicalParams,
    basis: SpectralBasis,
    initial,
    forcing: Optional[ForcingSpec] = None,
    config: Optional[SolverConfig] = None,
) -> Trajectory:
    """Integrate (1 + 2 eta u) u_tt = c^2 Lap u + b Lap u_t - 2 eta u_t^2 - r_tt.

    Raises DegeneracyError once 1 + 2*eta*u drops to ``config.margin_min``.
    """
    if params.tau != 0:
        raise ValueError("simulate_westervelt_tau0 needs tau = 0")
    forcing = forcing or ForcingSpec()
    u0, u1 = (np.asarray(v, dtype=float) for v in initial[:2])
    n_steps, h = _effective_steps(config)
    model = _WesterveltModel(params, basis, forcing, config.margin_min)
    stepper = _make_stepper(model, params, basis, config, h)
    y0 = np.stack([u0, u1])
    return _run(model, stepper, y0, 0.0, n_steps, config, basis, model.utt, _threshold(config, u0, basis), 0.0)


@dataclass(frozen=True, eq=False)
class PeriodicResult:
    trajectory: Trajectory  # one period, uniform samples, endpoint excluded
    defect: float
    periods: int
    omega: float


def periodic_steady_state(
    params: PhysicalParams,
    basis: SpectralBasis,
    forcing: ForcingSpec,
    config: SolverConfig,
    steps_per_period: Optional[int] = None,
) -> PeriodicResult:
    """Integrate from rest until successive periods agree, then return the last one.

    The defect is max over the period of ||u(t+T) - u(t)||_{H1}, relative to
    max ||u||_{H1} over the period.  ``config.dt`` is rounded so that an
    integer number of steps spans a period.
    """
    if params.delta <= 0:
        raise NonConvergenceError(f"periodic steady state needs delta > 0, got {params.delta}")
    n = basis.size
    if forcing.kind == "none" or forcing.omega <= 0:
        T = config.t_end
        N = steps_per_period or max(4, int(round(T / config.dt)))
        zero = np.zeros((N, n))
        traj = Trajectory(
            t=np.arange(N) * (T / N), u=zero, ut=zero.copy(), utt=zero.copy(), linf=np.zeros(N), dt=T / N, tau=params.tau
        )
        return PeriodicResult(traj, 0.0, 0, 0.0)
    T = forcing.period
    N = steps_per_period or max(8, int(round(T / config.dt)))
    h = T / N
    model = _make_model(params, basis, forcing, config)
    stepper = _make_stepper(model, params, basis, config, h)
    y = np.stack([np.zeros(n), np.zeros(n), consistent_utt(params, basis, np.zeros(n), np.zeros(n), forcing)])
    if params.tau == 0:
        y = y[:2]
    lam = basis.lambdas
    prev = None
    defect = math.inf
    for period in range(1, config.max_periods + 1):
        t0 = (period - 1) * T
        block = np.empty((N,) + y.shape)
        for k in range(N):
            block[k] = y
            try:
                y = stepper.step(y, t0 + k * h)
            except _StepFailure as exc:
                raise NonConvergenceError(f"step failure in period {period}: {exc}") from None
        if prev is not None:
            h1_diff = np.sqrt(np.max(np.sum(lam * (block[:, 0] - prev[:, 0]) ** 2, axis=1)))
            h1_ref = np.sqrt(np.max(np.sum(lam * block[:, 0] ** 2, axis=1)))
            defect = h1_diff / h1_ref if h1_ref > 0 else 0.0
            if defect < config.steady_tol:
                break
        prev = block
    else:
        raise NonConvergenceError(
            f"no periodic steady state after {config.max_periods} periods (defect {defect:.3e})", last=prev
        )
    ts = t0 + np.arange(N) * h
    if params.tau > 0:
        utt = block[:, 2].copy()
    else:
        utt = np.array([model.utt(block[k], ts[k]) for k in range(N)])
    traj = Trajectory(
        t=ts,
        u=block[:, 0].copy(),
        ut=block[:, 1].copy(),
        utt=utt,
        linf=np.array([linf_norm(v, basis) for v in block[:, 0]]),
        dt=h,
        tau=params.tau,
    )
    log.debug("steady state after %d periods, defect %.3e", period, defect)
    return PeriodicResult(traj, float(defect), period, forcing.omega)
