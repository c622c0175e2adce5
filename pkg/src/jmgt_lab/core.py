"""Physical parameters, eigenfunction bases, modal states and norms.

Every field is stored through its coefficients in an L2-orthonormal basis of
eigenfunctions of -Laplace (Dirichlet interval/rectangle/box, or a periodic
torus).  Nonlinear products are formed on a quadrature grid and projected
back; with ``dealias=True`` the grid integrates products of four basis
functions to machine precision.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

BASIS_KINDS = ("dirichlet-interval", "dirichlet-rectangle", "torus")
FORCING_KINDS = ("none", "modal-harmonic", "custom-samples")


@dataclass(frozen=True)
class PhysicalParams:
    """Coefficients of tau*u_ttt + u_tt - c^2 Lap u - b Lap u_t = -eta (u^2)_tt."""

    tau: float
    c: float
    b: float
    eta: float = 0.0

    def __post_init__(self):
        for name in ("tau", "c", "b", "eta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")

    @property
    def delta(self) -> float:
        """Damping margin b - tau*c^2 (always recomputed)."""
        return self.b - self.tau * self.c**2

    def replace(self, **changes) -> "PhysicalParams":
        values = dict(tau=self.tau, c=self.c, b=self.b, eta=self.eta)
        values.update(changes)
        return PhysicalParams(**values)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Analytic eigenpairs of -Laplace on a separable domain plus a quadrature grid.

    ``lambdas`` are sorted ascending.  ``phi`` holds basis function values at
    the grid nodes (shape ``(n_points, n_modes)``) and ``weights`` the
    quadrature weights, so that ``phi.T @ (weights * f)`` is the L2
    projection of grid samples ``f``.
    """

    kind: str
    lengths: tuple
    n_modes: tuple
    lambdas: np.ndarray
    wavenumbers: np.ndarray  # integer multi-index per mode, shape (n, d)
    parity: np.ndarray  # torus: 0 const, 1 cos, 2 sin; Dirichlet: 2
    grid: np.ndarray  # (n_points, d)
    weights: np.ndarray
    phi: np.ndarray
    dealias: bool = True
    zero_mode: bool = False

    @property
    def size(self) -> int:
        return int(self.lambdas.size)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas[0])

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def poincare_constant(self) -> float:
        """C(Omega) = 1/sqrt(lambda_min) in ||grad v|| <= C ||Lap v||."""
        if self.lambda_min <= 0:
            return math.inf
        return 1.0 / math.sqrt(self.lambda_min)


def _gauss_legendre(n_points: int, length: float):
    nodes, weights = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * length * (nodes + 1.0), 0.5 * length * weights


def _axis_grid(kind: str, length: float, n: int, dealias: bool):
    if kind == "torus":
        # trapezoid on a full period is exact for trig degree < n_points
        n_points = 4 * n + 1 if dealias else 2 * n + 1
        x = length * np.arange(n_points) / n_points
        return x, np.full(n_points, length / n_points)
    if dealias:
        # sin(4*n*pi*x/L) must be resolved; Legendre coefficients of sin(k x)
        # die off once the degree passes k, 40 extra degrees buy machine precision
        n_points = int(math.ceil((4 * n * math.pi / 2 + 40) / 2))
    else:
        n_points = n + 1
    return _gauss_legendre(n_points, length)


def _axis_values(kind: str, length: float, k: int, parity: int, x: np.ndarray):
    if kind == "torus":
        arg = 2.0 * math.pi * k * x / length
        if parity == 0:
            return np.full_like(x, 1.0 / math.sqrt(length))
        scale = math.sqrt(2.0 / length)
        return scale * (np.cos(arg) if parity == 1 else np.sin(arg))
    return math.sqrt(2.0 / length) * np.sin(k * math.pi * x / length)


def _torus_modes(n_modes: Sequence[int], zero_mode: bool):
    """Half-lattice representatives k (first nonzero component > 0) with cos/sin."""
    modes = []
    ranges = [range(-n, n + 1) for n in n_modes]
    for k in itertools.product(*ranges):
        nonzero = [v for v in k if v != 0]
        if not nonzero:
            if zero_mode:
                modes.append((k, 0))
            continue
        if nonzero[0] < 0:
            continue
        modes.append((k, 1))
        modes.append((k, 2))
    return modes


def build_basis(
    kind: str,
    lengths: Sequence[float] | float,
    n_modes: Sequence[int] | int,
    *,
    dealias: bool = True,
    zero_mode: bool = False,
) -> SpectralBasis:
    """Build the eigenbasis of -Laplace for ``kind`` on a box of edge ``lengths``.

    >>> build_basis("dirichlet-interval", math.pi, 4).lambdas
    array([ 1.,  4.,  9., 16.])
    """
    if kind not in BASIS_KINDS:
        raise ValueError(f"unsupported basis kind {kind!r}; expected one of {BASIS_KINDS}")
    lengths = tuple(float(v) for v in np.atleast_1d(lengths))
    n_modes = tuple(int(v) for v in np.atleast_1d(n_modes))
    if kind == "dirichlet-interval" and len(lengths) != 1:
        raise ValueError("dirichlet-interval takes exactly one length")
    if len(n_modes) == 1 and len(lengths) > 1:
        n_modes = n_modes * len(lengths)
    if len(n_modes) != len(lengths):
        raise ValueError(f"{len(lengths)} lengths but {len(n_modes)} mode counts")
    d = len(lengths)
    if d > 3:
        raise ValueError(f"dimension {d} > 3 is not supported")
    if any(L <= 0 or not math.isfinite(L) for L in lengths):
        raise ValueError(f"edge lengths must be positive, got {lengths}")
    if any(n < 1 for n in n_modes):
        raise ValueError(f"need at least one mode per axis, got {n_modes}")
    if zero_mode and kind != "torus":
        raise ValueError("zero_mode is only meaningful on the torus")

    if kind == "torus":
        modes = _torus_modes(n_modes, zero_mode)
        lam = [sum((2 * math.pi * ka / La) ** 2 for ka, La in zip(k, lengths)) for k, _ in modes]
    else:
        modes = [(k, 2) for k in itertools.product(*[range(1, n + 1) for n in n_modes])]
        lam = [sum((ka * math.pi / La) ** 2 for ka, La in zip(k, lengths)) for k, _ in modes]
    # stable sort keeps enumeration order among degenerate eigenvalues
    order = np.argsort(np.asarray(lam), kind="stable")
    modes = [modes[i] for i in order]
    lambdas = np.asarray(lam, dtype=float)[order]

    axes = [_axis_grid(kind, La, n, dealias) for La, n in zip(lengths, n_modes)]
    mesh = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*[w for _, w in axes], indexing="ij")
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=1), axis=1)

    phi = np.ones((grid.shape[0], len(modes)))
    for j, (k, par) in enumerate(modes):
        if kind == "torus" and par != 0:
            # cos/sin of the full phase k.x, not a tensor product
            phase = sum(2 * math.pi * ka * grid[:, a] / lengths[a] for a, ka in enumerate(k))
            scale = math.sqrt(2.0 / np.prod(lengths))
            phi[:, j] = scale * (np.cos(phase) if par == 1 else np.sin(phase))
        else:
            for a, ka in enumerate(k):
                phi[:, j] *= _axis_values(kind, lengths[a], ka, par, grid[:, a])

    for arr in (lambdas, grid, weights, phi):
        arr.setflags(write=False)
    wavenumbers = np.array([k for k, _ in modes], dtype=int).reshape(len(modes), d)
    parity = np.array([p for _, p in modes], dtype=int)
    return SpectralBasis(
        kind=kind,
        lengths=lengths,
        n_modes=n_modes,
        lambdas=lambdas,
        wavenumbers=wavenumbers,
        parity=parity,
        grid=grid,
        weights=weights,
        phi=phi,
        dealias=dealias,
        zero_mode=zero_mode,
    )


def to_physical(coeffs, basis: SpectralBasis) -> np.ndarray:
    """Evaluate modal coefficients on the quadrature grid.

    ``coeffs`` has the mode axis first; trailing axes (and complex values)
    are carried through.
    """
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != basis.size:
        raise ValueError(f"coefficient length {coeffs.shape[0]} does not match basis size {basis.size}")
    return np.tensordot(basis.phi, coeffs, axes=(1, 0))


def from_physical(samples, basis: SpectralBasis) -> np.ndarray:
    """L2-project grid samples onto the basis (quadrature inner products)."""
    samples = np.asarray(samples)
    if samples.shape[0] != basis.grid.shape[0]:
        raise ValueError(f"sample count {samples.shape[0]} does not match grid size {basis.grid.shape[0]}")
    w = basis.weights.reshape((-1,) + (1,) * (samples.ndim - 1))
    return np.tensordot(basis.phi, w * samples, axes=(0, 0))


def project_product(a, b, basis: SpectralBasis) -> np.ndarray:
    """Modal coefficients of the projected pointwise product a*b."""
    return from_physical(to_physical(a, basis) * to_physical(b, basis), basis)


def laplacian(v, basis: SpectralBasis) -> np.ndarray:
    """Modal Laplacian: multiplication by -lambda_j."""
    v = np.asarray(v)
    lam = basis.lambdas.reshape((-1,) + (1,) * (v.ndim - 1))
    return -lam * v


def linf_norm(v, basis: SpectralBasis) -> float:
    """Max |u| over the quadrature grid (a proxy for the true sup norm)."""
    return float(np.max(np.abs(to_physical(v, basis)))) if basis.size else 0.0


def exact_product_tensor(basis: SpectralBasis) -> np.ndarray:
    """T[i, j, k] = integral of phi_i*phi_j*phi_k, in closed form.

    Dirichlet kinds only (products of sines); used as an independent check of
    the quadrature path, so it is limited to small bases.
    """
    if basis.kind == "torus":
        raise ValueError("exact product tensor is implemented for Dirichlet bases only")
    if basis.size > 16 ** basis.dim and basis.size > 64:
        raise ValueError("exact product tensor is meant for small bases")

    def sine_integral(m):
        # integral_0^pi sin(m s) ds for integer m
        m = np.asarray(m)
        out = np.zeros(m.shape)
        odd = (m % 2) != 0
        out[odd] = 2.0 / m[odd]
        return out

    n = basis.size
    T = np.ones((n, n, n))
    for a, L in enumerate(basis.lengths):
        k = basis.wavenumbers[:, a]
        i, j, l = np.meshgrid(k, k, k, indexing="ij")
        # sin i sin j sin l = (sin(i+j-l) + sin(-i+j+l) + sin(i-j+l) - sin(i+j+l)) / 4
        s = (
            sine_integral(i + j - l)
            + sine_integral(-i + j + l)
            + sine_integral(i - j + l)
            - sine_integral(i + j + l)
        ) / 4.0
        T *= (2.0 / L) ** 1.5 * (L / math.pi) * s
    return T


@dataclass(frozen=True, eq=False)
class ModalState:
    """Coefficients of (u, u_t, u_tt) at time t."""

    t: float
    u: np.ndarray
    ut: np.ndarray
    utt: np.ndarray

    def __post_init__(self):
        arrays = [np.array(getattr(self, k), dtype=float) for k in ("u", "ut", "utt")]
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape) or arrays[0].ndim != 1:
            raise ValueError("u, ut and utt must be 1-d vectors of identical length")
        for key, arr in zip(("u", "ut", "utt"), arrays):
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def zeros(cls, n: int, t: float = 0.0) -> "ModalState":
        return cls(t, np.zeros(n), np.zeros(n), np.zeros(n))

    @property
    def size(self) -> int:
        return self.u.size


def modal_norms(state: ModalState, basis: SpectralBasis) -> dict:
    """Spectral norms: ||grad v||^2 = sum lambda v^2, ||Lap v||^2 = sum lambda^2 v^2."""
    lam = basis.lambdas
    if state.size != basis.size:
        raise ValueError("state does not match basis")
    return {
        "l2_u": float(np.sqrt(np.sum(state.u**2))),
        "h1_u": float(np.sqrt(np.sum(lam * state.u**2))),
        "h2_u": float(np.sqrt(np.sum(lam**2 * state.u**2))),
        "h1_ut": float(np.sqrt(np.sum(lam * state.ut**2))),
        "h2_ut": float(np.sqrt(np.sum(lam**2 * state.ut**2))),
        "h1_utt": float(np.sqrt(np.sum(lam * state.utt**2))),
    }


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Excitation r(x, t); the PDE sees -r_tt.

    modal-harmonic: r = Re sum_m rhat[m-1] exp(i m omega t), ``rhat`` of shape
    (M_r, n_modes).  custom-samples: ``samples`` holds r_tt modal values at
    ``sample_times`` over one period 2*pi/omega, interpolated linearly.
    """

    kind: str = "none"
    omega: float = 0.0
    rhat: Optional[np.ndarray] = None
    sample_times: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "modal-harmonic":
            rhat = np.atleast_2d(np.asarray(self.rhat, dtype=complex))
            rhat.setflags(write=False)
            object.__setattr__(self, "rhat", rhat)
            if not self.omega > 0:
                raise ValueError("modal-harmonic forcing needs omega > 0")
        if self.kind == "custom-samples":
            if self.sample_times is None or self.samples is None:
                raise ValueError("custom-samples forcing needs sample_times and samples")
            if not self.omega > 0:
                raise ValueError("custom-samples forcing needs omega > 0")

    @classmethod
    def single_frequency(cls, omega: float, amplitudes) -> "ForcingSpec":
        return cls("modal-harmonic", float(omega), np.asarray(amplitudes, dtype=complex)[None, :])

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega if self.omega > 0 else math.inf

    def r_tt(self, t: float, n: int) -> np.ndarray:
        """Modal coefficients of r_tt at time t."""
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "modal-harmonic":
            m = np.arange(1, self.rhat.shape[0] + 1)
            phase = np.exp(1j * m * self.omega * t)
            return np.real(((-(m * self.omega) ** 2) * phase) @ self.rhat)
        tt = np.mod(t, self.period)
        times = np.append(self.sample_times, self.period)
        values = np.vstack([self.samples, self.samples[:1]])
        return np.array([np.interp(tt, times, values[:, j]) for j in range(values.shape[1])])

    def harmonics(self, M: int, n: int) -> np.ndarray:
        """rhat_m for m = 1..M (zero-padded), shape (M, n)."""
        out = np.zeros((M, n), dtype=complex)
        if self.kind == "modal-harmonic":
            k = min(M, self.rhat.shape[0])
            out[:k] = self.rhat[:k]
        elif self.kind == "custom-samples":
            samples = np.asarray(self.samples)
            N = samples.shape[0]
            spectrum = 2.0 * np.fft.fft(samples, axis=0) / N
            for m in range(1, min(M, N // 2) + 1):
                out[m - 1] = spectrum[m] / (-((m * self.omega) ** 2))
        return out
