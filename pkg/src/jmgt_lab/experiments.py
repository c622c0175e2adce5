"""Experiment drivers behind the CLI subcommands.

Each driver takes a RunConfig and returns an ExperimentResult holding
summary metrics and named tables (header + rows) ready for CSV output.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, expand_sweep
from .core import ForcingSpec, ModalState, PhysicalParams, SpectralBasis, build_basis, modal_norms
from .errors import ConfigError, DegeneracyError, JMGTError, NonConvergenceError
from .multiharmonic import harmonic_spectrum, solve_fixed_point
from .stability import classify_regime
from .timedomain import BLOWUP, COMPLETED, STEP_FAILURE, SolverConfig, periodic_steady_state, simulate_ivp

log = logging.getLogger(__name__)

STABILITY_HEADER = ("zeta", "m1", "m2", "m3", "re_s1", "im_s1", "re_s2", "im_s2", "re_s3", "im_s3", "regime")
TRAJECTORY_HEADER = ("t", "mode_index", "u", "ut", "utt")
NORMS_HEADER = ("t", "linf_u", "h1_u", "h2_u", "h1_ut", "h2_ut", "h1_utt", "energy")
ENERGY_HEADER = ("t", "energy", "comp1", "comp2", "comp3", "comp4", "linf")
ENID_HEADER = ("t", "enid_residual")
HARMONICS_HEADER = ("m", "mode_index", "abs_u", "arg_u")
ITERATIONS_HEADER = ("iter", "residual")
BLOWUP_HEADER = ("amplitude", "t_detect", "termination", "phase")
TAU_SWEEP_HEADER = ("tau", "err_l2h1", "w_part", "termination")


@dataclass
class Table:
    header: tuple
    rows: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    kind: str
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file stem -> Table
    failed: bool = False
    message: str = ""
    timings: dict = field(default_factory=dict)


# --- config -> library objects -------------------------------------------------


def physical_params(cfg: RunConfig) -> PhysicalParams:
    try:
        return PhysicalParams(cfg["physics.tau"], cfg["physics.c"], cfg["physics.b"], cfg["physics.eta"])
    except ValueError as exc:
        raise ConfigError(f"physics: {exc}") from None


def spectral_basis(cfg: RunConfig) -> SpectralBasis:
    try:
        return build_basis(
            cfg["basis.kind"],
            cfg["basis.lengths"],
            cfg["basis.modes"],
            dealias=cfg["solver.dealias"],
            zero_mode=cfg["basis.zero_mode"],
        )
    except ValueError as exc:
        raise ConfigError(f"basis: {exc}") from None


def solver_config(cfg: RunConfig, **overrides) -> SolverConfig:
    kwargs = dict(
        dt=cfg["solver.dt"],
        t_end=cfg["solver.t_end"],
        scheme=cfg["solver.scheme"],
        dealias=cfg["solver.dealias"],
        blowup_threshold=cfg["solver.blowup_threshold"],
        margin_min=cfg["solver.margin_min"],
        save_every=cfg["solver.save_every"],
        steady_tol=cfg["solver.steady_tol"],
        max_periods=cfg["solver.max_periods"],
    )
    kwargs.update(overrides)
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def forcing_spec(cfg: RunConfig, basis: SpectralBasis) -> ForcingSpec:
    if cfg["forcing.kind"] == "none":
        return ForcingSpec()
    amps = np.asarray(cfg["forcing.amplitude"], dtype=float)
    if amps.size > basis.size:
        raise ConfigError(f"forcing.amplitude: {amps.size} values for {basis.size} modes")
    if not cfg["forcing.omega"] > 0:
        raise ConfigError("forcing.omega: must be > 0 for modal-harmonic forcing")
    full = np.zeros(basis.size)
    full[: amps.size] = amps
    return ForcingSpec.single_frequency(cfg["forcing.omega"], full)


def initial_data(cfg: RunConfig, basis: SpectralBasis):
    """(u0, u1) from experiment.initial / experiment.amplitude; u1 = 0."""
    n = basis.size
    a = cfg["experiment.amplitude"]
    u0 = np.zeros(n)
    kind = cfg["experiment.initial"]
    if kind == "phi1":
        u0[0] = a
    elif kind == "random":
        rng = np.random.default_rng(cfg.seed)
        v = rng.standard_normal(n) / basis.lambdas
        norm = np.linalg.norm(v)
        u0 = a * v / norm if norm > 0 else v
    return u0, np.zeros(n)


# --- helpers ------------------------------------------------------------------


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _h1(lam, v) -> float:
    return float(np.sqrt(np.sum(lam * np.abs(v) ** 2)))


def _time_norm(t, values) -> float:
    """sqrt of the trapezoid integral of ``values`` (already squared norms)."""
    return float(math.sqrt(max(np.trapezoid(values, t), 0.0)))


def observed_orders(x, err) -> list:
    """Successive log-log slopes of err against x."""
    out = []
    for k in range(len(x) - 1):
        e0, e1 = err[k], err[k + 1]
        if e0 > 0 and e1 > 0 and x[k] != x[k + 1]:
            out.append(math.log(e0 / e1) / math.log(x[k] / x[k + 1]))
        else:
            out.append(math.nan)
    return out


def is_decreasing(values, jitter: float = 0.0) -> bool:
    """values[k+1] <= (1 + jitter) * values[k] for every k."""
    return all(values[k + 1] <= (1.0 + jitter) * values[k] for k in range(len(values) - 1))


# --- stability ----------------------------------------------------------------


def run_stability(cfg: RunConfig) -> ExperimentResult:
    params = physical_params(cfg)
    if params.tau <= 0:
        raise ConfigError("physics.tau: stability atlas needs tau > 0")
    if cfg["experiment.zeta_max"] is not None:
        n = cfg["experiment.zeta_samples"]
        zetas = cfg["experiment.zeta_max"] * np.arange(1, n + 1) / n
    else:
        zetas = spectral_basis(cfg).lambdas
    modes, verdict = classify_regime(params, zetas)
    table = Table(STABILITY_HEADER)
    for md in modes:
        row = [md.zeta, *md.minors]
        for s in md.roots:
            row += [float(s.real), float(s.imag)]
        row.append(md.regime)
        table.rows.append(row)
    worst = max(modes, key=lambda md: md.abscissa)
    metrics = {
        "delta": params.delta,
        "verdict": verdict,
        "max_abscissa": worst.abscissa,
        "max_abscissa_zeta": worst.zeta,
        "n_zeta": len(modes),
    }
    return ExperimentResult("stability", metrics, {"stability": table})


# --- simulate -----------------------------------------------------------------


def run_simulate(cfg: RunConfig) -> ExperimentResult:
    params = physical_params(cfg)
    basis = spectral_basis(cfg)
    forcing = forcing_spec(cfg, basis)
    config = solver_config(cfg)
    u0, u1 = initial_data(cfg, basis)
    traj = simulate_ivp(params, basis, (u0, u1), forcing, config)
    trace = dg.energy_trace(params, basis, traj)

    tables = {}
    rows = []
    for i in range(len(traj)):
        for j in range(basis.size):
            rows.append([traj.t[i], j, traj.u[i, j], traj.ut[i, j], traj.utt[i, j]])
    tables["trajectory"] = Table(TRAJECTORY_HEADER, rows)
    rows = []
    for i in range(len(traj)):
        nm = modal_norms(traj.state(i), basis)
        rows.append([traj.t[i], traj.linf[i], nm["h1_u"], nm["h2_u"], nm["h1_ut"], nm["h2_ut"], nm["h1_utt"], trace.energy[i]])
    tables["norms"] = Table(NORMS_HEADER, rows)
    tables["energy"] = Table(
        ENERGY_HEADER, [[trace.t[i], trace.energy[i], *trace.components[:, i], trace.linf[i]] for i in range(len(trace.t))]
    )

    metrics = {
        "termination": traj.termination,
        "t_final": float(traj.t[-1]),
        "samples": len(traj),
        "energy_initial": float(trace.energy[0]),
        "sup_energy_ratio": float(np.max(trace.energy) / trace.energy[0]) if trace.energy[0] > 0 else None,
    }
    if traj.termination == COMPLETED and len(traj) >= 4 and np.all(trace.energy > 0):
        rate, _ = dg.fit_decay_rate(trace, window=(0.5 * traj.t[-1], traj.t[-1]))
        metrics["decay_rate"] = rate
    threshold = config.blowup_threshold or (1e6 * traj.linf[0] if traj.linf[0] > 0 else 1e6)
    event = dg.detect_blowup(traj.t, traj.linf, threshold)
    metrics["t_detect"] = event.t_detect if event else None
    if params.tau > 0 and len(traj) >= 3 and traj.termination == COMPLETED:
        resid = dg.energy_identity_residual(params, basis, traj, forcing=forcing)
        tables["enid"] = Table(ENID_HEADER, [[traj.t[i], resid[i]] for i in range(len(traj))])
        metrics["enid_residual_max"] = float(np.max(resid))
    result = ExperimentResult("simulate", metrics, tables)
    if traj.termination == STEP_FAILURE:
        result.failed = True
        result.message = traj.message or "step failure"
    return result


# --- periodic -----------------------------------------------------------------


def run_periodic(cfg: RunConfig) -> ExperimentResult:
    params = physical_params(cfg)
    basis = spectral_basis(cfg)
    if cfg["forcing.kind"] != "modal-harmonic":
        raise ConfigError("forcing.kind: periodic experiment needs modal-harmonic forcing")
    forcing = forcing_spec(cfg, basis)
    config = solver_config(cfg)
    M = cfg["experiment.harmonics"]
    t0 = time.perf_counter()
    periodic = periodic_steady_state(params, basis, forcing, config)
    timings = {"time_domain_s": time.perf_counter() - t0}
    td = harmonic_spectrum(periodic.trajectory, M, omega=forcing.omega)
    lam = basis.lambdas
    td_norms = td.h1_norms(basis)

    tables = {"harmonics": Table(HARMONICS_HEADER, _harmonic_rows(td.coeffs))}
    metrics = {
        "periodicity_defect": periodic.defect,
        "periods": periodic.periods,
        "omega": forcing.omega,
        "harmonic_h1_norms": [float(v) for v in td_norms],
        "harmonic_ratio_2_1": float(td_norms[1] / td_norms[0]) if M > 1 and td_norms[0] > 0 else None,
    }
    if cfg["experiment.cross_validate"]:
        t0 = time.perf_counter()
        fd, report = solve_fixed_point(
            params, basis, forcing, forcing.omega, M=M, tol=cfg["experiment.fp_tol"], relaxation=cfg["experiment.relaxation"]
        )
        timings["fixed_point_s"] = time.perf_counter() - t0
        tables["harmonics_fixed_point"] = Table(HARMONICS_HEADER, _harmonic_rows(fd.coeffs))
        tables["iterations"] = Table(ITERATIONS_HEADER, [[it, res] for it, res in report.history])
        diffs = []
        for m in range(min(3, M)):
            ref = _h1(lam, fd.coeffs[m])
            d = _h1(lam, fd.coeffs[m] - td.coeffs[m])
            diffs.append(d / ref if ref > 0 else d)
        metrics.update(
            fixed_point_iterations=report.iterations,
            fixed_point_residual=report.residual,
            cross_validation_rel_h1=diffs,
        )
    return ExperimentResult("periodic", metrics, tables, timings=timings)


def _harmonic_rows(coeffs):
    rows = []
    for m in range(coeffs.shape[0]):
        for j in range(coeffs.shape[1]):
            c = complex(coeffs[m, j])
            rows.append([m + 1, j, abs(c), math.atan2(c.imag, c.real)])
    return rows


# --- blow-up sweep ------------------------------------------------------------


def _blowup_member(args):
    params, basis, config, amplitude = args
    u0 = np.zeros(basis.size)
    u0[0] = amplitude
    try:
        traj = simulate_ivp(params, basis, (u0, np.zeros(basis.size)), config=config)
    except DegeneracyError:
        return amplitude, math.nan, "degenerate"
    threshold = config.blowup_threshold or 1e6 * max(traj.linf[0], 1e-300)
    event = dg.detect_blowup(traj.t, traj.linf, threshold)
    if event is not None:
        return amplitude, event.t_detect, BLOWUP
    return amplitude, math.nan, traj.termination


def _blew_up(termination: str) -> bool:
    return termination in (BLOWUP, STEP_FAILURE, "degenerate")


def run_blowup_sweep(cfg: RunConfig, workers: int = 1) -> ExperimentResult:
    """Geometric amplitude scan of a*phi_1, then bisection of the first bracket."""
    params = physical_params(cfg)
    basis = spectral_basis(cfg)
    config = solver_config(cfg)
    a_min, a_max = cfg["experiment.a_min"], cfg["experiment.a_max"]
    npts = cfg["experiment.scan_points"]
    ratio = cfg["experiment.bracket_ratio"]
    scan = np.geomspace(a_min, a_max, npts)
    if params.eta == 0:
        # linear dynamics cannot blow up; the scan is still run as a control
        log.info("eta = 0: blow-up sweep is a linear control")
    results = _map(_blowup_member, [(params, basis, config, float(a)) for a in scan], workers)
    table = Table(BLOWUP_HEADER, [[a, td, term, "scan"] for a, td, term in results])

    first = next((k for k, r in enumerate(results) if _blew_up(r[2])), None)
    metrics = {"inconclusive": first is None, "a_safe": None, "a_blow": None, "bracket_ratio": None}
    if first is not None and first == 0:
        metrics["message"] = "blow-up at the smallest scanned amplitude; lower experiment.a_min"
        metrics["inconclusive"] = True
    elif first is not None:
        lo, hi = float(scan[first - 1]), float(scan[first])
        while hi / lo > ratio:
            mid = math.sqrt(lo * hi)
            a, td, term = _blowup_member((params, basis, config, mid))
            table.rows.append([a, td, term, "bisect"])
            if _blew_up(term):
                hi = mid
            else:
                lo = mid
        metrics.update(a_safe=lo, a_blow=hi, bracket_ratio=hi / lo)
    detect = [(r[0], r[1]) for r in results if r[2] == BLOWUP and np.isfinite(r[1])]
    metrics["t_detect_decreasing"] = is_decreasing([td for _, td in detect]) if len(detect) >= 2 else None
    metrics["scan_blowups"] = len(detect)
    return ExperimentResult("blowup-sweep", metrics, {"blowup_sweep": table})


# --- tau -> 0 sweep -----------------------------------------------------------


def default_tau_values():
    return tuple(2.0**-k for k in range(2, 11))


def _tau_member(args):
    params, basis, forcing, config, u0, u1 = args
    try:
        traj = simulate_ivp(params, basis, (u0, u1), forcing, config)
    except JMGTError as exc:
        raise JMGTError(f"tau={params.tau!r}: {exc}") from None
    except ValueError as exc:
        raise JMGTError(f"tau={params.tau!r}: {exc}") from None
    if traj.termination != COMPLETED:
        raise JMGTError(f"tau={params.tau!r}: run ended with {traj.termination} at t={traj.t[-1]:.6g}")
    return traj


def tau_sweep_norms(basis: SpectralBasis, traj, reference):
    """(||u - u_ref||_{L2(0,T;H1)}, ||u||_{H1(0,T;H2)}) on the common time grid."""
    lam = basis.lambdas
    if traj.t.shape != reference.t.shape or not np.allclose(traj.t, reference.t):
        raise ValueError("trajectories must share a time grid")
    diff = traj.u - reference.u
    err = _time_norm(traj.t, np.sum(lam * diff**2, axis=1))
    w = _time_norm(traj.t, np.sum(lam**2 * (traj.u**2 + traj.ut**2), axis=1))
    return err, w


def run_tau_sweep(cfg: RunConfig, workers: int = 1) -> ExperimentResult:
    base = physical_params(cfg)
    basis = spectral_basis(cfg)
    forcing = forcing_spec(cfg, basis)
    config = solver_config(cfg)
    sweep = cfg.sweep
    if sweep is not None and sweep[0] != "physics.tau":
        raise ConfigError(f"sweep.parameter: tau-sweep varies physics.tau, not {sweep[0]}")
    taus = tuple(sweep[1]) if sweep is not None else default_tau_values()
    taus = tuple(sorted(taus, reverse=True))
    for tau in taus:
        if not tau > 0:
            raise ConfigError(f"sweep.values: tau must be > 0 (got {tau!r})")
        if base.b - tau * base.c**2 <= 0:
            raise ConfigError(f"sweep.values: tau={tau!r} gives delta <= 0")
    u0, u1 = initial_data(cfg, basis)
    members = [(base.replace(tau=tau), basis, forcing, config, u0, u1) for tau in (0.0,) + taus]
    trajs = _map(_tau_member, members, workers)
    reference = trajs[0]
    table = Table(TAU_SWEEP_HEADER)
    errs, ws = [], []
    for tau, traj in zip(taus, trajs[1:]):
        err, w = tau_sweep_norms(basis, traj, reference)
        errs.append(err)
        ws.append(w)
        table.rows.append([tau, err, w, traj.termination])
    metrics = {
        "taus": list(taus),
        "err_l2h1": errs,
        "w_part": ws,
        "observed_orders": observed_orders(taus, errs),
        "err_decreasing_10pct": is_decreasing(errs, 0.1),
        "w_part_bound_ratio": max(ws) / ws[0] if ws[0] > 0 else None,
    }
    return ExperimentResult("tau-sweep", metrics, {"tau_sweep": table})


# --- dispatch -----------------------------------------------------------------

RUNNERS = {
    "stability": run_stability,
    "simulate": run_simulate,
    "periodic": run_periodic,
    "blowup-sweep": run_blowup_sweep,
    "tau-sweep": run_tau_sweep,
}


def _run_one(cfg: RunConfig, workers: int = 1) -> ExperimentResult:
    runner = RUNNERS[cfg.kind]
    t0 = time.perf_counter()
    if cfg.kind in ("blowup-sweep", "tau-sweep"):
        result = runner(cfg, workers=workers)
    else:
        result = runner(cfg)
    result.timings["wall_s"] = time.perf_counter() - t0
    return result


def _run_member(cfg: RunConfig) -> ExperimentResult:
    return _run_one(cfg, 1)


def run_experiment(cfg: RunConfig, workers: int = 1) -> list:
    """Run the configured experiment; a sweep (other than tau-sweep) yields one result per value."""
    if cfg.kind == "tau-sweep" or cfg.sweep is None:
        return [_run_one(cfg, workers)]
    return _map(_run_member, expand_sweep(cfg), workers)
