import math

import numpy as np
import pytest

from jmgt_lab.core import ForcingSpec, ModalState, PhysicalParams, build_basis, project_product
from jmgt_lab.errors import DegeneracyError, NonConvergenceError
from jmgt_lab.timedomain import (
    BLOWUP,
    COMPLETED,
    SolverConfig,
    consistent_utt,
    periodic_steady_state,
    rhs,
    simulate_ivp,
    simulate_westervelt_tau0,
)

from oracles import analytic_mode, analytic_mode_tau0, dense_quadratic

P = PhysicalParams(0.1, 1.0, 0.2)


def test_rhs_zero_state():
    basis = build_basis("dirichlet-interval", math.pi, 4)
    d = rhs(P.replace(eta=1.0), basis, ModalState.zeros(4))
    assert all(np.all(v == 0) for v in d)


def test_rhs_linear_single_mode():
    basis = build_basis("dirichlet-interval", math.pi, 4)
    u, ut, utt = np.array([0, 0.3, 0, 0]), np.array([0, -0.2, 0, 0]), np.array([0, 0.5, 0, 0])
    _, _, dutt = rhs(P, basis, ModalState(0, u, ut, utt))
    lam = 4.0
    expected = (-0.5 - P.b * lam * -0.2 - P.c**2 * lam * 0.3) / P.tau
    assert dutt[1] == pytest.approx(expected)
    assert np.all(dutt[[0, 2, 3]] == 0)


def test_rhs_nonlinear_against_dense_convolution():
    basis = build_basis("dirichlet-interval", math.pi, 4)
    p = P.replace(eta=0.7)
    e1 = np.eye(4)[0]
    _, _, dutt = rhs(p, basis, ModalState(0, e1, e1, np.zeros(4)))
    lin = -P.b * 1.0 * e1 - P.c**2 * 1.0 * e1
    # (u^2)_tt = 2 (u utt + ut^2) = 2 ut^2 here
    conv = dense_quadratic(math.pi, range(1, 5), e1, e1, n_quad=20000)
    expected = (lin - 2 * p.eta * conv) / p.tau
    assert np.max(np.abs(dutt - expected)) < 1e-10 * max(1, np.max(np.abs(expected))) + 1e-8


def test_consistent_utt_linear():
    basis = build_basis("dirichlet-interval", math.pi, 3)
    u0, u1 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    u2 = consistent_utt(P, basis, u0, u1)
    assert np.allclose(u2, -P.c**2 * basis.lambdas * u0 - P.b * basis.lambdas * u1)


@pytest.mark.parametrize("u0,u1", [(1.0, 0.0), (0.0, 1.0), (0.3, -0.7)])
def test_linear_single_mode_matches_analytic(u0, u1):
    basis = build_basis("dirichlet-interval", math.pi, 3)
    lam = basis.lambdas[1]
    init = (np.array([0, u0, 0]), np.array([0, u1, 0]))
    traj = simulate_ivp(P, basis, init, config=SolverConfig(dt=1e-2, t_end=5.0))
    u2 = traj.utt[0, 1]
    ua, uta, utta = analytic_mode(P.tau, P.c, P.b, lam, u0, u1, u2, traj.t)
    scale = np.max(np.abs(ua))
    assert np.max(np.abs(traj.u[:, 1] - ua)) < 1e-10 * scale
    assert np.max(np.abs(traj.ut[:, 1] - uta)) < 1e-9 * np.max(np.abs(uta))
    assert np.all(traj.u[:, [0, 2]] == 0)


def test_zero_data_stays_zero():
    basis = build_basis("dirichlet-interval", math.pi, 4)
    z = np.zeros(4)
    for scheme, dt in (("exponential-imex", 1e-2), ("rk4-explicit", 1e-3)):
        traj = simulate_ivp(P.replace(eta=1.0), basis, (z, z), config=SolverConfig(dt=dt, t_end=0.5, scheme=scheme))
        assert np.all(traj.u == 0) and traj.termination == COMPLETED


def test_rk4_and_imex_converge_to_each_other():
    basis = build_basis("dirichlet-interval", math.pi, 4)
    p = P.replace(eta=1.0)
    init = (np.array([0.1, 0.05, 0, 0]), np.zeros(4))
    ref = simulate_ivp(p, basis, init, config=SolverConfig(dt=2.5e-4, t_end=1.0, scheme="rk4-explicit")).final.u
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        u = simulate_ivp(p, basis, init, config=SolverConfig(dt=dt, t_end=1.0)).final.u
        errs.append(np.linalg.norm(u - ref))
    assert errs[0] > errs[1] > errs[2]
    # second-order splitting
    assert math.log2(errs[0] / errs[1]) > 1.8 and math.log2(errs[1] / errs[2]) > 1.8


def test_rk4_stability_guard():
    basis = build_basis("dirichlet-interval", math.pi, 8)
    with pytest.raises(ValueError, match="rk4-explicit"):
        simulate_ivp(P, basis, (np.ones(8), np.zeros(8)), config=SolverConfig(dt=0.5, t_end=1.0, scheme="rk4-explicit"))


def test_linear_energy_decays():
    from jmgt_lab.diagnostics import energy_trace

    basis = build_basis("dirichlet-interval", math.pi, 8)
    rng = np.random.default_rng(2)
    traj = simulate_ivp(P, basis, (rng.standard_normal(8) / basis.lambdas, np.zeros(8)), config=SolverConfig(dt=1e-2, t_end=20))
    E = energy_trace(P, basis, traj).energy
    assert traj.termination == COMPLETED
    # envelope: the max over later windows shrinks
    windows = np.array_split(E, 10)
    peaks = [w.max() for w in windows]
    assert all(b < a for a, b in zip(peaks, peaks[1:]))


def test_small_data_stays_bounded():
    from jmgt_lab.diagnostics import sup_energy_ratio

    basis = build_basis("dirichlet-interval", math.pi, 8)
    p = P.replace(eta=1.0)
    u0 = np.zeros(8)
    u0[0] = 1e-3
    traj = simulate_ivp(p, basis, (u0, np.zeros(8)), config=SolverConfig(dt=1e-2, t_end=20))
    assert traj.termination == COMPLETED
    assert sup_energy_ratio(p, basis, traj) < 10


def test_large_data_blows_up():
    basis = build_basis("dirichlet-interval", math.pi, 8)
    p = P.replace(eta=1.0)
    u0 = np.zeros(8)
    u0[0] = 1.0
    traj = simulate_ivp(p, basis, (u0, np.zeros(8)), config=SolverConfig(dt=1e-3, t_end=12, save_every=10))
    assert traj.termination == BLOWUP
    assert traj.t[-1] < 12


def test_save_every_subsamples():
    basis = build_basis("dirichlet-interval", math.pi, 2)
    traj = simulate_ivp(P, basis, (np.array([1.0, 0]), np.zeros(2)), config=SolverConfig(dt=0.01, t_end=1.0, save_every=10))
    assert len(traj) == 11 and traj.t[-1] == pytest.approx(1.0)


def test_tau0_linear_matches_two_by_two_oracle():
    basis = build_basis("dirichlet-interval", math.pi, 3)
    p = PhysicalParams(0.0, 1.0, 0.2)
    traj = simulate_westervelt_tau0(p, basis, (np.array([0, 0, 0.4]), np.array([0, 0, 0.1])), config=SolverConfig(dt=1e-2, t_end=5))
    ua, uta = analytic_mode_tau0(p.c, p.b, 9.0, 0.4, 0.1, traj.t)
    assert np.max(np.abs(traj.u[:, 2] - ua)) < 1e-10
    assert np.max(np.abs(traj.ut[:, 2] - uta)) < 1e-10


def test_tau0_zero_and_routing():
    basis = build_basis("dirichlet-interval", math.pi, 3)
    p = PhysicalParams(0.0, 1.0, 0.2, 1.0)
    z = np.zeros(3)
    traj = simulate_ivp(p, basis, (z, z), config=SolverConfig(dt=1e-2, t_end=1))
    assert np.all(traj.u == 0)


def test_tau0_degeneracy():
    basis = build_basis("dirichlet-interval", math.pi, 3)
    p = PhysicalParams(0.0, 1.0, 0.2, 1.0)
    u0 = np.array([-2.0, 0, 0])
    with pytest.raises(DegeneracyError):
        simulate_westervelt_tau0(p, basis, (u0, np.zeros(3)), config=SolverConfig(dt=1e-2, t_end=1))


def test_periodic_zero_forcing():
    basis = build_basis("dirichlet-interval", math.pi, 3)
    res = periodic_steady_state(P, basis, ForcingSpec(), SolverConfig(dt=0.01, t_end=1.0))
    assert res.defect == 0.0 and np.all(res.trajectory.u == 0)


def test_periodic_linear_is_single_frequency():
    from jmgt_lab.multiharmonic import harmonic_spectrum

    basis = build_basis("dirichlet-interval", math.pi, 4)
    p = PhysicalParams(0.1, 1.0, 0.5)
    forcing = ForcingSpec.single_frequency(2.0, [0.3, 0, 0, 0])
    res = periodic_steady_state(p, basis, forcing, SolverConfig(dt=1e-2, t_end=1.0, steady_tol=1e-12))
    fld = harmonic_spectrum(res.trajectory, 4, omega=2.0)
    h1 = fld.h1_norms(basis)
    assert np.all(h1[1:] < 1e-10 * h1[0])
    # the fundamental solves S u = (m w)^2 r for the same sign convention
    S = -1j * p.tau * 8 - 4 + p.c**2 + 1j * p.b * 2
    assert fld.coeffs[0, 0] == pytest.approx(4 * 0.3 / S, rel=1e-6)


def test_periodic_refuses_nonpositive_delta():
    basis = build_basis("dirichlet-interval", math.pi, 3)
    with pytest.raises(NonConvergenceError):
        periodic_steady_state(PhysicalParams(0.1, 1.0, 0.1), basis, ForcingSpec.single_frequency(1.0, [1, 0, 0]), SolverConfig(dt=0.01, t_end=1))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0, t_end=1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1, scheme="euler")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1, save_every=0)


def test_projected_product_enters_nonlinearity_symmetrically():
    basis = build_basis("dirichlet-interval", math.pi, 4)
    p = P.replace(eta=0.5)
    u = np.array([0.2, 0.1, 0, 0])
    ut = np.array([0, 0.3, 0.1, 0])
    utt = np.array([0.1, 0, 0, 0.2])
    _, _, d = rhs(p, basis, ModalState(0, u, ut, utt))
    lin = -utt - p.b * basis.lambdas * ut - p.c**2 * basis.lambdas * u
    nl = -2 * p.eta * (project_product(u, utt, basis) + project_product(ut, ut, basis))
    assert np.allclose(d, (lin + nl) / p.tau, atol=1e-12)
