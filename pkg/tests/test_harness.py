import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmgt_lab import experiments as ex
from jmgt_lab.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from jmgt_lab.config import expand_sweep, format_config, parse_config
from jmgt_lab.errors import ConfigError
from jmgt_lab.output import MANIFEST_NAME, emit_outputs, format_number, render_csv

MINIMAL = """
[physics]
tau = 0.1
c = 1
b = 0.2

[experiment]
kind = stability
zeta_max = 100
"""


def test_minimal_stability_config():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "stability"
    assert cfg["physics.eta"] == 0.0 and cfg["experiment.zeta_samples"] == 100
    assert cfg["basis.kind"] == "dirichlet-interval"


@pytest.mark.parametrize(
    "text,key",
    [
        (MINIMAL.replace("tau = 0.1", "tau = -1"), "physics.tau"),
        (MINIMAL.replace("c = 1", "c = fast"), "physics.c"),
        (MINIMAL.replace("b = 0.2", ""), "physics.b"),
        (MINIMAL + "\n[solver]\nbogus = 1\n", "solver.bogus"),
        (MINIMAL.replace("zeta_max = 100", "zeta_max = 100\nzeta_samples = 2.5"), "experiment.zeta_samples"),
        (MINIMAL + "\n[sweep]\nparameter = nonsense\nvalues = 1, 2\n", "sweep.parameter"),
        (MINIMAL + "\n[sweep]\nparameter = tau\nvalues = 0.1, -0.2\n", "sweep.values"),
    ],
)
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_unknown_section_and_kind_mismatch():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="experiment.kind"):
        parse_config(MINIMAL, kind="simulate")


def test_sweep_expands_into_runs():
    cfg = parse_config(MINIMAL + "\n[sweep]\nparameter = tau\nvalues = [1e-1, 1e-2, 1e-3]\n")
    assert cfg.sweep == ("physics.tau", (0.1, 0.01, 0.001))
    runs = expand_sweep(cfg)
    assert [r["physics.tau"] for r in runs] == [0.1, 0.01, 0.001]
    assert all(r.sweep is None for r in runs)


def test_roundtrip_with_sweep():
    cfg = parse_config(MINIMAL + "\n[sweep]\nparameter = physics.b\nvalues = 0.3, 0.4\n")
    assert parse_config(format_config(cfg)) == cfg


@settings(max_examples=50, deadline=None)
@given(
    tau=st.floats(0, 10, allow_nan=False),
    c=st.floats(1e-3, 10),
    b=st.floats(0, 10),
    eta=st.floats(-5, 5),
    modes=st.integers(1, 64),
    dt=st.floats(1e-6, 1.0),
    dealias=st.booleans(),
    seed=st.integers(0, 2**31),
)
def test_config_roundtrip_property(tau, c, b, eta, modes, dt, dealias, seed):
    text = f"""
[physics]
tau = {tau!r}
c = {c!r}
b = {b!r}
eta = {eta!r}
[basis]
modes = {modes}
[solver]
dt = {dt!r}
dealias = {dealias}
[experiment]
kind = simulate
seed = {seed}
"""
    cfg = parse_config(text)
    assert parse_config(format_config(cfg)) == cfg


def test_number_formatting():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(3) == "3"
    assert format_number(1 / 3) == "0.33333333333333331"
    for v in (1e-300, math.pi, -2.5e17, np.float64(7.1)):
        assert float(format_number(v)) == v
    assert format_number(True) == "true"
    data = render_csv(("a", "b"), [[1, 0.5], [2, "x"]])
    assert data == b"a,b\n1,0.5\n2,x\n"


def test_stability_atlas_outputs_deterministic(tmp_path):
    cfg = parse_config(MINIMAL)
    a = emit_outputs(tmp_path / "a", cfg, ex.run_experiment(cfg))
    b = emit_outputs(tmp_path / "b", cfg, ex.run_experiment(cfg))
    csv = (tmp_path / "a" / "stability.csv").read_bytes()
    assert csv.count(b"\n") == 101 and b"\r" not in csv
    assert csv.splitlines()[0] == b"zeta,m1,m2,m3,re_s1,im_s1,re_s2,im_s2,re_s3,im_s3,regime"
    assert a["files"] == b["files"]
    assert csv == (tmp_path / "b" / "stability.csv").read_bytes()


def test_empty_run_writes_manifest_only(tmp_path):
    cfg = parse_config(MINIMAL)
    manifest = emit_outputs(tmp_path, cfg, [])
    assert sorted(p.name for p in tmp_path.iterdir()) == [MANIFEST_NAME]
    assert manifest["files"] == {} and manifest["seed"] == 0


def test_io_failure_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_outputs(blocker / "sub", parse_config(MINIMAL), [])


def _write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SIMULATE = """
[physics]
tau = 0.1
c = 1.0
b = 0.2
eta = 1.0
[basis]
modes = 4
[solver]
dt = 1e-2
t_end = 1.0
[experiment]
kind = simulate
initial = random
amplitude = 0.05
seed = 3
"""


def test_simulate_identical_seed_identical_bytes(tmp_path):
    path = _write(tmp_path, SIMULATE)
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o1")]) == EXIT_OK
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o2")]) == EXIT_OK
    for name in ("trajectory.csv", "norms.csv", "energy.csv", "enid.csv"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    m = json.loads((tmp_path / "o1" / MANIFEST_NAME).read_text())
    assert m["seed"] == 3 and set(m["files"]) == {"trajectory.csv", "norms.csv", "energy.csv", "enid.csv"}
    header = (tmp_path / "o1" / "norms.csv").read_text().splitlines()[0]
    assert header == "t,linf_u,h1_u,h2_u,h1_ut,h2_ut,h1_utt,energy"


def test_different_seed_changes_data(tmp_path):
    p1 = _write(tmp_path, SIMULATE, "a.ini")
    p2 = _write(tmp_path, SIMULATE.replace("seed = 3", "seed = 4"), "b.ini")
    main(["simulate", "--config", p1, "--out", str(tmp_path / "o1")])
    main(["simulate", "--config", p2, "--out", str(tmp_path / "o2")])
    assert (tmp_path / "o1" / "trajectory.csv").read_bytes() != (tmp_path / "o2" / "trajectory.csv").read_bytes()


def test_cli_exit_codes(tmp_path):
    bad = _write(tmp_path, MINIMAL.replace("tau = 0.1", "tau = -1"), "bad.ini")
    assert main(["stability", "--config", bad, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    ok = _write(tmp_path, MINIMAL, "ok.ini")
    assert main(["stability", "--config", ok, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert main(["simulate", "--config", ok, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    periodic = _write(
        tmp_path,
        SIMULATE.replace("kind = simulate", "kind = periodic").replace("b = 0.2", "b = 0.05")
        + "[forcing]\nkind = modal-harmonic\nomega = 1.0\namplitude = 0.1\n",
        "p.ini",
    )
    # delta < 0 has no periodic steady state
    assert main(["periodic", "--config", periodic, "--out", str(tmp_path / "p")]) == EXIT_NUMERICAL


def test_parameter_sweep_prefixes_files(tmp_path):
    text = MINIMAL + "\n[sweep]\nparameter = b\nvalues = 0.05, 0.1, 0.2\n"
    cfg = parse_config(text)
    results = ex.run_experiment(cfg, workers=2)
    assert [r.metrics["verdict"] for r in results] == ["unstable", "marginal", "stable"]
    manifest = emit_outputs(tmp_path, cfg, results)
    assert sorted(manifest["files"]) == ["run000_stability.csv", "run001_stability.csv", "run002_stability.csv"]


TAU_SWEEP = """
[physics]
tau = 0.25
c = 1.0
b = 0.5
eta = {eta}
[basis]
modes = {modes}
[solver]
dt = 2e-3
t_end = 2.0
[experiment]
kind = tau-sweep
initial = phi1
amplitude = {amp}
"""


def test_tau_sweep_zero_data():
    cfg = parse_config(TAU_SWEEP.format(eta=1.0, modes=4, amp=0.0))
    res = ex.run_tau_sweep(cfg)
    assert all(e == 0 for e in res.metrics["err_l2h1"])


def test_tau_sweep_linear_single_mode_order():
    cfg = parse_config(TAU_SWEEP.format(eta=0.0, modes=1, amp=1.0) + "[sweep]\nparameter = tau\nvalues = 0.04, 0.02, 0.01, 0.005\n")
    res = ex.run_tau_sweep(cfg)
    orders = res.metrics["observed_orders"]
    assert all(o >= 0.9 for o in orders)


def test_tau_sweep_against_analytic_single_mode():
    from oracles import analytic_mode, analytic_mode_tau0

    cfg = parse_config(TAU_SWEEP.format(eta=0.0, modes=1, amp=1.0) + "[sweep]\nparameter = tau\nvalues = 0.05\n")
    res = ex.run_tau_sweep(cfg)
    t = np.linspace(0, 2, 4001)
    u_tau, _, _ = analytic_mode(0.05, 1.0, 0.5, 1.0, 1.0, 0.0, -1.0, t)
    u_0, _ = analytic_mode_tau0(1.0, 0.5, 1.0, 1.0, 0.0, t)
    ref = math.sqrt(np.trapezoid((u_tau - u_0) ** 2, t))
    assert res.metrics["err_l2h1"][0] == pytest.approx(ref, rel=1e-6)


def test_tau_sweep_rejects_nonpositive_delta():
    cfg = parse_config(TAU_SWEEP.format(eta=0.0, modes=1, amp=1.0) + "[sweep]\nparameter = tau\nvalues = 0.6\n")
    with pytest.raises(ConfigError, match="tau=0.6"):
        ex.run_tau_sweep(cfg)


def test_tau_sweep_member_failure_names_tau():
    cfg = parse_config(
        TAU_SWEEP.format(eta=1.0, modes=4, amp=3.0).replace("t_end = 2.0", "t_end = 6.0")
        + "[sweep]\nparameter = tau\nvalues = 0.1\n"
    )
    with pytest.raises(Exception, match="tau="):
        ex.run_tau_sweep(cfg)


BLOWUP = """
[physics]
tau = 0.1
c = 1.0
b = 0.2
eta = {eta}
[basis]
modes = 8
[solver]
dt = 1e-3
t_end = 12.0
save_every = 10
[experiment]
kind = blowup-sweep
a_min = 0.1
a_max = 1.0
scan_points = 6
"""


def test_blowup_sweep_linear_control_inconclusive():
    cfg = parse_config(BLOWUP.format(eta=0.0).replace("t_end = 12.0", "t_end = 3.0"))
    res = ex.run_blowup_sweep(cfg)
    assert res.metrics["inconclusive"] and res.metrics["a_safe"] is None


def test_observed_orders_and_monotonicity_helpers():
    assert ex.observed_orders([1, 0.5], [4, 1]) == [2.0]
    assert ex.is_decreasing([3, 2, 2.1], jitter=0.1)
    assert not ex.is_decreasing([3, 2, 2.3], jitter=0.1)
