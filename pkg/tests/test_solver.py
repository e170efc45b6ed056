import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncoag import discretization as disc
from truncoag import solver
from truncoag.config import InitialData, RunConfig
from truncoag.errors import ContractError, SolverError, StepSizeError
from truncoag.kernels import FragmentationSpec, KernelSpec, TruncationSpec


def small_config(**kw):
    cfg = RunConfig(
        kernel=KernelSpec.constant(1.0),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(20.0, 1),
        cells=24,
        T=1.0,
        n_outputs=4,
    )
    return cfg.with_(**kw)


def test_rhs_rejects_negative_density():
    cfg = small_config()
    op = solver.build_operator(cfg)
    g = np.ones(cfg.cells)
    g[3] = -1e-3
    with pytest.raises(ContractError):
        solver.rhs(g, op)


def test_zero_dynamics_is_stationary():
    cfg = small_config(kernel=KernelSpec.constant(0.0), frag=FragmentationSpec(0.0, 0.0))
    tr = solver.run(cfg)
    v = tr.values()
    np.testing.assert_array_equal(v, np.broadcast_to(v[0], v.shape))


def test_zero_initial_stays_zero():
    tr = solver.run(small_config(initial=InitialData("zero")))
    assert np.all(tr.values() == 0)
    assert np.all(tr.series("mass_residual") == 0)


def test_output_times_hit_exactly():
    cfg = small_config(output_times=(0.1, 0.35, 1.0))
    tr = solver.run(cfg)
    assert tr.times.tolist() == [0.0, 0.1, 0.35, 1.0]


def test_dt_max_bounds_step_count():
    tr = solver.run(small_config(dt_max=0.01))
    assert tr.steps >= 100


def test_unknown_stepper_in_step():
    cfg = small_config()
    op = solver.build_operator(cfg)
    st0 = solver.initial_state(cfg, op.grid)
    with pytest.raises(ValueError):
        solver.step(st0, 0.1, op, stepper="leapfrog")


def test_oversized_step_raises():
    cfg = small_config(frag=FragmentationSpec(0.0, 50.0))
    op = solver.build_operator(cfg)
    st0 = solver.initial_state(cfg, op.grid)
    with pytest.raises(StepSizeError):
        solver.step(st0, 10.0, op, stepper="euler")


def test_run_failure_keeps_partial_trajectory(monkeypatch):
    cfg = small_config(frag=FragmentationSpec(0.0, 50.0))
    monkeypatch.setattr(solver, "stable_dt", lambda state, rates, theta, gap: gap)
    with pytest.raises(SolverError) as info:
        solver.run(cfg.with_(stepper="euler"))
    assert info.value.trajectory is not None
    assert len(info.value.trajectory.records) >= 1


def test_stable_dt_respects_theta():
    cfg = small_config()
    op = solver.build_operator(cfg)
    st0 = solver.initial_state(cfg, op.grid)
    r = solver.rhs(st0, op)
    dt = solver.stable_dt(st0, r, theta=0.3)
    assert np.max(r.loss / st0.values) * dt == pytest.approx(0.3)


@settings(max_examples=15)
@given(
    k1=st.floats(0.0, 3.0),
    k2=st.floats(0.0, 3.0),
    nu=st.sampled_from([0.0, -0.3, -0.6]),
    beta=st.sampled_from([0.0, 0.1, 0.2]),
    zeta=st.sampled_from([0, 1]),
)
def test_mass_balance_random_parameters(k1, k2, nu, beta, zeta):
    cfg = small_config(
        kernel=KernelSpec.singular_affine(k1, beta),
        frag=FragmentationSpec(nu, k2),
        trunc=TruncationSpec(20.0, zeta),
        cells=20,
        T=0.5,
    )
    tr = solver.run(cfg)
    assert np.all(tr.series("mass_residual") <= 1e-12)
    assert np.all(tr.values() >= 0)


def test_constant_kernel_number_decay():
    # pure coagulation, A = 1: dM0/dt = -M0^2 / 2 up to truncation and grid effects
    cfg = small_config(
        frag=FragmentationSpec(0.0, 0.0), trunc=TruncationSpec(1e3, 1), y_min=1e-4, cells=160, T=2.0
    )
    tr = solver.run(cfg)
    m0 = tr.series("M0")
    exact = 2 * m0[0] / (2 + m0[0] * tr.times)
    np.testing.assert_allclose(m0, exact, rtol=2e-2)


def test_parallel_matches_sequential():
    cfg = small_config(kernel=KernelSpec.singular_affine(1.0, 0.2), cells=64)
    seq = solver.run(cfg).values()
    par = solver.run(cfg, threads=3).values()
    np.testing.assert_allclose(par, seq, rtol=1e-13, atol=0)


def test_escape_ledger_only_for_nonconservative():
    cons = solver.run(small_config(trunc=TruncationSpec(5.0, 1)))
    nonc = solver.run(small_config(trunc=TruncationSpec(5.0, 0)))
    assert np.all(cons.series("escaped") == 0)
    assert nonc.series("escaped")[-1] > 0


def test_snapshot_report_fields():
    cfg = small_config()
    grid = disc.build_grid(cfg.grid_y_min, cfg.trunc.n, cfg.cells)
    st0 = solver.initial_state(cfg, grid)
    rep = solver.snapshot_report(grid, st0, 0.0, disc.moment(grid, st0, 1.0))
    assert rep.mass_residual == 0 and rep.M0 == rep.M_neg2beta
