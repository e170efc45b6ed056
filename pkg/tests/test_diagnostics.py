import math

import mpmath
import numpy as np
import pytest

from truncoag import diagnostics as dg
from truncoag import solver
from truncoag.config import InitialData, RunConfig
from truncoag.errors import DivergenceError, DomainError
from truncoag.kernels import FragmentationSpec, KernelSpec, TruncationSpec

mpmath.mp.dps = 30


def config(**kw):
    cfg = RunConfig(
        kernel=KernelSpec.constant(1.0),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(20.0, 1),
        cells=40,
        T=1.0,
        n_outputs=8,
    )
    return cfg.with_(**kw)


@pytest.fixture(scope="module")
def bound_run():
    cfg = config(kernel=KernelSpec.singular_affine(1.0, 0.25), trunc=TruncationSpec(50.0, 1), cells=160, n_outputs=20)
    return solver.run(cfg)


@pytest.fixture(scope="module")
def static_run():
    return solver.run(config(kernel=KernelSpec.constant(0.0), frag=FragmentationSpec(0.0, 0.0)))


def test_moment_bound_arithmetic():
    assert dg.moment_bound(2.0, 1.0, 4.0, 1.0) == pytest.approx(2 * math.e**3)
    assert dg.moment_bound(2.0, 1.0, 4.0, 1.0) == pytest.approx(40.1711, abs=5e-5)


def test_sigma_values():
    assert float(dg.sigma(1.0)) == pytest.approx(math.log(2))
    p = 3.0
    s, ps = float(dg.sigma(p)), p * float(dg.dsigma(p))
    assert s == pytest.approx(4.159, abs=1e-3)
    assert ps == pytest.approx(6.409, abs=1e-3)
    assert s <= ps <= 2 * s
    defect = float(dg.sigma(2.0) - 2 * dg.sigma(1.0))
    assert defect == pytest.approx(0.8109, abs=1e-4)
    assert defect <= 2 * float(dg.sigma(1.0))


def test_dsigma_matches_mpmath_derivative():
    for p in (0.1, 1.0, 30.0):
        ref = mpmath.diff(lambda q: q * mpmath.log1p(q), p)
        assert float(dg.dsigma(p)) == pytest.approx(float(ref), rel=1e-12)


def test_membership_on_1000_points():
    checks = dg.membership_checks(points=1000)
    assert all(checks.values()), checks


@pytest.mark.parametrize("gamma", [1.2, 1.5, 1.9])
def test_sup_ratio_is_finite_and_dominates_samples(gamma):
    s = dg.sup_ratio(gamma)
    p = np.geomspace(1e-6, 1e6, 500)
    assert math.isfinite(s)
    assert np.all(dg.sigma(p) / p**gamma <= s * (1 + 1e-9))


@pytest.mark.parametrize("beta", [0.0, 0.25])
def test_gamma_quadratures_against_mpmath(beta):
    pair = dg.build_convex_pair(InitialData(), beta, 1.5, nu=0.0)
    g1 = mpmath.quad(lambda y: y * mpmath.log1p(y) * mpmath.exp(-y), [0, 1, mpmath.inf])

    def integrand(y):
        h = y ** (-beta) * mpmath.exp(-y)
        return h * mpmath.log1p(h)

    g2 = mpmath.quad(integrand, [0, 1, mpmath.inf])
    assert pair.Gamma1 == pytest.approx(float(g1), rel=1e-6)
    assert pair.Gamma2 == pytest.approx(float(g2), rel=1e-6)


def test_convex_pair_rejects_bad_gamma():
    with pytest.raises(DomainError):
        dg.build_convex_pair(InitialData(), 0.0, 2.5)


def test_convex_pair_divergent_datum():
    with pytest.raises(DivergenceError):
        dg.build_convex_pair(lambda y: 1.0 / y**1.2 if y < 1 else 0.0, 0.0, 1.5)


def test_mass_identity_zero_for_static_run(static_run):
    assert np.all(dg.check_mass_identity(static_run) == 0)


def test_nonconservative_identity_small_n():
    tr = solver.run(config(trunc=TruncationSpec(5.0, 0), T=2.0))
    assert tr.series("escaped")[-1] > 0
    assert np.all(dg.check_mass_identity(tr) <= 1e-12)


def test_moment_bound_pure_coagulation():
    tr = solver.run(config(frag=FragmentationSpec(0.0, 0.0)))
    chk = dg.moment_bound_check(tr)
    assert chk.passed
    assert chk.bound == pytest.approx(chk.lhs[0])
    assert np.all(np.diff(chk.lhs) <= 1e-15)


def test_bounds_on_singular_run(bound_run):
    mb = dg.moment_bound_check(bound_run)
    tb = dg.tail_bound_check(bound_run)
    assert mb.passed and mb.extra["c1"] == 4.0
    assert tb.passed and tb.bound is None and tb.log_bound > 700


def test_tail_bound_static_run(static_run):
    tb = dg.tail_bound_check(static_run)
    assert tb.passed
    assert np.ptp(tb.lhs) == 0


def test_log_theta_increasing_in_T():
    vals = [dg.log_theta(1.0, 1.0, 2.0, T) for T in (0.1, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_equi_integrability_static(static_run):
    pair = dg.build_convex_pair(InitialData(), 0.0, 1.5, 0.0)
    chk = dg.equi_integrability_check(static_run, pair, 5.0)
    assert np.ptp(chk.lhs) == 0 and chk.passed
    with pytest.raises(DomainError):
        dg.equi_integrability_check(static_run, pair, 100.0)


def test_equicontinuity(bound_run, static_run):
    assert dg.equicontinuity_ratio(static_run).lhs_max == 0
    one = dg.equicontinuity_ratio(bound_run)
    two = dg.equicontinuity_ratio(bound_run, psi=lambda y: 2.0 * np.ones_like(y))
    assert one.passed and two.passed
    assert two.lhs_max == pytest.approx(2 * one.lhs_max)
    assert two.extra["constant"] == pytest.approx(2 * one.extra["constant"])


@pytest.mark.parametrize("tag", ["one", "identity", "capped:5", "indicator:0.5:2"])
def test_weak_residual_zero_dynamics(static_run, tag):
    assert np.all(dg.weak_residual(static_run, tag) <= 1e-14)


def test_identity_residual_is_mass_drift():
    tr = solver.run(config())
    res = dg.weak_residual(tr, "identity")
    # eta = 0 and omega~ = 0 for omega(y) = y, so only pivot-mass drift remains
    x = tr.grid.pivots
    N = tr.values() * tr.grid.widths
    np.testing.assert_allclose(res, np.abs((N - N[0]) @ x), atol=1e-14)


@pytest.mark.parametrize("tag", ["two", "capped", "capped:-1", "indicator:2:1"])
def test_bad_test_function_tags(tag):
    with pytest.raises(DomainError):
        dg.parse_test_function(tag)


@pytest.mark.parametrize("nu", [0.0, -0.5])
def test_omega_fragment_moment_closed_form(nu):
    from scipy import integrate

    frag = FragmentationSpec(nu, 1.0)
    for tag in ("one", "capped:2", "indicator:0.5:2"):
        om = dg.parse_test_function(tag)
        for z in (1.0, 4.0):
            amp = (nu + 2) / z ** (1 + nu)
            pts = [p for p in (0.5, 2.0) if p < z] or None
            ref = integrate.quad(lambda y: float(om(y)) * amp * y**nu, 0, z, points=pts, limit=200)[0]
            assert float(om.fragment_moment(frag, z)) == pytest.approx(ref, rel=1e-7)


def test_diagnose_report_rows(bound_run):
    rep = dg.diagnose(bound_run)
    rows = rep.checks()
    names = [r["name"] for r in rows]
    assert names[:5] == ["mass_identity", "moment_bound", "tail_bound", "equi_integrability", "equicontinuity"]
    assert all(r["pass"] for r in rows)
