"""Built-in acceptance suite: twelve reproducible end-to-end checks.

Each check returns an :class:`Outcome` carrying the measured quantities so
callers (the test suite, ``truncoag --seed-check``) can both print a one-line
verdict and assert on the numbers themselves.
"""

from __future__ import annotations

import tempfile
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate

from . import diagnostics as dg
from . import harness, kernels, solver
from .config import InitialData, RunConfig
from .errors import DivergenceError
from .kernels import FragmentationSpec, KernelSpec, TruncationSpec


@dataclass
class Outcome:
    number: int
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self):
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def mass_config(zeta=1, n=50.0, T=5.0):
    """Constant kernel, nu = 0 fragmentation, k1 = k2 = 1, 160 cells, 50 outputs."""
    return RunConfig(
        kernel=KernelSpec.constant(1.0),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(n, zeta),
        cells=160,
        T=T,
        n_outputs=50,
        initial=InitialData("exponential"),
    )


def bound_config():
    """Singular-affine kernel beta = 1/4, nu = 0, k1 = k2 = 1, T = 1."""
    return RunConfig(
        kernel=KernelSpec.singular_affine(1.0, 0.25),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(50.0, 1),
        cells=160,
        T=1.0,
        n_outputs=20,
    )


def oracle_config():
    """4 cells over (1/8, 8), constant kernel + nu = 0 fragmentation."""
    return RunConfig(
        kernel=KernelSpec.constant(1.0),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(8.0, 1),
        cells=4,
        y_min=1 / 8,
        T=1.0,
        n_outputs=10,
    )


def crit_mass_conservative():
    tr = solver.run(mass_config(zeta=1))
    drift = float(dg.check_mass_identity(tr).max())
    ok = drift <= 1e-12 and len(tr.records) == 51
    return Outcome(1, "conservative mass identity", ok, f"max drift {drift:.3e} <= 1e-12", {"drift": drift})


def crit_mass_nonconservative():
    tr = solver.run(mass_config(zeta=0, n=10.0))
    res = float(dg.check_mass_identity(tr).max())
    esc = float(tr.series("escaped")[-1])
    ok = res <= 1e-12 and esc > 1e-3
    return Outcome(
        2,
        "non-conservative mass balance",
        ok,
        f"max residual {res:.3e} <= 1e-12, escaped(T) {esc:.4e} > 1e-3",
        {"residual": res, "escaped": esc},
    )


def crit_vanishing_loss():
    ns = (10.0, 20.0, 40.0, 80.0)
    esc = harness.mass_loss_curve(mass_config(zeta=0), ns)
    ok = all(b < a for a, b in zip(esc, esc[1:]))
    return Outcome(
        3,
        "escaped mass decreasing in n",
        ok,
        "escaped(T) = " + ", ".join(f"{e:.3e}" for e in esc),
        {"escaped": esc},
    )


def crit_constant_kernel():
    rep = harness.validate_constant_kernel(levels=(80, 160, 320))
    err160 = float(rep.errors[1, -1])
    ok = err160 <= 0.05 and rep.fit_order >= 0.8
    return Outcome(
        4,
        "constant-kernel analytic validation",
        ok,
        f"error(160 cells, T=5) {err160:.4e} <= 0.05, fitted order {rep.fit_order:.3f} >= 0.8",
        {"error_160": err160, "order": rep.fit_order, "errors": rep.errors[:, -1].tolist()},
    )


def crit_pure_fragmentation():
    rep = harness.validate_pure_fragmentation(levels=(160,))
    err = float(rep.errors[0, -1])
    m0 = float(rep.M0[0, -1])
    ok = err <= 0.05 and abs(m0 - 4.0) <= 0.04
    return Outcome(
        5,
        "pure-fragmentation analytic validation",
        ok,
        f"error(160 cells, T=3) {err:.4e} <= 0.05, M0(3) {m0:.6f} within 1% of 4",
        {"error": err, "M0": m0},
    )


@lru_cache(maxsize=1)
def _bound_trajectory():
    return solver.run(bound_config())


def crit_moment_bound():
    tr = _bound_trajectory()
    c1 = kernels.negative_moment_constant(tr.config.frag, tr.config.kernel.beta)
    chk = dg.moment_bound_check(tr)
    ok = chk.passed and c1 == 4.0
    return Outcome(
        6,
        "moment bound M_{-2beta} + M_1",
        ok,
        f"max lhs {chk.lhs_max:.6f} <= bound {chk.bound:.6f} (c1 = {c1:g})",
        {"lhs": chk.lhs_max, "bound": chk.bound, "c1": c1},
    )


def crit_tail_bound():
    tr = _bound_trajectory()
    chk = dg.tail_bound_check(tr)
    return Outcome(
        7,
        "superlinear tail bound",
        chk.passed,
        f"max lhs {chk.lhs_max:.6f} <= exp({chk.log_bound:.3f})",
        {"lhs": chk.lhs_max, "log_bound": chk.log_bound},
    )


def _alg_quad(f, z, power):
    """integral over (0, z) of f(y) * y**power, singular endpoint handled by the weight."""
    return integrate.quad(f, 0.0, z, weight="alg", wvar=(power, 0.0), epsabs=0.0, epsrel=1e-13)[0]


def crit_kernel_identities():
    worst = 0.0
    divergent = []

    def rel(a, b):
        return abs(a - b) / abs(b)

    for nu in (0.0, -0.25, -0.5):
        frag = FragmentationSpec(nu, 1.0)
        for z in (0.3, 1.0, 7.0):
            amp = (nu + 2.0) / z ** (1.0 + nu)  # b(y|z) = amp * y**nu
            worst = max(worst, rel(_alg_quad(lambda y: amp, z, nu), kernels.daughter_count(frag)))
            worst = max(worst, rel(_alg_quad(lambda y: amp, z, nu + 1.0), z))
            spread = _alg_quad(lambda y: amp * (z - y), z, nu + 1.0)
            worst = max(worst, rel(spread, float(kernels.fragment_spread_moment(frag, z))))
            for beta in (0.0, 0.2, 0.25):
                try:
                    c1 = kernels.negative_moment_constant(frag, beta)
                except DivergenceError:
                    divergent.append((nu, beta))
                    continue
                mom = _alg_quad(lambda y: amp, z, nu - 2.0 * beta)
                worst = max(worst, rel(mom, c1 * z ** (-2.0 * beta)))
    divergent = sorted(set(divergent))
    # the only rejected combinations must be those with nu + 1 - 2 beta = 0
    div_ok = all(abs(nu + 1 - 2 * beta) < 1e-15 for nu, beta in divergent)
    ok = worst <= 1e-8 and div_ok
    return Outcome(
        8,
        "closed-form kernel identities vs quadrature",
        ok,
        f"max relative gap {worst:.3e} <= 1e-8; divergent (nu, beta) rejected: {divergent}",
        {"worst": worst, "divergent": divergent},
    )


def weak_config(cells, snapshots):
    return RunConfig(
        kernel=KernelSpec.constant(1.0),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(20.0, 1),
        cells=cells,
        y_min=1e-8,
        T=1.0,
        n_outputs=snapshots,
    )


def crit_weak_residual():
    levels = ((80, 10), (160, 20), (320, 40))
    res = {"one": [], "capped:5": []}
    for cells, snaps in levels:
        tr = solver.run(weak_config(cells, snaps))
        for tag in res:
            res[tag].append(abs(float(dg.weak_residual(tr, tag)[-1])))
    orders = {tag: harness.fitted_order([c for c, _ in levels], r)[0] for tag, r in res.items()}
    ok = all(o >= 0.8 for o in orders.values())
    return Outcome(
        9,
        "weak-form residual under refinement",
        ok,
        ", ".join(f"order[{t}] {o:.3f}" for t, o in orders.items()) + " >= 0.8",
        {"residuals": res, "orders": orders},
    )


def crit_oracle():
    cfg = oracle_config()
    ref = harness.brute_force_oracle(cfg)
    tr = solver.run(cfg.with_(dt_max=1e-3))
    gap = float(np.max(np.abs(tr.values() - ref.values) / np.abs(ref.values)))
    dts = (0.02, 0.01, 0.005, 0.0025)
    gaps = []
    for dt in dts:
        te = solver.run(cfg.with_(stepper="euler", dt_max=dt))
        gaps.append(float(np.max(np.abs(te.values() - ref.values) / np.abs(ref.values))))
    slope = np.polyfit(np.log(dts), np.log(gaps), 1)[0]
    ok = gap <= 1e-6 and abs(slope - 1.0) <= 0.2
    return Outcome(
        10,
        "brute-force oracle equivalence",
        ok,
        f"rk4 gap {gap:.3e} <= 1e-6, euler exponent {slope:.3f} in 1 +/- 0.2",
        {"rk4_gap": gap, "euler_gaps": gaps, "euler_exponent": float(slope)},
    )


def crit_truncation_sequence():
    base = mass_config(T=2.0).with_(n_outputs=20)
    dist = {}
    ok = True
    for zeta in (0, 1):
        rep = harness.truncation_sequence_study(base, (10.0, 20.0, 40.0, 80.0), zeta)
        dist[zeta] = rep.distances
        ok &= rep.criteria["distances_decreasing"]
    fmt = "; ".join(f"zeta={z}: " + ", ".join(f"{d:.3e}" for d in ds) for z, ds in dist.items())
    return Outcome(11, "truncation-sequence distances decreasing", ok, fmt, {"distances": dist})


def crit_determinism():
    from . import cli

    cfg = mass_config(zeta=1)
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            d = Path(tmp) / name
            cli.emit_run(solver.run(cfg), d)
            outs.append({f: (d / f).read_bytes() for f in ("trajectory.csv", "moments.csv", "checks.json")})
        identical = outs[0] == outs[1]
    seq = solver.run(cfg).values()
    par = solver.run(cfg, threads=4).values()
    scale = np.maximum(np.abs(seq), np.finfo(float).tiny)
    rel = float(np.max(np.abs(par - seq) / scale))
    ok = identical and rel <= 1e-13
    return Outcome(
        12,
        "determinism",
        ok,
        f"sequential reruns byte-identical: {identical}, parallel max relative gap {rel:.3e} <= 1e-13",
        {"identical": identical, "parallel_gap": rel},
    )


CRITERIA = (
    crit_mass_conservative,
    crit_mass_nonconservative,
    crit_vanishing_loss,
    crit_constant_kernel,
    crit_pure_fragmentation,
    crit_moment_bound,
    crit_tail_bound,
    crit_kernel_identities,
    crit_weak_residual,
    crit_oracle,
    crit_truncation_sequence,
    crit_determinism,
)


def run_all(echo=print):
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", kernels.AssumptionWarning)
        for fn in CRITERIA:
            res = fn()
            if echo is not None:
                echo(res.line())
            out.append(res)
    return out
