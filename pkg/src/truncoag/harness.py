"""Multi-run studies: truncation limits, analytic validation, a brute-force oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import discretization as disc
from . import kernels, solver
from .config import InitialData, RunConfig
from .errors import StudyError
from .kernels import FragmentationSpec, KernelSpec, TruncationSpec


def weighted_l1(grid, diff, beta=0.0):
    """sum |diff_i| * integral over cell i of (y^-beta + y)."""
    w = disc.cell_power_integral(grid, None, -beta) + disc.cell_power_integral(grid, None, 1.0)
    return float(np.abs(diff) @ w)


def fitted_order(cells, errors):
    """Least-squares slope of -log(error) against log(cells), with its fit residual."""
    x = np.log(np.asarray(cells, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    return -float(coef[0]), float(res[0]) if res.size else 0.0


@dataclass
class StudyReport:
    name: str
    rows: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    orders: list = field(default_factory=list)
    fit_order: float | None = None
    fit_residual: float | None = None
    criteria: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.criteria.values())


# --- truncation sequence ---------------------------------------------------


def nested_y_min(n_values):
    """Common lower edge 2^-D * n_0 that resolves 1/n for every n."""
    n0, nmax = min(n_values), max(n_values)
    depth = math.ceil(math.log2(n0 * nmax) - 1e-12)
    return n0 / 2.0**depth


def nested_cells(n, y_min, cells_per_doubling):
    c = cells_per_doubling * math.log2(n / y_min)
    if abs(c - round(c)) > 1e-9:
        raise StudyError(
            f"n={n:g} is not on the common grid (y_min={y_min:g}, {cells_per_doubling} cells per doubling)"
        )
    return int(round(c))


def grid_distance(grid_a, g_a, grid_b, g_b, beta=0.0):
    """Weighted L1 distance with the shorter-domain density prolonged by zero."""
    if grid_a.cells > grid_b.cells:
        grid_a, g_a, grid_b, g_b = grid_b, g_b, grid_a, g_a
    m = grid_a.cells
    if not np.allclose(grid_a.edges, grid_b.edges[: m + 1], rtol=1e-12, atol=0):
        raise StudyError("grids are not nested: cannot compare densities")
    diff = np.array(g_b, dtype=float)
    diff[:m] -= g_a
    return weighted_l1(grid_b, diff, beta)


def truncation_sequence_study(base, n_values, zeta, cells_per_doubling=8, y_min=None):
    """Runs at each n on nested grids; sup-in-time distances between neighbours."""
    n_values = [float(n) for n in n_values]
    if any(b < a for a, b in zip(n_values, n_values[1:])):
        raise StudyError("n values must be nondecreasing")
    y_min = nested_y_min(n_values) if y_min is None else y_min
    trajs = []
    rep = StudyReport(name=f"truncation_sequence[zeta={zeta}]")
    for n in n_values:
        cfg = base.with_(
            trunc=TruncationSpec(n, zeta),
            y_min=y_min,
            cells=nested_cells(n, y_min, cells_per_doubling),
        )
        tr = solver.run(cfg)
        trajs.append(tr)
        rep.rows.append(
            {
                "n": n,
                "zeta": zeta,
                "cells": cfg.cells,
                "M1_T": float(tr.series("M1")[-1]),
                "escaped_T": float(tr.series("escaped")[-1]),
                "dust_T": float(tr.series("dust")[-1]),
                "max_mass_residual": float(tr.series("mass_residual").max()),
            }
        )
    beta = base.kernel.beta
    for ta, tb in zip(trajs, trajs[1:]):
        d = max(
            grid_distance(ta.grid, ra.state.values, tb.grid, rb.state.values, beta)
            for ra, rb in zip(ta.records, tb.records)
        )
        rep.distances.append(d)
    rep.criteria["distances_decreasing"] = all(b < a for a, b in zip(rep.distances, rep.distances[1:]))
    if zeta == 0:
        esc = [r["escaped_T"] for r in rep.rows]
        rep.criteria["escaped_decreasing"] = all(b < a for a, b in zip(esc, esc[1:]))
    return rep


def mass_loss_curve(base, n_values):
    """escaped(T) of the non-conservative truncation for each n."""
    out = []
    for n in n_values:
        tr = solver.run(base.with_(trunc=TruncationSpec(float(n), 0)))
        out.append(float(tr.series("escaped")[-1]))
    return out


@dataclass
class TruncationComparison:
    times: np.ndarray
    M1_conservative: np.ndarray
    M1_nonconservative: np.ndarray
    escaped: np.ndarray
    dust_conservative: np.ndarray
    dust_nonconservative: np.ndarray

    @property
    def gap(self):
        return self.M1_conservative - self.M1_nonconservative


def compare_truncations(cfg, n=None, T=None):
    kw = {}
    if n is not None:
        kw["trunc"] = TruncationSpec(float(n), 1)
    if T is not None:
        kw["T"] = T
    cons_cfg = cfg.with_(**kw) if kw else cfg
    cons_cfg = cons_cfg.with_(trunc=TruncationSpec(cons_cfg.trunc.n, 1))
    cons = solver.run(cons_cfg)
    nonc = solver.run(cons_cfg.with_(trunc=TruncationSpec(cons_cfg.trunc.n, 0)))
    return TruncationComparison(
        times=cons.times,
        M1_conservative=cons.series("M1"),
        M1_nonconservative=nonc.series("M1"),
        escaped=nonc.series("escaped"),
        dust_conservative=cons.series("dust"),
        dust_nonconservative=nonc.series("dust"),
    )


# --- analytic validation ---------------------------------------------------


def exponential_cell_average(grid, amplitude, rate):
    """Cell averages of amplitude * exp(-rate * y), closed form."""
    a, b = grid.edges[:-1], grid.edges[1:]
    return amplitude * np.exp(-rate * a) * -np.expm1(-rate * (b - a)) / (rate * grid.widths)


def constant_kernel_exact(t):
    """(amplitude, rate) of g(t, y) = 4/(2+t)^2 exp(-2y/(2+t))."""
    return 4.0 / (2.0 + t) ** 2, 2.0 / (2.0 + t)


def pure_fragmentation_exact(t):
    """(amplitude, rate) of g(t, y) = (1+t)^2 exp(-(1+t) y)."""
    return (1.0 + t) ** 2, 1.0 + t


@dataclass
class ValidationReport:
    name: str
    levels: tuple
    times: np.ndarray
    errors: np.ndarray  # (levels, times) relative weighted L1 error
    M0: np.ndarray
    M1: np.ndarray
    orders: list
    fit_order: float
    fit_residual: float


def _validate(name, base, exact, levels):
    errs, m0, m1 = [], [], []
    times = None
    for cells in levels:
        tr = solver.run(base.with_(cells=cells))
        times = tr.times
        row = []
        for rec in tr.records:
            amp, rate = exact(rec.time)
            ref = exponential_cell_average(tr.grid, amp, rate)
            row.append(weighted_l1(tr.grid, rec.state.values - ref) / weighted_l1(tr.grid, ref))
        errs.append(row)
        m0.append(tr.series("M0"))
        m1.append(tr.series("M1"))
    errs = np.array(errs)
    final = errs[:, -1]
    orders = [float(math.log(a / b) / math.log(cb / ca)) for a, b, ca, cb in zip(final, final[1:], levels, levels[1:])]
    p, res = fitted_order(levels, final) if len(levels) > 1 else (math.nan, math.nan)
    return ValidationReport(name, tuple(levels), times, errs, np.array(m0), np.array(m1), orders, p, res)


def constant_kernel_config(**overrides):
    cfg = RunConfig(
        kernel=KernelSpec.constant(1.0),
        frag=FragmentationSpec(0.0, 0.0),
        trunc=TruncationSpec(1e3, 1),
        cells=160,
        y_min=1e-4,
        T=5.0,
        n_outputs=10,
        initial=InitialData("exponential"),
    )
    return cfg.with_(**overrides)


def pure_fragmentation_config(**overrides):
    cfg = RunConfig(
        kernel=KernelSpec.constant(0.0),
        frag=FragmentationSpec(0.0, 1.0),
        trunc=TruncationSpec(1e3, 1),
        cells=160,
        y_min=1e-4,
        T=3.0,
        n_outputs=6,
        initial=InitialData("exponential"),
    )
    return cfg.with_(**overrides)


def validate_constant_kernel(levels=(80, 160, 320), **overrides):
    """A = 1, no fragmentation, g_in = e^-y against the closed-form solution."""
    return _validate("constant_kernel", constant_kernel_config(**overrides), constant_kernel_exact, levels)


def validate_pure_fragmentation(levels=(80, 160, 320), **overrides):
    """nu = 0, S(y) = y, no coagulation, g_in = e^-y against the closed form."""
    return _validate("pure_fragmentation", pure_fragmentation_config(**overrides), pure_fragmentation_exact, levels)


# --- brute-force oracle ----------------------------------------------------


@dataclass
class OracleTrajectory:
    times: np.ndarray
    values: np.ndarray  # (times, cells) densities
    dust: np.ndarray
    escaped: np.ndarray


def brute_force_oracle(cfg, rtol=1e-12, atol=1e-14):
    """The solver's discrete system rebuilt with scalar loops and quadrature.

    Pair rates come from pointwise kernel calls, birth splits from a linear
    scan, fragment counts from adaptive quadrature of b(.|z); the ODE is then
    integrated by scipy's DOP853 at tight tolerance.  Intended for <= 8 cells.
    """
    if cfg.cells > 8:
        raise StudyError("brute-force oracle is limited to 8 cells")
    grid = disc.build_grid(cfg.grid_y_min, cfg.trunc.n, cfg.cells)
    e, x, w = grid.edges, grid.pivots, grid.widths
    c = 0.5 * (e[:-1] + e[1:])
    M = cfg.cells
    n = cfg.trunc.n

    A = [[kernels.eval_coag_truncated(cfg.kernel, cfg.trunc, x[j], x[k]) for k in range(M)] for j in range(M)]
    births = {}
    for j in range(M):
        for k in range(M):
            b = x[j] + x[k]
            if b >= n:
                births[j, k] = None
                continue
            if b >= x[M - 1]:
                births[j, k] = [(M - 1, b / x[M - 1])]
                continue
            m = 0
            while x[m + 1] <= b:
                m += 1
            lo = (x[m + 1] - b) / (x[m + 1] - x[m])
            births[j, k] = [(m, lo), (m + 1, 1.0 - lo)]

    def bfun(y, z):
        return kernels.eval_breakage(cfg.frag, y, z)

    F = np.zeros((M, M))
    dust = np.zeros(M)
    for j in range(M):
        for i in range(j + 1):
            top = min(e[i + 1], x[j])
            F[i, j] = integrate.quad(bfun, e[i], top, args=(x[j],), epsabs=0, epsrel=1e-13)[0]
        dust[j] = integrate.quad(lambda y: y * bfun(y, x[j]), 0.0, e[0], epsabs=0, epsrel=1e-13)[0] / x[j]
        F[:, j] *= x[j] * (1.0 - dust[j]) / sum(x[i] * F[i, j] for i in range(M))
    if cfg.lump_dust:
        F[0, :] += dust * x / x[0]
        dust[:] = 0.0
    S = [float(kernels.eval_selection(cfg.frag, cfg.trunc, xi)) for xi in x]

    def f(t, u):
        N = u[:M]
        du = np.zeros(M + 2)
        for j in range(M):
            for k in range(M):
                r = A[j][k] * N[j] * N[k]
                if r == 0.0:
                    continue
                du[j] -= r
                if births[j, k] is None:
                    du[M + 1] += 0.5 * r * (c[j] + c[k])
                else:
                    for dest, frac in births[j, k]:
                        du[dest] += 0.5 * r * frac
        for j in range(M):
            ev = S[j] * N[j]
            du[j] -= ev
            for i in range(M):
                du[i] += F[i, j] * ev
            du[M] += ev * dust[j] * c[j]
        return du

    g0 = disc.project_initial(cfg.initial, grid).values
    u0 = np.concatenate([g0 * w, [0.0, 0.0]])
    times = np.array(cfg.times())
    sol = integrate.solve_ivp(f, (0.0, cfg.T), u0, method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise StudyError(f"oracle integration failed: {sol.message}")
    U = sol.y.T
    return OracleTrajectory(times=sol.t, values=U[:, :M] / w, dust=U[:, M], escaped=U[:, M + 1])
