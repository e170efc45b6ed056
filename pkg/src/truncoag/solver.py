"""Explicit time integration of the truncated coagulation-fragmentation system.

The state is the vector of cell-average densities plus three scalar mass
ledgers (dust, escaped, roundoff).  Ledger rates are advanced by the same
stepper as the densities, so the discrete balance

    M1(t) + dust(t) + escaped(t) + roundoff(t) = M1(0)

holds to roundoff at every step rather than only after a posteriori
quadrature.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import discretization as disc
from .errors import ContractError, SolverError, StepSizeError

logger = logging.getLogger(__name__)

CLAMP_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Operator:
    """Grid plus precomputed coagulation / fragmentation tables."""

    grid: disc.Grid
    tables: disc.CoagTables
    fmat: disc.FragMatrix
    pair_rate: np.ndarray = field(init=False)
    esc_rate: np.ndarray = field(init=False)

    def __post_init__(self):
        t = self.tables
        object.__setattr__(self, "pair_rate", t.rate[t.pair_j, t.pair_k] * t.pair_weight)
        object.__setattr__(self, "esc_rate", t.rate[t.esc_j, t.esc_k] * t.esc_weight * t.esc_mass)


def build_operator(cfg):
    grid = disc.build_grid(cfg.grid_y_min, cfg.trunc.n, cfg.cells)
    tables = disc.build_coag_tables(grid, cfg.kernel, cfg.trunc)
    fmat = disc.build_frag_matrix(grid, cfg.frag, cfg.trunc, lump_dust=cfg.lump_dust)
    return Operator(grid, tables, fmat)


@dataclass(frozen=True, eq=False)
class Rates:
    dvalues: np.ndarray  # d g_i / dt
    loss: np.ndarray  # magnitude of the loss part of d g_i / dt
    dust_rate: float
    escape_rate: float


@lru_cache(maxsize=4)
def _pool(threads):
    return ThreadPoolExecutor(max_workers=threads)


def _coag_gain(op, N, threads):
    t = op.tables
    m = N.size
    events = op.pair_rate * N[t.pair_j] * N[t.pair_k]
    if threads <= 1 or events.size < 2 * threads:
        return np.bincount(t.lower, events * t.frac_lower, m) + np.bincount(
            t.upper, events * t.frac_upper, m
        )
    bounds = np.linspace(0, events.size, threads + 1).astype(int)

    def part(s):
        sl = slice(bounds[s], bounds[s + 1])
        ev = events[sl]
        return np.bincount(t.lower[sl], ev * t.frac_lower[sl], m) + np.bincount(
            t.upper[sl], ev * t.frac_upper[sl], m
        )

    parts = list(_pool(threads).map(part, range(threads)))
    gain = parts[0]
    for p in parts[1:]:
        gain = gain + p
    return gain


def rhs(state, op, threads=1, check=True):
    """Discrete right-hand side: coagulation gain/loss, fragmentation gain/loss."""
    g = state.values if isinstance(state, disc.GriddedDensity) else state
    if check and np.any(g < 0):
        raise ContractError("rhs called with a negative density")
    w = op.grid.widths
    N = g * w
    t = op.tables
    gain_c = _coag_gain(op, N, threads)
    loss_c = N * (t.rate @ N)
    escape = float(np.dot(op.esc_rate, N[t.esc_j] * N[t.esc_k])) if op.esc_rate.size else 0.0
    fm = op.fmat
    events = fm.selection * N
    gain_f = fm.F @ events
    dust = float(np.dot(events, fm.dust * op.grid.mean_volumes))
    dN = (gain_c + gain_f) - (loss_c + events)
    return Rates(dvalues=dN / w, loss=(loss_c + events) / w, dust_rate=dust, escape_rate=escape)


def stable_dt(state, rates, theta=0.5, gap=np.inf):
    """Largest explicit step keeping every cell's relative loss below ``theta``."""
    g = state.values if isinstance(state, disc.GriddedDensity) else np.asarray(state)
    pos = g > 0
    rel = rates.loss[pos] / g[pos]
    worst = float(rel.max()) if rel.size else 0.0
    if worst <= 0:
        return float(gap)
    return float(min(theta / worst, gap))


def _clamp(values, grid):
    neg = values < 0
    if not neg.any():
        return values, 0.0
    vmax = float(np.max(np.abs(values)))
    worst = float(-values[neg].min())
    if worst > CLAMP_TOL * vmax:
        raise StepSizeError(
            f"step produced negative density {-worst:.3e} (max {vmax:.3e}); retry with smaller theta"
        )
    mass = float(np.dot(values[neg], grid.mean_volumes[neg] * grid.widths[neg]))
    values = np.where(neg, 0.0, values)
    return values, mass


def step(state, dt, op, stepper="rk4", threads=1, k1=None):
    """Advance ``state`` by ``dt``; ``k1`` may carry rates already evaluated at ``state``."""
    if dt == 0:
        return state
    g = state.values
    if k1 is None:
        k1 = rhs(state, op, threads)
    if stepper == "euler":
        dv = k1.dvalues
        dd, de = k1.dust_rate, k1.escape_rate
    elif stepper == "rk4":
        k2 = rhs(g + 0.5 * dt * k1.dvalues, op, threads, check=False)
        k3 = rhs(g + 0.5 * dt * k2.dvalues, op, threads, check=False)
        k4 = rhs(g + dt * k3.dvalues, op, threads, check=False)
        dv = (k1.dvalues + 2.0 * (k2.dvalues + k3.dvalues) + k4.dvalues) / 6.0
        dd = (k1.dust_rate + 2.0 * (k2.dust_rate + k3.dust_rate) + k4.dust_rate) / 6.0
        de = (k1.escape_rate + 2.0 * (k2.escape_rate + k3.escape_rate) + k4.escape_rate) / 6.0
    else:
        raise ValueError(f"unknown stepper {stepper!r}")
    values, clamped = _clamp(g + dt * dv, op.grid)
    return disc.GriddedDensity(
        values=values,
        time=state.time + dt,
        dust_mass=state.dust_mass + dt * dd,
        escaped_mass=state.escaped_mass + dt * de,
        roundoff_mass=state.roundoff_mass + clamped,
    )


@dataclass(frozen=True)
class SnapshotReport:
    M0: float
    M1: float
    M_neg2beta: float
    dust: float
    escaped: float
    roundoff: float
    mass_residual: float


@dataclass(frozen=True, eq=False)
class Snapshot:
    time: float
    state: disc.GriddedDensity
    report: SnapshotReport


@dataclass(eq=False)
class Trajectory:
    config: object
    grid: disc.Grid
    records: list
    steps: int = 0

    @property
    def times(self):
        return np.array([r.time for r in self.records])

    def values(self):
        """(snapshots, cells) array of densities."""
        return np.array([r.state.values for r in self.records])

    def series(self, name):
        return np.array([getattr(r.report, name) for r in self.records])


def snapshot_report(grid, state, beta, m1_initial):
    m1 = disc.moment(grid, state, 1.0)
    residual = m1_initial - m1 - state.dust_mass - state.escaped_mass - state.roundoff_mass
    return SnapshotReport(
        M0=disc.moment(grid, state, 0.0),
        M1=m1,
        M_neg2beta=disc.moment(grid, state, -2.0 * beta),
        dust=state.dust_mass,
        escaped=state.escaped_mass,
        roundoff=state.roundoff_mass,
        mass_residual=abs(residual) / m1_initial if m1_initial > 0 else abs(residual),
    )


def initial_state(cfg, grid):
    return disc.project_initial(cfg.initial, grid)


def run(cfg, op=None, threads=None):
    """Integrate ``cfg`` from its projected initial datum to ``cfg.T``."""
    op = build_operator(cfg) if op is None else op
    threads = cfg.threads if threads is None else threads
    grid = op.grid
    beta = cfg.kernel.beta
    state = initial_state(cfg, grid)
    m1_0 = disc.moment(grid, state, 1.0)
    traj = Trajectory(cfg, grid, [Snapshot(0.0, state, snapshot_report(grid, state, beta, m1_0))])
    steps = 0
    try:
        for t_out in cfg.times()[1:]:
            while state.time < t_out:
                gap = t_out - state.time
                k1 = rhs(state, op, threads)
                dt = stable_dt(state, k1, cfg.theta, gap)
                if cfg.dt_max is not None:
                    dt = min(dt, cfg.dt_max)
                # absorb a sliver so output times are hit exactly
                if gap - dt <= 1e-12 * max(1.0, t_out):
                    dt = gap
                state = step(state, dt, op, cfg.stepper, threads, k1=k1)
                if dt == gap:
                    state = disc.GriddedDensity(
                        state.values, t_out, state.dust_mass, state.escaped_mass, state.roundoff_mass
                    )
                steps += 1
            traj.records.append(Snapshot(t_out, state, snapshot_report(grid, state, beta, m1_0)))
    except StepSizeError as exc:
        traj.steps = steps
        raise SolverError(f"integration failed at t={state.time:.6g}: {exc}", traj) from exc
    traj.steps = steps
    logger.debug("run finished: %d steps, %d cells", steps, grid.cells)
    return traj
