"""Geometric size grid, projection of initial data and operator tables.

The number density is stored as cell averages ``g_i`` on a geometric grid, so
``N_i = g_i * width_i`` is the number of particles in cell ``i``, all of which
sit at the pivot ``x_i`` (geometric mean of the cell edges).  Coagulation
births ``x_j + x_k`` are split between the two bracketing pivots so that both
number and pivot mass are preserved; fragmentation daughters are counted
with exact power integrals of ``b`` and rescaled per source so that pivot
mass is preserved exactly, with the sub-grid part sent to a dust ledger.

On a geometric grid the cell mean volume ``c_i = (e_i + e_{i+1}) / 2`` is a
fixed multiple of ``x_i``, so preserving pivot mass also preserves the first
moment ``sum g_i * integral(y dy over cell i)`` to roundoff.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from . import kernels
from .errors import GridError, ProjectionError


class GridWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    edges: np.ndarray
    pivots: np.ndarray = field(init=False)
    widths: np.ndarray = field(init=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 3:
            raise GridError("grid needs at least two cells")
        if not e[0] > 0 or np.any(np.diff(e) <= 0):
            raise GridError("edges must be positive and strictly increasing")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        piv = np.sqrt(e[:-1] * e[1:])
        wid = np.diff(e)
        piv.setflags(write=False)
        wid.setflags(write=False)
        object.__setattr__(self, "pivots", piv)
        object.__setattr__(self, "widths", wid)

    @property
    def cells(self):
        return self.pivots.size

    @property
    def y_min(self):
        return float(self.edges[0])

    @property
    def y_max(self):
        return float(self.edges[-1])

    @property
    def ratio(self):
        return float(self.edges[1] / self.edges[0])

    @property
    def mean_volumes(self):
        """Cell mean volume, i.e. (integral of y over the cell) / width."""
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def build_grid(y_min, n, cells):
    if not (isinstance(cells, (int, np.integer)) and cells >= 2):
        raise GridError(f"cells must be an integer >= 2, got {cells!r}")
    if not (0 < y_min < n and math.isfinite(n)):
        raise GridError(f"need 0 < y_min < n, got y_min={y_min}, n={n}")
    if y_min > 1.0 / n * (1 + 1e-12):
        warnings.warn(
            f"y_min={y_min:g} > 1/n={1 / n:g}: the coagulation support (1/n, n) "
            "is not fully resolved",
            GridWarning,
            stacklevel=2,
        )
    edges = np.geomspace(y_min, n, cells + 1)
    edges[0], edges[-1] = y_min, n
    return Grid(edges)


def cell_power_integral(grid, i=None, p=0.0):
    """Integral of y**p over cell ``i`` (all cells when ``i`` is None)."""
    lo = grid.edges[:-1] if i is None else grid.edges[i]
    hi = grid.edges[1:] if i is None else grid.edges[i + 1]
    q = p + 1.0
    log_ratio = np.log(hi / lo)
    if q == 0.0:
        out = log_ratio
    else:
        # expm1 keeps thin cells accurate
        out = lo**q * np.expm1(q * log_ratio) / q
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class GriddedDensity:
    values: np.ndarray
    time: float = 0.0
    dust_mass: float = 0.0
    escaped_mass: float = 0.0
    # mass removed by clamping roundoff negatives (signed)
    roundoff_mass: float = 0.0

    def with_values(self, values, **kw):
        return replace(self, values=values, **kw)


def project_initial(f, grid, epsrel=1e-10):
    """Cell averages of ``f`` by adaptive quadrature."""
    vals = np.empty(grid.cells)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for i in range(grid.cells):
            a, b = grid.edges[i], grid.edges[i + 1]
            try:
                v, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=epsrel, limit=200)
            except integrate.IntegrationWarning as exc:
                raise ProjectionError(f"quadrature failed on cell {i} [{a:g}, {b:g}]: {exc}")
            vals[i] = v / (b - a)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ProjectionError("initial density must be finite and nonnegative")
    return GriddedDensity(values=vals)


def moment(grid, d, p):
    vals = d.values if isinstance(d, GriddedDensity) else np.asarray(d)
    return float(np.dot(vals, cell_power_integral(grid, None, p)))


@dataclass(frozen=True, eq=False)
class CoagTables:
    rate: np.ndarray  # (M, M) truncated rate at pivot pairs; drives the loss term
    pair_j: np.ndarray  # unordered in-domain pairs j <= k
    pair_k: np.ndarray
    pair_weight: np.ndarray  # 1 off-diagonal, 1/2 on the diagonal
    lower: np.ndarray  # destination cells of the split birth
    upper: np.ndarray
    frac_lower: np.ndarray  # number assigned to each destination per event
    frac_upper: np.ndarray
    esc_j: np.ndarray  # zeta = 0 pairs whose birth leaves (0, n)
    esc_k: np.ndarray
    esc_weight: np.ndarray
    esc_mass: np.ndarray  # c_j + c_k for each escape pair


def split_birth(pivots, b):
    """Two-point split of births ``b`` onto bracketing pivots.

    Returns (lower, upper, frac_lower, frac_upper) with number and pivot mass
    preserved.  Births at or above the last pivot have no upper neighbour and
    are assigned to the last cell by mass only.
    """
    b = np.asarray(b, dtype=float)
    m = pivots.size
    lower = np.searchsorted(pivots, b, side="right") - 1
    if np.any(lower < 0):
        raise GridError("birth below the first pivot")
    top = lower >= m - 1
    lower = np.minimum(lower, m - 1)
    upper = np.minimum(lower + 1, m - 1)
    u = pivots[lower]
    v = pivots[upper]
    with np.errstate(divide="ignore", invalid="ignore"):
        fl = np.where(top, b / u, (v - b) / (v - u))
    fu = np.where(top, 0.0, 1.0 - fl)
    # exact hits on a pivot
    fu = np.where(b == u, 0.0, fu)
    fl = np.where(b == u, 1.0, fl)
    return lower, upper, fl, fu


def build_coag_tables(grid, spec, trunc):
    if not math.isclose(grid.y_max, trunc.n, rel_tol=1e-12):
        raise GridError(f"grid upper edge {grid.y_max:g} != truncation cutoff n={trunc.n:g}")
    x = grid.pivots
    m = x.size
    active = (x > 1.0 / trunc.n) & (x < trunc.n)
    xx, zz = np.meshgrid(x, x, indexing="ij")
    rate = np.zeros((m, m))
    act2 = np.outer(active, active)
    births = xx + zz
    inside = births < trunc.n
    react = act2 & (inside | (trunc.zeta == 0))
    rate[react] = kernels.eval_coag(spec, xx[react], zz[react])
    rate = 0.5 * (rate + rate.T)

    jj, kk = np.triu_indices(m)
    keep = rate[jj, kk] > 0
    jj, kk = jj[keep], kk[keep]
    wt = np.where(jj == kk, 0.5, 1.0)
    b = x[jj] + x[kk]
    internal = b < trunc.n
    lower, upper, fl, fu = split_birth(x, b[internal])
    c = grid.mean_volumes
    esc = ~internal
    return CoagTables(
        rate=rate,
        pair_j=jj[internal],
        pair_k=kk[internal],
        pair_weight=wt[internal],
        lower=lower,
        upper=upper,
        frac_lower=fl,
        frac_upper=fu,
        esc_j=jj[esc],
        esc_k=kk[esc],
        esc_weight=wt[esc],
        esc_mass=c[jj[esc]] + c[kk[esc]],
    )


@dataclass(frozen=True, eq=False)
class FragMatrix:
    F: np.ndarray  # F[i, j]: daughters in cell i per breakup event in cell j
    dust: np.ndarray  # d[j]: fraction of source mass born below edges[0]
    selection: np.ndarray  # truncated selection rate at pivots
    raw: np.ndarray  # unnormalised power-integral counts
    scale: np.ndarray  # per-source normalisation applied to raw


def build_frag_matrix(grid, frag, trunc, lump_dust=False):
    x = grid.pivots
    e = grid.edges
    raw = kernels.breakage_number(frag, e[:-1, None], e[1:, None], x[None, :])
    raw = np.asarray(raw)
    dust = (e[0] / x) ** (frag.nu + 2.0)
    pivot_mass = x @ raw
    scale = x * (1.0 - dust) / pivot_mass
    F = raw * scale[None, :]
    if lump_dust:
        F[0, :] += dust * x / x[0]
        dust = np.zeros_like(dust)
    sel = np.asarray(kernels.eval_selection(frag, trunc, x), dtype=float)
    if sel.ndim == 0:
        sel = np.full(x.size, float(sel))
    return FragMatrix(F=F, dust=dust, selection=sel, raw=raw, scale=scale)
