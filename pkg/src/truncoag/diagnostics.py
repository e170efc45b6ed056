"""Moment identities, a priori bounds and weak-form residuals for trajectories.

All checks read a :class:`~truncoag.solver.Trajectory` and never modify it.
Bounds with astronomically large constants are carried in log space; a bound
that does not fit in a double is reported as ``None`` with its logarithm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import discretization as disc
from . import kernels
from .errors import DivergenceError, DomainError

REL_SLACK = 1e-6


# --- mass ledgers ----------------------------------------------------------


def check_mass_identity(traj):
    """Relative mass-balance residual at each snapshot.

    zeta = 1: |M1 + dust - M1(0)| / M1(0); zeta = 0 additionally subtracts the
    escaped ledger.  The clamping ledger is included in both (it is zero unless
    roundoff negatives were clipped).
    """
    m1 = traj.series("M1")
    dust = traj.series("dust")
    roundoff = traj.series("roundoff")
    escaped = traj.series("escaped") if traj.config.trunc.zeta == 0 else 0.0
    ref = m1[0] if m1[0] > 0 else 1.0
    return np.abs(m1[0] - m1 - dust - escaped - roundoff) / ref


# --- a priori bounds ----------------------------------------------------------


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def _from_log(logv):
    return math.exp(logv) if logv < 709.0 else None


def moment_bound(norm, k2, c1, T):
    """norm * exp(k2 (c1 - 1) T)."""
    return norm * math.exp(k2 * (c1 - 1.0) * T)


@dataclass
class BoundCheck:
    name: str
    lhs: np.ndarray
    log_bound: float
    passed: bool
    applicable: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def bound(self):
        return _from_log(self.log_bound)

    @property
    def lhs_max(self):
        return float(np.max(self.lhs)) if np.size(self.lhs) else 0.0

    def as_row(self):
        return {
            "name": self.name,
            "lhs": self.lhs_max,
            "bound": self.bound,
            "log_bound": self.log_bound,
            "pass": bool(self.passed),
        }


def _c1(traj):
    cfg = traj.config
    try:
        return kernels.negative_moment_constant(cfg.frag, cfg.kernel.beta)
    except DivergenceError:
        return None


def moment_bound_check(traj, T=None):
    """M_{-2beta}(t) + M1(t) against ||g_in||_{-2beta,1} exp(k2 (c1 - 1) T).

    The norm is that of the discrete initial datum, i.e. the truncated and
    projected g_n^in the solver actually starts from.
    """
    cfg = traj.config
    T = cfg.T if T is None else T
    lhs = traj.series("M_neg2beta") + traj.series("M1")
    c1 = _c1(traj)
    if c1 is None:
        return BoundCheck("moment_bound", lhs, math.inf, True, applicable=False)
    norm = float(lhs[0])
    log_b = _log(norm) + cfg.frag.k2 * (c1 - 1.0) * T
    passed = bool(np.all(np.log(np.maximum(lhs, 1e-300)) <= log_b + math.log1p(REL_SLACK)))
    return BoundCheck(
        "moment_bound",
        lhs,
        log_b,
        passed,
        extra={"c1": c1, "norm": norm, "norm_continuous": cfg.initial.moment(-2 * cfg.kernel.beta) + cfg.initial.moment(1.0)},
    )


def uniform_bound_G(traj, T=None):
    """The constant bounding M_{-2beta} + M1 on [0, T]."""
    chk = moment_bound_check(traj, T)
    return chk.bound if chk.applicable else math.inf


# --- convex pair -----------------------------------------------------------


def sigma(p):
    """p log(1 + p): superlinear, convex, with concave derivative."""
    p = np.asarray(p, dtype=float)
    return p * np.log1p(p)


def dsigma(p):
    p = np.asarray(p, dtype=float)
    return np.log1p(p) + p / (1.0 + p)


@dataclass
class ConvexPair:
    gamma: float
    beta: float
    S_gamma: float
    Gamma1: float
    Gamma2: float
    membership: dict

    # sigma_1 and sigma_2 are the same function here
    sigma1 = staticmethod(sigma)
    sigma2 = staticmethod(sigma)
    dsigma1 = staticmethod(dsigma)
    dsigma2 = staticmethod(dsigma)


def sup_ratio(gamma, lo=1e-8, hi=1e8, points=4001):
    """sup of sigma(p) / p**gamma over a log grid, polished by a bounded search."""
    lp = np.linspace(math.log(lo), math.log(hi), points)
    p = np.exp(lp)
    vals = sigma(p) / p**gamma
    k = int(np.argmax(vals))
    a, b = lp[max(k - 1, 0)], lp[min(k + 1, points - 1)]
    res = optimize.minimize_scalar(
        lambda s: -float(sigma(math.exp(s)) / math.exp(s) ** gamma),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(vals[k]), -float(res.fun))


def membership_checks(points=1000, lo=1e-6, hi=1e6):
    """Sampled class properties of sigma on log-spaced points."""
    p = np.geomspace(lo, hi, points)
    s = sigma(p)
    ds = dsigma(p)
    slope_s = np.diff(s) / np.diff(p)
    slope_ds = np.diff(ds) / np.diff(p)
    ratio = s / p
    return {
        "zero_at_origin": float(sigma(0.0)) == 0.0 and float(dsigma(0.0)) == 0.0,
        "nonnegative": bool(np.all(s >= 0)),
        "convex": bool(np.all(np.diff(slope_s) >= -1e-12 * np.abs(slope_s[1:]))),
        "derivative_concave": bool(np.all(np.diff(slope_ds) <= 1e-12 * np.abs(slope_ds[:-1]))),
        "ratio_increasing": bool(np.all(np.diff(ratio) > 0)),
        "superlinear": bool(ratio[-1] > 10.0 and ds[-1] > 10.0),
    }


def _half_line_quad(f):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            a, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=400)
            b, _ = integrate.quad(f, 1.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
        except integrate.IntegrationWarning as exc:
            raise DivergenceError(f"quadrature did not converge: {exc}") from None
    val = a + b
    if not math.isfinite(val):
        raise DivergenceError("integral diverges")
    return val


def build_convex_pair(g_in, beta, gamma, nu=None):
    if not 1 < gamma < 2:
        raise DomainError(f"gamma must lie in (1, 2), got {gamma}")
    if nu is not None and not gamma * (nu - beta) + 1 > 0:
        raise DomainError("gamma (nu - beta) + 1 must be > 0")
    gamma1 = _half_line_quad(lambda y: float(sigma(y)) * g_in(y))
    gamma2 = _half_line_quad(lambda y: float(sigma(y**-beta * g_in(y))))
    return ConvexPair(
        gamma=gamma,
        beta=beta,
        S_gamma=sup_ratio(gamma),
        Gamma1=gamma1,
        Gamma2=gamma2,
        membership=membership_checks(),
    )


def sigma1_tail(traj):
    g = traj.values()
    return g @ (sigma(traj.grid.pivots) * traj.grid.widths)


def log_theta(gamma1, k1, G, T):
    """log of (Gamma1 + 48 k1 sigma(1) G^2 T) exp(40 k1 G T)."""
    return math.log(gamma1 + 48.0 * k1 * math.log(2.0) * G**2 * T) + 40.0 * k1 * G * T


def tail_bound_check(traj, pair=None, T=None):
    """sigma_1 tail against Theta(T); Gamma1 is taken from the discrete datum."""
    cfg = traj.config
    T = cfg.T if T is None else T
    tail = sigma1_tail(traj)
    G = uniform_bound_G(traj, T)
    if not math.isfinite(G):
        return BoundCheck("tail_bound", tail, math.inf, True, applicable=False)
    gamma1 = float(tail[0])
    log_b = log_theta(gamma1, cfg.kernel.k1, G, T)
    passed = bool(np.all(np.log(np.maximum(tail, 1e-300)) <= log_b + math.log1p(REL_SLACK)))
    extra = {"G": G, "Gamma1_discrete": gamma1}
    if pair is not None:
        extra["Gamma1"] = pair.Gamma1
    return BoundCheck("tail_bound", tail, log_b, passed, extra=extra)


def _clipped_power_integral(grid, p, R):
    """Integral of y**p over each cell intersected with (0, R)."""
    hi = np.minimum(grid.edges[1:], R)
    lo = grid.edges[:-1]
    ok = hi > lo
    out = np.zeros(grid.cells)
    q = p + 1.0
    lr = np.log(hi[ok] / lo[ok])
    out[ok] = lr if q == 0 else lo[ok] ** q * np.expm1(q * lr) / q
    return out


def sigma2_functional(traj, R):
    """Integral over (0, R) of sigma_2(y^-beta g); pivot-weighted cell values."""
    grid = traj.grid
    beta = traj.config.kernel.beta
    w = _clipped_power_integral(grid, 0.0, R)
    h = traj.values() * grid.pivots**-beta
    return sigma(h) @ w


def equi_integrability_check(traj, pair, R):
    """Report the sigma_2 functional with its Gronwall envelope.

    The envelope F(0) e^{C2 t} + (C3 / C2)(e^{C2 t} - 1) is assembled from the
    explicit constants C2, C3 of the equi-integrability estimate; the check is
    informational since the final constant C(T, R) is never made explicit.
    """
    cfg = traj.config
    if R > cfg.trunc.n:
        raise DomainError("R must not exceed n")
    F = sigma2_functional(traj, R)
    t = traj.times
    G = uniform_bound_G(traj)
    k1, k2, nu, beta, gam = cfg.kernel.k1, cfg.frag.k2, cfg.frag.nu, cfg.kernel.beta, pair.gamma
    expo = gam * nu - gam * beta + 1.0
    C1 = k1 * (1.0 + R) * G
    C2 = C1 + 2.0 * k2 * (nu + 2.0) * G
    C3 = k2 * (nu + 2.0) / expo * pair.S_gamma * (G + R**expo)
    with np.errstate(over="ignore"):
        if C2 > 0:
            env = F[0] * np.exp(C2 * t) + C3 / C2 * np.expm1(C2 * t)
            log_env = C2 * t[-1] + _log(F[0] + C3 / C2 * -math.expm1(-C2 * t[-1]))
        else:
            env = F[0] + C3 * t
            log_env = _log(env[-1])
    fit_ok = t.size > 1 and np.all(F > 0)
    growth = float(np.polyfit(t, np.log(F), 1)[0]) if fit_ok else 0.0
    passed = bool(np.all(np.isfinite(F)) and np.all(F <= env * (1 + REL_SLACK)))
    return BoundCheck(
        "equi_integrability",
        F,
        log_env,
        passed,
        extra={"R": R, "C2": C2, "C3": C3, "fitted_growth": growth, "sup": float(np.max(F)), "informational": True},
    )


def equicontinuity_constant(k1, k2, c1, G, R, psi_sup=1.0):
    return psi_sup * (0.5 * k1 * (1 + R) * G + 2.0 * k1 * (1 + R) * G + c1 * k2 + k2) * G


def equicontinuity_ratio(traj, psi=None, R=None, psi_sup=None):
    """max over snapshot pairs of |int_0^R y^-beta psi (g(t) - g(s))| / (t - s).

    Returns a BoundCheck whose bound is the explicit Lipschitz constant.
    """
    cfg = traj.config
    grid = traj.grid
    R = cfg.trunc.n if R is None else R
    beta = cfg.kernel.beta
    x = grid.pivots
    pv = np.ones_like(x) if psi is None else np.broadcast_to(np.asarray(psi(x), dtype=float), x.shape)
    psi_sup = float(np.max(np.abs(pv))) if psi_sup is None else psi_sup
    wts = pv * _clipped_power_integral(grid, -beta, R)
    v = traj.values()
    t = traj.times
    if t.size < 2:
        raise DomainError("need at least two snapshots")
    dt = t[None, :] - t[:, None]
    # difference densities first so identical snapshots give exactly zero
    df = np.abs((v[None, :, :] - v[:, None, :]) @ wts)
    upper = dt > 0
    ratio = float(np.max(df[upper] / dt[upper]))
    c1 = _c1(traj)
    G = uniform_bound_G(traj)
    if c1 is None or not math.isfinite(G):
        return BoundCheck("equicontinuity", np.array([ratio]), math.inf, True, applicable=False)
    lip = equicontinuity_constant(cfg.kernel.k1, cfg.frag.k2, c1, G, R, psi_sup)
    return BoundCheck(
        "equicontinuity",
        np.array([ratio]),
        _log(lip),
        ratio <= lip * (1 + REL_SLACK),
        extra={"R": R, "constant": lip, "psi_sup": psi_sup},
    )


# --- weak formulation ------------------------------------------------------


@dataclass(frozen=True)
class OmegaFunction:
    tag: str
    kind: str
    a: float = 0.0
    b: float = 0.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "one":
            return np.ones_like(y)
        if self.kind == "identity":
            return y.copy()
        if self.kind == "capped":
            return np.minimum(y, self.a)
        return ((y > self.a) & (y < self.b)).astype(float)

    def fragment_moment(self, frag, z):
        """Integral of omega(y) b(y|z) over (0, z), closed form."""
        z = np.asarray(z, dtype=float)
        nu = frag.nu
        if self.kind == "one":
            return np.full_like(z, kernels.daughter_count(frag))
        if self.kind == "identity":
            return z.copy()
        if self.kind == "capped":
            R = self.a
            below = z <= R
            zc = np.maximum(z, R)
            part = R ** (nu + 2.0) / zc ** (nu + 1.0) + R * (nu + 2.0) / (nu + 1.0) * (
                zc ** (nu + 1.0) - R ** (nu + 1.0)
            ) / zc ** (nu + 1.0)
            return np.where(below, z, part)
        return np.asarray(kernels.breakage_number(frag, self.a, self.b, z))

    def eta(self, frag, z):
        """omega(z) minus its daughter average (the fragmentation action)."""
        return self(z) - self.fragment_moment(frag, z)


def parse_test_function(tag):
    parts = tag.strip().split(":")
    kind = parts[0]
    try:
        if kind in ("one", "identity") and len(parts) == 1:
            return OmegaFunction(tag, kind)
        if kind == "capped" and len(parts) == 2:
            R = float(parts[1])
            if R > 0:
                return OmegaFunction(tag, kind, R)
        if kind == "indicator" and len(parts) == 3:
            a, b = float(parts[1]), float(parts[2])
            if 0 <= a < b:
                return OmegaFunction(tag, kind, a, b)
    except ValueError:
        pass
    raise DomainError(f"unknown test function {tag!r}; expected one, identity, capped:R or indicator:a:b")


def weak_rates(traj, omega):
    """Per-snapshot right-hand side of the truncated weak formulation."""
    cfg = traj.config
    grid = traj.grid
    trunc = cfg.trunc
    x = grid.pivots
    n = trunc.n
    xx, zz = np.meshgrid(x, x, indexing="ij")
    # chi chi A without the zeta factor; zeta enters through G below
    A = kernels.eval_coag_truncated(cfg.kernel, kernels.TruncationSpec(n, 0), xx, zz)
    s = xx + zz
    inside = s < n
    w_sum = np.where(inside, omega(s), 0.0)
    factor = np.where(inside, 1.0, 1.0 - trunc.zeta)
    Gmat = w_sum - (omega(xx) + omega(zz)) * factor
    K = 0.5 * Gmat * A
    sel = np.asarray(kernels.eval_selection(cfg.frag, trunc, x)) * np.ones_like(x)
    H = omega.eta(cfg.frag, x)
    N = traj.values() * grid.widths
    coag = np.einsum("tj,jk,tk->t", N, K, N)
    frag = -(N @ (H * sel))
    return coag + frag


def weak_residual(traj, tag):
    """|LHS - RHS| of the truncated weak formulation at each snapshot.

    LHS uses point values of omega at pivots; the time integral of the RHS is
    the trapezoid rule over the snapshot times.
    """
    omega = parse_test_function(tag) if isinstance(tag, str) else tag
    grid = traj.grid
    N = traj.values() * grid.widths
    lhs = (N - N[0]) @ omega(grid.pivots)
    rates = weak_rates(traj, omega)
    rhs = integrate.cumulative_trapezoid(rates, traj.times, initial=0.0)
    return np.abs(lhs - rhs)


# --- full report -----------------------------------------------------------


@dataclass
class DiagnosticsReport:
    times: np.ndarray
    M0: np.ndarray
    M1: np.ndarray
    M_neg2beta: np.ndarray
    dust: np.ndarray
    escaped: np.ndarray
    mass_balance_residual: np.ndarray
    moment_bound: BoundCheck
    tail_bound: BoundCheck
    equi_integrability: BoundCheck
    equicontinuity: BoundCheck
    weak_residuals: dict
    pair: ConvexPair

    def checks(self, mass_tol=1e-12):
        """Rows {name, lhs, bound, pass} for every identity and bound check."""
        mass_lhs = float(np.max(self.mass_balance_residual))
        rows = [{"name": "mass_identity", "lhs": mass_lhs, "bound": mass_tol, "log_bound": math.log(mass_tol), "pass": mass_lhs <= mass_tol}]
        for chk in (self.moment_bound, self.tail_bound, self.equi_integrability, self.equicontinuity):
            row = chk.as_row()
            if chk.extra.get("informational"):
                row["informational"] = True
            rows.append(row)
        for tag, res in self.weak_residuals.items():
            rows.append({"name": f"weak_residual[{tag}]", "lhs": float(res[-1]), "bound": None, "log_bound": None, "pass": True, "informational": True})
        return rows


def diagnose(traj, gamma=None, R=None, test_functions=None):
    cfg = traj.config
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", kernels.AssumptionWarning)
        _, gamma_auto = kernels.check_assumptions(cfg.kernel, cfg.frag, gamma if gamma is not None else cfg.gamma)
    R = cfg.R_value if R is None else R
    tfs = cfg.test_functions if test_functions is None else test_functions
    pair = build_convex_pair(cfg.initial, cfg.kernel.beta, gamma_auto, cfg.frag.nu)
    return DiagnosticsReport(
        times=traj.times,
        M0=traj.series("M0"),
        M1=traj.series("M1"),
        M_neg2beta=traj.series("M_neg2beta"),
        dust=traj.series("dust"),
        escaped=traj.series("escaped"),
        mass_balance_residual=check_mass_identity(traj),
        moment_bound=moment_bound_check(traj),
        tail_bound=tail_bound_check(traj, pair),
        equi_integrability=equi_integrability_check(traj, pair, R),
        equicontinuity=equicontinuity_ratio(traj, R=R),
        weak_residuals={tag: weak_residual(traj, tag) for tag in tfs},
        pair=pair,
    )
