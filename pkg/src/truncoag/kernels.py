"""Coagulation rates, power-law breakage, selection rates and their truncations.

Every rate family carries an envelope ``k1 * (1 + y + z) / (y z)**beta`` that
bounds it from above; the a priori bound checks in :mod:`truncoag.diagnostics` take
their constants from that envelope.  Breakage is the power-law family

    b(y | z) = (nu + 2) y**nu / z**(1 + nu),   0 < y < z,   -1 < nu <= 0,

whose moments are all available in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError

FAMILIES = {
    "constant": "A = k1; envelope beta = 0; k1 >= 0",
    "singular-affine": "A = k1 (1 + y + z) / (y z)^beta; k1 >= 0, 0 <= beta < 1/2",
    "brownian": "A = (k1/4) (y^(1/3) + z^(1/3)) (y^(-1/3) + z^(-1/3)); k1 >= 0 (default 4), beta = 1/3",
    "granulation": "A = k1 (y + z)^a / (y z)^b; k1 >= 0, 0 <= a <= 1, 0 <= b < 1/2 (beta = b)",
}


class AssumptionWarning(UserWarning):
    """A parameter sits on the edge of the admissible class (e.g. c1 <= 2)."""


@dataclass(frozen=True)
class KernelSpec:
    family: str = "singular-affine"
    k1: float = 1.0
    beta: float = 0.0
    # granulation sum exponent; ignored by the other families
    a: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}")
        if not (self.k1 >= 0 and math.isfinite(self.k1)):
            raise DomainError(f"k1 must be finite and >= 0, got {self.k1}")
        if not 0 <= self.beta < 0.5:
            raise DomainError(f"beta must lie in [0, 1/2), got {self.beta}")
        if self.family == "constant" and self.beta != 0:
            raise DomainError("constant family has envelope exponent beta = 0")
        if self.family == "brownian" and self.beta != 1 / 3:
            raise DomainError("brownian family has envelope exponent beta = 1/3")
        if self.family == "granulation" and not 0 <= self.a <= 1:
            raise DomainError(f"granulation exponent a must lie in [0, 1], got {self.a}")

    @classmethod
    def constant(cls, k=1.0):
        return cls("constant", k, 0.0)

    @classmethod
    def singular_affine(cls, k1=1.0, beta=0.0):
        return cls("singular-affine", k1, beta)

    @classmethod
    def brownian(cls, k1=4.0):
        return cls("brownian", k1, 1 / 3)

    @classmethod
    def granulation(cls, k1=1.0, a=1.0, b=0.0):
        return cls("granulation", k1, b, a)


@dataclass(frozen=True)
class FragmentationSpec:
    nu: float = 0.0
    k2: float = 1.0

    def __post_init__(self):
        if not -1 < self.nu <= 0:
            raise DomainError(f"breakage exponent nu must lie in (-1, 0], got {self.nu}")
        if not (self.k2 >= 0 and math.isfinite(self.k2)):
            raise DomainError(f"k2 must be finite and >= 0, got {self.k2}")


@dataclass(frozen=True)
class TruncationSpec:
    n: float
    zeta: int = 1

    def __post_init__(self):
        if not self.n > 1:
            raise DomainError(f"truncation cutoff n must exceed 1, got {self.n}")
        if self.zeta not in (0, 1):
            raise DomainError(f"zeta must be 0 or 1, got {self.zeta}")

    @property
    def conservative(self):
        return self.zeta == 1


def _positive(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be > 0")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def eval_coag(spec, y, z):
    """Coagulation rate A(y, z); vectorised over broadcastable ``y``, ``z``."""
    y = _positive("y", y)
    z = _positive("z", z)
    f = spec.family
    if f == "constant":
        out = np.full(np.broadcast(y, z).shape, spec.k1)
    elif f == "singular-affine":
        # 1 + (y + z) keeps the rounding order symmetric in (y, z)
        out = spec.k1 * (1.0 + (y + z)) / (y * z) ** spec.beta
    elif f == "brownian":
        cy, cz = np.cbrt(y), np.cbrt(z)
        out = 0.25 * spec.k1 * (cy + cz) * (1.0 / cy + 1.0 / cz)
    else:
        out = spec.k1 * (y + z) ** spec.a / (y * z) ** spec.beta
    return _out(out)


def coag_envelope(spec, y, z):
    """Upper bound k1 (1 + y + z) / (y z)**beta stored with the family."""
    y = _positive("y", y)
    z = _positive("z", z)
    return _out(spec.k1 * (1.0 + (y + z)) / (y * z) ** spec.beta)


def _in_support(trunc, y):
    return (y > 1.0 / trunc.n) & (y < trunc.n)


def eval_coag_truncated(spec, trunc, y, z):
    y = _positive("y", y)
    z = _positive("z", z)
    mask = _in_support(trunc, y) & _in_support(trunc, z)
    if trunc.zeta == 1:
        mask = mask & (y + z < trunc.n)
    return _out(np.where(mask, eval_coag(spec, y, z), 0.0))


def eval_breakage(frag, y, z):
    """Daughter density b(y|z); zero for y >= z."""
    y = _positive("y", y)
    z = _positive("z", z)
    nu = frag.nu
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (nu + 2.0) * y**nu / z ** (1.0 + nu)
    return _out(np.where(y < z, val, 0.0))


def daughter_count(frag):
    return (frag.nu + 2.0) / (frag.nu + 1.0)


def negative_moment_constant(frag, beta):
    """c1 such that the y**(-2 beta) moment of b(.|z) equals c1 z**(-2 beta)."""
    denom = frag.nu + 1.0 - 2.0 * beta
    if not denom > 0:
        raise DivergenceError(
            f"nu + 1 - 2 beta = {denom:g} <= 0: the y^(-2 beta) moment of b diverges"
        )
    return (frag.nu + 2.0) / denom


def eval_selection(frag, trunc, y):
    """S(y) = k2 y**(1 + nu), cut off at y >= n when ``trunc`` is given."""
    y = _positive("y", y)
    s = frag.k2 * y ** (1.0 + frag.nu)
    if trunc is not None:
        s = np.where(y < trunc.n, s, 0.0)
    return _out(s)


def fragment_spread_moment(frag, z):
    """Closed form of the integral of (z - y) y b(y|z) over (0, z)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("z must be >= 0")
    return _out(z**2 / (frag.nu + 3.0))


def breakage_number(frag, lo, hi, z):
    """Number of daughters of a parent ``z`` landing in (lo, hi), hi clipped at z."""
    p = frag.nu + 1.0
    lo = np.minimum(np.asarray(lo, dtype=float), z)
    hi = np.minimum(np.asarray(hi, dtype=float), z)
    return _out((frag.nu + 2.0) / p * (hi**p - lo**p) / np.asarray(z, dtype=float) ** p)


def breakage_mass(frag, lo, hi, z):
    """Daughter mass of a parent ``z`` landing in (lo, hi), hi clipped at z."""
    p = frag.nu + 2.0
    lo = np.minimum(np.asarray(lo, dtype=float), z)
    hi = np.minimum(np.asarray(hi, dtype=float), z)
    return _out((hi**p - lo**p) / np.asarray(z, dtype=float) ** (frag.nu + 1.0))


def admissible_gamma(frag, beta):
    """Open interval of gamma in (1, 2) with gamma (nu - beta) + 1 > 0, or None."""
    d = beta - frag.nu
    hi = 2.0 if d <= 0.5 else min(2.0, 1.0 / d)
    return (1.0, hi) if hi > 1.0 else None


def default_gamma(frag, beta):
    interval = admissible_gamma(frag, beta)
    if interval is None:
        return None
    return min(1.5, 0.5 * (interval[0] + interval[1]))


def check_assumptions(kernel, frag, gamma=None):
    """Validate the joint parameter constraints and return (c1, gamma).

    Raises when the negative moment constant diverges or no admissible
    gamma exists; warns (but accepts) when c1 <= 2.
    """
    c1 = negative_moment_constant(frag, kernel.beta)
    if c1 <= 2.0:
        warnings.warn(
            f"c1 = {c1:g} <= 2 (beta = {kernel.beta:g}); bounds remain finite",
            AssumptionWarning,
            stacklevel=2,
        )
    if gamma is None:
        gamma = default_gamma(frag, kernel.beta)
        if gamma is None:
            raise DomainError(
                f"no gamma in (1, 2) with gamma (nu - beta) + 1 > 0 "
                f"for nu = {frag.nu:g}, beta = {kernel.beta:g}"
            )
    elif not (1 < gamma < 2 and gamma * (frag.nu - kernel.beta) + 1 > 0):
        raise DomainError(
            f"gamma = {gamma:g} must lie in (1, 2) with gamma (nu - beta) + 1 > 0"
        )
    return c1, gamma
