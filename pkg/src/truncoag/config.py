"""Run configuration and the sectioned ``key = value`` config file format."""

from __future__ import annotations

import configparser
import io
import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError, DomainError
from .kernels import FragmentationSpec, KernelSpec, TruncationSpec

STEPPERS = ("euler", "rk4")
INITIAL_KINDS = ("exponential", "gamma", "zero")


@dataclass(frozen=True)
class InitialData:
    """g_in(y) = amplitude * y**power * exp(-y / scale)."""

    kind: str = "exponential"
    amplitude: float = 1.0
    scale: float = 1.0
    power: float = 0.0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise DomainError(f"unknown initial datum {self.kind!r}")
        if self.kind == "exponential" and self.power != 0:
            raise DomainError("exponential initial datum has power = 0")
        if not (self.amplitude >= 0 and self.scale > 0):
            raise DomainError("initial amplitude must be >= 0 and scale > 0")

    def __call__(self, y):
        if self.kind == "zero":
            return 0.0 * np.asarray(y, dtype=float) if np.ndim(y) else 0.0
        return self.amplitude * y**self.power * np.exp(-y / self.scale)

    def moment(self, p):
        """Closed-form integral of y**p g_in(y) over (0, inf)."""
        if self.kind == "zero":
            return 0.0
        q = self.power + p + 1.0
        if q <= 0:
            return math.inf
        return self.amplitude * math.gamma(q) * self.scale**q


@dataclass(frozen=True)
class RunConfig:
    kernel: KernelSpec
    frag: FragmentationSpec
    trunc: TruncationSpec
    cells: int
    T: float
    y_min: float | None = None
    lump_dust: bool = False
    initial: InitialData = field(default_factory=InitialData)
    n_outputs: int = 10
    output_times: tuple | None = None
    stepper: str = "rk4"
    theta: float = 0.5
    dt_max: float | None = None
    threads: int = 1
    gamma: float | None = None
    R: float | None = None
    test_functions: tuple = ("one", "capped:5")

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"horizon T must be > 0, got {self.T}")
        if self.stepper not in STEPPERS:
            raise DomainError(f"stepper must be one of {STEPPERS}, got {self.stepper!r}")
        if not 0 < self.theta < 1:
            raise DomainError(f"safety factor theta must lie in (0, 1), got {self.theta}")
        if self.dt_max is not None and not self.dt_max > 0:
            raise DomainError("dt_max must be > 0")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")
        if self.output_times is not None:
            ts = tuple(float(t) for t in self.output_times)
            if any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] < 0 or ts[-1] > self.T:
                raise DomainError("output times must be strictly increasing within [0, T]")
            object.__setattr__(self, "output_times", ts)
        elif self.n_outputs < 1:
            raise DomainError("n_outputs must be >= 1")
        object.__setattr__(self, "test_functions", tuple(self.test_functions))

    @property
    def grid_y_min(self):
        return 1.0 / self.trunc.n if self.y_min is None else self.y_min

    @property
    def beta(self):
        return self.kernel.beta

    @property
    def R_value(self):
        return min(5.0, self.trunc.n) if self.R is None else self.R

    def times(self):
        """Snapshot times, always starting at 0."""
        if self.output_times is not None:
            ts = [t for t in self.output_times if t > 0]
        else:
            ts = [self.T * k / self.n_outputs for k in range(1, self.n_outputs + 1)]
        return (0.0, *ts)

    def with_(self, **kw):
        return replace(self, **kw)


def validate(cfg):
    """Check the joint (kernel, fragmentation, data) assumptions; return (c1, gamma)."""
    try:
        c1, gamma = kernels.check_assumptions(cfg.kernel, cfg.frag, cfg.gamma)
    except (DomainError, DivergenceError) as exc:
        raise ConfigError(str(exc), key="kernel.beta") from exc
    if math.isinf(cfg.initial.moment(-2.0 * cfg.kernel.beta)):
        raise ConfigError(
            "initial datum is not integrable against y^(-2 beta)", key="initial.power"
        )
    if cfg.R is not None and not 1 < cfg.R <= cfg.trunc.n:
        raise ConfigError("R must satisfy 1 < R <= n", key="checks.R")
    return c1, gamma


# --- file format -----------------------------------------------------------

_SCHEMA = {
    "kernel": {"family": str, "k1": float, "beta": float, "a": float},
    "fragmentation": {"nu": float, "k2": float},
    "truncation": {"n": float, "zeta": int},
    "grid": {"cells": int, "y_min": float, "lump_dust": bool},
    "initial": {"kind": str, "amplitude": float, "scale": float, "power": float},
    "stepper": {"method": str, "theta": float, "dt_max": float, "threads": int},
    "outputs": {"T": float, "count": int, "times": "floats"},
    "checks": {"gamma": float, "R": float, "test_functions": "strs"},
    "study": {
        "n_values": "floats",
        "zeta_values": "ints",
        "cells_per_doubling": int,
        "levels": "ints",
        "case": str,
    },
}
_REQUIRED = [
    ("kernel", "family"),
    ("fragmentation", "nu"),
    ("fragmentation", "k2"),
    ("truncation", "n"),
    ("truncation", "zeta"),
    ("grid", "cells"),
    ("outputs", "T"),
]


def _parse_value(kind, raw, key):
    raw = raw.strip()
    try:
        if kind is str:
            return raw
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "floats":
            return tuple(float(s) for s in items)
        if kind == "ints":
            return tuple(int(s) for s in items)
        return tuple(items)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}", key=key) from None


def parse_config_text(text):
    """Parse config text into ``{section: {key: value}}`` with typed values."""
    cp = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    out = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", key=sec)
        out[sec] = {}
        for key, raw in cp.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}", key=f"{sec}.{key}")
            out[sec][key] = _parse_value(_SCHEMA[sec][key], raw, f"{sec}.{key}")
    for sec, key in _REQUIRED:
        if key not in out.get(sec, {}):
            raise ConfigError(f"missing required key {sec}.{key}", key=f"{sec}.{key}")
    return out


def config_from_sections(sec):
    def get(s, k, default=None):
        return sec.get(s, {}).get(k, default)

    def build(key, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except DomainError as exc:
            raise ConfigError(f"{key}: {exc}", key=key) from None

    fam = get("kernel", "family")
    k1 = get("kernel", "k1", 4.0 if fam == "brownian" else 1.0)
    beta = get("kernel", "beta", 1 / 3 if fam == "brownian" else 0.0)
    kernel = build("kernel.beta", KernelSpec, fam, k1, beta, get("kernel", "a", 1.0))
    frag = build("fragmentation.nu", FragmentationSpec, get("fragmentation", "nu"), get("fragmentation", "k2"))
    trunc = build("truncation.n", TruncationSpec, get("truncation", "n"), get("truncation", "zeta"))
    init = build(
        "initial.kind",
        InitialData,
        get("initial", "kind", "exponential"),
        get("initial", "amplitude", 1.0),
        get("initial", "scale", 1.0),
        get("initial", "power", 0.0),
    )
    cfg = build(
        "outputs.T",
        RunConfig,
        kernel=kernel,
        frag=frag,
        trunc=trunc,
        cells=get("grid", "cells"),
        T=get("outputs", "T"),
        y_min=get("grid", "y_min"),
        lump_dust=get("grid", "lump_dust", False),
        initial=init,
        n_outputs=get("outputs", "count", 10),
        output_times=get("outputs", "times"),
        stepper=get("stepper", "method", "rk4"),
        theta=get("stepper", "theta", 0.5),
        dt_max=get("stepper", "dt_max"),
        threads=get("stepper", "threads", 1),
        gamma=get("checks", "gamma"),
        R=get("checks", "R"),
        test_functions=get("checks", "test_functions", ("one", "capped:5")),
    )
    if cfg.cells < 2:
        raise ConfigError("grid.cells must be >= 2", key="grid.cells")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", kernels.AssumptionWarning)
        validate(cfg)
    return cfg


@dataclass(frozen=True)
class StudyConfig:
    n_values: tuple = (10.0, 20.0, 40.0, 80.0)
    zeta_values: tuple = (0, 1)
    cells_per_doubling: int = 8
    levels: tuple = (80, 160, 320)
    case: str = "constant"


def study_from_sections(sec):
    s = sec.get("study", {})
    names = {f.name for f in fields(StudyConfig)}
    return StudyConfig(**{k: v for k, v in s.items() if k in names})


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    sec = parse_config_text(text)
    return config_from_sections(sec), study_from_sections(sec)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def dump_config(cfg, study=None):
    """Serialise ``cfg`` (and optionally ``study``) to config-file text."""
    rows = {
        "kernel": {"family": cfg.kernel.family, "k1": cfg.kernel.k1, "beta": cfg.kernel.beta, "a": cfg.kernel.a},
        "fragmentation": {"nu": cfg.frag.nu, "k2": cfg.frag.k2},
        "truncation": {"n": cfg.trunc.n, "zeta": cfg.trunc.zeta},
        "grid": {"cells": cfg.cells, "y_min": cfg.y_min, "lump_dust": cfg.lump_dust},
        "initial": {
            "kind": cfg.initial.kind,
            "amplitude": cfg.initial.amplitude,
            "scale": cfg.initial.scale,
            "power": cfg.initial.power,
        },
        "stepper": {"method": cfg.stepper, "theta": cfg.theta, "dt_max": cfg.dt_max, "threads": cfg.threads},
        "outputs": {"T": cfg.T, "count": cfg.n_outputs, "times": cfg.output_times},
        "checks": {"gamma": cfg.gamma, "R": cfg.R, "test_functions": cfg.test_functions},
    }
    if study is not None:
        rows["study"] = {f.name: getattr(study, f.name) for f in fields(StudyConfig)}
    buf = io.StringIO()
    for sec, kv in rows.items():
        buf.write(f"[{sec}]\n")
        for k, v in kv.items():
            if v is None:
                continue
            buf.write(f"{k} = {_fmt(v)}\n")
        buf.write("\n")
    return buf.getvalue()
