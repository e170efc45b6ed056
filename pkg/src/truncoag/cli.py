"""Command-line front end: ``truncoag <subcommand> --config FILE --out DIR``.

Exit codes: 0 success with all enforced checks passing, 1 a check failed,
2 configuration or output-directory error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import harness, kernels, solver
from .config import ConfigError, dump_config, load_config
from .errors import SolverError, StudyError, TruncoagError

logger = logging.getLogger("truncoag")

MOMENT_COLUMNS = ("M0", "M1", "M_neg2beta", "dust", "escaped", "mass_residual")


def fmt(x):
    """17 significant digits; integers stay integers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def to_json(obj, indent=0):
    """JSON text with floats at 17 significant digits and non-finite values as null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    _write(path, "\n".join(lines) + "\n")


def _prepare(out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}", key="--out") from None
    return out


def emit_run(traj, out, checks=None):
    """trajectory.csv, moments.csv and checks.json for one trajectory."""
    out = _prepare(out)
    grid = traj.grid
    rows = []
    for rec in traj.records:
        for i, (x, g) in enumerate(zip(grid.pivots, rec.state.values)):
            rows.append((rec.time, i, x, g))
    write_csv(out / "trajectory.csv", ("time", "cell", "pivot", "density"), rows)
    mrows = [(rec.time, *(getattr(rec.report, c) for c in MOMENT_COLUMNS)) for rec in traj.records]
    write_csv(out / "moments.csv", ("time", *MOMENT_COLUMNS), mrows)
    if checks is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", kernels.AssumptionWarning)
            checks = dg.diagnose(traj).checks()
    _write(out / "checks.json", to_json(checks) + "\n")
    return checks


def _failed(checks):
    return [c["name"] for c in checks if not c["pass"] and not c.get("informational")]


def cmd_run(cfg, study, out):
    try:
        traj = solver.run(cfg)
    except SolverError as exc:
        if exc.trajectory is not None:
            emit_run(exc.trajectory, out, checks=[])
        print(f"error: {exc}", file=sys.stderr)
        return 1
    checks = emit_run(traj, out)
    for c in checks:
        logger.info("%-28s lhs=%s pass=%s", c["name"], fmt(c["lhs"]), c["pass"])
    return _verdict(_failed(checks))


def cmd_study(cfg, study, out):
    out = _prepare(out)
    reports = [
        harness.truncation_sequence_study(cfg, study.n_values, z, study.cells_per_doubling)
        for z in study.zeta_values
    ]
    rows, summary = [], {}
    for rep in reports:
        rows += [tuple(r.values()) for r in rep.rows]
        summary[rep.name] = {"runs": rep.rows, "distances": rep.distances, "criteria": rep.criteria}
    header = tuple(reports[0].rows[0].keys()) if reports and reports[0].rows else ()
    write_csv(out / "study.csv", header, rows)
    _write(out / "study.json", to_json(summary) + "\n")
    failed = [f"{rep.name}.{k}" for rep in reports for k, v in rep.criteria.items() if not v]
    return _verdict(failed)


def cmd_compare(cfg, study, out):
    out = _prepare(out)
    cmp = harness.compare_truncations(cfg)
    rows = zip(cmp.times, cmp.M1_conservative, cmp.M1_nonconservative, cmp.gap, cmp.escaped)
    write_csv(out / "comparison.csv", ("time", "M1_conservative", "M1_nonconservative", "gap", "escaped"), rows)
    # the gap is the escaped mass plus the difference in fragmentation dust
    balance = np.abs(cmp.gap - cmp.escaped - (cmp.dust_nonconservative - cmp.dust_conservative))
    ok = bool(np.all(balance <= 1e-12 * max(1.0, cmp.M1_conservative[0])))
    summary = {"terminal_gap": float(cmp.gap[-1]), "terminal_escaped": float(cmp.escaped[-1]), "ledger_balance": float(balance.max()), "pass": ok}
    _write(out / "comparison.json", to_json(summary) + "\n")
    return _verdict([] if ok else ["ledger_balance"])


def cmd_validate(cfg, study, out):
    out = _prepare(out)
    if study.case == "constant":
        rep = harness.validate_constant_kernel(levels=study.levels)
    elif study.case == "fragmentation":
        rep = harness.validate_pure_fragmentation(levels=study.levels)
    else:
        print(f"error: study.case must be 'constant' or 'fragmentation', got {study.case!r}", file=sys.stderr)
        return 2
    rows = [
        (cells, t, e, m0, m1)
        for cells, errs, m0s, m1s in zip(rep.levels, rep.errors, rep.M0, rep.M1)
        for t, e, m0, m1 in zip(rep.times, errs, m0s, m1s)
    ]
    write_csv(out / "validation.csv", ("cells", "time", "error", "M0", "M1"), rows)
    monotone = all(b <= a * 1.05 for a, b in zip(rep.errors[:, -1], rep.errors[1:, -1]))
    summary = {
        "case": rep.name,
        "levels": list(rep.levels),
        "terminal_errors": rep.errors[:, -1],
        "pairwise_orders": rep.orders,
        "fit_order": rep.fit_order,
        "fit_residual": rep.fit_residual,
        "errors_decreasing": monotone,
    }
    _write(out / "validation.json", to_json(summary) + "\n")
    return _verdict([] if monotone else ["errors_decreasing"])


def _verdict(failed):
    for name in failed:
        print(f"check failed: {name}", file=sys.stderr)
    return 1 if failed else 0


def cmd_kernels():
    for name, desc in kernels.FAMILIES.items():
        print(f"{name:16s} {desc}")
    return 0


def seed_check():
    from . import acceptance

    results = acceptance.run_all(echo=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


COMMANDS = {
    "run": cmd_run,
    "study-convergence": cmd_study,
    "compare-truncations": cmd_compare,
    "validate": cmd_validate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="truncoag", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=[*COMMANDS, "kernels"])
    p.add_argument("--config", help="sectioned key = value config file")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--parallel", type=int, metavar="THREADS", help="worker threads for the right-hand side")
    p.add_argument("--seed-check", action="store_true", help="run the built-in acceptance suite")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed_check:
        return seed_check()
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "kernels":
        return cmd_kernels()
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg, study = load_config(args.config)
        if args.parallel is not None:
            if args.parallel < 1:
                raise ConfigError("--parallel must be >= 1", key="--parallel")
            cfg = cfg.with_(threads=args.parallel)
        out = _prepare(args.out)
        _write(out / "config.echo.ini", dump_config(cfg, study))
        return COMMANDS[args.command](cfg, study, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StudyError as exc:
        print(f"study error: {exc}", file=sys.stderr)
        return 2
    except TruncoagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
