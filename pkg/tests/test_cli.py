import csv
import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from truncoag import cli
from truncoag.config import (
    InitialData,
    RunConfig,
    StudyConfig,
    config_from_sections,
    dump_config,
    load_config,
    parse_config_text,
    study_from_sections,
)
from truncoag.errors import ConfigError
from truncoag.kernels import FragmentationSpec, KernelSpec, TruncationSpec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[kernel]
family = constant
[fragmentation]
nu = 0
k2 = 1
[truncation]
n = 10
zeta = 1
[grid]
cells = 24
[outputs]
T = 0.5
count = 5
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_kernels_subcommand(capsys):
    assert cli.main(["kernels"]) == 0
    out = capsys.readouterr().out
    for fam in ("constant", "singular-affine", "brownian", "granulation"):
        assert fam in out


def test_run_emits_reports(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "cell", "pivot", "density"]
    assert len(rows) == 1 + 6 * 24
    with open(out / "moments.csv") as fh:
        mrows = list(csv.DictReader(fh))
    assert list(mrows[0]) == ["time", "M0", "M1", "M_neg2beta", "dust", "escaped", "mass_residual"]
    assert max(float(r["mass_residual"]) for r in mrows) <= 1e-12
    checks = json.loads((out / "checks.json").read_text())
    assert all({"name", "lhs", "bound", "pass"} <= set(c) for c in checks)
    assert all(c["pass"] for c in checks)


def test_acceptance_config_run(tmp_path):
    out = tmp_path / "acc"
    assert cli.main(["run", "--config", str(CONFIGS / "mass_conservative.ini"), "--out", str(out)]) == 0
    with open(out / "moments.csv") as fh:
        assert max(float(r["mass_residual"]) for r in csv.DictReader(fh)) <= 1e-12


def test_seventeen_digits(tmp_path):
    out = tmp_path / "o"
    cli.main(["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(out)])
    line = (out / "moments.csv").read_text().splitlines()[2]
    m1 = line.split(",")[2]
    assert len(m1.replace(".", "").replace("-", "").lstrip("0").split("e")[0]) >= 15
    assert cli.fmt(0.1) == "0.10000000000000001"


def test_zero_dynamics_moments_constant(tmp_path):
    text = MINIMAL.replace("family = constant", "family = constant\nk1 = 0").replace("k2 = 1", "k2 = 0")
    out = tmp_path / "z"
    assert cli.main(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    rows = (out / "moments.csv").read_text().splitlines()[1:]
    assert len({r.split(",", 1)[1] for r in rows}) == 1


def test_rerun_byte_identical(tmp_path):
    cfg = str(write(tmp_path, MINIMAL))
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b")])
    for f in ("trajectory.csv", "moments.csv", "checks.json", "config.echo.ini"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_missing_cells_exit_2(tmp_path, capsys):
    text = MINIMAL.replace("cells = 24", "")
    assert cli.main(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 2
    assert "grid.cells" in capsys.readouterr().err


@pytest.mark.parametrize(
    "edit,key",
    [
        (("nu = 0", "nu = 0\ncolour = red"), "fragmentation.colour"),
        (("nu = 0", "nu = 0.5"), "fragmentation.nu"),
        (("cells = 24", "cells = many"), "grid.cells"),
        (("family = constant", "family = constant\nbeta = 0.7"), "kernel.beta"),
    ],
)
def test_config_errors_name_the_key(tmp_path, capsys, edit, key):
    text = MINIMAL.replace(*edit)
    assert cli.main(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 2
    assert key in capsys.readouterr().err


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL + "\n[extras]\nx = 1\n")


def test_unwritable_output_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(blocker / "sub")]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_no_command_exit_2():
    assert cli.main([]) == 2


def test_study_and_compare_and_validate(tmp_path):
    study = MINIMAL + "\n[study]\nn_values = 10, 20, 40\nzeta_values = 0, 1\ncase = fragmentation\nlevels = 40, 80\n"
    cfg = str(write(tmp_path, study))
    assert cli.main(["study-convergence", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    summary = json.loads((tmp_path / "s" / "study.json").read_text())
    assert set(summary) == {"truncation_sequence[zeta=0]", "truncation_sequence[zeta=1]"}
    assert cli.main(["compare-truncations", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    assert cli.main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert json.loads((tmp_path / "v" / "validation.json").read_text())["errors_decreasing"]


def test_parallel_flag(tmp_path):
    cfg = str(write(tmp_path, MINIMAL))
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "p"), "--parallel", "2"]) == 0
    assert "threads = 2" in (tmp_path / "p" / "config.echo.ini").read_text()
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "p"), "--parallel", "0"]) == 2


def test_json_serialiser():
    text = cli.to_json({"a": [1, 0.5, float("inf")], "b": None, "c": True})
    assert json.loads(text) == {"a": [1, 0.5, None], "b": None, "c": True}


def test_load_all_shipped_configs():
    for path in sorted(CONFIGS.glob("*.ini")):
        cfg, study = load_config(path)
        assert isinstance(cfg, RunConfig) and isinstance(study, StudyConfig)


@given(
    beta=st.sampled_from([0.0, 0.1, 0.25]),
    k1=st.floats(0.0, 10.0, allow_subnormal=False),
    nu=st.sampled_from([0.0, -0.2]),
    n=st.floats(2.0, 1e4),
    cells=st.integers(2, 400),
    zeta=st.sampled_from([0, 1]),
    T=st.floats(0.01, 100.0),
    lump=st.booleans(),
)
def test_config_round_trip(beta, k1, nu, n, cells, zeta, T, lump):
    cfg = RunConfig(
        kernel=KernelSpec.singular_affine(k1, beta),
        frag=FragmentationSpec(nu, 1.0),
        trunc=TruncationSpec(n, zeta),
        cells=cells,
        T=T,
        lump_dust=lump,
        initial=InitialData("gamma", 2.0, 0.5, 1.0),
        output_times=(T / 3, T),
        dt_max=0.1,
        R=min(2.0, n),
    )
    study = StudyConfig(n_values=(10.0, 20.0), levels=(40, 80))
    sec = parse_config_text(dump_config(cfg, study))
    assert config_from_sections(sec) == cfg
    assert study_from_sections(sec) == study
