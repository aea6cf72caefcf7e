import math

import numpy as np
import pytest

from chemotaxis_fv.cli_io import (
    EXIT_OK, EXIT_USAGE, RunConfig, Verdicts, dispatch, load_config, parse_config, read_field_snapshot,
    read_timeseries_csv, serialize_config, write_field_snapshot, write_timeseries_csv,
)
from chemotaxis_fv.core import Grid2D, ScalarField
from chemotaxis_fv.diagnostics import CSV_COLUMNS, DiagnosticsRecord
from chemotaxis_fv.errors import ConfigError, FormatError

MINIMAL = """\
# homogeneous test run
nx = 8
ny = 8
lx = 1.0
ly = 1.0
r = 1.0
mu = 10.0
beta = 0.0
chi = 1.0
t_end = 1.0
record_every = 0.25
ic_mode = constant
u_base = 0.1
v_base = 1.0
"""


def with_lines(*extra):
    return MINIMAL + "\n".join(extra) + "\n"


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def record(t, **changes):
    values = {name: float(k) + t for k, name in enumerate(CSV_COLUMNS)}
    values.update(t=t, gn1_ratio=0.3, gn2_ratio=0.2, upvq=None)
    values.update(changes)
    return DiagnosticsRecord(**values)


def test_parse_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.nx == 8 and isinstance(cfg.nx, int)
    assert cfg.mu == 10.0
    assert cfg.ic_mode == "constant"
    assert cfg.amplitude == 0.1
    assert cfg.modes_k == 4
    assert cfg.cfl_safety == 0.8
    assert cfg.quad_tol == 1e-8
    assert cfg.evolve_w is False
    assert cfg.upvq_exponents is None
    assert cfg.parameters().carrying_capacity == pytest.approx(0.1)


def test_parse_config_inline_comments_and_booleans():
    cfg = parse_config(with_lines("evolve_w = yes   # co-evolve w", "upvq_p = 3", "upvq_q = 1"))
    assert cfg.evolve_w is True
    assert cfg.upvq_exponents == (3.0, 1.0)


def test_invalid_mu_names_key_and_line():
    text = MINIMAL.replace("mu = 10.0", "mu = -1")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == "mu"
    assert info.value.line == 7
    assert "line 7" in str(info.value)


def test_invalid_cfl_safety():
    with pytest.raises(ConfigError) as info:
        parse_config(with_lines("cfl_safety = 2"))
    assert info.value.key == "cfl_safety"
    assert info.value.line == 15


@pytest.mark.parametrize("text, key, line", [
    (with_lines("colour = red"), "colour", 15),
    (with_lines("nx = 16"), "nx", 15),
    (MINIMAL.replace("nx = 8", "nx = eight"), "nx", 2),
    (MINIMAL.replace("ic_mode = constant\n", ""), "ic_mode", None),
    (with_lines("evolve_w = maybe"), "evolve_w", 15),
    (with_lines("upvq_p = 3"), "upvq_q", None),
    (with_lines("upvq_p = 2", "upvq_q = 1"), "upvq_q", 16),
])
def test_config_errors(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert info.value.line == line


def test_config_line_without_equals():
    with pytest.raises(ConfigError) as info:
        parse_config(with_lines("just words"))
    assert info.value.line == 15


def test_run_config_rejects_bad_record_every():
    with pytest.raises(ConfigError):
        RunConfig(nx=8, ny=8, lx=1.0, ly=1.0, r=1.0, mu=10.0, beta=0.0, chi=1.0, t_end=1.0,
                  record_every=0.0, ic_mode="constant", u_base=0.1, v_base=1.0)


def test_serialize_config_round_trip(tmp_path):
    text = with_lines("amplitude = 0.3", "seed = 11", "evolve_w = true")
    cfg = parse_config(text.replace("ic_mode = constant", "ic_mode = random_fourier"))
    text = serialize_config(cfg)
    assert "upvq_p" not in text
    assert "evolve_w = true" in text
    assert parse_config(text) == cfg
    assert load_config(write_config(tmp_path, text)) == cfg


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_timeseries_single_record(tmp_path):
    path = tmp_path / "one.csv"
    write_timeseries_csv([record(0.0)], path)
    lines = path.read_text(encoding="utf-8").split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len([line for line in lines if line]) == 2
    assert lines[1].split(",")[CSV_COLUMNS.index("upvq")] == ""


def test_timeseries_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    records = [record(0.1 * k, l2_u=float(rng.random()), energy_F=float(rng.random()) / 3.0,
                      gn1_ratio=None if k % 7 == 0 else float(rng.random()))
               for k in range(100)]
    path = tmp_path / "many.csv"
    write_timeseries_csv(records, path)
    assert read_timeseries_csv(path) == records


def test_timeseries_header_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    write_timeseries_csv([record(0.0)], path)
    text = path.read_text(encoding="utf-8").replace("mass_u", "mass", 1)
    path.write_text(text, encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_timeseries_csv(path)
    assert info.value.line == 1


def test_timeseries_empty_required_cell(tmp_path):
    path = tmp_path / "hole.csv"
    write_timeseries_csv([record(0.0), record(1.0)], path)
    lines = path.read_text(encoding="utf-8").split("\n")
    cells = lines[2].split(",")
    cells[CSV_COLUMNS.index("linf_v")] = ""
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines), encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_timeseries_csv(path)
    assert info.value.line == 3


def test_snapshot_bytes_for_zero_field(tmp_path):
    path = tmp_path / "zero.field"
    write_field_snapshot(ScalarField.constant(Grid2D(4, 4, 1.0, 1.0), 0.0), "u", 0.0, path)
    assert path.read_bytes() == b"FIELD2D 4 4 1.0 1.0 0.0 u\n" + b"0.0 0.0 0.0 0.0\n" * 4


def test_snapshot_round_trip(tmp_path):
    g = Grid2D(6, 5, 1.2, 1.0)
    field = ScalarField(g, np.random.default_rng(3).random((5, 6)) / 7.0)
    path = tmp_path / "v.field"
    write_field_snapshot(field, "v", 0.125, path)
    back, name, t = read_field_snapshot(path)
    assert back == field
    assert name == "v"
    assert t == 0.125


def test_snapshot_row_count_mismatch(tmp_path):
    path = tmp_path / "short.field"
    write_field_snapshot(ScalarField.constant(Grid2D(4, 4, 1.0, 1.0), 1.0), "u", 0.0, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_field_snapshot(path)
    assert info.value.line == 5
    path.write_text("\n".join(lines + [lines[-1]]) + "\n", encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_field_snapshot(path)
    assert info.value.line == 6


def test_snapshot_bad_header_and_row(tmp_path):
    path = tmp_path / "bad.field"
    path.write_text("GRID 4 4 1.0 1.0 0.0 u\n", encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_field_snapshot(path)
    assert info.value.line == 1
    path.write_text("FIELD2D 4 4 1.0 1.0 0.0 u\n" + "1 2 3 4\n" * 2 + "1 2 x 4\n" + "1 2 3 4\n",
                    encoding="utf-8")
    with pytest.raises(FormatError) as info:
        read_field_snapshot(path)
    assert info.value.line == 4


def test_verdict_lines(capsys):
    verdicts = Verdicts()
    verdicts.claim("mass-ode", True, 1e-12, 1e-8)
    verdicts.claim("spatial-order", False, 1.2, "[1.7, 2.3]")
    verdicts.note("done")
    out = capsys.readouterr().out.splitlines()
    assert out == ["PASS mass-ode 1e-12 1e-08", "FAIL spatial-order 1.2 [1.7,2.3]", "NOTE done"]
    assert verdicts.status == 1


def test_dispatch_usage_errors(tmp_path):
    assert dispatch(["frobnicate"]) == EXIT_USAGE
    assert dispatch(["check", str(tmp_path / "absent.cfg")]) == EXIT_USAGE
    bad = write_config(tmp_path, with_lines("cfl_safety = 2"), "bad.cfg")
    assert dispatch(["check", str(bad)]) == EXIT_USAGE
    good = write_config(tmp_path, MINIMAL, "good.cfg")
    assert dispatch(["sweep", str(good), "--mu", "10", "20", "50"]) == EXIT_USAGE
    assert dispatch(["sweep", str(good), "--mu", "10,20,x,50"]) == EXIT_USAGE


def test_dispatch_run_writes_outputs(tmp_path, capsys):
    out_dir = tmp_path / "out"
    path = write_config(tmp_path, with_lines(f"output_dir = {out_dir}", "snapshots = true"), "homog.cfg")
    assert dispatch(["run", str(path)]) == EXIT_OK
    records = read_timeseries_csv(out_dir / "homog.csv")
    assert [rec.t for rec in records] == [0.0, 0.25, 0.5, 0.75, 1.0]
    for rec in records:
        assert rec.linf_v == pytest.approx(math.exp(-0.1 * rec.t), rel=1e-3)
        assert rec.linf_U <= 1e-10
    snapshot, name, t = read_field_snapshot(out_dir / "homog_v_0004.field")
    assert name == "v" and t == 1.0
    assert snapshot.grid == Grid2D(8, 8, 1.0, 1.0)
    assert "NOTE wrote" in capsys.readouterr().out


def test_dispatch_check_on_homogeneous_run(tmp_path, capsys):
    path = write_config(tmp_path, MINIMAL.replace("t_end = 1.0", "t_end = 2.0"), "homog.cfg")
    assert dispatch(["check", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "PASS positivity-u" in out
    assert "PASS mass-bound" in out
    assert "NOTE d/dt int w at t=2.0:" in out
