"""
cli_io.py - Run configuration files, CSV time series and field snapshots,
and the run / sweep / check / refine command line
"""

import argparse
import io
import logging
import math
import os
import re
import sys
import tempfile
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tabulate import tabulate

from chemotaxis_fv import config, diagnostics, experiments
from chemotaxis_fv.core import Grid2D, InitialCondition, Parameters, ScalarField
from chemotaxis_fv.diagnostics import CSV_COLUMNS, OPTIONAL_COLUMNS, DiagnosticsRecord
from chemotaxis_fv.errors import ChemotaxisError, ConfigError, DomainError, FormatError, SolverFailure
from chemotaxis_fv.solver import run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CLAIM_FAILED = 1
EXIT_USAGE = 2

REQUIRED_KEYS = ("nx", "ny", "lx", "ly", "r", "mu", "beta", "chi", "t_end", "record_every",
                 "ic_mode", "u_base", "v_base")
_INT_KEYS = {"nx", "ny", "modes_k", "seed"}
_BOOL_KEYS = {"evolve_w", "snapshots"}
_STR_KEYS = {"ic_mode", "output_dir", "u_file", "v_file"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

SNAPSHOT_TAG = "FIELD2D"


@dataclass(frozen=True)
class RunConfig:
    nx: int
    ny: int
    lx: float
    ly: float
    r: float
    mu: float
    beta: float
    chi: float
    t_end: float
    record_every: float
    ic_mode: str
    u_base: float
    v_base: float
    amplitude: float = 0.1
    modes_k: int = 4
    seed: int = 0
    cfl_safety: float = 0.8
    quad_tol: float = 1e-8
    evolve_w: bool = False
    upvq_p: Optional[float] = None
    upvq_q: Optional[float] = None
    output_dir: Optional[str] = None
    snapshots: bool = False
    u_file: Optional[str] = None
    v_file: Optional[str] = None

    def __post_init__(self):
        _validated(self.grid, ("nx", "ny", "lx", "ly"))
        _validated(self.parameters, ("r", "mu", "beta", "chi", "t_end", "cfl_safety", "quad_tol"))
        _validated(self.initial_condition,
                   ("ic_mode", "u_base", "v_base", "amplitude", "modes_k", "seed", "u_file", "v_file"))
        if not (self.record_every > 0 and math.isfinite(self.record_every)):
            raise ConfigError(f"record_every must be > 0, got {self.record_every!r}", "record_every")
        if (self.upvq_p is None) != (self.upvq_q is None):
            missing = "upvq_q" if self.upvq_q is None else "upvq_p"
            raise ConfigError("upvq_p and upvq_q must be given together", missing)
        if self.upvq_p is not None:
            if not self.upvq_p > 1:
                raise ConfigError(f"upvq_p must be > 1, got {self.upvq_p!r}", "upvq_p")
            bound = min(self.mu * self.upvq_p, self.upvq_p - 1.0)
            if not 0 < self.upvq_q < bound:
                raise ConfigError(f"upvq_q must lie in (0, min(mu p, p - 1)) = (0, {bound!r}), "
                                  f"got {self.upvq_q!r}", "upvq_q")

    def grid(self) -> Grid2D:
        return Grid2D(self.nx, self.ny, self.lx, self.ly)

    def parameters(self) -> Parameters:
        return Parameters(r=self.r, mu=self.mu, beta=self.beta, chi=self.chi, t_end=self.t_end,
                          cfl_safety=self.cfl_safety, quad_tol=self.quad_tol)

    def initial_condition(self) -> InitialCondition:
        return InitialCondition(mode=self.ic_mode, u_base=self.u_base, v_base=self.v_base,
                                amplitude=self.amplitude, modes_k=self.modes_k, seed=self.seed,
                                u_file=self.u_file, v_file=self.v_file)

    @property
    def upvq_exponents(self) -> Optional[Tuple[float, float]]:
        if self.upvq_p is None:
            return None
        return (self.upvq_p, self.upvq_q)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir) if self.output_dir else config.get_output_dir()


_CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


def _validated(build, keys: Sequence[str]):
    """Build a composed type, turning its DomainError into a ConfigError on the key it names"""
    try:
        return build()
    except DomainError as e:
        message = str(e)
        named = [(m.start(), key) for key in keys
                 for m in [re.search(rf"\b{key}\b", message)] if m is not None]
        key = min(named)[1] if named else keys[0]
        raise ConfigError(message, key) from e


def _parse_value(key: str, raw: str, line: int):
    if key in _STR_KEYS:
        if not raw:
            raise ConfigError("empty value", key, line)
        return raw
    if key in _BOOL_KEYS:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"expected true or false, got {raw!r}", key, line)
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(f"expected {kind}, got {raw!r}", key, line)


def parse_config(text: str) -> RunConfig:
    """
    Parse `key = value` lines; `#` starts a comment.

    Every error names the key and line it comes from.
    """
    values: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        content = raw_line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected 'key = value', got {content!r}", line=number)
        key, raw = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", line=number)
        if key not in _CONFIG_FIELDS:
            raise ConfigError("unknown key", key, number)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, number)
        values[key] = _parse_value(key, raw, number)
        lines[key] = number

    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError("required key is missing", key)
    try:
        return RunConfig(**values)
    except ConfigError as e:
        raise ConfigError(e.detail, e.key, lines.get(e.key)) from e


def load_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    out = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        out.append(f"{f.name} = {_format_value(value)}")
    return "\n".join(out) + "\n"


def _atomic_write(path: Union[str, Path], text: str):
    """Write the whole file to a sibling temp file, then rename over path"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def _frame_text(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def write_timeseries_csv(records: Sequence[DiagnosticsRecord], path: Union[str, Path]):
    """One row per record; shortest round-trip floats, empty cells for absent optionals"""
    if not records:
        raise DomainError("write_timeseries_csv needs at least one record")
    frame = pd.DataFrame([[_cell(getattr(rec, col)) for col in CSV_COLUMNS] for rec in records],
                         columns=list(CSV_COLUMNS), dtype=str)
    _atomic_write(path, _frame_text(frame))


def _read_frame(path: Union[str, Path], columns: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"unreadable CSV {path}: {e}")
    if tuple(frame.columns) != tuple(columns):
        raise FormatError(f"header mismatch, expected {','.join(columns)}", line=1)
    return frame


def read_timeseries_csv(path: Union[str, Path]) -> List[DiagnosticsRecord]:
    frame = _read_frame(path, CSV_COLUMNS)
    records = []
    for index, row in enumerate(frame.itertuples(index=False), start=2):
        values = {}
        for col, text in zip(CSV_COLUMNS, row):
            if text == "":
                if col not in OPTIONAL_COLUMNS:
                    raise FormatError(f"empty value in required column {col}", line=index)
                values[col] = None
                continue
            try:
                values[col] = float(text)
            except ValueError:
                raise FormatError(f"column {col}: not a number {text!r}", line=index)
        records.append(DiagnosticsRecord(**values))
    return records


def write_field_snapshot(f: ScalarField, name: str, t: float, path: Union[str, Path]):
    if not name or any(ch.isspace() for ch in name):
        raise DomainError(f"snapshot name must be one nonempty word, got {name!r}")
    g = f.grid
    rows = [f"{SNAPSHOT_TAG} {g.nx} {g.ny} {float(g.lx)!r} {float(g.ly)!r} {float(t)!r} {name}"]
    for row in f.values:
        rows.append(" ".join(repr(float(x)) for x in row))
    _atomic_write(path, "\n".join(rows) + "\n")


def read_field_snapshot(path: Union[str, Path]) -> Tuple[ScalarField, str, float]:
    """Returns (field, name, t)"""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError("empty snapshot file", line=1)
    header = lines[0].split()
    if len(header) != 7 or header[0] != SNAPSHOT_TAG:
        raise FormatError(f"expected '{SNAPSHOT_TAG} nx ny lx ly t name'", line=1)
    try:
        nx, ny = int(header[1]), int(header[2])
        lx, ly, t = float(header[3]), float(header[4]), float(header[5])
        grid = Grid2D(nx, ny, lx, ly)
    except (ValueError, DomainError) as e:
        raise FormatError(f"bad snapshot header: {e}", line=1)

    body = lines[1:]
    if len(body) < ny:
        raise FormatError(f"expected {ny} rows, found {len(body)}", line=len(lines) + 1)
    if len(body) > ny:
        raise FormatError(f"expected {ny} rows, found {len(body)}", line=ny + 2)
    values = np.empty((ny, nx))
    for j, text in enumerate(body):
        tokens = text.split()
        if len(tokens) != nx:
            raise FormatError(f"expected {nx} values, found {len(tokens)}", line=j + 2)
        try:
            values[j] = [float(tok) for tok in tokens]
        except ValueError as e:
            raise FormatError(str(e), line=j + 2)
    try:
        field = ScalarField(grid, values)
    except DomainError as e:
        raise FormatError(str(e))
    return field, header[6], t


def write_sweep_csv(rows: Sequence["experiments.SweepRow"], path: Union[str, Path]):
    table = []
    for row in rows:
        table.append([("" if row.error is None else row.error) if col == "error" else _cell(getattr(row, col))
                      for col in experiments.SWEEP_COLUMNS])
    frame = pd.DataFrame(table, columns=list(experiments.SWEEP_COLUMNS), dtype=str)
    _atomic_write(path, _frame_text(frame))


def write_refinement_csv(report: "experiments.RefinementReport", path: Union[str, Path]):
    def pad(seq):
        return [_cell(x) for x in seq] + [""] * (len(report.cells) - len(seq))

    frame = pd.DataFrame({
        "cells": [str(c) for c in report.cells],
        "error_u": pad(report.errors_u),
        "error_v": pad(report.errors_v),
        "order_u": pad(report.orders_u),
        "order_v": pad(report.orders_v),
        "energy_identity_residual": pad(report.energy_residuals),
        "w_gap": pad(report.w_gaps),
    }, dtype=str)
    _atomic_write(path, _frame_text(frame))


def setup_logging(logging_level: int):
    warnings.filterwarnings("ignore", category=FutureWarning)

    root = logging.getLogger()
    root.setLevel(logging_level)
    root.handlers = []

    handler = logging.StreamHandler()
    handler.setLevel(logging_level)
    handler.setFormatter(logging.Formatter("%(asctime)s: %(levelname)s - %(message)s"))
    root.addHandler(handler)


class Verdicts:
    """Collects PASS / FAIL / NOTE lines; any FAIL makes the exit status 1"""

    def __init__(self, out=None):
        self.out = out if out is not None else sys.stdout
        self.failed = 0

    def claim(self, claim_id: str, ok: bool, observed, threshold):
        word = "PASS" if ok else "FAIL"
        if not ok:
            self.failed += 1
        print(f"{word} {claim_id} {_token(observed)} {_token(threshold)}", file=self.out)

    def note(self, message: str):
        print(f"NOTE {message}", file=self.out)

    @property
    def status(self) -> int:
        return EXIT_CLAIM_FAILED if self.failed else EXIT_OK


def _token(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value).replace(" ", "")


def _mu_list(tokens: Sequence[str]) -> List[float]:
    mus = []
    for token in tokens:
        for part in token.split(","):
            if part.strip():
                mus.append(float(part))
    return mus


#parsing command arguments
def cmd_parser(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="chemotaxis_fv",
                                     description="Finite-volume chemotaxis-consumption experiments")
    supported_arguments(parser)
    return parser.parse_args(argv)


#auxiliary function describing the program arguments
def supported_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate and write the diagnostics time series")
    run_p.add_argument("config", type=Path)

    sweep_p = sub.add_parser("sweep", help="run one simulation per mu and test the scaling claims")
    sweep_p.add_argument("config", type=Path)
    sweep_p.add_argument("--mu", nargs="+", required=True, metavar="MU",
                         help="at least 4 increasing values, space or comma separated")
    sweep_p.add_argument("--jobs", type=int, default=None, help="joblib workers")

    check_p = sub.add_parser("check", help="run the invariant suite on one simulation")
    check_p.add_argument("config", type=Path)

    refine_p = sub.add_parser("refine", help="observed spatial and temporal orders")
    refine_p.add_argument("config", type=Path)
    refine_p.add_argument("--levels", type=int, default=3)


def _cmd_run(cfg: RunConfig, stem: str, verdicts: Verdicts) -> int:
    result = run(cfg.initial_condition(), cfg.grid(), cfg.parameters(), cfg.record_every,
                 evolve_w=cfg.evolve_w, upvq_exponents=cfg.upvq_exponents, keep_snapshots=cfg.snapshots)
    out_dir = cfg.output_path
    csv_path = out_dir / f"{stem}.csv"
    write_timeseries_csv(result.trajectory, csv_path)
    for k, s in enumerate(result.snapshots):
        write_field_snapshot(s.u, "u", s.t, out_dir / f"{stem}_u_{k:04d}.field")
        write_field_snapshot(s.v, "v", s.t, out_dir / f"{stem}_v_{k:04d}.field")
        if s.w_evolved is not None:
            write_field_snapshot(s.w_evolved, "w", s.t, out_dir / f"{stem}_w_{k:04d}.field")
    last = result.trajectory[-1]
    print(tabulate([[last.t, last.mass_u, last.linf_U, last.linf_v, last.energy_F, result.steps]],
                   headers=["t", "mass_u", "linf_U", "linf_v", "energy_F", "steps"]))
    verdicts.note(f"wrote {csv_path} ({len(result.trajectory)} records)")
    return verdicts.status


def _cmd_sweep(cfg: RunConfig, stem: str, mus: List[float], jobs: Optional[int], verdicts: Verdicts) -> int:
    rows = experiments.mu_sweep(cfg, mus, n_jobs=jobs)
    csv_path = cfg.output_path / f"{stem}_sweep.csv"
    write_sweep_csv(rows, csv_path)
    print(tabulate([[row.mu, row.sup_linf_u, row.sup_l2_grad_w_sq, row.sup_l2_U, row.transient_t,
                     row.fitted_decay_rate, row.error or ""] for row in rows],
                   headers=["mu", "sup |u|inf", "sup |grad w|2^2", "sup |U|2", "transient", "decay", "error"]))

    for row in rows:
        if not row.ok:
            verdicts.claim(f"sweep-row-mu{row.mu!r}", False, "error", "none")
        elif row.mu >= 20:
            growth = row.sup_linf_u / row.linf_u_at_transient
            verdicts.claim(f"bounded-mu{row.mu!r}", growth <= 2.0, growth, 2.0)

    good = [row for row in rows if row.ok]
    if len(good) < experiments.MIN_SWEEP_ROWS:
        verdicts.claim("scaling-rows", False, len(good), experiments.MIN_SWEEP_ROWS)
        return verdicts.status
    for claim_id, metric, k in experiments.CLAIMS:
        fit = experiments.scaling_fit(good, metric, k)
        verdicts.note(f"{claim_id}: exponent {fit.exponent:.4g} (claimed {k}), "
                      f"r^2 {fit.r_squared:.4g}, ratio slope {fit.ratio_slope:.4g}")
        verdicts.claim(claim_id, fit.passed, fit.ratio_slope, experiments.RATIO_SLOPE_MAX)
    if good[-1].mu / good[0].mu >= 10:
        for metric in experiments.MONOTONE_METRICS:
            values = [getattr(row, metric) for row in good]
            worst = max(b / a for a, b in zip(values, values[1:]))
            verdicts.claim(f"monotone-{metric}", experiments.nonincreasing_in_mu(good, metric),
                           worst, 1.0 + experiments.MONOTONE_RIPPLE)
    return verdicts.status


def _cmd_check(cfg: RunConfig, verdicts: Verdicts) -> int:
    p = cfg.parameters()
    grid = cfg.grid()
    result = run(cfg.initial_condition(), grid, p, cfg.record_every, evolve_w=cfg.evolve_w,
                 upvq_exponents=cfg.upvq_exponents)
    records = result.trajectory
    final = result.final_state

    min_u = min(rec.min_u for rec in records)
    min_v = min(rec.min_v for rec in records)
    verdicts.claim("positivity-u", min_u >= 0, min_u, 0.0)
    verdicts.claim("positivity-v", min_v > 0, min_v, 0.0)
    worst_mass = max(rec.mass_ode_residual for rec in records)
    verdicts.claim("mass-ode", worst_mass <= 1e-8, worst_mass, 1e-8)
    verdicts.note(f"max energy identity residual {max(rec.energy_identity_residual for rec in records)!r}")

    t0 = diagnostics.transient_time(records, diagnostics.mass_bound_predicate(p, grid.area))
    bound = 2.0 * grid.area * p.r / p.mu
    observed = records[-1].mass_u if t0 is None else max(rec.mass_u for rec in records if rec.t >= t0)
    verdicts.claim("mass-bound", t0 is not None, observed, bound)

    if t0 is not None and p.in_decay_regime:
        _check_energy(records, result.budgets, t0, verdicts)

    floor = 0.95 * p.r / (4.0 * p.mu)
    t_floor = diagnostics.transient_time(records, lambda rec: rec.min_u >= floor)
    verdicts.claim("positivity-floor", t_floor is not None, records[-1].min_u, floor)

    if cfg.upvq_exponents is not None and p.t_end > 1.0:
        early = max(rec.upvq for rec in records if rec.t <= 1.0)
        late = max(rec.upvq for rec in records if rec.t >= 1.0)
        verdicts.claim("upvq-bounded", math.isfinite(late) and late <= 2.0 * early, late, 2.0 * early)

    if final.w_evolved is not None:
        gap = np.max(np.abs(final.w_evolved.values - diagnostics.w_from_v(final.v, final.v0_sup).values))
        verdicts.note(f"w transform gap at t={final.t!r}: {float(gap)!r}")

    last = records[-1]
    verdicts.note(f"convergence triple at t={last.t!r}: linf_U {last.linf_U!r}, linf_v {last.linf_v!r}, "
                  f"linf_grad_v_over_v {last.linf_grad_v_over_v!r}")
    verdicts.note(f"mean deviation {diagnostics.mean_deviation(final.u)!r}")
    verdicts.note(f"d/dt int w at t={final.t!r}: {diagnostics.w_mass_rate(final)!r}")
    tail = records[len(records) * 3 // 4:]
    try:
        fit = diagnostics.fit_decay_rate([rec.t for rec in tail], [rec.linf_U for rec in tail],
                                         (tail[0].t, tail[-1].t))
        verdicts.note(f"decay rate of linf_U {fit.rate!r} (r^2 {fit.r_squared!r}), lambda_1 {grid.lambda1!r}")
    except DomainError as e:
        verdicts.note(f"no decay fit: {e}")
    return verdicts.status


def _check_energy(records, budgets, t0: float, verdicts: Verdicts):
    """Energy monotonicity and the ODI budget on records after the mass transient"""
    ratios = [rec.gn1_ratio for rec in records if rec.gn1_ratio is not None]
    if not ratios:
        verdicts.note("ODI skipped: w stays constant")
        return
    eta = max(ratios)
    pairs = [(rec, b) for rec, b in zip(records, budgets) if rec.t >= t0]
    if len(pairs) < 2:
        verdicts.note("ODI skipped: fewer than 2 records after the mass transient")
        return
    report = diagnostics.odi_verify([rec.t for rec, _ in pairs], [rec.energy_F for rec, _ in pairs],
                                    [0.5 * b.lap_w_sq for _, b in pairs], [b.grad_u_over_s for _, b in pairs],
                                    chi=1.0, eta=eta, tol=1e-8)
    excluded = max(b.excluded_cells for _, b in pairs)
    if excluded:
        verdicts.note(f"up to {excluded} cells below the u floor left out of the energy budget")
    if not report.hypothesis_ok:
        verdicts.note(f"ODI hypothesis does not hold (F(t0) >= 1/(2 eta), eta {eta!r}); "
                      f"monotone {report.monotone_ok}, budget {report.budget_ok}")
        return
    increase = diagnostics.worst_increase([rec.energy_F for rec, _ in pairs])
    verdicts.claim("energy-monotone", report.monotone_ok, increase, 1e-8)
    verdicts.claim("energy-budget", report.budget_ok, report.worst_violation, 1e-8)


def _cmd_refine(cfg: RunConfig, stem: str, levels: int, verdicts: Verdicts) -> int:
    report = experiments.refinement_study(cfg, levels)
    csv_path = cfg.output_path / f"{stem}_refine.csv"
    write_refinement_csv(report, csv_path)
    print(tabulate([[c, eu, ev] for c, eu, ev in zip(report.cells, report.errors_u, report.errors_v)],
                   headers=["cells", "error u", "error v"]))
    if report.degenerate:
        verdicts.note(report.notice)
    else:
        spatial = experiments.spatial_order(report)
        verdicts.claim("spatial-order", 1.7 <= spatial <= 2.3, spatial, "[1.7,2.3]")
    temporal = experiments.temporal_order(report)
    if math.isnan(temporal):
        verdicts.note("temporal errors at rounding level")
    else:
        verdicts.claim("temporal-order", 0.7 <= temporal <= 1.3, temporal, "[0.7,1.3]")
    residuals = report.energy_residuals
    if max(residuals) > 1e-12:
        shrink = min(a / b if b > 0 else math.inf for a, b in zip(residuals, residuals[1:]))
        verdicts.claim("energy-identity", shrink >= 3.0, shrink, 3.0)
    if len(report.w_gaps) > 1 and max(report.w_gaps) > 1e-12:
        gaps = report.w_gaps
        shrink = min(a / b if b > 0 else math.inf for a, b in zip(gaps, gaps[1:]))
        verdicts.claim("w-consistency", shrink >= 3.0, shrink, 3.0)
    return verdicts.status


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = cmd_parser(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(logging.DEBUG if args.verbose else config.get_log_level())
    verdicts = Verdicts()
    try:
        cfg = load_config(args.config)
        stem = args.config.stem
        if args.command == "run":
            return _cmd_run(cfg, stem, verdicts)
        if args.command == "sweep":
            try:
                mus = _mu_list(args.mu)
            except ValueError as e:
                logger.error("bad --mu list: %s", e)
                return EXIT_USAGE
            if len(mus) < experiments.MIN_SWEEP_ROWS:
                logger.error("sweep needs at least %d values of mu, got %d", experiments.MIN_SWEEP_ROWS, len(mus))
                return EXIT_USAGE
            return _cmd_sweep(cfg, stem, mus, args.jobs, verdicts)
        if args.command == "check":
            return _cmd_check(cfg, verdicts)
        return _cmd_refine(cfg, stem, args.levels, verdicts)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return EXIT_USAGE
    except SolverFailure as e:
        logger.error("%s", e)
        verdicts.claim("solver", False, e.t, args.config.name)
        return EXIT_CLAIM_FAILED
    except (DomainError, FormatError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except ChemotaxisError as e:
        logger.error("%s", e)
        verdicts.claim("error", False, type(e).__name__, "none")
        return EXIT_CLAIM_FAILED
