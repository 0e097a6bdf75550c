"""Command-line entry points and the config-driven pipeline.

Subcommands::

    dipolegap mathieu --q 1 --levels 8
    dipolegap count --gamma 0.5 --mass 1 --x0 1,0 --target 10
    dipolegap towers --gamma 1 --mass 1 --rcut 1 --rmax 1e8 --nodes-per-decade 32
    dipolegap dirac --gamma 0.75 --mass 1 --eps 0.5 --J 6 --out dirac.csv
    dipolegap bounds resolvent --x0 1,0 --eta-grid 0,1,2 --sep-grid 1,2,4
    dipolegap bounds moments --spectrum towers.csv --deltas 0.5,1,2 --gamma 1
    dipolegap run --config run.json --out results/

Exit codes: 0 success, 2 invalid input, 3 a task failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bounds import (
    GaussianMixture,
    RadialSpinor,
    herbst_check,
    moment_report,
    resolvent_kernel,
    sandwich_check,
    semiclassical_integral,
)
from .errors import DipoleGapError, ParseError, TaskFailed, ValidationError
from .forms import certified_lower_bound
from .mathieu import mathieu_eigs
from .potentials import PhysicalParams, RegularizedTwoCenter
from .spectrum import (
    RESOLVED_KAPPA_RMAX,
    GapSpectrum,
    RadialGrid,
    solve_dirac_block,
    solve_towers,
)

EXIT_OK, EXIT_VALIDATION, EXIT_TASK = 0, 2, 3

TASKS = ("mathieu", "count", "towers", "dirac", "moments", "resolvent", "inequalities")


# --------------------------------------------------------------------------
# configuration


@dataclass
class SolverConfig:
    mathieu_levels: int = 8
    count_target: int = 10
    count_budget: Optional[int] = None
    r_cut: Optional[float] = None  # defaults to |x0|
    r_max: float = 1e8
    nodes_per_decade: float = 32.0
    coupling: str = "form"
    dirac_J: int = 6
    dirac_eps: float = 0.5
    dirac_r_min: float = 1e-2
    dirac_r_max: float = 1e6
    dirac_nodes_per_decade: float = 32.0
    residual_tol: float = 1e-6
    grid_rtol: float = 0.1
    J_tol: float = 1e-6
    deltas: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    delta0: float = 0.5
    eta_grid: List[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 4.0])
    sep_grid: List[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    n_random: int = 50


@dataclass
class OutputConfig:
    directory: str = "out"
    format: str = "csv"


@dataclass
class RunConfig:
    physical: PhysicalParams
    solver: SolverConfig = field(default_factory=SolverConfig)
    tasks: List[str] = field(default_factory=lambda: ["mathieu", "towers", "moments"])
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        p = self.physical
        return {
            "physical": {"gamma": p.gamma, "mass": p.mass, "x0": list(p.x0)},
            "solver": dataclasses.asdict(self.solver),
            "tasks": list(self.tasks),
            "output": dataclasses.asdict(self.output),
            "seed": self.seed,
        }


def _check_keys(doc, allowed, prefix):
    if not isinstance(doc, dict):
        raise ValidationError(prefix or "<root>", "expected an object")
    for k in doc:
        if k not in allowed:
            raise ValidationError(f"{prefix}{k}", "unknown key")


def _number(doc, key, prefix, default, positive=True, integer=False):
    v = doc.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(prefix + key, "expected a number")
    if integer and int(v) != v:
        raise ValidationError(prefix + key, "expected an integer")
    if not math.isfinite(v) or (positive and v <= 0):
        raise ValidationError(prefix + key, "must be positive and finite")
    return int(v) if integer else float(v)


def _number_list(doc, key, prefix, default, positive=True):
    v = doc.get(key, default)
    if not isinstance(v, list) or not v:
        raise ValidationError(prefix + key, "expected a nonempty list of numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ValidationError(prefix + key, "expected a nonempty list of numbers")
        if positive and x <= 0:
            raise ValidationError(prefix + key, "entries must be positive")
        out.append(float(x))
    return out


def _physical(doc) -> PhysicalParams:
    _check_keys(doc, {"gamma", "mass", "x0"}, "physical.")
    for k in ("gamma", "mass"):
        if k not in doc:
            raise ValidationError(f"physical.{k}", "required")
    gamma = _number(doc, "gamma", "physical.", None)
    mass = _number(doc, "mass", "physical.", None)
    x0 = doc.get("x0", [1.0, 0.0])
    if (not isinstance(x0, list) or len(x0) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in x0)):
        raise ValidationError("physical.x0", "expected a 2-vector")
    if math.hypot(*x0) == 0:
        raise ValidationError("physical.x0", "must be nonzero")
    return PhysicalParams(gamma, mass, tuple(float(c) for c in x0))


def _solver(doc, x0_norm) -> SolverConfig:
    defaults = SolverConfig()
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    _check_keys(doc, names, "solver.")
    p = "solver."
    s = SolverConfig(
        mathieu_levels=_number(doc, "mathieu_levels", p, defaults.mathieu_levels, integer=True),
        count_target=_number(doc, "count_target", p, defaults.count_target, integer=True),
        count_budget=_number(doc, "count_budget", p, None, integer=True),
        r_cut=_number(doc, "r_cut", p, None),
        r_max=_number(doc, "r_max", p, defaults.r_max),
        nodes_per_decade=_number(doc, "nodes_per_decade", p, defaults.nodes_per_decade),
        coupling=doc.get("coupling", defaults.coupling),
        dirac_J=_number(doc, "dirac_J", p, defaults.dirac_J, integer=True),
        dirac_eps=_number(doc, "dirac_eps", p, defaults.dirac_eps),
        dirac_r_min=_number(doc, "dirac_r_min", p, defaults.dirac_r_min),
        dirac_r_max=_number(doc, "dirac_r_max", p, defaults.dirac_r_max),
        dirac_nodes_per_decade=_number(doc, "dirac_nodes_per_decade", p, defaults.dirac_nodes_per_decade),
        residual_tol=_number(doc, "residual_tol", p, defaults.residual_tol),
        grid_rtol=_number(doc, "grid_rtol", p, defaults.grid_rtol),
        J_tol=_number(doc, "J_tol", p, defaults.J_tol),
        deltas=_number_list(doc, "deltas", p, defaults.deltas),
        delta0=_number(doc, "delta0", p, defaults.delta0),
        eta_grid=_number_list(doc, "eta_grid", p, defaults.eta_grid, positive=False),
        sep_grid=_number_list(doc, "sep_grid", p, defaults.sep_grid),
        n_random=_number(doc, "n_random", p, defaults.n_random, integer=True),
    )
    if s.coupling not in ("form", "squared"):
        raise ValidationError("solver.coupling", "must be 'form' or 'squared'")
    r_cut = s.r_cut if s.r_cut is not None else x0_norm
    if s.r_max <= r_cut:
        raise ValidationError("solver.r_max", "must exceed r_cut")
    if s.dirac_r_max <= s.dirac_r_min:
        raise ValidationError("solver.dirac_r_max", "must exceed dirac_r_min")
    if s.nodes_per_decade < 16 or s.dirac_nodes_per_decade < 16:
        raise ValidationError("solver.nodes_per_decade", "at least 16 nodes per decade")
    if s.dirac_J < 4:
        raise ValidationError("solver.dirac_J", "must be at least 4")
    if not 0 < s.delta0 < 1:
        raise ValidationError("solver.delta0", "must lie in (0, 1)")
    if min(s.sep_grid) < x0_norm:
        raise ValidationError("solver.sep_grid", "separations must be >= |x0|")
    return s


def config_from_dict(doc) -> RunConfig:
    _check_keys(doc, {"physical", "solver", "tasks", "output", "seed"}, "")
    if "physical" not in doc:
        raise ValidationError("physical", "required")
    phys = _physical(doc["physical"])
    solver = _solver(doc.get("solver", {}), phys.x0_norm)
    tasks = doc.get("tasks", RunConfig.__dataclass_fields__["tasks"].default_factory())
    if not isinstance(tasks, list) or not all(isinstance(t, str) for t in tasks):
        raise ValidationError("tasks", "expected a list of task names")
    for t in tasks:
        if t not in TASKS:
            raise ValidationError("tasks", f"unknown task {t!r}")
    out = doc.get("output", {})
    _check_keys(out, {"directory", "format"}, "output.")
    output = OutputConfig(str(out.get("directory", "out")), out.get("format", "csv"))
    if output.format not in ("csv", "json"):
        raise ValidationError("output.format", "must be 'csv' or 'json'")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ValidationError("seed", "expected a nonnegative integer")
    return RunConfig(phys, solver, list(tasks), output, seed)


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration; defaults fill missing fields."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


# --------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    """Shortest round-trip text for numbers; everything else via ``str``."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def table_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def json_text(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _table_file(out: Path, stem: str, header, rows, fmt_name: str) -> Path:
    rows = list(rows)
    if fmt_name == "json":
        p = out / f"{stem}.json"
        p.write_text(json_text([dict(zip(header, r)) for r in rows]))
    else:
        p = out / f"{stem}.csv"
        p.write_text(table_text(header, rows))
    return p


def _parse_vector(text: str):
    try:
        v = [float(c) for c in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    return v


# --------------------------------------------------------------------------
# task bodies, shared by subcommands and the pipeline


def mathieu_rows(q: float, levels: int):
    spec = mathieu_eigs(q, levels=levels)
    return [(n, spec.eigenvalues[n], spec.convergence_estimate[n]) for n in range(spec.levels)]


MATHIEU_HEADER = ("n", "lambda", "convergence")
TOWERS_HEADER = ("channel", "j", "E", "m_minus_E", "ratio")
DIRAC_HEADER = ("index", "E", "m_minus_E", "residual", "grid_move", "J_move")
RESOLVENT_HEADER = ("separation", "eta", "kappa", "max_entry", "bound", "within_bound")
INEQUALITY_HEADER = ("check", "index", "lhs", "rhs", "margin", "quadrature_error", "holds")


def count_document(params: PhysicalParams, target: int, budget: Optional[int] = None) -> dict:
    res = certified_lower_bound(params, target, budget=budget)
    return {
        "count": res.count,
        "specs": [{"k": s.k, "R": s.R} for s in res.family],
        "margins": list(res.margins),
        "gram_defect": res.gram_defect,
        "attempts": res.attempts,
    }


def tower_rows(params: PhysicalParams, r_cut, r_max, nodes_per_decade, coupling="form"):
    r_cut = params.x0_norm if r_cut is None else r_cut
    grid = RadialGrid.with_density(r_cut, r_max, nodes_per_decade)
    towers = solve_towers(params, grid, r_cut, coupling)
    rows = []
    for ch in towers:
        for j, (e, d) in enumerate(zip(ch.energies, ch.gap_distance)):
            rows.append((ch.channel, j, e, d, ch.ratios[j - 1] if j else math.nan))
    decisions = {
        "coupling": coupling,
        "r_cut": r_cut,
        "resolved_kappa_rmax": RESOLVED_KAPPA_RMAX,
        "channels": [ch.channel for ch in towers],
        "levels": [len(ch.energies) for ch in towers],
    }
    return rows, decisions


def dirac_result(params: PhysicalParams, eps, J, r_min, r_max, nodes_per_decade,
                 residual_tol=1e-6, grid_rtol=0.1, J_tol=1e-6):
    model = RegularizedTwoCenter(params, eps)
    grid = RadialGrid.with_density(r_min, r_max, nodes_per_decade)
    spec = solve_dirac_block(params, model, grid, J, residual_tol=residual_tol,
                             grid_rtol=grid_rtol, J_tol=J_tol)
    md = spec.metadata
    rows = [
        (i, e, spec.mass - abs(e), spec.residuals[i], md["grid_moves"][i], md["J_moves"][i])
        for i, e in enumerate(spec.energies)
    ]
    return rows, md


def spectrum_from_tower_csv(path, mirror: bool = True) -> GapSpectrum:
    """Rebuild a gap spectrum from a towers CSV; ``mirror`` adds the ``-E`` tower."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"spectrum file {path} does not exist")
    with path.open() as fh:
        reader = csv.DictReader(fh)
        missing = {"channel", "E", "m_minus_E"} - set(reader.fieldnames or [])
        if missing:
            raise ParseError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ParseError(f"{path}: no levels")
    E, labels, d = [], [], []
    for r in rows:
        e, dist, ch = float(r["E"]), float(r["m_minus_E"]), int(r["channel"])
        mass = e + dist
        for sgn in ((1, -1) if mirror else (1,)):
            E.append(sgn * e)
            labels.append((ch, sgn))
            d.append(dist)
    order = np.argsort(-np.asarray(d), kind="stable")
    return GapSpectrum(np.asarray(E)[order], mass, [labels[i] for i in order], None, {"source": str(path)},
                       np.asarray(d)[order])


def moments_document(spec: GapSpectrum, deltas, params: PhysicalParams, delta0: float) -> dict:
    rep = moment_report(spec, deltas, params, delta0)
    doc = rep.to_dict()
    doc["semiclassical_integral"] = semiclassical_integral(params, delta0)
    return doc


def resolvent_rows(params: PhysicalParams, etas, seps):
    rows = []
    for s in seps:
        for e in etas:
            k = resolvent_kernel(s, e, params.mass, 0.0, params.x0_norm, 0.0)
            rows.append((s, e, k.kappa, float(np.max(np.abs(k.kernel_entries))), k.bound_value, k.within_bound))
    return rows


def inequality_rows(seed: int, n: int):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        g = GaussianMixture.random(rng)
        r = herbst_check(g, center=rng.normal(size=2))
        rows.append(("herbst", i, r.lhs, r.rhs, r.margin, r.quadrature_error, r.holds))
    for i in range(n):
        psi = RadialSpinor.random(rng)
        r = sandwich_check(psi, float(rng.uniform(0, 2)), float(rng.uniform(-2, 2)))
        rows.append(("sandwich", i, r.lhs, r.rhs, r.margin, r.quadrature_error, r.holds))
    return rows


# --------------------------------------------------------------------------
# pipeline


@dataclass
class TaskRecord:
    name: str
    status: str  # "ok" | "failed"
    wall_time: float
    files: List[str] = field(default_factory=list)
    error: Optional[str] = None
    decisions: Dict = field(default_factory=dict)


@dataclass
class RunManifest:
    config: dict
    tasks: List[TaskRecord]
    wall_time: float
    files: List[str]
    version: str

    @property
    def ok(self) -> bool:
        return all(t.status == "ok" for t in self.tasks)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "tasks": [dataclasses.asdict(t) for t in self.tasks],
            "wall_time": self.wall_time,
            "files": list(self.files),
            "version": self.version,
            "decisions": {t.name: t.decisions for t in self.tasks},
        }


MANIFEST_NAME = "manifest.json"


def run_pipeline(config: RunConfig, out_dir=None, strict: bool = False) -> RunManifest:
    """Run the configured tasks in order; a failing task does not stop the others.

    Every artifact is listed in ``manifest.json``, which is written last, also
    when tasks fail.  With ``strict`` the first failure is re-raised as
    TaskFailed after the manifest is on disk.
    """
    out = Path(out_dir if out_dir is not None else config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    p, s, form = config.physical, config.solver, config.output.format
    records: List[TaskRecord] = []
    produced: Dict[str, Path] = {}
    t_start = time.perf_counter()
    first_failure = None

    for name in config.tasks:
        t0 = time.perf_counter()
        rec = TaskRecord(name, "ok", 0.0)
        try:
            if name == "mathieu":
                f = _table_file(out, "mathieu", MATHIEU_HEADER, mathieu_rows(p.mathieu_q, s.mathieu_levels), form)
                rec.decisions = {"q": p.mathieu_q, "levels": s.mathieu_levels}
            elif name == "count":
                f = out / "count.json"
                f.write_text(json_text(count_document(p, s.count_target, s.count_budget)))
                rec.decisions = {"target": s.count_target, "budget": s.count_budget}
            elif name == "towers":
                rows, rec.decisions = tower_rows(p, s.r_cut, s.r_max, s.nodes_per_decade, s.coupling)
                # moments always reads the CSV form
                f = out / "towers.csv"
                f.write_text(table_text(TOWERS_HEADER, rows))
            elif name == "dirac":
                rows, md = dirac_result(p, s.dirac_eps, s.dirac_J, s.dirac_r_min, s.dirac_r_max,
                                        s.dirac_nodes_per_decade, s.residual_tol, s.grid_rtol, s.J_tol)
                f = _table_file(out, "dirac", DIRAC_HEADER, rows, form)
                side = out / "dirac_metadata.json"
                side.write_text(json_text(md))
                rec.files.append(side.name)
                rec.decisions = {k: md[k] for k in ("residual_tol", "grid_rtol", "J_tol", "dropped") if k in md}
            elif name == "moments":
                src = produced.get("towers", out / "towers.csv")
                spec = spectrum_from_tower_csv(src)
                f = out / "moments.json"
                f.write_text(json_text(moments_document(spec, s.deltas, p, s.delta0)))
                rec.decisions = {"spectrum": src.name, "delta0": s.delta0, "mirror_tower": True}
            elif name == "resolvent":
                f = _table_file(out, "resolvent", RESOLVENT_HEADER, resolvent_rows(p, s.eta_grid, s.sep_grid), form)
                rec.decisions = {"eta0": 0.0}
            elif name == "inequalities":
                f = _table_file(out, "inequalities", INEQUALITY_HEADER, inequality_rows(config.seed, s.n_random), form)
                rec.decisions = {"seed": config.seed, "n_random": s.n_random}
            else:  # pragma: no cover - rejected during validation
                raise ValidationError("tasks", f"unknown task {name!r}")
            produced[name] = f
            rec.files.insert(0, f.name)
        except (DipoleGapError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rec.status = "failed"
            rec.error = f"{type(exc).__name__}: {exc}"
            if first_failure is None:
                first_failure = TaskFailed(name, exc)
        rec.wall_time = time.perf_counter() - t0
        records.append(rec)

    files = [fn for r in records for fn in r.files]
    manifest = RunManifest(config.to_dict(), records, time.perf_counter() - t_start, files, __version__)
    (out / MANIFEST_NAME).write_text(json_text(manifest.to_dict()))
    if strict and first_failure is not None:
        raise first_failure
    return manifest


# --------------------------------------------------------------------------
# argparse front end


def _add_physical(p, gamma=None):
    p.add_argument("--gamma", type=float, required=gamma is None, default=gamma)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--x0", type=_parse_vector, default=[1.0, 0.0], help="comma-separated 2-vector")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dipolegap", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mathieu", help="eigenvalues of -d^2/dtheta^2 + 2q cos(theta)")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--levels", type=int, default=8)

    p = sub.add_parser("count", help="certified variational lower bound on the state count")
    _add_physical(p)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--budget", type=int, default=None)

    p = sub.add_parser("towers", help="near-edge levels from the radial channel solver")
    _add_physical(p)
    p.add_argument("--rcut", type=float, default=None)
    p.add_argument("--rmax", type=float, default=1e8)
    p.add_argument("--nodes-per-decade", type=float, default=32.0)
    p.add_argument("--coupling", choices=("form", "squared"), default="form")

    p = sub.add_parser("dirac", help="in-gap eigenvalues of the regularised two-centre operator")
    _add_physical(p)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--J", type=int, default=6)
    p.add_argument("--rmin", type=float, default=1e-2)
    p.add_argument("--rmax", type=float, default=1e6)
    p.add_argument("--nodes-per-decade", type=float, default=32.0)
    p.add_argument("--out", type=Path, default=None, help="CSV path; metadata goes next to it as .json")

    p = sub.add_parser("bounds", help="explicit bounds")
    bsub = p.add_subparsers(dest="bounds_command", required=True)
    b = bsub.add_parser("resolvent", help="free resolvent kernel against its exponential bound")
    b.add_argument("--x0", type=_parse_vector, default=[1.0, 0.0])
    b.add_argument("--mass", type=float, default=1.0)
    b.add_argument("--eta-grid", type=_parse_vector, default=[0.0, 0.5, 1.0, 2.0])
    b.add_argument("--sep-grid", type=_parse_vector, default=[1.0, 2.0, 4.0, 8.0])
    b = bsub.add_parser("moments", help="eigenvalue moment sums from a towers CSV")
    b.add_argument("--spectrum", type=Path, required=True)
    b.add_argument("--deltas", type=_parse_vector, default=[0.5, 1.0, 2.0])
    b.add_argument("--delta0", type=float, default=0.5)
    _add_physical(b, gamma=0.1)

    p = sub.add_parser("run", help="run a configured pipeline")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--task", action="append", default=None, choices=TASKS,
                   help="repeatable; replaces the task list of the config")
    p.add_argument("--seed", type=int, default=None)
    return ap


def _params(args) -> PhysicalParams:
    try:
        return PhysicalParams(args.gamma, args.mass, tuple(args.x0))
    except ValueError as exc:
        raise ValidationError("physical", str(exc)) from exc


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        if args.command == "mathieu":
            if args.q < 0 or args.levels < 1:
                raise ValidationError("q/levels", "need q >= 0 and levels >= 1")
            stdout.write(table_text(MATHIEU_HEADER, mathieu_rows(args.q, args.levels)))
        elif args.command == "count":
            stdout.write(json_text(count_document(_params(args), args.target, args.budget)))
        elif args.command == "towers":
            rows, _ = tower_rows(_params(args), args.rcut, args.rmax, args.nodes_per_decade, args.coupling)
            stdout.write(table_text(TOWERS_HEADER, rows))
        elif args.command == "dirac":
            rows, md = dirac_result(_params(args), args.eps, args.J, args.rmin, args.rmax, args.nodes_per_decade)
            text = table_text(DIRAC_HEADER, rows)
            if args.out is None:
                stdout.write(text)
            else:
                args.out.write_text(text)
                args.out.with_suffix(".json").write_text(json_text(md))
        elif args.command == "bounds" and args.bounds_command == "resolvent":
            params = PhysicalParams(1.0, args.mass, tuple(args.x0))
            seps = args.sep_grid
            if min(seps) < params.x0_norm:
                raise ValidationError("sep-grid", "separations must be >= |x0|")
            stdout.write(table_text(RESOLVENT_HEADER, resolvent_rows(params, args.eta_grid, seps)))
        elif args.command == "bounds" and args.bounds_command == "moments":
            spec = spectrum_from_tower_csv(args.spectrum)
            stdout.write(json_text(moments_document(spec, args.deltas, _params(args), args.delta0)))
        elif args.command == "run":
            cfg = load_config(args.config)
            if args.task:
                cfg.tasks = list(args.task)
            if args.seed is not None:
                cfg.seed = args.seed
            manifest = run_pipeline(cfg, args.out)
            for t in manifest.tasks:
                stdout.write(f"{t.name}: {t.status}" + (f" ({t.error})" if t.error else "") + "\n")
            return EXIT_OK if manifest.ok else EXIT_TASK
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DipoleGapError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TASK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
