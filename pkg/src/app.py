"""Main app: the `plap-workbench` command line."""

import argparse
import json
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from logging.handlers import MemoryHandler
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError
from rich import print_json

from src.errors import WorkbenchError
from src.inequalities import (
    TrialFamily,
    check_ckn,
    check_embedding,
    picone_suite,
)
from src.solvers.amp import scan_amp
from src.solvers.eigen import (
    EigenResult,
    linear_oracle,
    minimize_rayleigh,
    truncation_study,
)
from src.solvers.fem import build_mesh
from src.solvers.shooting import (
    find_bracket,
    integrate_ivp,
    shoot_eigenvalue,
    verify_asymptotics,
)
from src.structs import (
    AmpResults,
    EigenResults,
    ExperimentConfig,
    InequalityResults,
    Provenance,
    Report,
    ShootResults,
    WeightsResults,
)
from src.utils import LOG_DATEFMT, LOG_FORMAT, render_chart, setup_logging, write_series
from src.weights import (
    boundedness_integral,
    check_admissibility,
    embedding_constant,
)

load_dotenv()

__all__ = [
    "EXIT_INVALID",
    "EXIT_NONCONVERGED",
    "EXIT_OK",
    "ExperimentTask",
    "build_config",
    "load_config",
    "main",
    "nest_assignments",
    "run",
]

log = logging.getLogger("app")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NONCONVERGED = 2

OUT_DIR_ENV = "PLAP_OUT_DIR"
LOG_LEVEL_ENV = "PLAP_LOG_LEVEL"
EMBEDDING_STABILITY = 1e-6
SHOOT_IDENTITY_TOL = 1e-5
# Records kept in memory until the output directory exists.
LOG_BUFFER_CAPACITY = 1_000_000

# --tol lands on every tolerance the command uses.
TOL_TARGETS: Dict[str, List[str]] = {
    "check-weights": ["admissibility.tol"],
    "eigen": ["solver.tol"],
    "amp-scan": ["solver.tol", "amp.tol"],
    "shoot": ["solver.tol"],
    "verify-inequalities": [],
}


def _decode(value: str) -> Any:
    text = value.strip()
    if text.startswith(("[", "{")):
        return json.loads(text)
    if text == "null":
        return None
    return text


def _set_path(out: Dict[str, Any], key: str, value: Any):
    *parents, leaf = key.split(".")
    node = out
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"Key {key!r} nests under a non-section value.")
    node[leaf] = value


def nest_assignments(flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Turn dotted `key=value` pairs into nested dicts; JSON-looking values are decoded."""
    out: Dict[str, Any] = {}
    for key, value in flat.items():
        if not key:
            raise ValueError("Empty key in assignment.")
        if value is None:
            raise ValueError(f"Missing value for {key!r}.")
        _set_path(out, key, _decode(value))
    return out


def _merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in over.items():
        prev = out.get(key)
        # A weight of another kind replaces the old one instead of merging into it.
        if (
            isinstance(value, dict)
            and isinstance(prev, dict)
            and value.get("kind", prev.get("kind")) == prev.get("kind")
        ):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: Path) -> Dict[str, Any]:
    """Read a `.json` config, or a flat key=value file for any other suffix."""
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ValueError(f"{path} must hold a JSON object.")
        return data
    if not path.is_file():
        raise FileNotFoundError(f"Config file {path} does not exist.")
    return nest_assignments(dotenv_values(path))


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then --set overrides, then the dedicated flags."""
    data = load_config(args.config) if args.config else {}
    pairs = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}.")
        pairs[key.strip()] = value
    data = _merge(data, nest_assignments(pairs))
    data["command"] = args.command
    if args.out is not None:
        data["out_dir"] = str(args.out)
    elif "out_dir" not in data and os.getenv(OUT_DIR_ENV):
        data["out_dir"] = os.environ[OUT_DIR_ENV]
    if args.seed is not None:
        data["seed"] = args.seed
    if args.tol is not None:
        for key in TOL_TARGETS[args.command]:
            _set_path(data, key, args.tol)
    if args.charts:
        data["charts"] = True
    # Partial sections such as spec.p=3 land on top of the defaults.
    return ExperimentConfig.model_validate(_merge(ExperimentConfig().model_dump(mode="json"), data))


@dataclass
class Series:
    """One CSV written next to the report, optionally charted."""

    name: str
    columns: Dict[str, np.ndarray]
    x: str
    ys: List[str]
    title: str = ""
    logx: bool = False


@dataclass
class Outcome:
    """What a command produced, before anything touches the disk."""

    results: Any
    converged: bool
    series: List[Series] = field(default_factory=list)


TaskStatus = Literal["NOT_STARTED", "IN_PROGRESS", "COMPLETED", "FAILED"]


class ExperimentTask:
    """Class to manage one experiment run."""

    def __init__(self, config: ExperimentConfig):
        """Initialize."""
        self.config = config
        self.event_log: List[str] = []
        self.warnings: List[str] = []
        self.status: TaskStatus = "NOT_STARTED"
        self.timestamp: Optional[datetime] = None
        self.duration: Optional[float] = None
        self.error: Optional[Exception] = None

    def event(self, msg: str):
        """Record a milestone."""
        self.event_log.append(msg)
        log.info(msg)

    def warn(self, msg: str):
        """Record a flagged condition."""
        self.warnings.append(msg)
        log.warning(msg)

    def process(self) -> Optional[Outcome]:
        """Run the configured command; None when it raised."""
        self.status = "IN_PROGRESS"
        self.timestamp = datetime.now(timezone.utc)
        start_time = time.monotonic()
        command = self.config.command
        self.event(f"Started {command}.")
        try:
            outcome = COMMANDS[command](self)
        except (WorkbenchError, ValueError) as e:
            self.error = e
            self.status = "FAILED"
            self.event_log.append(f"Error: {e}")
            self.duration = time.monotonic() - start_time
            log.error(f"{command} failed: {e}", exc_info=e)
            return None
        self.status = "COMPLETED"
        self.duration = time.monotonic() - start_time
        self.event(f"Finished {command}.")
        log.debug(f"{command} took {self.duration:.2f}s.")
        return outcome


def _eigen_series(result: EigenResult, name: str = "eigenfunction") -> Series:
    fn = result.u
    return Series(
        name=name,
        columns={"r": fn.mesh.nodes, "u": fn.values},
        x="r",
        ys=["u"],
        title=f"lambda1 = {result.lambda1:.8g}",
        logx=True,
    )


def _cmd_check_weights(task: ExperimentTask) -> Outcome:
    cfg = task.config
    spec, adm = cfg.spec, cfg.admissibility
    report = check_admissibility(spec, adm.grid_size, adm.tol)
    task.warnings.extend(report.warnings)
    for reason in report.reasons:
        task.warn(reason)
    task.event(f"Admissibility verdict: {report.verdict}.")

    halved = stable = None
    C = report.embedding_constant
    if C is not None and C.convergent:
        halved = embedding_constant(spec, adm.tol / 2.0)
        stable = bool(
            halved.convergent
            and abs(halved.value - C.value) <= EMBEDDING_STABILITY * abs(C.value)
        )
        task.event(f"Embedding constant C={C.value:.10g} (stable under tol/2: {stable}).")
        if not stable:
            task.warn("Embedding constant moved under tolerance halving.")

    bounded = None
    if spec.N == 2 and spec.p == 2 and spec.K.positivity != "sign_changing":
        try:
            bounded = boundedness_integral(spec.K, spec.L, adm.tol)
        except WorkbenchError as e:
            task.warn(str(e))

    series = []
    if report.G_curve:
        r, g = zip(*report.G_curve)
        series.append(
            Series("g_curve", {"r": np.array(r), "G": np.array(g)}, "r", ["G"], "G(r)", True)
        )
    # Divergent is a settled answer; only unsettled quadratures count as nonconverged.
    settled = all(
        res is None or res.verdict != "inconclusive" for res in (C, halved, bounded)
    )
    converged = settled and stable is not False
    results = WeightsResults(
        admissibility=report,
        embedding_halved_tol=halved,
        embedding_stable=stable,
        boundedness_integral=bounded,
    )
    return Outcome(results, converged=converged, series=series)


def _solve_eigen(task: ExperimentTask) -> EigenResult:
    cfg = task.config
    spec, mesh_cfg = cfg.spec, cfg.mesh
    opts = cfg.solver.options()
    if cfg.solver.truncation_study:
        result = truncation_study(spec, mesh_cfg.M, mesh_cfg.grading, opts)
    else:
        mesh = build_mesh(spec.eps, spec.R, mesh_cfg.M, mesh_cfg.grading)
        result = minimize_rayleigh(mesh, spec, opts)
    task.event(f"lambda1={result.lambda1:.12g} (residual {result.residual:.3e}).")
    if not result.converged:
        task.warn(f"Eigensolver did not converge after {result.iterations} iterations.")
    if not result.positive:
        task.warn("Eigenfunction is not strictly positive at every free node.")
    return result


def _cmd_eigen(task: ExperimentTask) -> Outcome:
    cfg = task.config
    result = _solve_eigen(task)
    series = [_eigen_series(result)]
    oracle = rel = None
    if cfg.spec.p == 2 and cfg.solver.oracle:
        try:
            dense = linear_oracle(result.u.mesh, cfg.spec, cfg.solver.options())
        except WorkbenchError as e:
            task.warn(f"Oracle unavailable: {e}")
        else:
            oracle = dense.summary()
            rel = abs(result.lambda1 - dense.lambda1) / abs(dense.lambda1)
            task.event(f"Oracle lambda1={dense.lambda1:.12g} (relative difference {rel:.3e}).")
    results = EigenResults(eigen=result.summary(), oracle=oracle, oracle_rel_diff=rel)
    return Outcome(results, converged=result.converged, series=series)


def _cmd_amp_scan(task: ExperimentTask) -> Outcome:
    cfg = task.config
    spec, amp = cfg.spec, cfg.amp
    if cfg.solver.truncation_study:
        task.warn("amp-scan solves on the configured window; truncation_study is ignored.")
    mesh = build_mesh(spec.eps, spec.R, cfg.mesh.M, cfg.mesh.grading)
    eig = minimize_rayleigh(mesh, spec, cfg.solver.options())
    task.event(f"lambda1={eig.lambda1:.12g} (residual {eig.residual:.3e}).")
    if not eig.converged:
        task.warn("Eigensolver did not converge; the scan is centred on an unconverged lambda1.")
    lam1 = eig.lambda1
    if amp.window is not None:
        window = amp.window
    else:
        window = (amp.window_rel[0] * lam1, amp.window_rel[1] * lam1)
    E = amp.E if amp.E is not None else (spec.eps, spec.R)
    scan = scan_amp(mesh, spec, amp.h, window, amp.steps, E, eig, amp.tol)
    task.event(f"delta_local={scan.delta_local:.6g}, delta_global={scan.delta_global:.6g}.")
    if scan.nonnegative_above:
        task.warn(f"{scan.nonnegative_above} nonnegative solutions found above lambda1.")
    below = [s for s in scan.per_lambda if 0 < s.lam < lam1 and s.converged]
    if any(s.min_global <= 0 for s in below):
        task.warn("A converged solution below lambda1 is not strictly positive.")

    rows = scan.per_lambda
    series = [
        _eigen_series(eig),
        Series(
            "amp_scan",
            {
                "lam": np.array([s.lam for s in rows]),
                "converged": np.array([float(s.converged) for s in rows]),
                "residual": np.array([s.residual for s in rows]),
                "min_on_E": np.array([s.min_on_E for s in rows]),
                "max_on_E": np.array([s.max_on_E for s in rows]),
                "min_global": np.array([s.min_global for s in rows]),
                "max_global": np.array([s.max_global for s in rows]),
            },
            "lam",
            ["min_global", "max_global"],
            "Solution extremes across lambda",
        ),
    ]
    if amp.dump_solutions and scan.solutions:
        cols = {"r": mesh.nodes}
        cols.update({f"u_{j}": np.array(u) for j, u in enumerate(scan.solutions)})
        series.append(Series("amp_solutions", cols, "r", [], logx=True))
    return Outcome(AmpResults(eigen=eig.summary(), scan=scan), eig.converged, series)


def _cmd_shoot(task: ExperimentTask) -> Outcome:
    cfg = task.config
    spec, sh = cfg.spec, cfg.shoot
    L, K = spec.L, spec.K
    bracket = sh.bracket or find_bracket(L, K, spec.eps, sh.R_big, sh.steps, sh.anchor)
    lam1 = shoot_eigenvalue(L, K, spec.eps, sh.R_big, bracket, sh.steps, sh.anchor)
    task.event(f"Shot lambda1={lam1:.10g} with bracket {bracket}.")

    half = sensitivity = None
    if sh.eps_sensitivity:
        try:
            half = shoot_eigenvalue(L, K, 0.5 * spec.eps, sh.R_big, bracket, sh.steps, sh.anchor)
            sensitivity = abs(half - lam1) / lam1
            task.event(f"lambda1 at eps/2: {half:.10g} (relative change {sensitivity:.3e}).")
        except WorkbenchError as e:
            task.warn(f"eps sensitivity unavailable: {e}")

    traj = integrate_ivp(L, K, lam1, spec.eps, sh.R_big, sh.steps, sh.anchor)
    report = verify_asymptotics(traj, L, K)
    for note in report.notes:
        task.warn(note)
    if not report.monotone_increasing:
        task.warn("Trajectory at lambda1 is not strictly increasing.")

    fem = rel = None
    converged = True
    if sh.compare_fem:
        window = spec.model_copy(update={"R": sh.R_big})
        opts = cfg.solver.options(
            dirichlet_at_eps=sh.anchor == "infinity", dirichlet_at_R=sh.anchor == "origin"
        )
        mesh = build_mesh(spec.eps, sh.R_big, cfg.mesh.M, cfg.mesh.grading)
        result = minimize_rayleigh(mesh, window, opts)
        fem, converged = result.summary(), result.converged
        rel = abs(result.lambda1 - lam1) / lam1
        task.event(f"FEM lambda1={result.lambda1:.10g} (relative difference {rel:.3e}).")
    if report.flux_identity_residual > SHOOT_IDENTITY_TOL:
        task.warn(
            f"Flux identity residual {report.flux_identity_residual:.3e} exceeds "
            f"{SHOOT_IDENTITY_TOL:g}; the integration is under-resolved."
        )
        converged = False
    if not math.isfinite(lam1):
        converged = False

    series = [
        Series(
            "trajectory",
            {"r": traj.r, "u": traj.u, "q": traj.q},
            "r",
            ["u"],
            f"Trajectory at lambda = {lam1:.8g}",
            True,
        )
    ]
    results = ShootResults(
        lambda1=lam1,
        bracket=bracket,
        anchor=sh.anchor,
        lambda1_half_eps=half,
        eps_sensitivity=sensitivity,
        fem=fem,
        fem_rel_diff=rel,
        asymptotics=report,
    )
    return Outcome(results, converged, series)


def _cmd_verify_inequalities(task: ExperimentTask) -> Outcome:
    cfg = task.config
    spec, iq = cfg.spec, cfg.inequalities
    # The experiment seed drives every trial family.
    family = iq.family.model_copy(update={"seed": cfg.seed})
    reports = []
    C = iq.embedding_C
    unsettled = False
    if "ckn_basic" in iq.checks:
        reports.append(check_ckn(family, spec, "basic"))
        if iq.near_extremal:
            try:
                near = TrialFamily.near_extremal(
                    spec.N, spec.p, spec.alpha, family.samples, cfg.seed
                )
            except WorkbenchError as e:
                task.warn(f"Near-extremal family skipped: {e}")
            else:
                reports.append(check_ckn(near, spec, "basic"))
    if "ckn_generalized" in iq.checks:
        reports.append(check_ckn(family, spec, "generalized"))
    if "embedding" in iq.checks:
        if C is None:
            res = embedding_constant(spec, cfg.admissibility.tol)
            if res.convergent:
                C = res.value
            else:
                task.warn(f"Embedding check skipped: the embedding integral is {res.verdict}.")
                unsettled = res.verdict == "inconclusive"
        if C is not None:
            reports.append(check_embedding(family, spec, C))
    if "picone" in iq.checks:
        mesh = build_mesh(spec.eps, max(spec.R, family.rho[1]), iq.picone_M)
        reports.append(picone_suite(family, mesh, spec.p))

    violations = sum(len(r.violations) for r in reports)
    for r in reports:
        task.event(f"{r.inequality}: {r.trials} trials, max ratio {r.max_ratio:.8g}.")
        if r.violations:
            task.warn(f"{r.inequality}: {len(r.violations)} violations.")
    empty = [r.inequality for r in reports if r.trials == 0 or not math.isfinite(r.max_ratio)]
    if empty:
        task.warn(f"No usable trials for: {', '.join(empty)}.")
    results = InequalityResults(reports=reports, embedding_C=C, violations=violations)
    return Outcome(results, converged=not (empty or unsettled))


COMMANDS: Dict[str, Callable[[ExperimentTask], Outcome]] = {
    "check-weights": _cmd_check_weights,
    "eigen": _cmd_eigen,
    "amp-scan": _cmd_amp_scan,
    "shoot": _cmd_shoot,
    "verify-inequalities": _cmd_verify_inequalities,
}


def _write_outputs(
    task: ExperimentTask, outcome: Outcome, buffer: MemoryHandler
) -> List[str]:
    """Write series, charts, the run log and report.json (last).

    Everything goes to a staging directory next to the output directory and
    is moved into place only once report.json is written, so a failed run
    leaves no partial outputs behind.
    """
    cfg = task.config
    out = cfg.out_dir
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    fh = None
    try:
        files = []
        for s in outcome.series:
            csv_path = staging / f"{s.name}.csv"
            write_series(csv_path, s.columns)
            files.append(csv_path.name)
            if cfg.charts and s.ys:
                svg_path = staging / f"{s.name}.svg"
                render_chart(csv_path, svg_path, s.x, s.ys, s.title, s.logx)
                files.append(svg_path.name)

        fh = logging.FileHandler(staging / "run.log", encoding="utf-8")
        fh.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
        buffer.setTarget(fh)
        buffer.flush()
        files.extend(["run.log", "report.json"])

        from src import __version__

        status = "ok" if outcome.converged else "nonconverged"
        report = Report(
            command=cfg.command,
            status=status,
            config=cfg,
            results=outcome.results,
            provenance=Provenance(
                version=__version__,
                seed=cfg.seed,
                started=task.timestamp.isoformat() if task.timestamp else "",
                duration=task.duration or 0.0,
            ),
            warnings=task.warnings,
            events=task.event_log,
            files=files,
        )
        (staging / "report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
        _publish(staging, out)
    except OSError:
        if fh is not None:
            buffer.setTarget(None)
            fh.close()
        shutil.rmtree(staging, ignore_errors=True)
        raise
    log.info(f"Report written to {out / 'report.json'} ({status}).")
    return files


def _publish(staging: Path, out: Path):
    """Move the staged files into `out`; a fresh `out` is a single rename."""
    if not out.exists():
        staging.rename(out)
        return
    if not out.is_dir():
        raise NotADirectoryError(f"{out} exists and is not a directory.")
    # report.json goes last so a reader never sees a report without its files.
    names = sorted(p.name for p in staging.iterdir() if p.name != "report.json")
    for name in [*names, "report.json"]:
        os.replace(staging / name, out / name)
    staging.rmdir()


def run(config: ExperimentConfig) -> int:
    """Run one experiment and write its outputs.

    Returns 0 on success, 1 when the command or the output directory fails
    (nothing is written), 2 when a solver or a quadrature did not settle
    (outputs are still written).
    """
    task = ExperimentTask(config)
    app_log = logging.getLogger("app")
    buffer = MemoryHandler(LOG_BUFFER_CAPACITY, flushLevel=logging.CRITICAL + 1)
    buffer.setLevel(logging.DEBUG)
    app_log.addHandler(buffer)
    try:
        outcome = task.process()
        if outcome is None:
            return EXIT_INVALID
        try:
            _write_outputs(task, outcome, buffer)
        except OSError as e:
            log.error(f"Cannot write outputs to {config.out_dir}: {e}")
            return EXIT_INVALID
        return EXIT_OK if outcome.converged else EXIT_NONCONVERGED
    finally:
        app_log.removeHandler(buffer)
        target = buffer.target
        buffer.setTarget(None)
        buffer.close()
        if target is not None:
            target.close()


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plap-workbench",
        description="Principal eigenvalues, admissibility checks and sign experiments "
        "for radial weighted p-Laplacians.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or flat key=value config file.")
    common.add_argument("--out", type=Path, help=f"Output directory (default ${OUT_DIR_ENV}).")
    common.add_argument("--seed", type=int, help="Seed for every randomized family.")
    common.add_argument("--tol", type=float, help="Tolerance for the command's solvers.")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted config override, e.g. spec.p=3 or mesh.M=400.",
    )
    common.add_argument("--charts", action="store_true", help="Also render SVG charts.")
    common.add_argument("-v", "--verbose", action="store_true", help="DEBUG logging.")

    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check-weights": "Check (v, w) admissibility and the embedding constant.",
        "eigen": "Principal eigenpair by Rayleigh minimization.",
        "amp-scan": "Scan the perturbed problem across lambda1.",
        "shoot": "Radial shooting for p = N = 2.",
        "verify-inequalities": "Property-test the functional inequalities.",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    schema = sub.add_parser("schema", help="Print the report JSON schema.")
    schema.add_argument("--out", type=Path, help="Write the schema to this file instead.")
    return parser


def _log_level(verbose: bool) -> str:
    if verbose:
        return "DEBUG"
    level = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    return level if level in logging.getLevelNamesMapping() else "INFO"


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point."""
    args = _parser().parse_args(argv)
    if args.command == "schema":
        text = json.dumps(Report.model_json_schema(), indent=2)
        if args.out is not None:
            args.out.write_text(text + "\n", encoding="utf-8")
        else:
            print_json(text)
        return EXIT_OK

    setup_logging(None, _log_level(args.verbose))
    try:
        config = build_config(args)
    except (OSError, ValueError) as e:
        # ValidationError and JSONDecodeError are ValueErrors.
        detail = e.errors() if isinstance(e, ValidationError) else e
        log.error(f"Invalid configuration: {detail}")
        return EXIT_INVALID
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
