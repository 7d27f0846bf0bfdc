"""Command line interface: ``fracshrink {curvature,shrink,stability,flow,limits}``.

Options resolve as defaults < JSON file given by ``--config`` < explicit
flags.  Results go to stdout or, with ``--output``, to a file written
atomically.  Exit codes: 0 success, 2 invalid configuration, 3 numerical
failure, 4 solver budget exhausted or no convergence.
"""
import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .curvature import fractional_curvature
from .easy import PERTURBATIONS, flow_from_shrinker, stationary_set
from .errors import ConfigError, ConvergenceError, FracShrinkError, ParameterError
from .kernel import KernelParams, QuadratureConfig, RadialSet
from .shrinker import FAMILIES, STRATEGIES, limit_study
from .stability import corner_derivative_check, shell_monotonicity_check, stability_report

logger = logging.getLogger(__name__)

SCHEMA = 1
COMMANDS = ("curvature", "shrink", "stability", "flow", "limits")
FORMATS = ("csv", "json")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4
PRESENTATION_ONLY = ("output", "progress")


@dataclass
class RunConfig:
    """Fully resolved options of one command."""
    command: str = None
    n: int = None
    s: float = None
    radii: list = None
    ball: bool = False
    index: str = "all"
    N: int = 1
    family: str = "annuli-only"
    cylinder_k: int = None
    strategy: str = "auto"
    explore: bool = False
    tol: float = 1e-9
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_subdivisions: int = 60
    pairing_cutoff: float = 0.5
    which: str = "original"
    horizon: float = None
    ode_tol: float = 1e-8
    perturbation: str = None
    amplitude: float = 1e-4
    s_grid: list = None
    format: str = "csv"
    output: str = None
    seed: int = 0
    progress: bool = False

    def validate(self):
        """Raise ConfigError naming the first offending option."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.n is None:
            raise ConfigError("--n is required")
        if self.command != "limits" and self.s is None:
            raise ConfigError("--s is required")
        if self.command == "limits" and not self.s_grid:
            raise ConfigError("--s-grid is required")
        if self.command == "curvature" and not self.radii:
            raise ConfigError("--radii is required")
        if self.format not in FORMATS:
            raise ConfigError(f"--format must be one of {FORMATS}")
        if self.family not in FAMILIES:
            raise ConfigError(f"--family must be one of {FAMILIES}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"--strategy must be one of {STRATEGIES}")
        if self.which not in ("original", "rescaled"):
            raise ConfigError("--which must be 'original' or 'rescaled'")
        if self.perturbation is not None and self.perturbation not in PERTURBATIONS:
            raise ConfigError(f"--perturbation must be one of {PERTURBATIONS}")
        if self.index != "all":
            try:
                int(self.index)
            except (TypeError, ValueError):
                raise ConfigError(f"--index must be an integer or 'all', got {self.index!r}")
        try:
            for s in (self.s_grid if self.command == "limits" else [self.s]):
                self.params(s)
            self.quadrature()
            if self.radii:
                self.radial_set()
        except (ParameterError, TypeError) as e:
            raise ConfigError(str(e))

    def params(self, s=None):
        return KernelParams(self.n, self.s if s is None else s)

    def quadrature(self):
        return QuadratureConfig(self.rel_tol, self.abs_tol, self.max_subdivisions, self.pairing_cutoff)

    def radial_set(self):
        return RadialSet(tuple(self.radii), contains_origin=self.ball)

    def as_dict(self):
        """Options that determine the results; where and how verbosely they are written is left out."""
        values = dataclasses.asdict(self)
        for name in PRESENTATION_ONLY:
            values.pop(name)
        return values

    def digest(self):
        """Short hash identifying the resolved configuration."""
        return hashlib.md5(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Table:
    """Rows for CSV output together with a JSON-able summary."""
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="fracshrink",
                                     description="Fractional mean curvature, shrinkers and flows of radial sets")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--n", type=int, help="Ambient dimension")
    common.add_argument("--s", type=float, help="Fractional order in (0, 1)")
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--max-subdivisions", dest="max_subdivisions", type=int)
    common.add_argument("--pairing-cutoff", dest="pairing_cutoff", type=float)
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--output", help="Write here instead of stdout")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="count", help="-v for INFO, -vv for DEBUG")
    solve = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    solve.add_argument("--N", type=int, help="Number of annuli")
    solve.add_argument("--family", choices=FAMILIES)
    solve.add_argument("--cylinder-k", dest="cylinder_k", type=int, help="Cross-section dimension of a cylinder")
    solve.add_argument("--strategy", choices=STRATEGIES)
    solve.add_argument("--explore", action="store_true")
    solve.add_argument("--tol", type=float, help="Bound on the stationarity residual")

    sub = parser.add_subparsers(dest="command", required=True)
    curvature = sub.add_parser("curvature", parents=[common], help="Curvature at boundary spheres",
                               argument_default=argparse.SUPPRESS)
    curvature.add_argument("--radii", type=float, nargs="+", help="Boundary radii, increasing")
    curvature.add_argument("--ball", action="store_true", help="The set contains the origin")
    curvature.add_argument("--index", help="0-based boundary index or 'all'")
    sub.add_parser("shrink", parents=[common, solve], help="Find a stationary set",
                   argument_default=argparse.SUPPRESS)
    sub.add_parser("stability", parents=[common, solve], help="Spectrum of the Jacobian at a stationary set",
                   argument_default=argparse.SUPPRESS)
    flow = sub.add_parser("flow", parents=[common, solve], help="Integrate a flow from a stationary set",
                          argument_default=argparse.SUPPRESS)
    flow.add_argument("--which", choices=("original", "rescaled"))
    flow.add_argument("--horizon", type=float)
    flow.add_argument("--ode-tol", dest="ode_tol", type=float)
    flow.add_argument("--perturbation", choices=PERTURBATIONS)
    flow.add_argument("--amplitude", type=float)
    limits = sub.add_parser("limits", parents=[common], help="Behaviour as s -> 1",
                            argument_default=argparse.SUPPRESS)
    limits.add_argument("--s-grid", dest="s_grid", type=_float_list, help="Comma-separated s values")
    limits.add_argument("--progress", action="store_true")
    return parser


def resolve_config(args):
    """Merge defaults, the --config file and explicit flags into a validated RunConfig."""
    values = {}
    flags = dict(vars(args))
    flags.pop("verbose", None)
    path = flags.pop("config", None)
    if path is not None:
        try:
            with open(path, "r") as f:
                values.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read --config {path}: {e}")
    values.update(flags)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown option(s) {', '.join(unknown)}")
    config = RunConfig(**values)
    config.validate()
    return config


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def render(table, config, fmt):
    """Serialize a Table with the config and version embedded."""
    header = {"schema": SCHEMA, "version": __version__, "config": config.as_dict(), "config_hash": config.digest()}
    if fmt == "json":
        records = [dict(zip(table.columns, row)) for row in table.rows]
        document = dict(header, rows=records, summary=table.summary)
        return json.dumps(_jsonable(document), indent=2, sort_keys=True, allow_nan=False) + "\n"
    buffer = io.StringIO()
    buffer.write(f"# schema={SCHEMA}\n")
    buffer.write(f"# version={__version__}\n")
    buffer.write(f"# config={json.dumps(_jsonable(config.as_dict()), sort_keys=True)}\n")
    buffer.write(f"# config_hash={header['config_hash']}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow(["" if isinstance(x, float) and not math.isfinite(x) else _cell(x) for x in row])
    return buffer.getvalue()


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_atomic(path, text):
    """Write text to path through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fracshrink-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _solve(config):
    kwargs = {}
    if config.strategy != "auto":
        kwargs["strategy"] = config.strategy
    if config.explore:
        kwargs["explore"] = True
    return stationary_set(config.n, config.s, config.N, config.family, config.cylinder_k, config.quadrature(),
                    config.tol, **kwargs)


def cmd_curvature(config):
    p, q = config.params(), config.quadrature()
    radial_set = config.radial_set()
    indices = range(radial_set.m) if config.index == "all" else [int(config.index)]
    if any(not 0 <= i < radial_set.m for i in indices):
        raise ConfigError(f"--index {config.index} is out of range for {radial_set.m} radii")
    table = Table(columns=["index", "radius", "value", "error_estimate", "decomposition"])
    for i in indices:
        value = fractional_curvature(p, radial_set, i, q)
        decomposition = ";".join(f"{label}={contribution!r}" for label, contribution in value.decomposition)
        table.rows.append([i, radial_set.radii[i], value.value, value.error_estimate, decomposition])
    table.summary = {"family": radial_set.family, "radii": list(radial_set.radii)}
    emit(render(table, config, config.format), config.output)
    return EXIT_OK


def _solution_summary(sol):
    return {"family": sol.family, "N": sol.N, "radii": list(sol.radii), "ratios": list(sol.ratios),
            "residual_norm": sol.residual_norm, "tol": sol.tol, "ambient_n": sol.ambient_n,
            "fiber_factor": sol.fiber_factor, "solver_path": list(sol.solver_path),
            "extras": [list(x.radii) for x in sol.extras]}


def cmd_shrink(config):
    sol = _solve(config)
    table = Table(columns=["index", "radius", "ratio"])
    for i, (r, ratio) in enumerate(zip(sol.radii, sol.ratios)):
        table.rows.append([i, r, ratio])
    table.summary = _solution_summary(sol)
    emit(render(table, config, config.format), config.output)
    return EXIT_OK


def cmd_stability(config):
    sol = _solve(config)
    p, q = sol.params, config.quadrature()
    report = stability_report(p, sol, q)
    table = Table(columns=["rank", "eigenvalue"], rows=[[k, v] for k, v in enumerate(report.eigenvalues)])
    summary = _solution_summary(sol)
    summary.update(morse_index=report.morse_index, radial_eigen_defect=report.radial_eigen_defect,
                   symmetrization_defect=report.symmetrization_defect, jacobian=report.jacobian.tolist(),
                   unstable_direction=None if report.unstable_direction is None
                   else report.unstable_direction.tolist())
    if sol.set.m >= 2:
        corner, bound = corner_derivative_check(p, sol, q)
        monotone = shell_monotonicity_check(p, sol, q=q)
        summary.update(corner_derivative=corner, corner_bound=bound, shell_increasing=monotone.increasing,
                       shell_worst_margin=monotone.worst_margin, shell_ordered=monotone.ordered)
    table.summary = summary
    emit(render(table, config, config.format), config.output)
    return EXIT_OK


def cmd_flow(config):
    sol = _solve(config)
    trace, summary = flow_from_shrinker(sol, config.which, config.perturbation, config.amplitude, config.seed,
                                        config.horizon, config.quadrature(), config.ode_tol)
    m = sol.set.m
    table = Table(columns=["t"] + [f"r_{i+1}" for i in range(m)],
                  rows=[[state.time] + list(state.radii) for state in trace.states], summary=summary)
    if config.format == "json":
        emit(render(table, config, "json"), config.output)
        return EXIT_OK
    summary_text = render(Table(columns=[], summary=summary), config, "json")
    if config.output is None:
        emit(render(table, config, "csv"), None)
        emit(summary_text, None)
    else:
        emit(render(table, config, "csv"), config.output)
        emit(summary_text, os.path.splitext(config.output)[0] + ".summary.json")
    return EXIT_OK


def cmd_limits(config):
    rows = limit_study(config.n, config.s_grid, config.quadrature(), tol=config.tol, progress=config.progress)
    table = Table(columns=["s", "ratio", "scaled_ball_constant", "scaled_defect", "error"])
    for row in rows:
        table.rows.append([row.s, row.ratio, row.scaled_ball_constant, row.scaled_defect, row.error or ""])
    ratios = [row.ratio for row in rows if not row.failed]
    table.summary = {"failed_rows": sum(row.failed for row in rows),
                     "ratio_increasing": bool(np.all(np.diff(ratios) > 0)),
                     "classical_ball_constant": config.n - 1}
    emit(render(table, config, config.format), config.output)
    return EXIT_OK


COMMAND_FUNCTIONS = {"curvature": cmd_curvature, "shrink": cmd_shrink, "stability": cmd_stability,
                     "flow": cmd_flow, "limits": cmd_limits}


def exit_code(error):
    """Map an exception to the documented exit code."""
    if isinstance(error, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(error, ConvergenceError):
        return EXIT_BUDGET
    return EXIT_NUMERICAL


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    verbosity = getattr(args, "verbose", 0) or 0
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(verbosity, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        return COMMAND_FUNCTIONS[config.command](config)
    except FracShrinkError as e:
        print(f"fracshrink: error: {str(e).splitlines()[0] if str(e) else type(e).__name__}", file=sys.stderr)
        return exit_code(e)


if __name__ == "__main__":
    raise SystemExit(main())
