"""Command-line front end.

Exit codes: 0 all checks pass, 1 some check fails, 2 configuration error,
3 quadrature non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

from . import __version__
from .expr import EvaluationDomainError
from .fields import (
    QuadratureConvergenceError,
    catalog,
    check_admissible,
    field_from_expressions,
    get_field,
)
from .geometry import make_context
from .grids import AmbientGrid, SurfaceGrid, parse_grid
from .parser import ExprSyntaxError, UnknownIdentifierError
from .reports import SCHEMA_VERSION, dumps, write_atomic
from .verify import (
    SPHERE_TOL,
    TERM_GROUPS,
    mu_to_a,
    rhs,
    series_check,
    verify_expansion,
    verify_identity,
    verify_sphere_reduction,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_QUADRATURE = 0, 1, 2, 3
COMMANDS = ("verify-identity", "verify-sphere", "expansion-order", "check-field", "show-terms")
MIN_GRID = 9

# admissibility thresholds for check-field and user-supplied fields
ADMISSIBLE_TOL = {"vrho_on_E": 1e-12, "divE": 1e-10, "div3": 1e-8}

DEFAULTS = {
    "verify-identity": {"field": "all", "a": [1.1, 1.5, 2.0]},
    "verify-sphere": {"field": "Z1,Z2", "a": [1.0]},
    "expansion-order": {"field": "all", "mu": [0.05, 0.1, 0.2, 0.3]},
    "check-field": {"field": "all", "a": [1.1, 1.5, 2.0]},
    "show-terms": {"field": "all", "a": [1.5]},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    field: str | None = None
    vphi: str | None = None
    vtheta: str | None = None
    a: list[float] | None = None
    mu: list[float] | None = None
    grid: str = "33x33"
    out: str | None = None
    format: str = "json"
    tol: float | None = None
    flip: str | None = None
    threads: int = 1

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if (self.vphi is None) != (self.vtheta is None):
            raise ConfigError("--vphi and --vtheta must be given together")
        if self.vphi is not None and self.field is not None:
            raise ConfigError("give either --field or --vphi/--vtheta, not both")
        if (self.a is None) == (self.mu is None):
            raise ConfigError("exactly one of an a-list or a mu-list is required")
        if self.command == "expansion-order" and self.mu is None:
            raise ConfigError("expansion-order takes a mu-list (--mu)")
        if self.command != "expansion-order" and self.a is None:
            raise ConfigError(f"{self.command} takes an a-list (--a)")
        for x in self.a or []:
            if not x > 0:
                raise ConfigError(f"a must be positive, got {x}")
        for m in self.mu or []:
            if not 0 < m <= 0.35:
                raise ConfigError(f"mu must lie in (0, 0.35], got {m}")
        if self.command == "verify-sphere" and any(x != 1.0 for x in self.a):
            raise ConfigError("verify-sphere runs at a = 1 only")
        try:
            g = parse_grid(self.grid)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if min(g.shape) < MIN_GRID:
            raise ConfigError(f"grid dimensions must be at least {MIN_GRID} per axis, got {self.grid}")
        if not isinstance(g, SurfaceGrid) and self.command != "check-field":
            raise ConfigError(f"{self.command} needs a surface grid such as 33x33")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tolerances must be positive")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.format == "csv":
            if self.command not in ("verify-identity", "verify-sphere", "expansion-order"):
                raise ConfigError(f"{self.command} has no CSV output")
            if self.command != "expansion-order" and self.n_runs() != 1:
                raise ConfigError("CSV output holds one grid; select a single field and a single a")
        if self.flip is not None and self.flip not in TERM_GROUPS:
            raise ConfigError(f"--flip must be one of {', '.join(TERM_GROUPS)}")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")

    def field_names(self) -> list[str] | None:
        if self.vphi is not None:
            return None
        spec = self.field or "all"
        if spec == "all":
            return [f.name for f in catalog()]
        return [s.strip() for s in spec.split(",") if s.strip()]

    def n_runs(self) -> int:
        names = self.field_names()
        return (1 if names is None else len(names)) * len(self.a or self.mu or [])

    def surface_grid(self) -> SurfaceGrid:
        return parse_grid(self.grid)


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ellcalc", description="Verify restriction identities on the ellipsoid chart.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--field", default=None, help="catalog name(s), comma separated, or 'all'")
        s.add_argument("--vphi", default=None, help="expression for v^phi")
        s.add_argument("--vtheta", default=None, help="expression for v^theta")
        s.add_argument("--a", type=_float_list, default=None, help="comma-separated ellipsoid parameters")
        s.add_argument("--mu", type=_float_list, default=None, help="comma-separated eccentricities")
        s.add_argument("--grid", default=None, help="e.g. 33x33 (surface) or 9x17x17 (ambient)")
        s.add_argument("--out", default=None, help="report path")
        s.add_argument("--format", choices=("json", "csv"), default=None)
        s.add_argument("--tol", type=float, default=None, help="tolerance override")
        s.add_argument("--threads", type=int, default=None, help="worker cap (env ELLCALC_THREADS)")
        s.add_argument("--config", default=None, help="JSON file with the same keys; flags win")
        if name == "verify-identity":
            s.add_argument("--flip", choices=TERM_GROUPS, default=None, help="negate one term group")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - {f for f in RunConfig.__dataclass_fields__ if f != "command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    # a flag on one side of an exclusive pair overrides the file's other side
    if args.a is not None or args.mu is not None:
        file_cfg.pop("a", None), file_cfg.pop("mu", None)
    if args.field is not None or args.vphi is not None or args.vtheta is not None:
        for k in ("field", "vphi", "vtheta"):
            file_cfg.pop(k, None)
    merged = {}
    for key in RunConfig.__dataclass_fields__:
        if key == "command":
            continue
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else file_cfg.get(key)
    for key in ("a", "mu"):
        if merged[key] is not None:
            try:
                merged[key] = _float_list(merged[key])
            except argparse.ArgumentTypeError as e:
                raise ConfigError(str(e)) from None
    defaults = DEFAULTS[args.command]
    if merged["vphi"] is None and merged["field"] is None:
        merged["field"] = defaults["field"]
    if merged["a"] is None and merged["mu"] is None:
        merged[next(k for k in ("a", "mu") if k in defaults)] = defaults.get("a", defaults.get("mu"))
    if merged["threads"] is None:
        env = os.environ.get("ELLCALC_THREADS")
        try:
            merged["threads"] = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"ELLCALC_THREADS must be an integer, got {env!r}") from None
    merged["grid"] = merged["grid"] or "33x33"
    merged["format"] = merged["format"] or "json"
    cfg = RunConfig(command=args.command, **merged)
    cfg.validate()
    return cfg


def _resolve_fields(cfg: RunConfig):
    names = cfg.field_names()
    if names is None:
        try:
            fld = field_from_expressions(cfg.vphi, cfg.vtheta)
        except (ExprSyntaxError, UnknownIdentifierError) as e:
            raise ConfigError(f"bad field expression: {e}") from None
        return [fld]
    out = []
    for n in names:
        try:
            out.append(get_field(n))
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from None
    return out


def _validate_user_field(fld, a_values):
    for a in a_values:
        stats = check_admissible(fld, a)
        bad = {k: v for k, v in stats.items() if not v <= ADMISSIBLE_TOL[k]}
        if bad:
            raise ConfigError(f"field is not admissible at a={a}: {bad}")


def _map(cfg: RunConfig, fn, jobs):
    if cfg.threads == 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "PASS" if x else "FAIL"
    if isinstance(x, float):
        return f"{x:.3e}"
    return str(x)


def _table(rows: list[list], header: list[str]) -> str:
    cells = [header] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells)


def _run_identity(cfg, fields):
    grid = cfg.surface_grid()
    for f in fields:  # build trees up front; workers only evaluate
        rhs(f)
    jobs = [(f, a) for f in fields for a in cfg.a]
    reports = _map(cfg, lambda f, a: verify_identity(f, make_context(a), grid, cfg.tol, cfg.flip), jobs)
    rows = [
        [r.params["field"], r.params["a"], r.max_abs_residual, r.relative_residual, r.tolerance, r.passed]
        for r in reports
    ]
    print(_table(rows, ["field", "a", "max_abs", "relative", "tol", "status"]))
    term_rows = [[r.params["field"], r.params["a"]] + [r.terms.get(k) for k in ("lhs",) + TERM_GROUPS] for r in reports]
    print()
    print(_table(term_rows, ["field", "a", "lhs", *TERM_GROUPS]))
    return reports, all(r.passed for r in reports)


def _run_sphere(cfg, fields):
    grid = cfg.surface_grid()
    tol = cfg.tol or SPHERE_TOL
    reports = [verify_sphere_reduction(f, grid, tolerance=tol) for f in fields]
    rows = [[r.params["field"], r.max_abs_residual, r.tolerance, r.passed] for r in reports]
    print(_table(rows, ["field", "max_abs", "tol", "status"]))
    return reports, all(r.passed for r in reports)


def _run_expansion(cfg, fields):
    grid = cfg.surface_grid()
    results = _map(cfg, lambda f: verify_expansion(f, cfg.mu, grid), [(f,) for f in fields])
    rows = []
    for r in results:
        rows.append(
            [r.field, r.slopes["forms"], r.slopes["components"],
             r.component_slopes["components"]["dphi"], r.component_slopes["components"]["dtheta"],
             "yes" if r.degenerate else "no", r.passed]
        )
    print(_table(rows, ["field", "slope_forms", "slope_components", "comp_dphi", "comp_dtheta", "degenerate", "status"]))
    series = series_check(K=8, mu=0.3)
    print(
        f"\nseries K=8 mu=0.3: geometric {series['geometric']['error']:.3e} <= {series['geometric']['bound']:.3e}, "
        f"derivative {series['derivative']['error']:.3e} <= {series['derivative']['bound']:.3e}: "
        f"{_fmt(series['passed'])}"
    )
    passed = all(r.passed for r in results) and series["passed"]
    return results, passed, series


def _run_check_field(cfg, fields):
    g = parse_grid(cfg.grid)
    surf = g if isinstance(g, SurfaceGrid) else SurfaceGrid(g.n_phi, g.n_theta)
    amb = g if isinstance(g, AmbientGrid) else AmbientGrid(9, g.n_phi, g.n_theta)
    entries, rows, ok = [], [], True
    for f in fields:
        for a in cfg.a:
            stats = check_admissible(f, a, surf, amb)
            passed = all(stats[k] <= ADMISSIBLE_TOL[k] for k in stats)
            ok = ok and passed
            entries.append({"field": f.name, "a": a, **stats, "passed": passed, "note": f.note})
            rows.append([f.name, a, stats["vrho_on_E"], stats["divE"], stats["div3"], passed])
    print(_table(rows, ["field", "a", "vrho_on_E", "divE", "div3", "status"]))
    return entries, ok


def _run_show_terms(cfg, fields):
    grid = cfg.surface_grid()
    reports = [verify_identity(f, make_context(a), grid) for f in fields for a in cfg.a]
    rows = [[r.params["field"], r.params["a"]] + [r.terms.get(k) for k in ("lhs",) + TERM_GROUPS] for r in reports]
    print(_table(rows, ["field", "a", "lhs", *TERM_GROUPS]))
    return reports


def _expansion_csv(results) -> str:
    lines = ["field,mu,a,error_forms,error_components"]
    for r in results:
        for i, mu in enumerate(r.mu):
            lines.append(
                ",".join(
                    [r.field, format(mu, ".17g"), format(r.a[i], ".17g"),
                     format(r.errors["forms"][i], ".17g"), format(r.errors["components"][i], ".17g")]
                )
            )
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> int:
    fields = _resolve_fields(cfg)
    if cfg.vphi is not None and cfg.command != "check-field":
        _validate_user_field(fields[0], cfg.a or [mu_to_a(m) for m in cfg.mu])
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out", "threads")},
    }
    csv_text = None
    if cfg.command == "verify-identity":
        reports, passed = _run_identity(cfg, fields)
        payload["reports"] = [r.to_dict() for r in reports]
        if cfg.format == "csv":
            csv_text = reports[0].csv_text()
    elif cfg.command == "verify-sphere":
        reports, passed = _run_sphere(cfg, fields)
        payload["reports"] = [r.to_dict() for r in reports]
        if cfg.format == "csv":
            csv_text = reports[0].csv_text()
    elif cfg.command == "expansion-order":
        results, passed, series = _run_expansion(cfg, fields)
        payload["reports"] = [r.to_dict() for r in results]
        payload["series"] = series
        csv_text = _expansion_csv(results) if cfg.format == "csv" else None
    elif cfg.command == "check-field":
        entries, passed = _run_check_field(cfg, fields)
        payload["reports"] = entries
        payload["thresholds"] = ADMISSIBLE_TOL
    else:
        reports = _run_show_terms(cfg, fields)
        payload["reports"] = [{"field": r.params["field"], "a": r.params["a"], "terms": r.terms} for r in reports]
        passed = True
    payload["passed"] = bool(passed)
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    if cfg.out:
        write_atomic(cfg.out, csv_text if csv_text is not None else dumps(payload))
    print(f"\n{cfg.command}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationDomainError as e:
        print(f"error: evaluation outside the domain: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_QUADRATURE


if __name__ == "__main__":
    sys.exit(main())
