"""Command-line driver: ``malab {solve,verify,sweep,dump} --config run.json``.

Exit codes: 0 success, 1 solve or check failure, 2 configuration error.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from . import curvature as cv
from . import geometry, verify
from .errors import ConfigError, MalabError
from .field import make_grid
from .solver import (
    SolverOptions,
    analytic_for_domain,
    exact_result,
    max_error,
    solution_jets,
    solve_dirichlet,
)

log = logging.getLogger("malab")

OUTPUT_ENV = "MALAB_OUTPUT_DIR"
DEFAULT_OUTPUT = "malab-out"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


@dataclass
class RunConfig:
    domain: dict
    solver: dict = dc_field(default_factory=dict)
    checks: list = None
    output: str = None
    sweep: list = None

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - {"domain", "solver", "checks", "output", "sweep"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "domain" not in raw or not isinstance(raw["domain"], dict):
            raise ConfigError("config needs a 'domain' object")
        cfg = cls(raw["domain"], raw.get("solver", {}), raw.get("checks"), raw.get("output"), raw.get("sweep"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self):
        try:
            self.build_domain()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad domain block: {exc}") from exc
        unknown = set(self.solver) - set(SolverOptions.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")
        for entry in self.checks or []:
            entry = {"name": entry} if isinstance(entry, str) else entry
            if not isinstance(entry, dict) or entry.get("name") not in verify.CHECK_NAMES:
                raise ConfigError(f"unknown check {entry!r}; expected one of {verify.CHECK_NAMES}")
            c = entry.get("c")
            if c is not None and not (isinstance(c, (int, float)) and c < 0):
                raise ConfigError(f"check parameter c must be negative, got {c!r}")
            which = entry.get("which")
            if which is not None and which not in cv.PFUNCTIONS:
                raise ConfigError(f"unknown field {which!r}")
        if self.sweep is not None:
            s = self.sweep
            if not isinstance(s, list) or not all(isinstance(v, int) for v in s):
                raise ConfigError("sweep must be a list of integers")
            if any(b <= a for a, b in zip(s, s[1:])):
                raise ConfigError("sweep values must be strictly increasing")

    def build_domain(self):
        return geometry.from_config(self.domain)

    def options(self):
        return SolverOptions.from_config(self.solver)

    def as_dict(self):
        return {"domain": self.domain, "solver": self.solver, "checks": self.checks, "sweep": self.sweep}


def output_dir(cfg, flag):
    out = flag or os.environ.get(OUTPUT_ENV) or cfg.output or DEFAULT_OUTPUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _solve(cfg, domain, nodes=None, exact_jets=False):
    opts = cfg.options()
    n_axis = nodes or opts.grid_nodes_per_axis
    grid = make_grid(domain, n_axis, snap_fraction=opts.snap_fraction)
    if exact_jets:
        sol = analytic_for_domain(domain)
        if sol is None:
            raise ConfigError("--exact-jets needs a ball or ellipsoid domain")
        return exact_result(sol, grid)
    return solve_dirichlet(domain, grid, opts)


def run_solve(cfg, out, exact_jets=False):
    domain = cfg.build_domain()
    res = _solve(cfg, domain, exact_jets=exact_jets)
    res.field.to_csv(out / "u.csv")
    summary = {"domain": domain.describe(), "grid": {"h": res.h, "nodes": int(res.grid.size)}}
    summary["solver"] = res.summary()
    _write_json(out / "solve_summary.json", summary)
    return res


def run_verify(cfg, out, exact_jets=False):
    domain = cfg.build_domain()
    res = _solve(cfg, domain, exact_jets=exact_jets)
    reports = verify.run_checks(res, domain, cfg.checks)
    doc = verify.report_document(cfg.as_dict(), domain, res, reports)
    (out / "report.json").write_text(verify.dumps_report(doc))
    return reports


def run_sweep(cfg, out, exact_jets=False):
    """Per-resolution solver error and check margins, with observed orders."""
    if not cfg.sweep or len(cfg.sweep) < 2:
        raise ConfigError("a sweep needs at least two resolutions")
    domain = cfg.build_domain()
    sol = analytic_for_domain(domain)
    rows = []
    for nodes in cfg.sweep:
        row = {"nodes_per_axis": nodes}
        try:
            res = _solve(cfg, domain, nodes, exact_jets)
            row.update(h=res.h, iterations=res.newton_iterations, residual_max=res.residual_max)
            row["error"] = max_error(res, sol) if sol is not None else math.nan
            for rep in verify.run_checks(res, domain, cfg.checks):
                row[f"{rep.check_name}_status"] = rep.status
                row[f"{rep.check_name}_margin"] = rep.margin
                row[f"{rep.check_name}_slack"] = rep.slack_used
                if rep.check_name == "rigidity":
                    row["rigidity_residual"] = rep.details["R"]
                    row["psi_spread"] = rep.details["S"]
        except MalabError as exc:
            log.warning("sweep row %d failed: %s", nodes, exc)
            row["failure"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    for prev, cur in zip(rows, rows[1:]):
        e0, e1 = prev.get("error", math.nan), cur.get("error", math.nan)
        ratio = e0 / e1 if e1 > 0 else (math.inf if e0 > 0 else math.nan)
        cur["error_ratio"] = ratio
        cur["observed_order"] = math.log2(ratio) if 0 < ratio < math.inf else math.nan
    columns = []
    for row in rows:
        columns += [k for k in row if k not in columns]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, restval="", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})
    return rows


def run_dump(cfg, out, exact_jets=False):
    domain = cfg.build_domain()
    res = _solve(cfg, domain, exact_jets=exact_jets)
    res.field.to_csv(out / "u.csv")
    jets = solution_jets(res)
    for which in cv.PFUNCTIONS:
        cv.pfunction_field(res, which, jets=jets).to_csv(out / f"{which}.csv")
    return res


COMMANDS = {"solve": run_solve, "verify": run_verify, "sweep": run_sweep, "dump": run_dump}


def build_parser():
    p = argparse.ArgumentParser(
        prog="malab",
        description="Solve det D^2u = 1 with zero boundary data and check P-function and curvature estimates.",
        epilog=(
            "Seedless: nothing in the pipeline draws random numbers, so a config run twice on the "
            f"same build gives byte-identical outputs. The {OUTPUT_ENV} environment variable "
            "overrides the config's output directory; --out overrides both. "
            "Exit codes: 0 success, 1 solve or check failure, 2 configuration error."
        ),
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--exact-jets", action="store_true", help="use the closed-form solution (ball/ellipsoid only)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def _print_reports(reports, stream):
    for r in reports:
        print(f"{r.status:<12} {r.check_name:<26} margin={r.margin:+.3e} slack={r.slack_used:.3e} {r.notes}",
              file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config)
        out = output_dir(cfg, args.out)
        result = COMMANDS[args.command](cfg, out, exact_jets=args.exact_jets)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MalabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    if args.command == "verify":
        failed = [r for r in result if r.failed]
        if failed:
            print("failed checks:", file=sys.stderr)
            _print_reports(failed, sys.stderr)
            return EXIT_FAILURE
        if not args.quiet:
            _print_reports(result, sys.stdout)
    elif args.command == "sweep":
        if not args.quiet:
            for row in result:
                print(row.get("nodes_per_axis"), row.get("error", ""), row.get("error_ratio", ""),
                      row.get("failure", ""))
        if any("failure" in row for row in result):
            return EXIT_FAILURE
    elif not args.quiet:
        print(json.dumps(result.summary()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
