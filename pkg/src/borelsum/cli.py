"""Command-line front end: configs in, CSV/JSON artifacts out.

Every subcommand loads one case (by name or from a system file), runs the
corresponding stage of the pipeline, and writes machine-readable outputs to
the chosen directory.  Outputs are deterministic: identical invocations
produce byte-identical files.

Exit codes: 0 success, 1 validation error (bad flags, bad system, unknown
case), 2 numerical failure (a named identity or residual out of tolerance).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pipeline
from .borel import borel_transform
from .cases import OracleCase, builtin_cases, load_case
from .grids import BranchGrid
from .stokes import IdentityCheck, StokesReport
from .systems import SystemValidationError, load_system, validate_system
from .transseries import ResonanceError, compute_transseries
from .volterra import MarchError

COMMANDS = (
    "series", "borel", "borel-solve", "stokes",
    "average", "verify", "resum", "stokes-jump", "all",
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """One run: a case, a command, and the numeric knobs."""

    command: str
    case: str | None = None
    system: str | None = None
    outdir: Path = Path("out")
    order: int = 12
    kmax: int = 2
    pmax: float = 5.0
    q: int = 10
    tol: float = 1e-6
    ba_tol: float = 1e-8
    phis: tuple[float, ...] = (-0.2, 0.0, 0.2)
    xs: tuple[float, ...] | None = None
    constant: complex = 0.0

    def validate(self) -> list[str]:
        bad = []
        if (self.case is None) == (self.system is None):
            bad.append("exactly one of --case or --system is required")
        if self.tol <= 0 or self.ba_tol <= 0:
            bad.append("tolerances must be positive")
        if self.order < 1 or self.kmax < 0 or self.q < 2:
            bad.append("--order >= 1, --kmax >= 0, --q >= 2 required")
        if self.pmax <= 1.0 and self.command not in ("series", "borel"):
            bad.append(f"--pmax {self.pmax} too small: Stokes-line commands "
                       "need pmax > 1")
        return bad

    def settings(self) -> pipeline.PipelineSettings:
        kw = {}
        if self.xs:
            kw["x_window"] = (min(self.xs), max(self.xs))
            kw["x_points"] = len(self.xs)
        return pipeline.PipelineSettings(
            kmax=self.kmax, order=self.order, pmax=self.pmax, q=self.q,
            constant=self.constant, phis=self.phis,
            tol_identity=self.tol, tol_ba=self.ba_tol, **kw,
        )

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "case": self.case,
            "system": self.system,
            "order": self.order,
            "kmax": self.kmax,
            "pmax": self.pmax,
            "q": self.q,
            "tol": self.tol,
            "ba_tol": self.ba_tol,
            "phis": list(self.phis),
            "xs": list(self.xs) if self.xs else None,
            "constant": [self.constant.real, self.constant.imag],
        }


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _complex_arg(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    p = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    src = p.add_argument_group("input")
    src.add_argument("--case", metavar="NAME",
                     help="built-in case name or path under cases/ "
                          f"(built-ins: {', '.join(sorted(builtin_cases()))})")
    src.add_argument("--system", metavar="PATH",
                     help="system definition JSON (no oracle attached)")
    p.add_argument("--outdir", metavar="DIR", type=Path,
                   help="output directory (default: out)")
    num = p.add_argument_group("numeric parameters")
    num.add_argument("--order", type=int, metavar="N",
                     help="formal series truncation order (default: 12)")
    num.add_argument("--kmax", type=int, metavar="K",
                     help="highest trans-series level (default: 2)")
    num.add_argument("--pmax", type=float, metavar="P",
                     help="Borel-plane arc length (default: 5.0)")
    num.add_argument("--q", type=int, metavar="Q",
                     help="quadrature nodes per mesh panel (default: 10)")
    num.add_argument("--tol", type=float, metavar="T",
                     help="identity tolerance (default: 1e-6)")
    num.add_argument("--ba-tol", type=float, metavar="T",
                     help="balanced-average tolerance (default: 1e-8)")
    num.add_argument("--phi", dest="phis", type=_float_list, metavar="LIST",
                     help="ray angles, comma separated (default: -0.2,0,0.2)")
    num.add_argument("--x", dest="xs", type=_float_list, metavar="LIST",
                     help="resummation sample points, comma separated")
    num.add_argument("--constant", type=_complex_arg, metavar="C",
                     help="trans-series constant (default: 0)")
    return p


_HELP = {
    "series": "compute the trans-series and write its coefficient table",
    "borel": "formal Borel transforms of every level, with radius estimates",
    "borel-solve": "solve the convolution equations on both lateral rays",
    "stokes": "estimate the Stokes constant and its diagnostics",
    "average": "form the balanced average of the lateral solutions",
    "verify": "check every resurgence/average identity against tolerance",
    "resum": "Laplace-resum one solution and verify it solves the equation",
    "stokes-jump": "extract C(phi) of one solution across the Stokes line",
    "all": "full pipeline with a pass/fail summary JSON",
}


def build_parser() -> _Parser:
    common = _common_options()
    p = _Parser(
        prog="borelsum", parents=[common],
        description="Borel summation of rank-one ODE trans-series: solve the "
                    "convolution equations, measure Stokes data, average, and "
                    "resum to verified solutions.",
    )
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_HELP[name])
    return p


_LIST_FLAGS = ("--phi", "--x", "--constant")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let `--phi -0.2,0,0.2` parse: merge flag and leading-dash value."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _LIST_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def parse_config(argv: list[str]) -> RunConfig:
    args = build_parser().parse_args(_join_negative_values(argv))
    ns = vars(args)
    command = ns.pop("command", None)
    if command is None:
        raise _UsageError(f"a command is required: one of {', '.join(COMMANDS)}")
    cfg = RunConfig(command=command)
    for key, val in ns.items():
        setattr(cfg, key, val)
    bad = cfg.validate()
    if bad:
        raise _UsageError("; ".join(bad))
    return cfg


class _UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Deterministic writers
# ---------------------------------------------------------------------------


def _f(x) -> str:
    """Full-precision, locale-free float field."""
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _checks_csv(path: Path, checks: list[IdentityCheck]) -> None:
    rows = [
        [c.identity, _f(c.interval[0]), _f(c.interval[1]),
         _f(c.residual), _f(c.tolerance),
         "pass" if c.residual < c.tolerance else "fail"]
        for c in checks
    ]
    _write_csv(path, ["identity", "from", "to", "residual", "tolerance", "status"],
               rows)


def _stokes_dict(rep: StokesReport) -> dict:
    return {
        "s_beta": [rep.s_beta.real, rep.s_beta.imag],
        "s_classical": [rep.s_classical.real, rep.s_classical.imag],
        "beta": [rep.beta.real, rep.beta.imag],
        "estimates": {
            k: [v.real, v.imag] for k, v in sorted(rep.estimates.items())
        },
        "jump_spread": rep.jump_spread,
        "estimator_disagreement": rep.disagreement(),
        "exponent_fitted": rep.exponent_fitted,
        "exponent_expected": rep.exponent_expected,
        "fit_residual": rep.fit_residual,
        "window": list(rep.window),
    }


def _grid_rows(grid: BranchGrid, k: int, branch: int | None) -> list[list]:
    rows = []
    sel = np.flatnonzero(grid.valid_mask)
    for i in sel:
        t = grid.mesh.nodes[i]
        for h in range(grid.values.shape[1]):
            v = grid.values[i, h]
            row = [k, _f(t), h, _f(v.real), _f(v.imag)]
            if branch is not None:
                row.append(branch)
            rows.append(row)
    return rows


def _fail_lines(checks: list[IdentityCheck]) -> list[str]:
    return [
        f"FAIL {c.identity}: residual {c.residual:.6e} "
        f"exceeds tolerance {c.tolerance:g} on {c.interval}"
        for c in checks if not c.residual < c.tolerance
    ]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_series(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    ts = compute_transseries(case.spec, kmax=cfg.kmax, order=cfg.order)
    rows = []
    for k, level in enumerate(ts.levels):
        for j, vec in enumerate(level.coeffs_complex()):
            for h, c in enumerate(vec):
                rows.append([k, j, h, _f(c.real), _f(c.imag)])
    _write_csv(out / "series.csv", ["k", "j", "component", "re", "im"], rows)
    _write_json(out / "series.json", {
        "config": cfg.as_dict(),
        "r": [ts.r.real, ts.r.imag],
        "offsets": [[lv.offset_complex().real, lv.offset_complex().imag]
                    for lv in ts.levels],
        "normalization": {
            "component": ts.normalization.component,
            "value": [ts.normalization.value.real, ts.normalization.value.imag],
        },
        "note": "series.csv row (k, j, h): coefficient of x^-(offset_k + j) "
                "in component h of level k",
    })
    print(f"wrote {out / 'series.csv'} ({len(rows)} coefficients, "
          f"levels 0..{ts.kmax})")
    return EXIT_OK


def _cmd_borel(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    ts = compute_transseries(case.spec, kmax=cfg.kmax, order=cfg.order)
    rows = []
    meta = []
    for k, level in enumerate(ts.levels):
        germ = borel_transform(level)
        for j in range(germ.terms):
            for h in range(germ.n):
                c = germ.taylor[j, h]
                rows.append([k, j, h, _f(c.real), _f(c.imag)])
        meta.append({
            "level": k,
            "leading_exponent": [germ.leading_exponent.real,
                                 germ.leading_exponent.imag],
            "radius": germ.radius if np.isfinite(germ.radius) else None,
            "terms": germ.terms,
        })
    _write_csv(out / "borel.csv", ["k", "j", "component", "re", "im"], rows)
    _write_json(out / "borel.json", {
        "config": cfg.as_dict(),
        "levels": meta,
        "note": "borel.csv row (k, j, h): Taylor coefficient of "
                "p^(leading_exponent_k + j) in component h; radius is the "
                "estimated convergence radius (null = entire)",
    })
    print(f"wrote {out / 'borel.csv'} (levels 0..{ts.kmax})")
    return EXIT_OK


def _solve(case: OracleCase, cfg: RunConfig) -> pipeline.CaseRun:
    return pipeline.solve_case(case, cfg.settings())


def _solution_sidecar(run: pipeline.CaseRun) -> dict:
    per_side = {}
    for label, fam in (("plus", run.plus), ("minus", run.minus)):
        levels = {}
        for k, grid in sorted(fam.levels.items()):
            levels[str(k)] = {
                "singularities": [
                    {"loc": s.loc,
                     "exponent": [s.exponent.real, s.exponent.imag],
                     "kind": s.kind, "margin": s.margin, "log": s.log}
                    for s in grid.singularities
                ],
                "valid_nodes": int(np.count_nonzero(grid.valid_mask)),
                "extrapolation_error": fam.extrapolation_error.get(k),
            }
        per_side[label] = {
            "levels": levels,
            "deltas": list(fam.deltas),
            "picard_sweeps": fam.sweeps,
        }
    return per_side


def _cmd_borel_solve(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    run = _solve(case, cfg)
    rows = []
    for branch, fam in ((+1, run.plus), (-1, run.minus)):
        for k, grid in sorted(fam.levels.items()):
            rows += _grid_rows(grid, k, branch)
    _write_csv(out / "borel_solution.csv",
               ["k", "p", "component", "re", "im", "branch"], rows)
    _write_json(out / "borel_solution.json", {
        "config": cfg.as_dict(),
        "mesh": {"pmax": run.mesh.pmax, "nodes": run.mesh.nnodes,
                 "panels": len(run.mesh.edges) - 1, "q": run.mesh.q},
        "branches": _solution_sidecar(run),
        "note": "borel_solution.csv: lateral boundary values Y_k(p e^{i 0^±}); "
                "branch +1 is the continuation from above",
    })
    worst = max(
        e for fam in (run.plus, run.minus)
        for e in fam.extrapolation_error.values()
    )
    print(f"wrote {out / 'borel_solution.csv'} "
          f"(worst extrapolation error {worst:.3e})")
    return EXIT_OK


def _cmd_stokes(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    run = _solve(case, cfg)
    checks = pipeline.identity_checks(run)
    _write_json(out / "stokes.json",
                {"config": cfg.as_dict(), **_stokes_dict(run.stokes)})
    _checks_csv(out / "stokes_residuals.csv", checks)
    s = run.s_beta
    print(f"S_beta = {s.real:+.12e} {s.imag:+.12e}j "
          f"(estimator disagreement {run.stokes.disagreement():.3e})")
    for line in _fail_lines(checks):
        print(line, file=sys.stderr)
    return EXIT_NUMERICAL if _fail_lines(checks) else EXIT_OK


def _cmd_average(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    run = _solve(case, cfg)
    rows = []
    for k, grid in sorted(run.ba_levels.items()):
        rows += _grid_rows(grid, k, None)
    _write_csv(out / "average.csv", ["k", "p", "component", "re", "im"], rows)
    checks = pipeline.identity_checks(run)
    ba_only = [c for c in checks if "ba" in c.identity or "Y^ba" in c.identity]
    _write_json(out / "average.json", {
        "config": cfg.as_dict(),
        "s_beta": [run.s_beta.real, run.s_beta.imag],
        "checks": [
            {"identity": c.identity, "residual": c.residual,
             "tolerance": c.tolerance,
             "pass": bool(c.residual < c.tolerance)}
            for c in ba_only
        ],
    })
    print(f"wrote {out / 'average.csv'} (levels 0..{max(run.ba_levels)})")
    for line in _fail_lines(ba_only):
        print(line, file=sys.stderr)
    return EXIT_NUMERICAL if _fail_lines(ba_only) else EXIT_OK


def _cmd_verify(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    run = _solve(case, cfg)
    checks = pipeline.identity_checks(run, with_convolution=True)
    _write_json(out / "verify.json", {
        "config": cfg.as_dict(),
        **_stokes_dict(run.stokes),
        "checks": [
            {"identity": c.identity, "interval": list(c.interval),
             "residual": c.residual, "tolerance": c.tolerance,
             "pass": bool(c.residual < c.tolerance), "note": c.note}
            for c in checks
        ],
    })
    _checks_csv(out / "verify_residuals.csv", checks)
    fails = _fail_lines(checks)
    print(f"{len(checks) - len(fails)}/{len(checks)} identities within tolerance")
    for line in fails:
        print(line, file=sys.stderr)
    return EXIT_NUMERICAL if fails else EXIT_OK


def _resum_rows(rep: pipeline.ResummationReport) -> list[list]:
    rows = []
    scale = float(np.max(np.abs(rep.values)))
    for i, x in enumerate(rep.xs):
        for h in range(rep.values.shape[1]):
            v = rep.values[i, h]
            o = rep.oracle_values[i, h]
            rows.append([_f(x), h, _f(v.real), _f(v.imag),
                         _f(o.real), _f(o.imag), _f(abs(v - o) / scale)])
    return rows


def _cmd_resum(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    run = _solve(case, cfg)
    xs = np.asarray(cfg.xs, dtype=float) if cfg.xs else None
    rep = pipeline.resum_report(run, cfg.constant, xs)
    _write_csv(out / "resum.csv",
               ["x", "component", "re", "im", "oracle_re", "oracle_im",
                "rel_err"],
               _resum_rows(rep))
    _write_json(out / "resum.json", {
        "config": cfg.as_dict(),
        "C": [rep.C.real, rep.C.imag],
        "x_window": list(rep.x_window),
        "fd_relative_residual": rep.fd_relative,
        "oracle_relative_error": rep.oracle_relative,
        "laplace_tail_bound": rep.tail_bound,
        "exact_relative_error": rep.exact_relative,
    })
    print(f"resummed with C = {rep.C}: fd residual {rep.fd_relative:.3e}, "
          f"oracle error {rep.oracle_relative:.3e}")
    bad = []
    if not rep.fd_relative < cfg.tol:
        bad.append(f"FAIL equation residual {rep.fd_relative:.6e} on "
                   f"x in {rep.x_window} exceeds {cfg.tol:g}")
    if not rep.oracle_relative < cfg.tol:
        bad.append(f"FAIL integrator mismatch {rep.oracle_relative:.6e} on "
                   f"x in {rep.x_window} exceeds {cfg.tol:g}")
    for line in bad:
        print(line, file=sys.stderr)
    return EXIT_NUMERICAL if bad else EXIT_OK


def _cmd_stokes_jump(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    run = _solve(case, cfg)
    table = pipeline.stokes_jump_table(run, cfg.phis, cfg.constant)
    rows = [
        [_f(r["phi"]), _f(r["C"].real), _f(r["C"].imag), _f(r["misfit"])]
        for r in table
    ]
    _write_csv(out / "stokes_jump.csv", ["phi", "c_re", "c_im", "misfit"], rows)
    steps = []
    for a, b in zip(table, table[1:]):
        d = b["C"] - a["C"]
        steps.append({"from_phi": a["phi"], "to_phi": b["phi"],
                      "delta_C": [d.real, d.imag]})
    _write_json(out / "stokes_jump.json", {
        "config": cfg.as_dict(),
        "s_beta": [run.s_beta.real, run.s_beta.imag],
        "reference_C": [complex(cfg.constant).real, complex(cfg.constant).imag],
        "table": [
            {"phi": r["phi"], "C": [r["C"].real, r["C"].imag],
             "misfit": r["misfit"]}
            for r in table
        ],
        "steps": steps,
    })
    print(f"wrote {out / 'stokes_jump.csv'}:")
    for r in table:
        print(f"  phi = {r['phi']:+.3f}: C = {r['C'].real:+.9e} "
              f"{r['C'].imag:+.9e}j (misfit {r['misfit']:.2e})")
    return EXIT_OK


def _cmd_all(case: OracleCase, cfg: RunConfig, out: Path) -> int:
    summary = pipeline.case_summary(case, cfg.settings())
    summary["config"] = cfg.as_dict()
    _write_json(out / "summary.json", summary)
    n_pass = sum(1 for c in summary["checks"] if c["pass"])
    print(f"wrote {out / 'summary.json'}: {n_pass}/{len(summary['checks'])} "
          f"checks pass")
    fails = [c for c in summary["checks"] if not c["pass"]]
    for c in fails:
        print(f"FAIL {c['name']}: {c['value']:.6e} >= {c['tolerance']:g}",
              file=sys.stderr)
    return EXIT_NUMERICAL if fails else EXIT_OK


_DISPATCH = {
    "series": _cmd_series,
    "borel": _cmd_borel,
    "borel-solve": _cmd_borel_solve,
    "stokes": _cmd_stokes,
    "average": _cmd_average,
    "verify": _cmd_verify,
    "resum": _cmd_resum,
    "stokes-jump": _cmd_stokes_jump,
    "all": _cmd_all,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except _UsageError as exc:
        print(f"borelsum: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        if cfg.case is not None:
            case = load_case(cfg.case, search=(Path("cases"),))
        else:
            spec = load_system(cfg.system)
            case = OracleCase(name=Path(cfg.system).stem, spec=spec)
        violations = validate_system(case.spec)
        if violations:
            raise SystemValidationError(violations)
    except FileNotFoundError as exc:
        print(f"borelsum: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemValidationError as exc:
        print("borelsum: invalid system:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError) as exc:
        print(f"borelsum: error: cannot load input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _DISPATCH[cfg.command](case, cfg, out)
    except ResonanceError as exc:
        print(f"borelsum: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MarchError as exc:
        print(f"borelsum: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
