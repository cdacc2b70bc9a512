"""End-to-end orchestration: solve a case, verify identities, resum.

One ``CaseRun`` carries every artifact the subcommands share (trans-series,
mesh, lateral families, Stokes report, balanced-average levels) so that a
single solve feeds the verification and resummation stages.  The summary
builder condenses a run into named pass/fail checks with the thresholds the
shipped cases are expected to meet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cases import OracleCase
from .grids import BranchGrid
from .laplace import (
    ResumSolution,
    extract_C,
    fd_residual,
    laplace_tail_bound,
    ode_oracle,
)
from .mesh import PanelMesh, build_graded_mesh
from .stokes import (
    IdentityCheck,
    StokesReport,
    balanced_average,
    check_ba_convolution,
    check_balanced_average,
    check_resurgence,
    estimate_stokes_constant,
)
from .transseries import TransSeries, compute_transseries
from .volterra import RayFamilyResult, solve_branch_family, solve_levels_ray


@dataclass(frozen=True)
class PipelineSettings:
    """Numeric knobs shared by the CLI subcommands."""

    kmax: int = 2
    order: int = 12
    pmax: float = 5.0
    q: int = 10
    x_window: tuple[float, float] = (4.0, 8.0)
    x_points: int = 9
    constant: complex = 0.0
    phis: tuple[float, ...] = (-0.2, 0.0, 0.2)
    tol_identity: float = 1e-6
    tol_ba: float = 1e-8
    keep_rays: bool = False

    def x_samples(self) -> np.ndarray:
        return np.linspace(self.x_window[0], self.x_window[1], self.x_points)


@dataclass
class CaseRun:
    """Solved artifacts of one case at one settings block."""

    case: OracleCase
    settings: PipelineSettings
    ts: TransSeries
    mesh: PanelMesh
    plus: RayFamilyResult
    minus: RayFamilyResult
    stokes: StokesReport
    ba_levels: dict[int, BranchGrid] = field(default_factory=dict)

    @property
    def s_beta(self) -> complex:
        return self.stokes.s_beta


def solve_case(case: OracleCase, settings: PipelineSettings | None = None) -> CaseRun:
    """Solve both lateral families and derive Stokes data and the average."""
    st = settings or PipelineSettings()
    ts = compute_transseries(case.spec, kmax=st.kmax, order=st.order)
    mesh = build_graded_mesh(st.pmax, q=st.q)
    plus = solve_branch_family(
        case.spec, mesh, ts, +1, kmax=st.kmax, keep_rays=st.keep_rays
    )
    minus = solve_branch_family(
        case.spec, mesh, ts, -1, kmax=st.kmax, keep_rays=st.keep_rays
    )
    stokes = estimate_stokes_constant(case.spec, plus.levels, minus.levels, ts.r.real)
    ba = {
        k: balanced_average(plus.levels, stokes.s_beta, kmax=st.kmax, level_k=k)
        for k in range(st.kmax + 1)
    }
    return CaseRun(
        case=case, settings=st, ts=ts, mesh=mesh,
        plus=plus, minus=minus, stokes=stokes, ba_levels=ba,
    )


def identity_checks(run: CaseRun, *, with_convolution: bool = False) -> list[IdentityCheck]:
    """All bridge/average identities; convolution commutation on request."""
    st = run.settings
    out = check_resurgence(
        run.plus.levels, run.minus.levels, run.s_beta,
        kmax=st.kmax, tolerance=st.tol_identity,
    )
    _, ba_checks = check_balanced_average(
        run.plus.levels, run.minus.levels, run.s_beta,
        kmax=st.kmax, tolerance=st.tol_ba,
    )
    out += ba_checks
    if with_convolution:
        out += check_ba_convolution(
            run.case.spec, run.plus.levels, run.s_beta,
            kmax=min(st.kmax, 2), tolerance=st.tol_identity,
        )
    return out


def resum_solution(run: CaseRun, C: complex | None = None) -> ResumSolution:
    C = run.settings.constant if C is None else C
    return ResumSolution(levels=run.ba_levels, C=complex(C))


@dataclass
class ResummationReport:
    """Resummation of one constant, checked against the equation itself."""

    C: complex
    x_window: tuple[float, float]
    fd_relative: float
    oracle_relative: float
    tail_bound: float
    exact_relative: float | None = None
    xs: np.ndarray | None = None
    values: np.ndarray | None = None
    oracle_values: np.ndarray | None = None


def resum_report(
    run: CaseRun, C: complex | None = None, xs: np.ndarray | None = None
) -> ResummationReport:
    """Resum with one constant and verify the result is a true solution.

    Reports the finite-difference residual of the equation, the relative
    gap to an adaptive integrator seeded at the window's far end, the
    Laplace truncation tail bound, and (when the case has a closed-form
    solution) the relative error against it.
    """
    st = run.settings
    sol = resum_solution(run, C)
    xs = st.x_samples() if xs is None else np.asarray(xs, dtype=float)
    window = (float(xs.min()), float(xs.max()))
    vals = sol(xs)
    fd = fd_residual(run.case.spec, sol, window)
    x0 = float(window[1])
    oracle_vals = ode_oracle(run.case.spec, x0, sol(x0), xs)
    scale = float(np.max(np.abs(vals)))
    oracle_rel = float(np.max(np.abs(oracle_vals - vals))) / scale
    tail = float(np.max(laplace_tail_bound(run.ba_levels[0], xs)))
    exact_rel = None
    if run.case.has_oracle:
        exact = np.atleast_2d(run.case.solution(xs, sol.C)).T
        exact_rel = float(np.max(np.abs(vals - exact) / np.abs(exact)))
    return ResummationReport(
        C=sol.C,
        x_window=window,
        fd_relative=fd.relative,
        oracle_relative=oracle_rel,
        tail_bound=tail,
        exact_relative=exact_rel,
        xs=xs,
        values=vals,
        oracle_values=oracle_vals,
    )


def stokes_jump_table(
    run: CaseRun, phis: tuple[float, ...] | None = None, C: complex | None = None
) -> list[dict]:
    """Lateral constant C(phi) of one fixed solution for each direction.

    phi = 0 reads the constant off the balanced average; other angles
    re-solve the Borel equations on that ray and extract the constant of
    the same trajectory there, exhibiting the jump across the Stokes line.
    """
    st = run.settings
    phis = st.phis if phis is None else phis
    xs = st.x_samples()
    y = resum_solution(run, C)(xs)
    out = []
    for phi in phis:
        if phi == 0.0:
            levels = run.ba_levels
        else:
            levels, _ = solve_levels_ray(
                run.case.spec, run.mesh, float(phi), run.ts, st.kmax
            )
        c_phi, misfit = extract_C(levels, xs, y)
        out.append({"phi": float(phi), "C": c_phi, "misfit": misfit})
    return out


# ---------------------------------------------------------------------------
# Summary assembly
# ---------------------------------------------------------------------------


def _check(name: str, value: float, tolerance: float, note: str = "") -> dict:
    return {
        "name": name,
        "value": float(value),
        "tolerance": float(tolerance),
        "pass": bool(value < tolerance),
        "note": note,
    }


def case_summary(case: OracleCase, settings: PipelineSettings | None = None) -> dict:
    """Run the whole pipeline on a case and grade every applicable check."""
    st = settings or PipelineSettings()
    run = solve_case(case, st)
    checks: list[dict] = []

    sel = run.plus.levels[0].valid_mask & (run.mesh.nodes > 0.02)
    t = run.mesh.nodes[sel]
    if case.has_oracle:
        for k in (0, 1):
            for side, fam in ((+1, run.plus), (-1, run.minus)):
                got = fam.levels[k].values[sel, 0]
                want = case.borel_level(k, t, side)
                scale = max(float(np.max(np.abs(want))), 1e-30)
                err = float(np.max(np.abs(got - want))) / scale
                checks.append(_check(
                    f"borel-level{k}-side{side:+d}", err, st.tol_identity,
                    "scaled max error against the closed form",
                ))
        s_exact = case.s_beta
        if abs(s_exact) > 1e-9:
            err = abs(run.s_beta - s_exact) / abs(s_exact)
            checks.append(_check("stokes-exact", err, 0.01))
            checks.append(_check(
                "stokes-estimator-agreement", run.stokes.disagreement(), 0.01
            ))
            expo_err = abs(run.stokes.exponent_fitted - run.stokes.exponent_expected)
            checks.append(_check(
                "singular-exponent", expo_err / abs(run.stokes.exponent_expected), 0.02
            ))
        else:
            checks.append(_check("stokes-zero", abs(run.s_beta), 1e-6))

    for c in identity_checks(run, with_convolution=True):
        checks.append(_check(c.identity, c.residual, c.tolerance, c.note))

    for C in (0.0, 0.7, 1.0):
        rep = resum_report(run, C)
        checks.append(_check(f"resum-fd-residual[C={C}]", rep.fd_relative, 1e-6))
        checks.append(_check(f"resum-oracle-match[C={C}]", rep.oracle_relative, 1e-6))
        if rep.exact_relative is not None:
            checks.append(_check(
                f"resum-exact-solution[C={C}]", rep.exact_relative, 1e-6
            ))

    if abs(run.s_beta) > 1e-9:
        table = stokes_jump_table(run)
        by_phi = {row["phi"]: row["C"] for row in table}
        lo, hi = min(by_phi), max(by_phi)
        if hi > 0 > lo and 0.0 in by_phi:
            s = run.s_beta
            full = abs((by_phi[hi] - by_phi[lo]) - s) / abs(s)
            half = abs((by_phi[0.0] - by_phi[lo]) - s / 2) / abs(s / 2)
            checks.append(_check("jump-full-step", full, 0.05,
                                 f"C({hi}) - C({lo}) vs S"))
            checks.append(_check("jump-half-step", half, 0.05,
                                 f"C(0) - C({lo}) vs S/2"))

    return {
        "case": case.name,
        "params": dict(case.params),
        "settings": {
            "kmax": st.kmax, "order": st.order, "pmax": st.pmax, "q": st.q,
            "x_window": list(st.x_window), "x_points": st.x_points,
        },
        "s_beta": [run.s_beta.real, run.s_beta.imag],
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }
