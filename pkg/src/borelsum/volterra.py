"""Marching solver for the Borel-plane level equations along rays.

The level-k equation is a linear Volterra system

    (LAM - p - k) Y(p) + B int_0^p Y(s) ds - int_0^p K(p - s) Y(s) ds = R(p)

integrated along the ray p = t e^{i phi}.  Near the origin the solution is
pinned by its convergent germ (the Borel transform of the formal level); from
the first panel edge past the germ cut the solver marches panel by panel,
solving a small implicit collocation system per panel.  Partial integrals
inside a panel use exact Legendre interpolation weights; the kernel K (the
Borel image of the Jacobian of g along y_0, absent for linear systems) is
sampled at shifted quadrature points against the accumulated history.

Level 0 is the same march with k = 0, kernel reduced to the |l| = 1 part of
g, and the quadratic-and-higher tail of the nonlinearity supplied by an outer
fixed-point sweep (each sweep convolves the previous iterate, so the scheme
converges geometrically in the size of the iterate on the ray).

The plus/minus boundary branches on the real line are obtained by solving on
a shrinking family of rays phi = +-delta_0 2^{-m} and extrapolating node by
node to delta = 0 (Neville); the values inside a small margin of each integer
branch point are then replaced by one-sided singular-model fits.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .borel import BorelGerm, borel_transform
from .convolution import convolve, thread_count
from .grids import (
    BranchGrid,
    Singularity,
    _germ_eval_block,
    fit_singular_model,
    grid_norm,
    replace_values,
)
from .kernels import (
    ConvKernel,
    ConvPowerCache,
    apply_nonlinearity,
    assemble_level_rhs,
    entire_grid,
    forcing_germ,
    germ_add,
    grid_sum,
    jacobian_conv_kernel,
    linear_conv_kernel,
    unit_grid,
)
from .mesh import PanelMesh, _bary_weights, _leggauss, weighted_segment
from .systems import SystemSpec
from .transseries import TransSeries

__all__ = [
    "MarchError",
    "march_ray",
    "solve_level0_ray",
    "solve_levels_ray",
    "ray_residual",
    "neville_to_zero",
    "solve_branch_family",
    "RayFamilyResult",
    "thread_count",
]

DEFAULT_START_CUT = 0.35
DEFAULT_MARGIN = 0.02
FIT_WINDOW = (0.02, 0.25)


class MarchError(RuntimeError):
    """The marching solve failed (resonant node or stalled fixed point)."""


# ---------------------------------------------------------------------------
# Reference panel rules (cached per q)
# ---------------------------------------------------------------------------

_RULE_CACHE: dict[int, dict] = {}


def _lagrange_matrix(xn: np.ndarray, bw: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """L_j(xq) for the Lagrange basis on nodes xn with barycentric weights bw."""
    diff = xq[:, None] - xn[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14)
    safe = np.where(exact, 1.0, diff)
    terms = bw[None, :] / safe
    denom = terms.sum(axis=1)
    out = terms / denom[:, None]
    hit_rows = exact.any(axis=1)
    if hit_rows.any():
        out[hit_rows] = exact[hit_rows].astype(float)
    return out


def _panel_rules(q: int) -> dict:
    """Reference data on [-1, 1]: nodes, partial-integral and sub-rule tables.

    Qref[m, j] = int_{-1}^{x_m} L_j; Spts/Swts[m, t] a q-point Gauss rule on
    [-1, x_m]; Lmat[m, t, j] = L_j(Spts[m, t]).  All exact for the degree
    q - 1 panel interpolant.
    """
    hit = _RULE_CACHE.get(q)
    if hit is not None:
        return hit
    xn, _ = _leggauss(q)
    bw = _bary_weights(q)
    xi, om = _leggauss(q)
    Spts = np.empty((q, q))
    Swts = np.empty((q, q))
    for m in range(q):
        half = (xn[m] + 1.0) / 2.0
        Spts[m] = -1.0 + (xi + 1.0) * half
        Swts[m] = om * half
    Lmat = np.stack([_lagrange_matrix(xn, bw, Spts[m]) for m in range(q)])
    Qref = np.einsum("mt,mtj->mj", Swts, Lmat)
    data = {"xn": xn, "bw": bw, "Qref": Qref, "Spts": Spts, "Swts": Swts, "Lmat": Lmat}
    _RULE_CACHE[q] = data
    return data


def _germ_path_integral(germ: BorelGerm, p0: complex) -> np.ndarray:
    """int_0^{p0} germ(s) ds along the straight segment (termwise, exact)."""
    a = complex(germ.leading_exponent)
    j = np.arange(germ.terms)
    powers = p0 ** (a + j + 1)
    return (germ.taylor * (powers / (a + j + 1))[:, None]).sum(axis=0)


def _start_index(mesh: PanelMesh, germ: BorelGerm, start_cut: float) -> int:
    cut = start_cut
    if math.isfinite(germ.radius):
        cut = min(cut, 0.45 * germ.radius)
    i0 = int(np.searchsorted(mesh.edges, cut * (1 + 1e-12), side="right") - 1)
    if i0 < 1:
        raise MarchError(
            f"no panel edge below the germ trust cut {cut:.3g}; refine the mesh"
        )
    return i0


# ---------------------------------------------------------------------------
# The panel march
# ---------------------------------------------------------------------------


def march_ray(
    spec: SystemSpec,
    mesh: PanelMesh,
    phi: float,
    shift_k: int,
    rhs: BranchGrid,
    germ: BorelGerm,
    conv_kernel: ConvKernel | None = None,
    *,
    start_cut: float = DEFAULT_START_CUT,
    label: str = "",
    level: int = 0,
) -> BranchGrid:
    """Solve one linear level equation along the ray phi by panel marching.

    ``rhs`` supplies R at the collocation nodes; ``germ`` pins the solution
    below the start cut; ``conv_kernel`` is the matrix kernel under the
    integral (None for a pure B-diagonal equation, the fast path).
    """
    n = spec.n
    q = mesh.q
    lam = np.array(spec.lam, dtype=complex)
    bd = np.array(spec.b_diag, dtype=complex)
    eiphi = np.exp(1j * phi)
    rules = _panel_rules(q)
    nodes = mesh.nodes
    values = np.zeros((mesh.nnodes, n), dtype=complex)

    i0 = _start_index(mesh, germ, start_cut)
    t0 = float(mesh.edges[i0])
    head = nodes < t0
    if head.any():
        values[head] = _germ_eval_block(germ, nodes[head] * eiphi)

    I_past = _germ_path_integral(germ, t0 * eiphi)

    use_kernel = conv_kernel is not None and not conv_kernel.is_zero
    if use_kernel:
        alpha = complex(germ.leading_exponent)
        if abs(alpha.imag) > 1e-10:
            raise NotImplementedError(
                "kernel quadrature against a complex-exponent germ is not supported"
            )
        gq = max(q, 12)
        gpts, gwts = weighted_segment(0.0, t0, gq, g_left=alpha.real)
        zg = gpts * eiphi
        W = np.zeros((gq, n), dtype=complex)
        for row in germ.taylor[::-1]:
            W = W * zg[:, None] + row[None, :]
        germ_fold = np.exp(1j * phi * (1.0 + alpha.real))
        past_t: list[np.ndarray] = []
        past_w: list[np.ndarray] = []
        past_y: list[np.ndarray] = []

    rhs_vals = rhs.values
    eye = np.eye(n)

    for pan in range(i0, mesh.npanels):
        sl = mesh.panel_slice(pan)
        u = nodes[sl]
        a_edge = float(mesh.edges[pan])
        b_edge = float(mesh.edges[pan + 1])
        h2 = 0.5 * (b_edge - a_edge)

        pdiag = lam[None, :] - shift_k - (u * eiphi)[:, None]
        if np.min(np.abs(pdiag)) < 1e-9:
            bad = np.unravel_index(np.argmin(np.abs(pdiag)), pdiag.shape)
            raise MarchError(
                f"resonant collocation node at t = {u[bad[0]]:.6g} on ray "
                f"phi = {phi:.3g} (component {bad[1] + 1}, level shift {shift_k})"
            )

        A = np.zeros((q, n, q, n), dtype=complex)
        for m in range(q):
            A[m, :, m, :] += np.diag(pdiag[m])
        # B-diagonal running integral over the current panel.
        coef = eiphi * h2 * rules["Qref"]
        for i in range(n):
            A[:, i, :, i] += bd[i] * coef

        RHS = rhs_vals[sl].astype(complex) - I_past[None, :] * bd[None, :]

        if use_kernel:
            spts = a_edge + (rules["Spts"] + 1.0) * h2
            swts = rules["Swts"] * h2
            diffs = u[:, None] - spts
            Kcur = conv_kernel.eval_t(diffs.ravel()).reshape(q, q, n, n)
            A -= eiphi * np.einsum("mt,mtj,mtih->mijh", swts, rules["Lmat"], Kcur)

            # history: germ segment plus all fully solved panels
            dg = u[:, None] - gpts[None, :]
            Kg = conv_kernel.eval_t(dg.ravel()).reshape(q, gq, n, n)
            Jg = germ_fold * np.einsum("t,mtih,th->mi", gwts, Kg, W)
            RHS += Jg
            if past_t:
                ts = np.concatenate(past_t)
                ws = np.concatenate(past_w)
                ys = np.concatenate(past_y)
                dp = u[:, None] - ts[None, :]
                Kp = conv_kernel.eval_t(dp.ravel()).reshape(q, ts.size, n, n)
                RHS += eiphi * np.einsum("t,mtih,th->mi", ws, Kp, ys)

        sol = np.linalg.solve(A.reshape(q * n, q * n), RHS.reshape(q * n))
        ypan = sol.reshape(q, n)
        values[sl] = ypan

        wgl = mesh.gl_weights[sl]
        I_past = I_past + eiphi * (wgl[:, None] * ypan).sum(axis=0)
        if use_kernel:
            past_t.append(u)
            past_w.append(wgl)
            past_y.append(ypan)

    sings = tuple(
        Singularity(loc=float(j), exponent=0j, kind="shadow")
        for j in range(1, int(math.floor(mesh.pmax)) + 1)
        if abs(phi) > 1e-14
    )
    return BranchGrid(
        mesh=mesh,
        phi=phi,
        values=values,
        label=label,
        level=level,
        singularities=sings,
        germ=germ,
        germ_cut=t0,
    )


# ---------------------------------------------------------------------------
# Level 0 (fixed point over the nonlinear tail) and the level cascade
# ---------------------------------------------------------------------------


def solve_level0_ray(
    spec: SystemSpec,
    mesh: PanelMesh,
    phi: float,
    y0_germ: BorelGerm,
    *,
    forcing: BranchGrid | None = None,
    picard_tol: float = 1e-11,
    max_sweeps: int = 30,
    label: str = "",
) -> tuple[BranchGrid, dict]:
    """Solve the level-0 equation on a ray; outer sweeps for the |l| >= 2 tail."""
    f_germ = forcing_germ(spec)
    if forcing is None:
        forcing = entire_grid(mesh, phi, f_germ, label="F0")
    lin = linear_conv_kernel(spec, phi)
    has_tail = any(sum(l) >= 2 for _, l, _ in spec.g_entries())

    Y = march_ray(spec, mesh, phi, 0, forcing, y0_germ, lin, label=label, level=0)
    info = {"sweeps": 0, "picard_delta": 0.0}
    if not has_tail:
        return Y, info

    ref = max(grid_norm(Y), 1e-300)
    delta = math.inf
    worst_t = 0.0
    for sweep in range(1, max_sweeps + 1):
        tail, tail_germ = apply_nonlinearity(spec, Y, y0_germ, min_total=2)
        rhs_germ = f_germ if tail_germ is None else germ_add(f_germ, tail_germ)
        rhs = grid_sum(
            [forcing, tail] if tail is not None else [forcing],
            label="F0+N",
            germ=rhs_germ,
            germ_cut=min(forcing.germ_cut, tail.germ_cut) if tail is not None else forcing.germ_cut,
        )
        Ynew = march_ray(spec, mesh, phi, 0, rhs, y0_germ, lin, label=label, level=0)
        diff = Ynew.values - Y.values
        delta = grid_norm(replace_values(Y, diff)) / ref
        worst_t = float(mesh.nodes[int(np.argmax(np.abs(diff).max(axis=1)))])
        Y = Ynew
        info = {"sweeps": sweep, "picard_delta": float(delta)}
        if delta < picard_tol:
            return Y, info
    raise MarchError(
        f"level-0 sweeps stalled at delta = {delta:.3g} after {max_sweeps} "
        f"iterations (worst node t = {worst_t:.6g}, phi = {phi:.3g}); "
        "widen the ray angle or reduce pmax"
    )


def solve_levels_ray(
    spec: SystemSpec,
    mesh: PanelMesh,
    phi: float,
    ts: TransSeries,
    kmax: int,
    *,
    picard_tol: float = 1e-11,
    label_prefix: str = "",
) -> tuple[dict[int, BranchGrid], dict]:
    """Levels 0..kmax on one ray: level 0, Jacobian kernel, then each R_k march."""
    germs = {k: borel_transform(ts.levels[k]) for k in range(min(kmax, ts.kmax) + 1)}
    if kmax > ts.kmax:
        raise ValueError(f"trans-series has kmax={ts.kmax} < requested {kmax}")
    Y0, info = solve_level0_ray(
        spec, mesh, phi, germs[0], picard_tol=picard_tol, label=label_prefix + "0"
    )
    out = {0: Y0}
    K = jacobian_conv_kernel(spec, mesh, phi, Y0, germs[0])
    y0cache = ConvPowerCache(Y0, germs[0]) if spec.has_nonlinearity() else None
    level_germs: dict[int, BorelGerm] = {}
    for k in range(1, kmax + 1):
        rhs, rhs_germ = assemble_level_rhs(
            spec, mesh, phi, k, out, level_germs, y0cache
        )
        out[k] = march_ray(
            spec, mesh, phi, k, rhs, germs[k], K,
            label=f"{label_prefix}{k}", level=k,
        )
        level_germs[k] = germs[k]
    return out, info


# ---------------------------------------------------------------------------
# Independent residual (convolution-engine substitution)
# ---------------------------------------------------------------------------


def ray_residual(
    spec: SystemSpec,
    Y: BranchGrid,
    rhs: BranchGrid | None,
    shift_k: int,
    *,
    conv_kernel: ConvKernel | None = None,
    nonlinear_full: bool = False,
    y0_germ: BorelGerm | None = None,
    window: tuple[float, float] | None = None,
) -> float:
    """Relative residual of the level equation, rebuilt with the convolution
    engine (different quadrature path than the march).

    ``nonlinear_full`` substitutes the complete nonlinear term (level-0 check
    for nonlinear systems); otherwise the linear kernel term is convolved
    column by column.
    """
    mesh, phi = Y.mesh, Y.phi
    lam = np.array(spec.lam, dtype=complex)
    bd = np.array(spec.b_diag, dtype=complex)
    p = mesh.nodes * np.exp(1j * phi)
    one = unit_grid(mesh, phi)
    resid = (lam[None, :] - shift_k - p[:, None]) * Y.values
    for h in range(Y.n):
        cum = convolve(one, Y.component(h), label="cum")
        resid[:, h] += bd[h] * cum.values[:, 0]
    if nonlinear_full:
        tail, _ = apply_nonlinearity(spec, Y, y0_germ, min_total=1)
        if tail is not None:
            resid -= tail.values
    elif conv_kernel is not None and not conv_kernel.is_zero:
        for h in range(Y.n):
            col_germ = conv_kernel.germ_column(h)
            col_grid = conv_kernel.columns[h]
            parts = []
            if conv_kernel.poly is not None and np.any(conv_kernel.poly[:, :, h]):
                poly_germ = BorelGerm(
                    leading_exponent=0j,
                    taylor=conv_kernel.poly[:, :, h].copy(),
                    radius=math.inf,
                    n=Y.n,
                )
                parts.append(entire_grid(mesh, phi, poly_germ, label="Kpoly"))
            if col_grid is not None:
                parts.append(col_grid)
            if not parts:
                continue
            col = parts[0] if len(parts) == 1 else grid_sum(
                parts, label="Kcol", germ=col_germ, germ_cut=min(g.germ_cut for g in parts)
            )
            term = convolve(col, Y.component(h), label="K*Y")
            resid -= term.values
    if rhs is not None:
        resid -= rhs.values
    rgrid = replace_values(Y, resid)
    scale = max(grid_norm(Y, window=window), 1e-300)
    return grid_norm(rgrid, window=window) / scale


# ---------------------------------------------------------------------------
# Boundary branches by ray-family extrapolation
# ---------------------------------------------------------------------------


def neville_to_zero(xs: list[float], arrays: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Polynomial extrapolation of arrays sampled at xs > 0 to x = 0.

    Returns (value, correction) where correction is the elementwise magnitude
    of the final Neville update, the standard error estimate.
    """
    if len(xs) != len(arrays) or len(xs) < 2:
        raise ValueError("need matching xs/arrays with at least two entries")
    P = [np.array(a, dtype=complex) for a in arrays]
    x = [float(v) for v in xs]
    penultimate = None
    for j in range(1, len(x)):
        for m in range(len(x) - j):
            P[m] = (x[m] * P[m + 1] - x[m + j] * P[m]) / (x[m] - x[m + j])
        if j == len(x) - 2:
            penultimate = P[0].copy()
    if penultimate is None:
        corr = np.full(P[0].shape, math.inf)
    else:
        corr = np.abs(P[0] - penultimate)
    return P[0], corr


@dataclass
class RayFamilyResult:
    """Extrapolated boundary branch per level, with family diagnostics."""

    side: int
    levels: dict[int, BranchGrid]
    extrapolation_error: dict[int, float]
    deltas: tuple[float, ...]
    sweeps: int = 0
    ray_levels: dict[float, dict[int, BranchGrid]] = field(default_factory=dict)


def solve_branch_family(
    spec: SystemSpec,
    mesh: PanelMesh,
    ts: TransSeries,
    side: int,
    kmax: int,
    *,
    delta0: float = 1e-3,
    nrays: int = 6,
    margin: float = DEFAULT_MARGIN,
    picard_tol: float = 1e-11,
    keep_rays: bool = False,
) -> RayFamilyResult:
    """Plus (side=+1) or minus (side=-1) boundary branches of levels 0..kmax.

    Solves the level cascade on rays phi = side * delta0 * 2^{-m} and
    extrapolates nodewise to the real line; nodes inside ``margin`` of an
    integer branch point are masked and replaced by one-sided singular-model
    fits with the level-(k+j) exponent at p = j.
    """
    if side not in (-1, +1):
        raise ValueError("side must be +1 or -1")
    r = complex(ts.r)
    if abs(r.imag) > 1e-12:
        raise NotImplementedError(
            "boundary-branch machinery needs a real level exponent r"
        )
    deltas = [delta0 * 2.0**-m for m in range(nrays)]
    label = "+" if side > 0 else "-"

    def solve_one(d: float):
        return solve_levels_ray(
            spec, mesh, d * side, ts, kmax,
            picard_tol=picard_tol, label_prefix=label,
        )

    workers = min(thread_count(), len(deltas))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(solve_one, deltas))
    else:
        solved = [solve_one(d) for d in deltas]

    sweeps = max(info.get("sweeps", 0) for _, info in solved)
    per_ray = [lv for lv, _ in solved]

    levels: dict[int, BranchGrid] = {}
    errs: dict[int, float] = {}
    rr = r.real
    jmax = int(math.floor(mesh.pmax))
    for k in range(kmax + 1):
        vals, corr = neville_to_zero(deltas, [lv[k].values for lv in per_ray])
        germ = per_ray[0][k].germ
        cut = per_ray[0][k].germ_cut
        head = mesh.nodes < cut
        if head.any():
            vals[head] = _germ_eval_block(germ, mesh.nodes[head].astype(complex))
        sings = []
        for j in range(1, jmax + 1):
            expo = (k + j) * rr - 1.0
            sings.append(
                Singularity(
                    loc=float(j),
                    exponent=expo,
                    kind="branch",
                    margin=margin,
                    log=_is_int(expo),
                )
            )
        mask = np.ones(mesh.nnodes, dtype=bool)
        for s in sings:
            mask &= np.abs(mesh.nodes - s.loc) >= s.margin
        grid = BranchGrid(
            mesh=mesh,
            phi=0.0,
            values=vals,
            label=label,
            level=k,
            singularities=tuple(sings),
            germ=germ,
            germ_cut=cut,
            valid_mask=mask,
        )
        for s in sings:
            for fit_side in (+1, -1):
                lo = s.loc + (FIT_WINDOW[0] if fit_side > 0 else -FIT_WINDOW[1])
                hi = s.loc + (FIT_WINDOW[1] if fit_side > 0 else -FIT_WINDOW[0])
                if lo < 0 or hi > mesh.pmax:
                    continue
                model = fit_singular_model(
                    grid, s.loc, fit_side,
                    exponent=s.exponent, log=s.log, window=FIT_WINDOW,
                )
                grid.models[(s.loc, fit_side)] = model
                # the raw extrapolation diverges right at the branch point;
                # replace the in-margin node values so that any panel
                # straddling the band interpolates from sane numbers
                w = fit_side * (mesh.nodes - s.loc)
                sel = (w >= 0) & (w < s.margin)
                if sel.any():
                    grid.values[sel] = model(mesh.nodes[sel])
        levels[k] = grid
        errs[k] = float(np.max(corr[mask])) if mask.any() else 0.0

    out = RayFamilyResult(
        side=side,
        levels=levels,
        extrapolation_error=errs,
        deltas=tuple(deltas),
        sweeps=sweeps,
    )
    if keep_rays:
        out.ray_levels = {d: lv for d, lv in zip(deltas, per_ray)}
    return out


def _is_int(x: float, tol: float = 1e-9) -> bool:
    return abs(x - round(x)) < tol
