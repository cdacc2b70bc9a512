"""Borel-plane convolution of branch grids by product integration.

(f * g)(p) = int_0^p f(s) g(p - s) ds along a common ray.  For each output
node the integration range is split at every panel edge of f, at the mapped
images p - s of g's singular points (with geometric resolution ladders),
and at all boundaries where the evaluation of either factor switches method
(germ region, fitted local model, plain interpolation).  Each resulting
segment sees at most one algebraic endpoint weight per factor; those weights
are folded into Gauss-Jacobi rules so the smooth remainder is integrated at
the full composite order.  Logarithmic endpoint factors (integer exponents)
use modified-moment rules built from exact Beta-function moments.

Singularity bookkeeping for the result: locations add pairwise, exponents
add and gain +1, matching the behaviour of convolution on power germs
u^a * u^b = B(a+1, b+1) u^(a+b+1).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import digamma, gammaln, loggamma, polygamma

from .borel import BorelGerm, germ_eval
from .grids import BranchGrid, Singularity, _is_nonneg_int, grid_eval
from .mesh import jacobi_rule

_EDGE_TOL = 1e-9


def thread_count() -> int:
    """Worker cap for embarrassingly parallel loops (RESURGENCE_THREADS)."""
    try:
        return max(1, int(os.environ.get("RESURGENCE_THREADS", "1")))
    except ValueError:
        return 1


def germ_convolve(a: BorelGerm, b: BorelGerm, terms: int | None = None) -> BorelGerm:
    """Convolution of two power-series germs (Beta-function product rule).

    Output coefficient m is complete when every contributing coefficient of
    both factors is known; a truncated factor caps that at its own length,
    a polynomial factor (infinite radius) does not.
    """
    ea, eb = complex(a.leading_exponent), complex(b.leading_exponent)
    horizon_a = 10**9 if np.isinf(a.radius) else a.terms
    horizon_b = 10**9 if np.isinf(b.radius) else b.terms
    full = min(horizon_a, horizon_b, a.terms + b.terms - 1)
    if terms is None:
        terms = full
    terms = min(terms, full)
    n = max(a.n, b.n)
    out = np.zeros((terms, n), dtype=complex)
    for m in range(terms):
        acc = np.zeros(n, dtype=complex)
        for i in range(max(0, m - b.terms + 1), min(m + 1, a.terms)):
            j = m - i
            lg = (loggamma(ea + i + 1) + loggamma(eb + j + 1)
                  - loggamma(ea + eb + i + j + 2))
            acc = acc + a.taylor[i] * b.taylor[j] * np.exp(lg)
        out[m] = acc
    return BorelGerm(
        leading_exponent=ea + eb + 1,
        taylor=out,
        radius=min(a.radius, b.radius),
        n=n,
    )


def _log_moment_rule(q: int, g_left: float, g_right: float,
                     log_left: bool, log_right: bool):
    """Rule on [0,1] for u^{gL}(1-u)^{gR} with one log factor, via moments."""
    if log_left and log_right:
        raise ValueError("use _log2_moment_rule for colliding logarithms")
    u, _ = jacobi_rule(q, g_left, g_right)
    i = np.arange(q)
    lb = gammaln(g_left + i + 1) + gammaln(g_right + 1) - gammaln(g_left + g_right + i + 2)
    if log_left:
        mom = np.exp(lb) * (digamma(g_left + i + 1) - digamma(g_left + g_right + i + 2))
    else:
        mom = np.exp(lb) * (digamma(g_right + 1) - digamma(g_left + g_right + i + 2))
    V = u[None, :] ** i[:, None]
    w = np.linalg.solve(V, mom)
    return u, w


def _log2_moment_rule(q: int, g_left: float, g_right: float):
    """Rule on [0,1] for u^{gL}(1-u)^{gR} log(u) log(1-u), via moments.

    The moments are the mixed derivative of the Beta function,
    d2/da db B(a,b) = B(a,b) [(psi(a)-psi(a+b))(psi(b)-psi(a+b)) - psi'(a+b)].
    """
    u, _ = jacobi_rule(q, g_left, g_right)
    i = np.arange(q)
    a = g_left + i + 1.0
    b = g_right + 1.0
    lb = gammaln(a) + gammaln(b) - gammaln(a + b)
    mom = np.exp(lb) * ((digamma(a) - digamma(a + b)) * (digamma(b) - digamma(a + b))
                        - polygamma(1, a + b))
    V = u[None, :] ** i[:, None]
    w = np.linalg.solve(V, mom)
    return u, w


def _segment_rule(a: float, b: float, q: int, gL: float, gR: float,
                  logL: bool, logR: bool):
    """Points/weights for int_a^b (u-a)^{gL}(b-u)^{gR} [logs] F(u) du.

    With u = a + h*v the log factor splits as log(h*v) = log h + log v, so
    the scaled weights combine the log-moment rule with log(h) times the
    plain Jacobi rule; both rules live on the same Jacobi nodes.
    """
    h = b - a
    uj, wj = jacobi_rule(q, gL, gR)
    scale = h ** (gL + gR + 1.0)
    if not (logL or logR):
        return a + h * uj, wj * scale
    if logL and logR:
        _, wl = _log_moment_rule(q, gL, gR, True, False)
        _, wr = _log_moment_rule(q, gL, gR, False, True)
        _, wlr = _log2_moment_rule(q, gL, gR)
        lh = np.log(h)
        return a + h * uj, scale * (wlr + lh * (wl + wr) + lh * lh * wj)
    _, w_log = _log_moment_rule(q, gL, gR, logL, logR)
    return a + h * uj, scale * (w_log + np.log(h) * wj)


def _germ_smooth(grid: BranchGrid, fold_power: bool):
    germ = grid.germ
    alpha = complex(germ.leading_exponent)
    phase = np.exp(1j * grid.phi)
    coeff = germ.taylor * (phase ** (alpha + np.arange(germ.terms)))[:, None]

    def eval_poly(u: np.ndarray) -> np.ndarray:
        out = np.zeros(u.shape + (germ.n,), dtype=complex)
        for row in coeff[::-1]:
            out = out * u[..., None] + row
        if fold_power:
            out = out * (u[..., None].astype(complex) ** alpha)
        return out

    return eval_poly


def _model_terms(model, loc: float):
    """Terms for a fitted local model, rebased to u-space location ``loc``."""
    terms = []
    if model.coeff_analytic.size:
        cb = model.coeff_analytic

        def eval_b(u, cb=cb, loc=loc):
            w = np.abs(u - loc)
            out = np.zeros(u.shape + (cb.shape[1],), dtype=complex)
            for row in cb[::-1]:
                out = out * w[..., None] + row
            return out

        terms.append((0.0, False, eval_b))
    if model.coeff_singular.size:
        ca = model.coeff_singular

        def eval_a(u, ca=ca, loc=loc):
            w = np.abs(u - loc)
            out = np.zeros(u.shape + (ca.shape[1],), dtype=complex)
            for row in ca[::-1]:
                out = out * w[..., None] + row
            return out

        terms.append((float(model.exponent), bool(model.log), eval_a))
    return terms


class _Factor:
    """One convolution factor with region-aware segment decomposition.

    ``reversed_at`` = None evaluates the grid at u; a float tp evaluates it
    at tp - u (the right factor of the convolution).
    """

    def __init__(self, grid: BranchGrid, reversed_at: float | None = None):
        self.grid = grid
        self.tp = reversed_at

    def _to_v(self, u):
        return u if self.tp is None else self.tp - u

    def boundaries(self) -> list[float]:
        g = self.grid
        pts: list[float] = []
        if g.germ is not None and g.germ_cut > 0:
            pts.append(g.germ_cut)
        for s in g.singularities:
            pts.append(s.loc)
            if s.margin > 0:
                pts.extend([s.loc - s.margin, s.loc + s.margin])
                m = g.model_for(s.loc, +1) or g.model_for(s.loc, -1)
                if m is not None:
                    pts.extend([s.loc - m.window[1], s.loc + m.window[1]])
        if self.tp is None:
            return pts
        return [self.tp - v for v in pts]

    def ladder_points(self) -> list[float]:
        g = self.grid
        pts: list[float] = []
        for s in g.singularities:
            d = g.mesh.refinement_ladder(s.loc)
            if (s.margin > 0 and g.model_for(s.loc, +1) is not None
                    and g.model_for(s.loc, -1) is not None):
                # inside the margin the fitted models carry the endpoint
                # weight analytically; sub-margin rungs only multiply segments
                d = d[d >= 0.999 * s.margin]
            base = s.loc if self.tp is None else self.tp - s.loc
            pts.extend(base + d)
            pts.extend(base - d)
        if self.tp is not None and g.germ is not None:
            # the factor's origin maps to u = tp; the mesh is graded toward 0
            # natively but not toward tp, so transplant the 0-ladder there.
            # The full geometric ladder is load-bearing: away from the
            # endpoint segment the germ's power factor is folded into the
            # "smooth" part, which stays resolvable only while each segment
            # is narrow relative to its distance from the branch point.
            d = g.mesh.refinement_ladder(0.0)
            pts.extend(self.tp - d)
        return pts

    def terms(self, a: float, b: float):
        """Decomposition of the factor on segment [a,b] (in u coordinates).

        Returns a list of (gamma_at_a, gamma_at_b, log_at_a, log_at_b,
        smooth_eval); the full factor value on the segment is the sum over
        terms of (u-a)^{ga} (b-u)^{gb} [logs] * smooth_eval(u).
        """
        g = self.grid
        va, vb = sorted((self._to_v(a), self._to_v(b)))
        vmid = (va + vb) / 2.0
        tol = _EDGE_TOL * max(1.0, abs(b))

        def orient(g_lo, g_hi, log_lo, log_hi, fn):
            # g_lo/g_hi are attached to the low/high end in v coordinates.
            if self.tp is None:
                return (g_lo, g_hi, log_lo, log_hi, fn)
            return (g_hi, g_lo, log_hi, log_lo, fn)

        if g.germ is not None and vmid <= g.germ_cut + tol:
            alpha = complex(g.germ.leading_exponent)
            if _is_nonneg_int(alpha):
                fn0 = _germ_smooth(g, fold_power=True)
                fn = (lambda u, f=fn0: f(self._to_v(u)))
                return [orient(0.0, 0.0, False, False, fn)]
            if abs(alpha.imag) > 1e-12:
                raise NotImplementedError(
                    "complex germ exponents need modified-moment quadrature"
                )
            if va <= tol:
                fn0 = _germ_smooth(g, fold_power=False)
                fn = (lambda u, f=fn0: f(self._to_v(u)))
                return [orient(float(alpha.real), 0.0, False, False, fn)]
            fn0 = _germ_smooth(g, fold_power=True)
            fn = (lambda u, f=fn0: f(self._to_v(u)))
            return [orient(0.0, 0.0, False, False, fn)]
        for s in g.singularities:
            if s.margin <= 0 or abs(vmid - s.loc) >= s.margin:
                continue
            side = 1 if vmid > s.loc else -1
            model = g.model_for(s.loc, side)
            if model is None:
                break
            out = []
            u_loc = s.loc if self.tp is None else self.tp - s.loc
            for expo, is_log, fn_w in _model_terms(model, u_loc):
                fn = (lambda u, f=fn_w: f(u))
                at_a = abs(u_loc - a) < tol
                at_b = abs(u_loc - b) < tol
                if expo == 0.0 and not is_log:
                    out.append((0.0, 0.0, False, False, fn))
                elif at_a:
                    out.append((expo, 0.0, is_log, False, fn))
                elif at_b:
                    out.append((0.0, expo, False, is_log, fn))
                else:
                    # singular point strictly outside the segment: smooth here
                    def fn_s(u, f=fn_w, e=expo, lg=is_log, lc=u_loc):
                        w = np.abs(u - lc)
                        s_fac = w**e
                        if lg:
                            s_fac = s_fac * np.log(w)
                        return s_fac[..., None] * f(u)

                    out.append((0.0, 0.0, False, False, fn_s))
            return out

        def fn_interp(u):
            v = self._to_v(u)
            vals = self.grid.mesh.interpolate(self.grid.values, v)
            return np.atleast_2d(vals) if v.ndim == 0 else vals

        return [(0.0, 0.0, False, False, fn_interp)]


def _edge_hygiene(edges: np.ndarray, critical: list[tuple[float, float]],
                  tp: float, tol: float) -> np.ndarray:
    """Sorted unique edges with slivers near critical points removed.

    Quadrature treats a singular point correctly only when it coincides with
    a segment endpoint; an unrelated edge a hair short of it would leave a
    segment whose 'smooth' factor blows up just outside.  Each critical
    point carries its own guard radius: the bottom rung of its resolution
    ladder normally, or the full margin for a well-isolated modeled band,
    where the two Jacobi segments touching the branch point integrate the
    local model exactly and interior edges would only split off segments at
    uncontrolled distances from it.
    """
    edges = np.unique(edges[(edges >= 0.0) & (edges <= tp)])
    atol_crit = tol * max(1.0, tp)
    crit_arr = np.asarray([c for c, _ in critical])
    guards = np.asarray([r for _, r in critical])
    dist = np.abs(edges[:, None] - crit_arr[None, :])
    is_critical = np.min(dist, axis=1) < atol_crit
    keep = is_critical | np.all(dist >= guards[None, :], axis=1)
    edges = edges[keep]
    atol = tol * max(1.0, tp)
    edges = edges[(edges > atol) & (edges < tp - atol)]
    if len(edges):
        cluster = np.concatenate([[True], np.diff(edges) > atol])
        edges = edges[cluster]
    return np.concatenate([[0.0], edges, [tp]])


def _conv_singularities(f: BranchGrid, g: BranchGrid, pmax: float,
                        margin: float) -> tuple[Singularity, ...]:
    def points(grid):
        pts = [(0.0, complex(grid.germ.leading_exponent), "germ")] if grid.germ else []
        pts += [(s.loc, complex(s.exponent), s.kind) for s in grid.singularities]
        return pts

    out: dict[float, Singularity] = {}
    for (l1, e1, k1) in points(f):
        for (l2, e2, k2) in points(g):
            loc = l1 + l2
            if loc <= 1e-12 or loc >= pmax - 1e-12:
                continue
            expo = e1 + e2 + 1
            shadow = k1 == "shadow" or k2 == "shadow"
            kind = "shadow" if shadow else ("jump" if _is_nonneg_int(expo) else "branch")
            sing = Singularity(
                loc=loc, exponent=expo, kind=kind,
                margin=0.0 if shadow else margin,
                log=(not shadow) and _is_nonneg_int(expo)
                and not (_is_nonneg_int(e1) and _is_nonneg_int(e2)),
            )
            prev = out.get(loc)
            if prev is None or expo.real < prev.exponent.real:
                out[loc] = sing
    return tuple(sorted(out.values(), key=lambda s: s.loc))


def convolve(f: BranchGrid, g: BranchGrid, label: str | None = None,
             margin: float | None = None) -> BranchGrid:
    """Convolution of two branch grids sampled on the same mesh and ray.

    Components broadcast: (n,1), (1,n) or matching widths.  The result grid
    carries the union-rule singularity metadata, a germ obtained by the
    Beta-function product formula (when both factors have one), and a valid
    mask excluding new singular margins.
    """
    if f.mesh is not g.mesh and not np.array_equal(f.mesh.nodes, g.mesh.nodes):
        raise ValueError("convolve needs both grids on one mesh")
    if abs(f.phi - g.phi) > 1e-12:
        raise ValueError("convolve needs both grids on one ray")
    mesh = f.mesh
    q = mesh.q
    phase = np.exp(1j * f.phi)
    n_out = max(f.n, g.n)
    if not (f.n == g.n or 1 in (f.n, g.n)):
        raise ValueError(f"component widths {f.n} and {g.n} do not broadcast")

    if margin is None:
        margin = max([s.margin for s in f.singularities + g.singularities] + [0.0])
    sings = _conv_singularities(f, g, mesh.pmax, margin)
    germ = None
    cut = 0.0
    if f.germ is not None and g.germ is not None:
        germ = germ_convolve(f.germ, g.germ)
        cut = min(f.germ_cut, g.germ_cut)

    fac_f = _Factor(f)
    f_bounds = fac_f.boundaries()
    values = np.zeros((mesh.nnodes, n_out), dtype=complex)
    tol = _EDGE_TOL

    guard0 = 0.9 * mesh.edges[1]

    def is_band(grid: BranchGrid, s: Singularity) -> bool:
        return (s.margin > 0 and grid.model_for(s.loc, +1) is not None
                and grid.model_for(s.loc, -1) is not None)

    def node_value(idx: int) -> None:
        tp = mesh.nodes[idx]
        if germ is not None and tp <= cut:
            values[idx], _ = germ_eval(germ, tp * phase)
            return
        fac_g = _Factor(g, reversed_at=float(tp))
        edges = [0.0, float(tp)]
        edges += [e for e in mesh.edges if 0 < e < tp]
        edges += [x for x in f_bounds if 0 < x < tp]
        edges += [x for x in fac_g.boundaries() if 0 < x < tp]
        edges += [x for x in fac_g.ladder_points() if 0 < x < tp]
        # Classify each singular point on (0, tp).  A modeled band well away
        # from every ladder point (germ origins at 0 and tp, unmodeled
        # singularities) collapses to two Jacobi segments with the endpoint
        # weight carried analytically; a band overlapping a ladder zone
        # instead keeps full geometric grading toward its own branch point,
        # because there the other factor's folded power is live inside the
        # band and wide segments would strand it.
        bands: list[tuple[float, float, float]] = []
        ladder_locs = [0.0, float(tp)]
        for grid, rev in ((f, False), (g, True)):
            for s in grid.singularities:
                c = tp - s.loc if rev else s.loc
                if not 0 < c < tp:
                    continue
                if is_band(grid, s):
                    bands.append((c, s.margin, s.loc))
                else:
                    ladder_locs.append(c)
        crit = [(loc, guard0) for loc in ladder_locs]
        for c, m, src in bands:
            if all(abs(c - l) >= 4.0 * m for l in ladder_locs):
                crit.append((c, 0.995 * m))
            else:
                crit.append((c, guard0))
                d = mesh.refinement_ladder(src)
                edges += [x for x in np.concatenate([c + d, c - d])
                          if 0 < x < tp]
        edges = _edge_hygiene(np.asarray(edges), crit, tp, tol)
        total = np.zeros(n_out, dtype=complex)
        plain_pts: list[np.ndarray] = []
        plain_wts: list[np.ndarray] = []
        for a, b in zip(edges[:-1], edges[1:]):
            tf = fac_f.terms(a, b)
            tg = fac_g.terms(a, b)
            if (len(tf) == 1 and len(tg) == 1
                    and tf[0][0] == tf[0][1] == 0.0 and not (tf[0][2] or tf[0][3])
                    and tg[0][0] == tg[0][1] == 0.0 and not (tg[0][2] or tg[0][3])):
                u, w = _segment_rule(a, b, q, 0.0, 0.0, False, False)
                plain_pts.append(u)
                plain_wts.append(w)
                continue
            for (fga, fgb, fla, flb, ff) in tf:
                for (gga, ggb, gla, glb, gf) in tg:
                    gL, gR = fga + gga, fgb + ggb
                    logL, logR = fla or gla, flb or glb
                    u, w = _segment_rule(a, b, q, gL, gR, logL, logR)
                    vals = ff(u) * gf(u)
                    total = total + vals.T @ w
        if plain_pts:
            u = np.concatenate(plain_pts)
            w = np.concatenate(plain_wts)
            vf = _eval_factor_general(f, u)
            vg = _eval_factor_general(g, tp - u)
            vals = np.atleast_2d(vf) * np.atleast_2d(vg)
            total = total + vals.T @ w
        values[idx] = phase * total

    workers = min(thread_count(), mesh.nnodes)
    if workers > 1:
        # nodes are independent and each writes only its own row, so the
        # result is identical for any worker count
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(node_value, range(mesh.nnodes)))
    else:
        for idx in range(mesh.nnodes):
            node_value(idx)

    mask = np.ones(mesh.nnodes, dtype=bool)
    for s in sings:
        if s.margin > 0:
            mask &= np.abs(mesh.nodes - s.loc) >= s.margin
    return BranchGrid(
        mesh=mesh,
        phi=f.phi,
        values=values,
        label=label or f"({f.label})*({g.label})",
        level=f.level + g.level,
        singularities=sings,
        germ=germ,
        germ_cut=cut,
        models={},
        valid_mask=mask,
    )


def _eval_factor_general(grid: BranchGrid, t: np.ndarray) -> np.ndarray:
    """Plain-region evaluation helper used for batched quadrature points."""
    return grid_eval(grid, t, allow_zero_tail=True)
