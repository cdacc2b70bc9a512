"""Branch grids: sampled Borel-plane functions with singularity bookkeeping.

A BranchGrid holds values of one analytic branch along a ray arg(p) = phi,
sampled at the arc-length nodes of a PanelMesh.  Real-line branch values
(phi = 0) are typically produced by extrapolating a family of rotated rays;
they carry, per singular point, a protective margin (nodes inside it are
flagged invalid) and a fitted local model

    value(t) ~ poly_b(w) + s(w) * poly_a(w),   w = |t - loc|,

with s(w) = w^gamma, or w^gamma * log(w) for integer gamma.  Models answer
point queries inside margins and let quadrature integrate across them with
the singular factor treated exactly.

Near t = 0 the authoritative description is the power-series germ attached
at construction; interpolation is never used below ``germ_cut``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .borel import BorelGerm, germ_eval
from .mesh import PanelMesh

#: protective half-width around interior singular points on real-line grids
DEFAULT_MARGIN = 0.02


def _is_nonneg_int(x: complex, tol: float = 1e-9) -> bool:
    return abs(x.imag) < tol and abs(x.real - round(x.real)) < tol and x.real > -tol


def _germ_eval_block(germ: BorelGerm, p: np.ndarray) -> np.ndarray:
    """Vectorized trusted-disk germ evaluation (p = 0 allowed for Re a >= 0)."""
    p = np.asarray(p, dtype=complex)
    if np.isfinite(germ.radius) and np.any(np.abs(p) >= 0.5 * germ.radius):
        bad = np.max(np.abs(p))
        from .borel import GermEvalError

        raise GermEvalError(
            f"|p| = {bad:.6g} outside the trusted disk (radius {germ.radius:.6g})",
            radius=germ.radius,
        )
    a = complex(germ.leading_exponent)
    out = np.zeros(p.shape + (germ.n,), dtype=complex)
    for row in germ.taylor[::-1]:
        out = out * p[..., None] + row
    if a != 0:
        zero = p == 0
        psafe = np.where(zero, 1.0, p)
        pref = psafe**a
        if np.any(zero):
            if a.real <= 0:
                raise ValueError("germ singular at p = 0 evaluated there")
            pref = np.where(zero, 0.0, pref)
        out = out * pref[..., None]
    return out


@dataclass(frozen=True)
class Singularity:
    """Marker for a (potential) branch point of a grid at arc position loc."""

    loc: float
    exponent: complex  # local power (p - loc)^exponent, before any log factor
    kind: str = "branch"  # 'branch' | 'jump' | 'shadow'
    margin: float = 0.0
    log: bool = False

    def shifted(self, k: float) -> "Singularity":
        return replace(self, loc=self.loc + k)


@dataclass(frozen=True)
class SingularModel:
    """Local fit value(t) = poly_b(w) + s(w) poly_a(w) on one side of loc."""

    loc: float
    side: int  # +1: valid for t > loc, -1: for t < loc
    exponent: float
    log: bool
    coeff_analytic: np.ndarray  # (nb, n)
    coeff_singular: np.ndarray  # (na, n)
    window: tuple[float, float]
    fit_residual: float = 0.0

    def __call__(self, t: np.ndarray) -> np.ndarray:
        w = self.side * (np.asarray(t, dtype=float) - self.loc)
        if np.any(w < 0):
            raise ValueError("model evaluated on the wrong side of its base point")
        w = np.maximum(w, 1e-300)
        out = np.zeros(w.shape + (self.coeff_analytic.shape[1],), dtype=complex)
        for i in range(self.coeff_analytic.shape[0] - 1, -1, -1):
            out = out * w[..., None] + self.coeff_analytic[i]
        if self.coeff_singular.size:
            sing = np.zeros_like(out)
            for i in range(self.coeff_singular.shape[0] - 1, -1, -1):
                sing = sing * w[..., None] + self.coeff_singular[i]
            s = w ** self.exponent
            if self.log:
                s = s * np.log(w)
            out = out + s[..., None] * sing
        return out

    def singular_strength(self) -> np.ndarray:
        """Leading coefficient of the singular part (zero array if none)."""
        if self.coeff_singular.size:
            return self.coeff_singular[0]
        return np.zeros(self.coeff_analytic.shape[1], dtype=complex)


@dataclass
class BranchGrid:
    """One branch of a Borel-plane function sampled along a ray."""

    mesh: PanelMesh
    phi: float
    values: np.ndarray  # (nnodes, n)
    label: str
    level: int
    singularities: tuple[Singularity, ...] = ()
    germ: BorelGerm | None = None
    germ_cut: float = 0.0
    models: dict[tuple[float, int], SingularModel] = field(default_factory=dict)
    valid_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.mesh.nnodes:
            raise ValueError(
                f"values have {self.values.shape[0]} rows for {self.mesh.nnodes} mesh nodes"
            )
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.mesh.nnodes, dtype=bool)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def component(self, h: int) -> "BranchGrid":
        g = replace_values(self, self.values[:, h : h + 1])
        return g

    def model_for(self, loc: float, side: int) -> SingularModel | None:
        return self.models.get((loc, side))

    def branch_points(self) -> tuple[Singularity, ...]:
        return tuple(s for s in self.singularities if s.kind != "shadow")


def replace_values(grid: BranchGrid, values: np.ndarray) -> BranchGrid:
    return BranchGrid(
        mesh=grid.mesh,
        phi=grid.phi,
        values=np.asarray(values, dtype=complex),
        label=grid.label,
        level=grid.level,
        singularities=grid.singularities,
        germ=grid.germ,
        germ_cut=grid.germ_cut,
        models=dict(grid.models),
        valid_mask=None if grid.valid_mask is None else grid.valid_mask.copy(),
    )


def grid_eval(grid: BranchGrid, t, allow_zero_tail: bool = False) -> np.ndarray:
    """Evaluate a branch grid at arc positions t (scalar or array) -> (..., n).

    Routing: germ below germ_cut, local model inside a singular margin,
    barycentric panel interpolation elsewhere.  Negative t evaluates to 0
    when ``allow_zero_tail`` (useful for shifted factors), else raises.
    """
    tq = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((tq.size, grid.n), dtype=complex)
    done = np.zeros(tq.size, dtype=bool)
    if np.any(tq < 0):
        if not allow_zero_tail:
            raise ValueError("grid evaluated at negative arc position")
        neg = tq < 0
        out[neg] = 0.0
        done |= neg
    if grid.germ is not None and grid.germ_cut > 0:
        sel = (~done) & (tq <= grid.germ_cut)
        if sel.any():
            out[sel] = _germ_eval_block(grid.germ, tq[sel] * np.exp(1j * grid.phi))
            done |= sel
    for s in grid.singularities:
        if s.margin <= 0:
            continue
        for side in (+1, -1):
            model = grid.model_for(s.loc, side)
            if model is None:
                continue
            w = side * (tq - s.loc)
            sel = (~done) & (w >= 0) & (w < s.margin)
            if sel.any():
                out[sel] = model(tq[sel])
                done |= sel
    rest = ~done
    if rest.any():
        out[rest] = np.atleast_2d(grid.mesh.interpolate(grid.values, tq[rest]))
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return out[0]
    return out.reshape(np.asarray(t).shape + (grid.n,))


def _merge_singularities(a: Singularity, b: Singularity) -> Singularity:
    """Union rule for coincident branch points of summed grids.

    The combined local behaviour is governed by the most singular exponent;
    the margin shrinks to the tightest positive one (outside it every
    contribution has trustworthy values), and log factors accumulate.
    """
    ea, eb = complex(a.exponent), complex(b.exponent)
    expo = a.exponent if ea.real <= eb.real else b.exponent
    margins = [m for m in (a.margin, b.margin) if m > 0]
    shadow = a.kind == "shadow" and b.kind == "shadow"
    log = a.log or b.log
    if shadow:
        kind = "shadow"
    elif _is_nonneg_int(complex(expo)) and not log:
        kind = "jump"
    else:
        kind = "branch"
    return Singularity(
        loc=a.loc, exponent=expo, kind=kind,
        margin=0.0 if shadow else (min(margins) if margins else 0.0),
        log=log,
    )


def lincomb(coeffs, grids) -> BranchGrid:
    """Pointwise sum(c_i * grid_i); grids must share mesh and angle."""
    grids = list(grids)
    base = grids[0]
    vals = np.zeros_like(base.values)
    mask = np.ones(base.mesh.nnodes, dtype=bool)
    sings: dict[float, Singularity] = {}
    for c, g in zip(coeffs, grids):
        if g.mesh is not base.mesh and not np.array_equal(g.mesh.nodes, base.mesh.nodes):
            raise ValueError("lincomb needs grids on a shared mesh")
        if abs(g.phi - base.phi) > 1e-12:
            raise ValueError("lincomb needs grids on the same ray")
        vals = vals + c * g.values
        mask &= g.valid_mask
        for s in g.singularities:
            prev = sings.get(s.loc)
            sings[s.loc] = s if prev is None else _merge_singularities(prev, s)
    out = BranchGrid(
        mesh=base.mesh,
        phi=base.phi,
        values=vals,
        label="+".join(g.label for g in grids),
        level=base.level,
        singularities=tuple(sorted(sings.values(), key=lambda s: s.loc)),
        germ=None,
        germ_cut=0.0,
        models={},
        valid_mask=mask,
    )
    return out


def shift_heaviside(grid: BranchGrid, k: int) -> BranchGrid:
    """The grid of t -> value(t - k) for t > k, 0 below (branch translate).

    The source origin germ reappears as a one-sided local model at loc = k,
    so queries and quadrature stay accurate on the panels right of k.
    """
    if k < 0:
        raise ValueError("shift distance must be a nonnegative integer")
    mesh = grid.mesh
    tq = mesh.nodes
    vals = np.zeros((mesh.nnodes, grid.n), dtype=complex)
    pos = tq > k
    if pos.any():
        vals[pos] = grid_eval(grid, tq[pos] - k)
    sings = [s.shifted(k) for s in grid.singularities if s.loc + k < mesh.pmax]
    models = {}
    for (loc, side), m in grid.models.items():
        if loc + k < mesh.pmax:
            models[(loc + k, side)] = replace(m, loc=loc + k)
    mask = np.ones(mesh.nnodes, dtype=bool)
    for s in sings:
        if s.margin > 0:
            inside = np.abs(tq - s.loc) < s.margin
            have = (s.loc, 1) in models or (s.loc, -1) in models
            mask &= ~inside | have
            if have:
                for side in (1, -1):
                    m = models.get((s.loc, side))
                    if m is None:
                        continue
                    w = side * (tq - s.loc)
                    sel = inside & (w >= 0)
                    if sel.any():
                        vals[sel] = m(tq[sel])
    if grid.germ is not None:
        alpha = complex(grid.germ.leading_exponent)
        cut = grid.germ_cut if grid.germ_cut > 0 else 0.3
        phase = np.exp(1j * grid.phi)
        terms = grid.germ.taylor.shape[0]
        coeff = grid.germ.taylor * (phase ** (alpha + np.arange(terms)))[:, None]
        if _is_nonneg_int(alpha):
            m0 = int(round(alpha.real))
            pad = np.zeros((m0, grid.n), dtype=complex)
            model = SingularModel(
                loc=float(k), side=+1, exponent=0.0, log=False,
                coeff_analytic=np.vstack([pad, coeff]),
                coeff_singular=np.zeros((0, grid.n)),
                window=(0.0, cut),
            )
            kind = "jump"
            expo: complex = alpha
        else:
            model = SingularModel(
                loc=float(k), side=+1, exponent=float(alpha.real), log=False,
                coeff_analytic=np.zeros((0, grid.n)),
                coeff_singular=coeff,
                window=(0.0, cut),
            )
            kind = "branch"
            expo = alpha
        if k > 0:
            sings.append(Singularity(loc=float(k), exponent=expo, kind=kind,
                                     margin=cut, log=False))
            models[(float(k), +1)] = model
            # left of the shift point the branch is identically zero; an
            # explicit empty model keeps quadrature from interpolating the
            # panel that straddles k
            models[(float(k), -1)] = SingularModel(
                loc=float(k), side=-1, exponent=0.0, log=False,
                coeff_analytic=np.zeros((0, grid.n), dtype=complex),
                coeff_singular=np.zeros((0, grid.n), dtype=complex),
                window=(0.0, cut),
            )
    sings = tuple(sorted(sings, key=lambda s: s.loc))
    return BranchGrid(
        mesh=mesh,
        phi=grid.phi,
        values=vals,
        label=f"{grid.label}|shift{k}",
        level=grid.level,
        singularities=sings,
        germ=None,
        germ_cut=0.0,
        models=models,
        valid_mask=mask,
    )


def grid_norm(grid: BranchGrid, window: tuple[float, float] | None = None) -> float:
    """Quadrature-weighted L2 norm over valid nodes (optionally windowed)."""
    sel = grid.valid_mask.copy()
    if window is not None:
        sel &= (grid.mesh.nodes >= window[0]) & (grid.mesh.nodes <= window[1])
    w = grid.mesh.gl_weights[sel]
    v = grid.values[sel]
    return float(np.sqrt(np.sum(w[:, None] * np.abs(v) ** 2)))


def relative_grid_norm(
    err: BranchGrid, ref: BranchGrid, window: tuple[float, float] | None = None
) -> float:
    """Scaled grid norm ||err|| / ||ref|| over jointly valid nodes."""
    sel = err.valid_mask & ref.valid_mask
    if window is not None:
        sel &= (err.mesh.nodes >= window[0]) & (err.mesh.nodes <= window[1])
    w = err.mesh.gl_weights[sel]
    num = np.sqrt(np.sum(w[:, None] * np.abs(err.values[sel]) ** 2))
    den = np.sqrt(np.sum(w[:, None] * np.abs(ref.values[sel]) ** 2))
    if den == 0:
        return float(num)
    return float(num / den)


def difference_norm(a: BranchGrid, b: BranchGrid,
                    window: tuple[float, float] | None = None) -> float:
    """Relative L2 mismatch between two grids on the same mesh."""
    diff = replace_values(a, a.values - b.values)
    diff.valid_mask = a.valid_mask & b.valid_mask
    return relative_grid_norm(diff, b if grid_norm(b, window) > 0 else a, window)


def fit_singular_model(
    grid: BranchGrid,
    loc: float,
    side: int,
    exponent: float,
    log: bool = False,
    window: tuple[float, float] = (DEFAULT_MARGIN, 0.25),
    degree: int = 8,
) -> SingularModel:
    """Least-squares local model from valid nodes in the one-sided window.

    The basis is {w^i} + {s(w) w^i}, i < degree, with s the singular factor.
    With integer ``exponent`` and log=False the singular block is dropped
    (it would duplicate the analytic one).
    """
    w_all = side * (grid.mesh.nodes - loc)
    sel = grid.valid_mask & (w_all >= window[0]) & (w_all <= window[1])
    if not sel.any():
        raise ValueError(f"no valid nodes in fit window at loc={loc}, side={side}")
    w = w_all[sel]
    y = grid.values[sel]
    pure_poly = (not log) and abs(exponent - round(exponent)) < 1e-9 and exponent >= 0
    cols = [w**i for i in range(degree)]
    nsing = 0
    if not pure_poly:
        s = w**exponent
        if log:
            s = s * np.log(w)
        cols += [s * w**i for i in range(degree)]
        nsing = degree
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    scale = np.max(np.abs(y)) or 1.0
    resid = float(np.max(np.abs(fit - y)) / scale)
    cb = coef[:degree]
    ca = coef[degree : degree + nsing] if nsing else np.zeros((0, grid.n), dtype=complex)
    return SingularModel(
        loc=loc, side=side, exponent=float(exponent), log=log,
        coeff_analytic=cb, coeff_singular=ca,
        window=window, fit_residual=resid,
    )


def refit_models(
    grid: BranchGrid,
    window: tuple[float, float] = (DEFAULT_MARGIN, 0.25),
    degree: int = 8,
) -> BranchGrid:
    """Fit fresh one-sided local models at every margined branch point.

    Combinations of grids (sums, branch continuations) lose the per-input
    models; refitting from the combined values restores accurate evaluation
    and quadrature inside the margins.  Modifies ``grid`` in place and
    returns it.
    """
    for s in grid.singularities:
        if s.margin <= 0:
            continue
        for side in (+1, -1):
            lo = s.loc + (window[0] if side > 0 else -window[1])
            hi = s.loc + (window[1] if side > 0 else -window[0])
            if lo < 0 or hi > grid.mesh.pmax:
                continue
            model = fit_singular_model(
                grid, s.loc, side,
                exponent=complex(s.exponent).real, log=s.log,
                window=window, degree=degree,
            )
            grid.models[(s.loc, side)] = model
            w = side * (grid.mesh.nodes - s.loc)
            sel = (w >= 0) & (w < s.margin)
            if sel.any():
                grid.values[sel] = model(grid.mesh.nodes[sel])
    return grid
