"""Borel-plane images of the system data: forcing, nonlinear terms, kernels.

Under the transform x^{-m} -> p^{m-1}/Gamma(m) the pieces of the equation
become objects on the p-plane:

  * the forcing F0 = B(f0), a polynomial germ;
  * per multi-index l, the kernel G_l(p) = sum_{m>=1} g_{m,l} p^{m-1}/Gamma(m)
    so that B(x^{-m} y^l) = G_l * Y^{*l} (plus the direct g_{0,l} Y^{*l} term);
  * the Jacobian kernel K(p) with columns K[:, h] = B(dg/dy_h (x, y_0(x))),
    which multiplies the unknown under the integral sign in the level-k
    equations;
  * the level right-hand sides R_k, graded convolution products of the
    already-solved levels below k against the y_0-centered Taylor kernels.

Everything here is assembled from germ arithmetic near p = 0 and from the
panel convolution engine further out, so each object carries both a germ and
a sampled grid and stays usable across the whole solver pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gamma as _gamma

from .borel import BorelGerm
from .convolution import convolve, germ_convolve
from .grids import BranchGrid, Singularity, grid_eval, replace_values
from .mesh import PanelMesh
from .systems import MultiIndex, SystemSpec

__all__ = [
    "forcing_germ",
    "monomial_germ",
    "zero_germ",
    "germ_add",
    "germ_scale",
    "entire_grid",
    "zero_grid",
    "unit_grid",
    "grid_sum",
    "ConvKernel",
    "ConvPowerCache",
    "linear_conv_kernel",
    "jacobian_conv_kernel",
    "apply_nonlinearity",
    "assemble_level_rhs",
]


# ---------------------------------------------------------------------------
# Germ constructors and arithmetic
# ---------------------------------------------------------------------------


def monomial_germ(m: int, coeff, n: int) -> BorelGerm:
    """Polynomial germ of coeff * x^{-m}: coeff * p^{m-1}/Gamma(m), m >= 1."""
    if m < 1:
        raise ValueError("monomial_germ needs m >= 1 (x^0 has no Borel image)")
    taylor = np.zeros((m, n), dtype=complex)
    taylor[m - 1] = np.asarray(coeff, dtype=complex) / math.gamma(m)
    return BorelGerm(leading_exponent=0j, taylor=taylor, radius=math.inf, n=n)


def forcing_germ(spec: SystemSpec) -> BorelGerm:
    """B(f0): the polynomial sum_m f_{0,m} p^{m-1}/Gamma(m)."""
    if not spec.f0_coeffs:
        return zero_germ(spec.n)
    mmax = max(spec.f0_coeffs)
    taylor = np.zeros((mmax, spec.n), dtype=complex)
    for m, vec in spec.f0_coeffs.items():
        taylor[m - 1] += np.asarray(vec, dtype=complex) / math.gamma(m)
    return BorelGerm(leading_exponent=0j, taylor=taylor, radius=math.inf, n=spec.n)


def series_kernel_germ(spec: SystemSpec, l: MultiIndex) -> BorelGerm:
    """G_l(p) = sum_{m>=1} g_{m,l} p^{m-1}/Gamma(m) (zero germ if absent)."""
    rows = [
        (m, vec)
        for (m, ll), vec in spec.g_table.items()
        if ll == tuple(l) and m >= 1 and any(c != 0 for c in vec)
    ]
    if not rows:
        return zero_germ(spec.n)
    mmax = max(m for m, _ in rows)
    taylor = np.zeros((mmax, spec.n), dtype=complex)
    for m, vec in rows:
        taylor[m - 1] += np.asarray(vec, dtype=complex) / math.gamma(m)
    return BorelGerm(leading_exponent=0j, taylor=taylor, radius=math.inf, n=spec.n)


def zero_germ(n: int) -> BorelGerm:
    return BorelGerm(
        leading_exponent=0j,
        taylor=np.zeros((1, n), dtype=complex),
        radius=math.inf,
        n=n,
    )


def germ_scale(c, germ: BorelGerm) -> BorelGerm:
    """c * germ for scalar c, or vector c against a scalar germ (broadcast)."""
    c = np.asarray(c, dtype=complex)
    if c.ndim == 0:
        taylor = c * germ.taylor
    elif germ.n == 1:
        taylor = germ.taylor[:, [0]] * c[None, :]
    else:
        taylor = germ.taylor * c[None, :]
    return BorelGerm(
        leading_exponent=germ.leading_exponent,
        taylor=taylor,
        radius=germ.radius,
        n=taylor.shape[1],
    )


def germ_add(a: BorelGerm, b: BorelGerm) -> BorelGerm:
    """Sum of two germs whose leading exponents differ by an integer.

    The result is rebased to the lower exponent; a genuinely fractional
    mismatch has no single-germ representation and raises.
    """
    if a.n != b.n:
        raise ValueError("germ_add dimension mismatch")
    if _germ_is_zero(a):
        return b
    if _germ_is_zero(b):
        return a
    da = complex(a.leading_exponent)
    db = complex(b.leading_exponent)
    gap = db - da
    shift = int(round(gap.real))
    if abs(gap - shift) > 1e-9:
        raise ValueError(
            f"germ exponents {da} and {db} differ by a non-integer; cannot add"
        )
    if shift < 0:
        return germ_add(b, a)
    terms = max(a.terms, b.terms + shift)
    taylor = np.zeros((terms, a.n), dtype=complex)
    taylor[: a.terms] += a.taylor
    taylor[shift : shift + b.terms] += b.taylor
    return BorelGerm(
        leading_exponent=a.leading_exponent,
        taylor=taylor,
        radius=min(a.radius, b.radius),
        n=a.n,
    )


def _germ_is_zero(g: BorelGerm) -> bool:
    return not np.any(g.taylor)


# ---------------------------------------------------------------------------
# Grid constructors
# ---------------------------------------------------------------------------


def entire_grid(
    mesh: PanelMesh,
    phi: float,
    germ: BorelGerm,
    label: str,
    level: int = 0,
) -> BranchGrid:
    """Grid of a polynomial germ, exact everywhere (germ region = whole ray)."""
    if math.isfinite(germ.radius):
        raise ValueError("entire_grid needs a polynomial germ (infinite radius)")
    if complex(germ.leading_exponent) != 0:
        raise ValueError("entire_grid needs an integer-power germ at exponent 0")
    p = mesh.nodes * np.exp(1j * phi)
    vals = np.zeros((mesh.nnodes, germ.n), dtype=complex)
    for row in germ.taylor[::-1]:
        vals = vals * p[:, None] + row[None, :]
    return BranchGrid(
        mesh=mesh,
        phi=phi,
        values=vals,
        label=label,
        level=level,
        singularities=(),
        germ=germ,
        germ_cut=mesh.pmax,
    )


def zero_grid(mesh: PanelMesh, phi: float, n: int, label: str, level: int = 0) -> BranchGrid:
    return BranchGrid(
        mesh=mesh,
        phi=phi,
        values=np.zeros((mesh.nnodes, n), dtype=complex),
        label=label,
        level=level,
        singularities=(),
        germ=zero_germ(n),
        germ_cut=mesh.pmax,
    )


def unit_grid(mesh: PanelMesh, phi: float, label: str = "1") -> BranchGrid:
    """The constant 1 = B(1/x); convolving with it is the path integral."""
    germ = BorelGerm(
        leading_exponent=0j,
        taylor=np.ones((1, 1), dtype=complex),
        radius=math.inf,
        n=1,
    )
    return entire_grid(mesh, phi, germ, label)


def grid_sum(grids: Sequence[BranchGrid], label: str, level: int = 0,
             germ: BorelGerm | None = None, germ_cut: float = 0.0) -> BranchGrid:
    """Pointwise sum keeping singularity metadata and an explicit germ."""
    base = grids[0]
    vals = np.zeros_like(base.values)
    mask = np.ones(base.mesh.nnodes, dtype=bool)
    sings: dict[float, Singularity] = {}
    for g in grids:
        vals = vals + g.values
        mask &= g.valid_mask
        for s in g.singularities:
            prev = sings.get(s.loc)
            if prev is None or s.margin > prev.margin:
                sings[s.loc] = s
    return BranchGrid(
        mesh=base.mesh,
        phi=base.phi,
        values=vals,
        label=label,
        level=level,
        singularities=tuple(sorted(sings.values(), key=lambda s: s.loc)),
        germ=germ,
        germ_cut=germ_cut if germ is not None else 0.0,
        valid_mask=mask,
    )


def _vector_times_scalar(coeff, scalar_grid: BranchGrid, label: str) -> BranchGrid:
    """coeff (n-vector) times a scalar grid -> vector grid, metadata kept."""
    coeff = np.asarray(coeff, dtype=complex)
    out = replace_values(scalar_grid, scalar_grid.values[:, [0]] * coeff[None, :])
    out.label = label
    if out.germ is not None:
        out.germ = BorelGerm(
            leading_exponent=out.germ.leading_exponent,
            taylor=out.germ.taylor[:, [0]] * coeff[None, :],
            radius=out.germ.radius,
            n=coeff.size,
        )
    return out


# ---------------------------------------------------------------------------
# Matrix convolution kernels
# ---------------------------------------------------------------------------


@dataclass
class ConvKernel:
    """Matrix kernel K(p) with K[i, h] multiplying (Y)_h under the integral.

    ``poly`` holds the entire part as z-power coefficients (deg, n, n);
    ``columns`` holds per-h vector grids for the y_0-dependent part (present
    only for genuinely nonlinear systems).  ``eval_t`` evaluates at arc
    positions along the kernel's own ray.
    """

    n: int
    phi: float
    poly: np.ndarray | None
    columns: tuple[BranchGrid | None, ...]
    column_germs: tuple[BorelGerm | None, ...]

    @property
    def is_zero(self) -> bool:
        if self.poly is not None and np.any(self.poly):
            return False
        return all(c is None for c in self.columns)

    def eval_t(self, tpts: np.ndarray) -> np.ndarray:
        """K at arc positions (array shape m) -> (m, n, n) complex."""
        tpts = np.asarray(tpts, dtype=float)
        out = np.zeros(tpts.shape + (self.n, self.n), dtype=complex)
        if self.poly is not None and np.any(self.poly):
            z = tpts * np.exp(1j * self.phi)
            acc = np.zeros(tpts.shape + (self.n, self.n), dtype=complex)
            for layer in self.poly[::-1]:
                acc = acc * z[..., None, None] + layer[None, :, :]
            out += acc
        for h, col in enumerate(self.columns):
            if col is not None:
                out[..., :, h] += grid_eval(col, tpts)
        return out

    def germ_column(self, h: int) -> BorelGerm:
        """Germ of column h (poly part plus convolution part)."""
        parts = []
        if self.poly is not None and np.any(self.poly[:, :, h]):
            parts.append(
                BorelGerm(
                    leading_exponent=0j,
                    taylor=self.poly[:, :, h].copy(),
                    radius=math.inf,
                    n=self.n,
                )
            )
        if self.column_germs[h] is not None:
            parts.append(self.column_germs[h])
        if not parts:
            return zero_germ(self.n)
        out = parts[0]
        for g in parts[1:]:
            out = germ_add(out, g)
        return out


class ConvPowerCache:
    """Scalar convolution powers Y^{*l} of a fixed vector grid, memoized.

    Powers are built one factor at a time (the new factor is the last
    nonzero index of l), so each distinct multi-index costs one convolution.
    Germs are carried alongside for the p -> 0 region.
    """

    def __init__(self, grid: BranchGrid, germ: BorelGerm | None):
        self.grid = grid
        self.germ = germ
        self._cache: dict[MultiIndex, tuple[BranchGrid, BorelGerm | None]] = {}

    def get(self, l: MultiIndex) -> tuple[BranchGrid, BorelGerm | None]:
        l = tuple(int(c) for c in l)
        if sum(l) < 1:
            raise ValueError("convolution power needs |l| >= 1")
        hit = self._cache.get(l)
        if hit is not None:
            return hit
        h = max(i for i, c in enumerate(l) if c > 0)
        if sum(l) == 1:
            out = (
                self.grid.component(h),
                None if self.germ is None else self.germ.component(h),
            )
        else:
            reduced = list(l)
            reduced[h] -= 1
            base_grid, base_germ = self.get(tuple(reduced))
            fac_grid, fac_germ = self.get(
                tuple(1 if i == h else 0 for i in range(len(l)))
            )
            grid = convolve(base_grid, fac_grid, label=f"pow{l}")
            germ = None
            if base_germ is not None and fac_germ is not None:
                germ = germ_convolve(base_germ, fac_germ)
            out = (grid, germ)
        self._cache[l] = out
        return out


def linear_conv_kernel(spec: SystemSpec, phi: float) -> ConvKernel | None:
    """Kernel of the linear-in-y part of g: K[:, h] = G_{e_h} (polynomial).

    Returns None when g has no |l| = 1 entries; the table constraints force
    these to start at x^{-2}, so the kernel vanishes at p = 0.
    """
    deg = 0
    entries = []
    for m, l, coeff in spec.g_entries():
        if sum(l) != 1:
            continue
        h = l.index(1)
        entries.append((m, h, coeff))
        deg = max(deg, m)
    if not entries:
        return None
    poly = np.zeros((deg, spec.n, spec.n), dtype=complex)
    for m, h, coeff in entries:
        poly[m - 1, :, h] += np.asarray(coeff, dtype=complex) / math.gamma(m)
    return ConvKernel(
        n=spec.n,
        phi=phi,
        poly=poly,
        columns=(None,) * spec.n,
        column_germs=(None,) * spec.n,
    )


def _binom_multi(lp: MultiIndex, l: MultiIndex) -> int:
    out = 1
    for a, b in zip(lp, l):
        out *= math.comb(a, b)
    return out


def _dominates(lp: MultiIndex, l: MultiIndex) -> bool:
    return all(a >= b for a, b in zip(lp, l))


@dataclass
class TaylorKernel:
    """Vector kernel E_l = B(d^l g(x, y_0)/l!): delta part + germ + grid.

    The action on a scalar grid P is  delta * P + (E_grid * P)  where * is
    Borel convolution; the delta part comes from the m = 0, l' = l table
    entries (pure products, no smoothing factor).
    """

    delta: np.ndarray | None
    grid: BranchGrid | None
    germ: BorelGerm | None

    @property
    def is_zero(self) -> bool:
        return (
            (self.delta is None or not np.any(self.delta))
            and self.grid is None
        )


def _taylor_kernel(
    spec: SystemSpec,
    l: MultiIndex,
    mesh: PanelMesh,
    phi: float,
    y0cache: ConvPowerCache | None,
    mu_grids: dict[int, BranchGrid],
) -> TaylorKernel:
    """Assemble E_l from the table rows l' >= l."""
    n = spec.n
    delta = np.zeros(n, dtype=complex)
    grid_parts: list[BranchGrid] = []
    germ_total = zero_germ(n)
    for m, lp, coeff in spec.g_entries():
        if not _dominates(lp, l):
            continue
        c = _binom_multi(lp, l) * np.asarray(coeff, dtype=complex)
        lred = tuple(a - b for a, b in zip(lp, l))
        if sum(lred) == 0:
            if m == 0:
                delta += c
            else:
                germ_total = germ_add(germ_total, monomial_germ(m, c, n))
                grid_parts.append(
                    _vector_times_scalar(c, _mu_grid(mu_grids, m, mesh, phi), f"E{l}")
                )
        else:
            if y0cache is None:
                raise ValueError("kernel with y_0-dependence needs a power cache")
            P_grid, P_germ = y0cache.get(lred)
            if m == 0:
                grid_parts.append(_vector_times_scalar(c, P_grid, f"E{l}"))
                if P_germ is not None:
                    germ_total = germ_add(germ_total, germ_scale(c, P_germ))
            else:
                conv = convolve(_mu_grid(mu_grids, m, mesh, phi), P_grid, label=f"mu{m}*pow")
                grid_parts.append(_vector_times_scalar(c, conv, f"E{l}"))
                if P_germ is not None:
                    g = germ_convolve(monomial_germ(m, [1.0], 1), P_germ)
                    germ_total = germ_add(germ_total, germ_scale(c, g))
    if not grid_parts and not np.any(delta):
        return TaylorKernel(delta=None, grid=None, germ=None)
    grid = None
    if grid_parts:
        grid = grid_sum(grid_parts, label=f"E{l}", germ=germ_total, germ_cut=_common_cut(grid_parts))
    return TaylorKernel(
        delta=delta if np.any(delta) else None,
        grid=grid,
        germ=germ_total,
    )


def _mu_grid(cache: dict[int, BranchGrid], m: int, mesh: PanelMesh, phi: float) -> BranchGrid:
    hit = cache.get(m)
    if hit is None:
        hit = entire_grid(mesh, phi, monomial_germ(m, [1.0], 1), label=f"mu{m}")
        cache[m] = hit
    return hit


def _common_cut(grids: Sequence[BranchGrid]) -> float:
    cuts = [g.germ_cut for g in grids if g.germ is not None]
    return min(cuts) if cuts else 0.0


def jacobian_conv_kernel(
    spec: SystemSpec,
    mesh: PanelMesh,
    phi: float,
    y0_grid: BranchGrid | None,
    y0_germ: BorelGerm | None,
) -> ConvKernel | None:
    """Full Jacobian kernel K[:, h] = B(dg/dy_h(x, y_0)) for the level-k march.

    The |l'| = 1 rows give the entire polynomial part; rows with l' > e_h
    contribute convolution products against powers of Y_0.  Returns None for
    linear systems (g without any table entries).
    """
    if not spec.has_nonlinearity():
        return None
    lin = linear_conv_kernel(spec, phi)
    poly = lin.poly if lin is not None else None
    cache = None
    if y0_grid is not None:
        cache = ConvPowerCache(y0_grid, y0_germ)
    mu_grids: dict[int, BranchGrid] = {}
    columns: list[BranchGrid | None] = []
    column_germs: list[BorelGerm | None] = []
    for h in range(spec.n):
        e_h = tuple(1 if i == h else 0 for i in range(spec.n))
        rows = [
            (m, lp, coeff)
            for m, lp, coeff in spec.g_entries()
            if _dominates(lp, e_h) and sum(lp) >= 2
        ]
        if not rows:
            columns.append(None)
            column_germs.append(None)
            continue
        if cache is None:
            raise ValueError("nonlinear Jacobian kernel needs the level-0 grid")
        parts: list[BranchGrid] = []
        germ_total = zero_germ(spec.n)
        for m, lp, coeff in rows:
            c = lp[h] * np.asarray(coeff, dtype=complex)
            lred = tuple(a - b for a, b in zip(lp, e_h))
            P_grid, P_germ = cache.get(lred)
            if m == 0:
                parts.append(_vector_times_scalar(c, P_grid, f"K{h}"))
                if P_germ is not None:
                    germ_total = germ_add(germ_total, germ_scale(c, P_germ))
            else:
                conv = convolve(_mu_grid(mu_grids, m, mesh, phi), P_grid, label=f"mu{m}*pow")
                parts.append(_vector_times_scalar(c, conv, f"K{h}"))
                if P_germ is not None:
                    g = germ_convolve(monomial_germ(m, [1.0], 1), P_germ)
                    germ_total = germ_add(germ_total, germ_scale(c, g))
        col = grid_sum(parts, label=f"K[:,{h}]", germ=germ_total, germ_cut=_common_cut(parts))
        columns.append(col)
        column_germs.append(germ_total)
    if poly is None and all(c is None for c in columns):
        return None
    return ConvKernel(
        n=spec.n,
        phi=phi,
        poly=poly,
        columns=tuple(columns),
        column_germs=tuple(column_germs),
    )


# ---------------------------------------------------------------------------
# The nonlinear term and the level right-hand sides
# ---------------------------------------------------------------------------


def apply_nonlinearity(
    spec: SystemSpec,
    Y: BranchGrid,
    Y_germ: BorelGerm | None,
    *,
    min_total: int = 1,
    cache: ConvPowerCache | None = None,
) -> tuple[BranchGrid | None, BorelGerm | None]:
    """B(g(x, y))|_{y = L Y}: sum of G_l * Y^{*l} plus the direct m = 0 terms.

    ``min_total`` = 2 restricts to the quadratic-and-higher tail (the lagged
    part of the fixed-point sweep; the |l| = 1 part lives in the march
    kernel).  Returns (None, None) when nothing contributes.
    """
    if not spec.has_nonlinearity():
        return None, None
    if cache is None:
        cache = ConvPowerCache(Y, Y_germ)
    mu_grids: dict[int, BranchGrid] = {}
    mesh, phi = Y.mesh, Y.phi
    parts: list[BranchGrid] = []
    germ_total = zero_germ(spec.n)
    track_germ = Y_germ is not None
    for m, l, coeff in spec.g_entries():
        if sum(l) < min_total:
            continue
        c = np.asarray(coeff, dtype=complex)
        P_grid, P_germ = cache.get(l)
        if m == 0:
            parts.append(_vector_times_scalar(c, P_grid, f"g0{l}"))
            if track_germ and P_germ is not None:
                germ_total = germ_add(germ_total, germ_scale(c, P_germ))
        else:
            conv = convolve(_mu_grid(mu_grids, m, mesh, phi), P_grid, label=f"mu{m}*pow")
            parts.append(_vector_times_scalar(c, conv, f"g{m}{l}"))
            if track_germ and P_germ is not None:
                g = germ_convolve(monomial_germ(m, [1.0], 1), P_germ)
                germ_total = germ_add(germ_total, germ_scale(c, g))
    if not parts:
        return None, None
    germ = germ_total if track_germ else None
    out = grid_sum(
        parts,
        label=f"N[{Y.label}]",
        level=Y.level,
        germ=germ,
        germ_cut=_common_cut(parts) if germ is not None else 0.0,
    )
    return out, germ


def _graded_conv_power(
    l: MultiIndex,
    comp: Mapping[int, Mapping[int, tuple[BranchGrid, BorelGerm | None]]],
    k: int,
) -> tuple[BranchGrid, BorelGerm | None] | None:
    """Level-k part of the product prod_h W_h^{*l_h}, each factor level >= 1.

    ``comp[kp][h]`` is the (grid, germ) pair of component h at level kp.
    Returns None when no partition of k into |l| parts >= 1 exists.
    """
    factors = [h for h, c in enumerate(l) for _ in range(c)]
    if not factors or len(factors) > k:
        return None
    # state: total level -> (grid, germ) of the partial product; None = empty
    state: dict[int, tuple[BranchGrid, BorelGerm | None] | None] = {0: None}
    for pos, h in enumerate(factors):
        remaining = len(factors) - pos - 1
        new: dict[int, tuple[BranchGrid, BorelGerm | None]] = {}
        for tot, acc in state.items():
            for kp in range(1, k - tot - remaining + 1):
                fac = comp.get(kp, {}).get(h)
                if fac is None:
                    continue
                if acc is None:
                    term = fac
                else:
                    g = convolve(acc[0], fac[0], label=f"W^{l}@{tot + kp}")
                    ge = None
                    if acc[1] is not None and fac[1] is not None:
                        ge = germ_convolve(acc[1], fac[1])
                    term = (g, ge)
                prev = new.get(tot + kp)
                if prev is None:
                    new[tot + kp] = term
                else:
                    gsum = grid_sum([prev[0], term[0]], label=prev[0].label,
                                    germ=None)
                    gesum = None
                    if prev[1] is not None and term[1] is not None:
                        gesum = germ_add(prev[1], term[1])
                    # germ/cut bookkeeping: keep the germ on the summed grid
                    if gesum is not None:
                        gsum.germ = gesum
                        gsum.germ_cut = min(
                            x for x in (prev[0].germ_cut, term[0].germ_cut) if x > 0
                        ) if (prev[0].germ_cut > 0 and term[0].germ_cut > 0) else 0.0
                    new[tot + kp] = (gsum, gesum)
        state = dict(new)
        state.setdefault(0, None)
    return state.get(k)


def _candidate_indices(spec: SystemSpec, kmax_total: int) -> list[MultiIndex]:
    """Multi-indices l with 2 <= |l| <= kmax_total below some table entry."""
    seen: set[MultiIndex] = set()
    for _, lp, _ in spec.g_entries():
        if sum(lp) < 2:
            continue
        ranges = [range(c + 1) for c in lp]
        stack = [()]
        for r in ranges:
            stack = [s + (v,) for s in stack for v in r]
        for l in stack:
            if 2 <= sum(l) <= kmax_total:
                seen.add(l)
    return sorted(seen)


def assemble_level_rhs(
    spec: SystemSpec,
    mesh: PanelMesh,
    phi: float,
    k: int,
    level_grids: Mapping[int, BranchGrid],
    level_germs: Mapping[int, BorelGerm | None],
    y0cache: ConvPowerCache | None,
) -> tuple[BranchGrid, BorelGerm]:
    """Right-hand side R_k: graded products of levels 1..k-1 under the E_l.

    R_1 = 0 always.  For k >= 2 each table block d^l g/l! at y_0 acts on the
    level-k part of the product of lower levels (every factor at level >= 1;
    the level-0 content is inside the E_l kernels themselves).
    """
    n = spec.n
    if k < 2 or not spec.has_nonlinearity():
        return zero_grid(mesh, phi, n, label=f"R{k}", level=k), zero_germ(n)
    comp: dict[int, dict[int, tuple[BranchGrid, BorelGerm | None]]] = {}
    for kp, grid in level_grids.items():
        if kp < 1 or kp >= k:
            continue
        ge = level_germs.get(kp)
        comp[kp] = {
            h: (grid.component(h), None if ge is None else ge.component(h))
            for h in range(n)
        }
    mu_grids: dict[int, BranchGrid] = {}
    parts: list[BranchGrid] = []
    germ_total = zero_germ(n)
    for l in _candidate_indices(spec, k):
        P = _graded_conv_power(l, comp, k)
        if P is None:
            continue
        E = _taylor_kernel(spec, l, mesh, phi, y0cache, mu_grids)
        if E.is_zero:
            continue
        P_grid, P_germ = P
        if E.delta is not None:
            parts.append(_vector_times_scalar(E.delta, P_grid, f"R{k}d{l}"))
            if P_germ is not None:
                germ_total = germ_add(germ_total, germ_scale(E.delta, P_germ))
        if E.grid is not None:
            conv = convolve(E.grid, P_grid, label=f"R{k}c{l}")
            parts.append(conv)
            if P_germ is not None and E.germ is not None:
                germ_total = germ_add(
                    germ_total, germ_convolve(E.germ, P_germ)
                )
    if not parts:
        return zero_grid(mesh, phi, n, label=f"R{k}", level=k), zero_germ(n)
    cut = _common_cut(parts)
    out = grid_sum(parts, label=f"R{k}", level=k, germ=germ_total,
                   germ_cut=cut if cut > 0 else 0.35)
    return out, germ_total
