"""Stokes data, branch bookkeeping, and the balanced average.

The plus and minus boundary branches of the level functions differ across
each cut (k, k+1) by shifted copies of the higher levels.  The first jump
carries the Stokes constant:

    Y_0^-(p) - Y_0^+(p) = S Y_1(p - 1)     on (1, 2),

and, more generally, crossing the line once through (j, j+1) from below and
continuing above gives

    Y_k^{-^m +} = Y_k^+ + sum_{j=1}^m binom(k+j, k) S^j Y_{k+j}^+(. - j) H_j,

with H_j the Heaviside step at j.  This module measures S two independent
ways (the direct jump ratio, and the strength of the fitted (1-p)^{r-1}
singular model at p = 1), assembles the multi-crossing branches, forms the
balanced average

    Y^{ba} = Y^+ + sum_k 2^{-k} S^k (Y_k^+ H_k)(. - k),

and verifies the bridge identities as scaled grid residuals.  The reported
companion constant uses the normalization S_cl = 2 sin(pi (1 - beta)) S / i
(2 pi S / i in the logarithmic case beta = 1).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .grids import (
    BranchGrid,
    fit_singular_model,
    grid_eval,
    lincomb,
    refit_models,
    shift_heaviside,
)
from .systems import SystemSpec

__all__ = [
    "IdentityCheck",
    "StokesReport",
    "estimate_stokes_constant",
    "continue_across",
    "balanced_average",
    "check_resurgence",
    "check_ba_convolution",
]

JUMP_WINDOW = (1.05, 1.80)
FIT_WINDOW_P = (1.02, 1.30)
EDGE_PAD = 0.03


@dataclass(frozen=True)
class IdentityCheck:
    """One verified identity: scaled residual over a stated interval."""

    identity: str
    interval: tuple[float, float]
    residual: float
    tolerance: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.residual < self.tolerance


@dataclass
class StokesReport:
    """Stokes constant with estimator diagnostics and identity residuals."""

    s_beta: complex
    s_classical: complex
    beta: complex
    estimates: dict[str, complex]
    jump_spread: float
    exponent_fitted: float
    exponent_expected: float
    fit_residual: float
    window: tuple[float, float]
    identities: list[IdentityCheck] = field(default_factory=list)

    def disagreement(self) -> float:
        """Largest relative spread between the independent estimators."""
        vals = list(self.estimates.values())
        scale = max(max(abs(v) for v in vals), 1e-30)
        mid = sum(vals) / len(vals)
        return max(abs(v - mid) for v in vals) / scale


def _window_sel(grid: BranchGrid, lo: float, hi: float) -> np.ndarray:
    t = grid.mesh.nodes
    return (t > lo) & (t < hi) & grid.valid_mask


def _classical_constant(s_beta: complex, beta: complex) -> complex:
    if abs(beta - 1) < 1e-9:
        return 2 * math.pi * s_beta / 1j
    return 2 * cmath.sin(math.pi * (1 - beta)) * s_beta / 1j


def estimate_stokes_constant(
    spec: SystemSpec,
    plus_levels: Mapping[int, BranchGrid],
    minus_levels: Mapping[int, BranchGrid],
    r: float,
    *,
    window: tuple[float, float] = JUMP_WINDOW,
) -> StokesReport:
    """Measure S from the level-0 jump and from the p = 1 singular fit.

    The jump estimator averages (Y_0^- - Y_0^+)(p) / Y_1^+(p - 1) over the
    window; the fit estimators convert the strength of the (1 - p)^{r-1}
    model on each side of p = 1 through the connection factor
    2 i sin(pi (r - 1)) / c_1 (2 pi i / c_1 in the log case), with c_1 the
    leading coefficient of the level-1 germ.  A free-exponent refit of the
    local model provides the exponent diagnostic.
    """
    Y0p, Y0m = plus_levels[0], minus_levels[0]
    Y1p = plus_levels[1]
    t = Y0p.mesh.nodes
    sel = _window_sel(Y0p, *window) & _window_sel(Y0m, *window)
    if not sel.any():
        raise ValueError(f"no valid nodes in the jump window {window}")
    num = Y0m.values[sel, 0] - Y0p.values[sel, 0]
    den = grid_eval(Y1p, t[sel] - 1)[:, 0]
    ratios = num / den
    s_jump = complex(np.mean(ratios))
    spread = float(np.max(np.abs(ratios - s_jump)))

    c1 = complex(Y1p.germ.taylor[0, 0]) if Y1p.germ is not None else 1.0
    if abs(c1) < 1e-30:
        raise ValueError("level-1 germ has vanishing leading coefficient")
    log_case = abs(r - 1) < 1e-9
    connect = (2 * math.pi * 1j) if log_case else 2j * cmath.sin(math.pi * (r - 1))

    estimates: dict[str, complex] = {"jump": s_jump}
    fit_resid = 0.0
    m_left = Y0p.model_for(1.0, -1)
    if m_left is not None:
        s0 = complex(m_left.singular_strength()[0])
        estimates["fit_left"] = s0 * connect / c1
        fit_resid = max(fit_resid, m_left.fit_residual)
    m_right = Y0p.model_for(1.0, +1)
    if m_right is not None:
        s0r = complex(m_right.singular_strength()[0])
        phase = 1.0 if log_case else cmath.exp(1j * math.pi * (r - 1))
        estimates["fit_right"] = s0r * phase * connect / c1
        fit_resid = max(fit_resid, m_right.fit_residual)

    expo_expected = r - 1.0
    expo_fitted = _fit_free_exponent(
        Y0p, loc=1.0, side=+1, expected=expo_expected, log=log_case,
        window=(FIT_WINDOW_P[0] - 1.0, FIT_WINDOW_P[1] - 1.0),
    )

    s_beta = s_jump
    return StokesReport(
        s_beta=s_beta,
        s_classical=_classical_constant(s_beta, spec.beta),
        beta=spec.beta,
        estimates=estimates,
        jump_spread=spread,
        exponent_fitted=expo_fitted,
        exponent_expected=expo_expected,
        fit_residual=fit_resid,
        window=window,
    )


def _fit_free_exponent(
    grid: BranchGrid,
    loc: float,
    side: int,
    expected: float,
    log: bool,
    window: tuple[float, float],
) -> float:
    """Exponent minimizing the local-model misfit (golden search near r-1)."""

    def misfit(e: float) -> float:
        try:
            m = fit_singular_model(grid, loc, side, exponent=e, log=log, window=window)
        except (ValueError, np.linalg.LinAlgError):
            return math.inf
        return m.fit_residual

    res = minimize_scalar(
        misfit,
        bounds=(expected - 0.4, expected + 0.4),
        method="bounded",
        options={"xatol": 1e-8},
    )
    return float(res.x)


# ---------------------------------------------------------------------------
# Branch assembly
# ---------------------------------------------------------------------------


def _require_levels(levels: Mapping[int, BranchGrid], needed: range, what: str):
    missing = [k for k in needed if k not in levels]
    if missing:
        raise ValueError(
            f"{what} needs levels {list(needed)}; missing {missing}"
        )


def continue_across(
    levels_plus: Mapping[int, BranchGrid],
    s_beta: complex,
    level_k: int = 0,
    crossings: int = 1,
) -> BranchGrid:
    """The branch Y_k^{-^m +}: crossed m times, once per cut, then from above.

    Valid on (0, pmax); each crossing through (j, j+1) contributes the
    binomially weighted shift of level k + j.
    """
    if crossings < 0:
        raise ValueError("crossings must be >= 0")
    _require_levels(
        levels_plus, range(level_k, level_k + crossings + 1),
        f"continuation of level {level_k} across {crossings} cuts",
    )
    base = levels_plus[level_k]
    grids = [base]
    coeffs: list[complex] = [1.0]
    for j in range(1, crossings + 1):
        grids.append(shift_heaviside(levels_plus[level_k + j], j))
        coeffs.append(math.comb(level_k + j, level_k) * s_beta**j)
    out = lincomb(coeffs, grids)
    out.label = "-" * crossings + "+"
    out.level = level_k
    out.germ = base.germ
    out.germ_cut = base.germ_cut
    return refit_models(out)


def balanced_average(
    levels_plus: Mapping[int, BranchGrid],
    s_beta: complex,
    kmax: int | None = None,
    level_k: int = 0,
) -> BranchGrid:
    """Y_k^{ba} = Y_k^+ + sum_{j>=1} 2^-j C(k+j, k) S^j (Y_{k+j}^+ H_j)(. - j).

    Level 0 by default.  Exact on (0, kmax - level_k + 1); beyond that the
    truncated tail would contribute, so keep pmax below that for certified
    output.
    """
    if kmax is None:
        kmax = max(levels_plus)
    _require_levels(
        levels_plus, range(level_k, kmax + 1), "balanced average"
    )
    grids = [levels_plus[level_k]]
    coeffs: list[complex] = [1.0]
    for j in range(1, kmax - level_k + 1):
        grids.append(shift_heaviside(levels_plus[level_k + j], j))
        coeffs.append(2.0**-j * math.comb(level_k + j, level_k) * s_beta**j)
    out = lincomb(coeffs, grids)
    out.label = "ba"
    out.level = level_k
    out.germ = levels_plus[level_k].germ
    out.germ_cut = levels_plus[level_k].germ_cut
    return refit_models(out)


# ---------------------------------------------------------------------------
# Identity verification
# ---------------------------------------------------------------------------


def _scaled_residual(
    lhs: np.ndarray, rhs: np.ndarray, scale_vals: np.ndarray
) -> float:
    scale = max(float(np.max(np.abs(scale_vals))), 1e-30)
    return float(np.max(np.abs(lhs - rhs))) / scale


def _compare_on_window(
    a: BranchGrid, b: BranchGrid, lo: float, hi: float
) -> float:
    sel = _window_sel(a, lo, hi) & _window_sel(b, lo, hi)
    if not sel.any():
        return math.nan
    va = a.values[sel]
    vb = b.values[sel]
    return _scaled_residual(va, vb, va)


def check_resurgence(
    plus_levels: Mapping[int, BranchGrid],
    minus_levels: Mapping[int, BranchGrid],
    s_beta: complex,
    *,
    kmax: int | None = None,
    tolerance: float = 1e-6,
) -> list[IdentityCheck]:
    """Scaled residuals of the bridge identities between the two branches.

    Checks, in order: the full minus-branch reconstruction on (0, kmax + 1);
    the localized jump relations S^k Y_k = (Y_0^- - Y_0^{-^{k-1}+})(. + k)
    on (0, 1) for k = 1, 2; and the one-crossing relation for level 1.
    """
    if kmax is None:
        kmax = max(plus_levels)
    _require_levels(plus_levels, range(0, kmax + 1), "resurgence checks")
    mesh = plus_levels[0].mesh
    pmax = mesh.pmax
    t = mesh.nodes
    out: list[IdentityCheck] = []

    # (1) Y_0^- = Y_0^+ + sum S^k (Y_k^+ H)(. - k) across the whole line.
    recon = continue_across(plus_levels, s_beta, 0, kmax)
    hi = min(pmax, kmax + 1.0)
    res = _compare_on_window(minus_levels[0], recon, EDGE_PAD, hi - EDGE_PAD)
    out.append(
        IdentityCheck(
            identity="minus = plus + sum_k S^k shift(Y_k)",
            interval=(EDGE_PAD, hi - EDGE_PAD),
            residual=res,
            tolerance=tolerance,
        )
    )

    # (2) localized jumps on (0, 1), read back at p + k.  Residuals are
    # scaled by the ambient level-0 magnitude so the identity remains
    # meaningful when the Stokes constant vanishes (both sides ~ 0).
    for k in range(1, kmax + 1):
        if k + 1 - EDGE_PAD > pmax:
            break
        sel = (t > EDGE_PAD) & (t < min(1.0, pmax - k) - EDGE_PAD)
        sel &= plus_levels[k].valid_mask
        if not sel.any():
            continue
        lower = continue_across(plus_levels, s_beta, 0, k - 1)
        lhs = s_beta**k * plus_levels[k].values[sel, 0]
        minus_vals = grid_eval(minus_levels[0], t[sel] + k)[:, 0]
        rhs = minus_vals - grid_eval(lower, t[sel] + k)[:, 0]
        denom = max(float(np.max(np.abs(minus_vals))), 1e-30)
        res = float(np.max(np.abs(lhs - rhs))) / denom
        out.append(
            IdentityCheck(
                identity=f"S^{k} Y_{k} = (Y_0^- - Y_0^{{-^{k - 1}+}})(. + {k})",
                interval=(EDGE_PAD, 1.0 - EDGE_PAD),
                residual=res,
                tolerance=tolerance,
                note=f"jump across ({k}, {k + 1})",
            )
        )

    # (3) level-1 single crossing: Y_1^- = Y_1^+ + 2 S Y_2^+(. - 1) on (1, 2).
    if kmax >= 2 and 1 in minus_levels and pmax > 2 * EDGE_PAD + 1:
        recon1 = continue_across(plus_levels, s_beta, 1, 1)
        res = _compare_on_window(
            minus_levels[1], recon1, 1.0 + EDGE_PAD, min(2.0, pmax) - EDGE_PAD
        )
        out.append(
            IdentityCheck(
                identity="Y_1^- = Y_1^+ + 2 S Y_2^+(. - 1)",
                interval=(1.0 + EDGE_PAD, min(2.0, pmax) - EDGE_PAD),
                residual=res,
                tolerance=tolerance,
            )
        )
    return out


def check_balanced_average(
    plus_levels: Mapping[int, BranchGrid],
    minus_levels: Mapping[int, BranchGrid],
    s_beta: complex,
    *,
    tolerance: float = 1e-8,
    kmax: int | None = None,
) -> tuple[BranchGrid, list[IdentityCheck]]:
    """Build Y^{ba} and verify the midpoint property and reality.

    On (1, 2) the average satisfies Y^{ba} = (Y^+ + Y^-)/2 exactly; for data
    with real coefficients the average is real on the line.
    """
    ba = balanced_average(plus_levels, s_beta, kmax=kmax)
    checks: list[IdentityCheck] = []
    mesh = ba.mesh
    mid = lincomb([0.5, 0.5], [plus_levels[0], minus_levels[0]])
    res = _compare_on_window(
        ba, mid, 1.0 + EDGE_PAD, min(2.0, mesh.pmax) - EDGE_PAD
    )
    checks.append(
        IdentityCheck(
            identity="Y^ba = (Y^+ + Y^-)/2",
            interval=(1.0 + EDGE_PAD, min(2.0, mesh.pmax) - EDGE_PAD),
            residual=res,
            tolerance=tolerance,
        )
    )
    sel = _window_sel(ba, EDGE_PAD, mesh.pmax - EDGE_PAD)
    scale = max(float(np.max(np.abs(ba.values[sel]))), 1e-30)
    imag = float(np.max(np.abs(ba.values[sel].imag))) / scale
    checks.append(
        IdentityCheck(
            identity="Im Y^ba = 0",
            interval=(EDGE_PAD, mesh.pmax - EDGE_PAD),
            residual=imag,
            tolerance=tolerance,
            note="real-coefficient input",
        )
    )
    return ba, checks


def check_ba_convolution(
    spec: SystemSpec,
    plus_levels: Mapping[int, BranchGrid],
    s_beta: complex,
    *,
    tolerance: float = 1e-6,
    kmax: int | None = None,
) -> list[IdentityCheck]:
    """The average respects convolution; plain one-path continuation does not.

    With y_k = S^k Y_k^+, the product function h = y * y has level data
    h_k = sum_{i+j=k} y_i * y_j, and

        (y * y)^{ba} = y^{ba} * y^{ba}

    is verified as a grid identity.  The witness for the failure of naive
    continuation is the difference

        y^{-+} * y^{-+} - (y * y)^{-+} = (y_1 * y_1)(. - 2) H_2,

    which is checked to match and to sit well above the tolerance.
    """
    from .convolution import convolve

    if kmax is None:
        kmax = max(plus_levels)
    _require_levels(plus_levels, range(0, min(kmax, 2) + 1), "ba convolution checks")
    mesh = plus_levels[0].mesh
    checks: list[IdentityCheck] = []

    y = {k: plus_levels[k] for k in range(kmax + 1)}
    # level data of h = y * y (the S powers are folded into the weights)
    pair_cache: dict[tuple[int, int], BranchGrid] = {}

    def pair(i: int, j: int) -> BranchGrid:
        key = (min(i, j), max(i, j))
        hit = pair_cache.get(key)
        if hit is None:
            hit = convolve(y[key[0]], y[key[1]], label=f"Y{key[0]}*Y{key[1]}")
            pair_cache[key] = hit
        return hit

    h_levels: dict[int, BranchGrid] = {0: pair(0, 0)}
    for k in range(1, kmax + 1):
        parts = []
        coeffs = []
        for i in range(0, k // 2 + 1):
            j = k - i
            parts.append(pair(i, j))
            coeffs.append((1 if i == j else 2) * s_beta**k)
        g = lincomb(coeffs, parts)
        g.level = k
        h_levels[k] = g

    ba_y = balanced_average(y, s_beta, kmax=kmax)
    lhs = convolve(ba_y, ba_y, label="ba(y)*ba(y)")
    rhs = balanced_average(h_levels, 1.0, kmax=kmax)  # weights already in h_k
    hi = min(mesh.pmax, kmax + 1.0) - EDGE_PAD
    res = _compare_on_window(lhs, rhs, EDGE_PAD, hi)
    checks.append(
        IdentityCheck(
            identity="(y*y)^ba = y^ba * y^ba",
            interval=(EDGE_PAD, hi),
            residual=res,
            tolerance=tolerance,
        )
    )

    if kmax >= 1 and mesh.pmax > 2.0 + 2 * EDGE_PAD:
        one_cross = continue_across(y, s_beta, 0, 1)
        lhs_w = convolve(one_cross, one_cross, label="y-+*y-+")
        # (y*y)^{-+} carries weight 1 (not 1/2) on the level-1 shift
        rhs_w = lincomb(
            [1.0, 1.0],
            [h_levels[0], shift_heaviside(h_levels[1], 1)],
        )
        lo, hi = 2.0 + EDGE_PAD, min(mesh.pmax, 3.0) - EDGE_PAD
        sel = _window_sel(lhs_w, lo, hi) & _window_sel(rhs_w, lo, hi)
        witness = lhs_w.values[sel] - rhs_w.values[sel]
        exp_vals = s_beta**2 * grid_eval(pair(1, 1), mesh.nodes[sel] - 2)
        scale = max(float(np.max(np.abs(lhs_w.values[sel]))), 1e-30)
        mismatch = float(np.max(np.abs(witness - exp_vals))) / scale
        magnitude = float(np.max(np.abs(witness))) / scale
        expected = float(np.max(np.abs(exp_vals))) / scale
        checks.append(
            IdentityCheck(
                identity="y^{-+}*y^{-+} - (y*y)^{-+} = (y_1*y_1)(. - 2) H_2",
                interval=(lo, hi),
                residual=mismatch,
                tolerance=tolerance,
                note=f"witness magnitude {magnitude:.3e}",
            )
        )
        # Only a singular case (S != 0) has anything to witness: when the
        # expected discrepancy is itself below threshold, naive continuation
        # commutes as well as the average does and the check is vacuous.
        if expected >= 10.0 * tolerance:
            checks.append(
                IdentityCheck(
                    identity="naive continuation fails to commute with *",
                    interval=(lo, hi),
                    residual=tolerance * 10.0 / max(magnitude, 1e-30),
                    tolerance=1.0,
                    note="residual = 10 tol / witness; < 1 iff witness >= 10 tol",
                )
            )
    return checks
