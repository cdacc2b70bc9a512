"""Trans-series coefficients by order-matched recursion.

Substituting y = y_0 + sum_{k>=1} C^k e^{-kx} y_k into the normalized system
and collecting e^{-kx} gives, per level k,

    y_k' + (LAM - k + B/x) y_k - dg(x, y_0) y_k = R_k,

where dg is the Jacobian of the nonlinearity along y_0 and R_k collects the
products of lower levels (R_1 = 0).  Levels are power series

    y_0 = sum_{j>=1} a_j x^{-j},
    y_k = x^{-k r} sum_{j>=0} b_j^{(k)} x^{-j},     r = beta - dg_1[0][0],

with dg_1 the x^{-1} Jacobian coefficient (zero unless an order-one forcing
makes a_1 nonzero against a quadratic nonlinearity, in which case the level
exponent shifts away from beta).

Level 1 is special: LAM - 1 annihilates the first coordinate, so b_0 = c e_1
is the free normalization, rows >= 2 of the order-j equation give the other
components, and the first component of b_{j-1} is forced by the solvability
of the order-j first row.

All arithmetic is generic over the scalar ring: builtin complex by default,
exact rationals (``scalars.QC``) when ``exact=True`` and the inputs are
representable.  The exact mode is what anchors the residual and homogeneity
tests bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .scalars import QC, ring_scalar, ring_zero, to_float_complex
from .systems import SystemSpec


class ResonanceError(ArithmeticError):
    """LAM - k is singular beyond the admissible level-1 null direction."""


@dataclass(frozen=True)
class FormalSeries:
    """x^{-leading_offset} sum_j coeffs[j] x^{-j} with n-vector coefficients.

    ``coeffs[j]`` multiplies x^{-(leading_offset + j)}; the list length is the
    order to which the series is trustworthy.
    """

    leading_offset: complex
    coeffs: tuple
    n: int
    exact: bool = False

    @property
    def order(self) -> int:
        return len(self.coeffs)

    def component(self, h: int) -> list:
        return [vec[h] for vec in self.coeffs]

    def coeffs_complex(self) -> list[list[complex]]:
        return [[to_float_complex(c) for c in vec] for vec in self.coeffs]

    def offset_complex(self) -> complex:
        return to_float_complex(self.leading_offset)

    def eval_partial(self, x: complex, terms: int | None = None):
        """Partial sum of the (generally divergent) series at x."""
        terms = self.order if terms is None else min(terms, self.order)
        r = self.offset_complex()
        out = [0j] * self.n
        for j in range(terms):
            w = x ** (-(r + j))
            for i, c in enumerate(self.coeffs[j]):
                out[i] += to_float_complex(c) * w
        return out


@dataclass(frozen=True)
class NormalizationRecord:
    """Which entry of the level-1 leading coefficient was fixed, and to what."""

    component: int
    power: complex
    value: complex


@dataclass(frozen=True)
class TransSeries:
    """Levels y_0..y_kmax with the level exponent step r and normalization."""

    levels: tuple[FormalSeries, ...]
    r: complex
    normalization: NormalizationRecord
    exact: bool = False

    @property
    def kmax(self) -> int:
        return len(self.levels) - 1


# ---------------------------------------------------------------------------
# Scalar series and graded-algebra helpers
# ---------------------------------------------------------------------------


def _mul_trunc(u: Sequence, v: Sequence, nmax: int, zero):
    """Cauchy product of coefficient lists, truncated to indices <= nmax."""
    out = [zero] * (nmax + 1)
    for i, a in enumerate(u[: nmax + 1]):
        if not a:
            continue
        jtop = nmax - i
        for j, b in enumerate(v[: jtop + 1]):
            if not b:
                continue
            out[i + j] = out[i + j] + a * b
    return out


def _graded_mul(A: dict, B: dict, kmax: int, nmax: int, zero) -> dict:
    """Product of level-graded scalar series {k: coeff list over j}.

    Index semantics: entry (k, j) multiplies e^{-kx} x^{-(k r + j)}; levels
    and j-offsets both add under multiplication, so the grading is closed.
    """
    C: dict = {}
    for k1, u in A.items():
        for k2, v in B.items():
            k = k1 + k2
            if k > kmax:
                continue
            w = C.get(k)
            if w is None:
                w = [zero] * (nmax + 1)
                C[k] = w
            for i, a in enumerate(u[: nmax + 1]):
                if not a:
                    continue
                jtop = nmax - i
                for j, b in enumerate(v[: jtop + 1]):
                    if not b:
                        continue
                    w[i + j] = w[i + j] + a * b
    return C


def graded_g_apply(spec: SystemSpec, levels: dict, kmax: int, nmax: int, exact: bool) -> dict:
    """Level-graded expansion of g(x, y) for y given by graded vector series.

    ``levels`` maps level k to a coefficient list over j = 0..nmax of
    n-vectors.  Returns the same structure for g(x, y).  Used both to build
    the recursion right-hand sides R_k (apply to levels < k and read level k)
    and as the independent substitution check on a full trans-series.
    """
    zero = ring_zero(exact)
    out: dict = {}
    comp = {
        h: {k: [vec[h] for vec in coeffs] for k, coeffs in levels.items()}
        for h in range(spec.n)
    }
    for m, l, coeff in spec.g_entries():
        if m > nmax:
            continue
        prod = {0: [ring_scalar(1, exact)] + [zero] * nmax}
        for h, power in enumerate(l):
            for _ in range(power):
                prod = _graded_mul(prod, comp[h], kmax, nmax, zero)
        cvec = [ring_scalar(c, exact) for c in coeff]
        for k, series in prod.items():
            dest = out.get(k)
            if dest is None:
                dest = [[zero] * spec.n for _ in range(nmax + 1)]
                out[k] = dest
            for j in range(nmax + 1 - m):
                s = series[j]
                if not s:
                    continue
                row = dest[j + m]
                for i in range(spec.n):
                    if cvec[i]:
                        row[i] = row[i] + cvec[i] * s
    return out


def _jacobian_series(spec: SystemSpec, a: list, nmax: int, exact: bool) -> list:
    """Coefficients D_j of dg(x, y_0) = sum_{j>=1} D_j x^{-j} (n x n each).

    ``a`` is the level-0 coefficient list indexed by absolute order
    (a[q] multiplies x^{-q}, a[0] = 0).
    """
    zero = ring_zero(exact)
    D = [[[zero] * spec.n for _ in range(spec.n)] for _ in range(nmax + 1)]
    comp = [[vec[h] for vec in a] for h in range(spec.n)]
    for m, l, coeff in spec.g_entries():
        cvec = [ring_scalar(c, exact) for c in coeff]
        for h in range(spec.n):
            if l[h] == 0:
                continue
            lh = ring_scalar(l[h], exact)
            reduced = list(l)
            reduced[h] -= 1
            pw = [ring_scalar(1, exact)] + [zero] * nmax
            for hh, power in enumerate(reduced):
                for _ in range(power):
                    pw = _mul_trunc(pw, comp[hh], nmax, zero)
            for q in range(nmax + 1 - m):
                s = pw[q]
                if not s:
                    continue
                j = q + m
                for i in range(spec.n):
                    if cvec[i]:
                        D[j][i][h] = D[j][i][h] + cvec[i] * lh * s
    return D


def _matvec(M, v, n, zero):
    out = [zero] * n
    for i in range(n):
        acc = zero
        row = M[i]
        for h in range(n):
            if row[h] and v[h]:
                acc = acc + row[h] * v[h]
        out[i] = acc
    return out


# ---------------------------------------------------------------------------
# Level 0
# ---------------------------------------------------------------------------


def compute_y0_series(spec: SystemSpec, order: int, exact: bool = False) -> FormalSeries:
    """Power-series solution y_0 = sum_{j>=1} a_j x^{-j} to the given order.

    The order-j match of the system reads

        LAM a_j = f_{0,j} + (j-1) a_{j-1} - B a_{j-1} + [g(x, y_0)]_j,

    and the g coefficient only involves a_1..a_{j-1} (the table has
    g_{0,l} = g_{1,l} = 0 for |l| = 1), so the march is well founded.
    ``coeffs[j]`` is the x^{-j} coefficient, j = 0..order-1.
    """
    if order < 2:
        raise ValueError("order must be >= 2")
    a = _y0_coeff_list(spec, order - 1, exact)
    return FormalSeries(
        leading_offset=ring_scalar(0, exact),
        coeffs=tuple(tuple(vec) for vec in a),
        n=spec.n,
        exact=exact,
    )


def _y0_coeff_list(spec: SystemSpec, qmax: int, exact: bool) -> list:
    zero = ring_zero(exact)
    lam = [ring_scalar(v, exact) for v in spec.lam]
    bd = [ring_scalar(v, exact) for v in spec.b_diag]
    f0 = {m: [ring_scalar(c, exact) for c in vec] for m, vec in spec.f0_coeffs.items()}

    a = [[zero] * spec.n for _ in range(qmax + 1)]
    has_g = spec.has_nonlinearity()
    for q in range(1, qmax + 1):
        rhs = [zero] * spec.n
        fv = f0.get(q)
        if fv is not None:
            rhs = [r + c for r, c in zip(rhs, fv)]
        prev = a[q - 1]
        jm1 = ring_scalar(q - 1, exact) if exact else complex(q - 1)
        for i in range(spec.n):
            rhs[i] = rhs[i] + (jm1 - bd[i]) * prev[i]
        if has_g:
            gq = _g_of_y0_coeff(spec, a, q, exact)
            rhs = [r + c for r, c in zip(rhs, gq)]
        a[q] = [rhs[i] / lam[i] for i in range(spec.n)]
    return a


def _g_of_y0_coeff(spec: SystemSpec, a: list, q: int, exact: bool) -> list:
    """Coefficient of x^{-q} in g(x, y_0) using the filled part of ``a``."""
    zero = ring_zero(exact)
    out = [zero] * spec.n
    comp = [[vec[h] for vec in a] for h in range(spec.n)]
    for m, l, coeff in spec.g_entries():
        if m > q:
            continue
        pw = [ring_scalar(1, exact)] + [zero] * (q - m)
        for h, power in enumerate(l):
            for _ in range(power):
                pw = _mul_trunc(pw, comp[h], q - m, zero)
        s = pw[q - m]
        if not s:
            continue
        for i in range(spec.n):
            c = ring_scalar(coeff[i], exact)
            if c:
                out[i] = out[i] + c * s
    return out


# ---------------------------------------------------------------------------
# Higher levels
# ---------------------------------------------------------------------------


def compute_transseries(
    spec: SystemSpec,
    kmax: int,
    order: int,
    exact: bool = False,
    level_one_scale=1,
) -> TransSeries:
    """Compute levels y_0..y_kmax to the given order with C = 1.

    The level-1 leading coefficient is ``level_one_scale * e_1`` (default 1,
    the normalization fixing the free trans-series parameter); rescaling it
    by c scales level k by c^k (homogeneity).  Levels are solved in
    dependency order; the result is deterministic.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if order < 2:
        raise ValueError("order must be >= 2")
    n = spec.n
    N = order
    zero = ring_zero(exact)
    lam = [ring_scalar(v, exact) for v in spec.lam]
    bd = [ring_scalar(v, exact) for v in spec.b_diag]

    a = _y0_coeff_list(spec, N, exact)
    D = _jacobian_series(spec, a, N, exact)
    r = bd[0] - D[1][0][0]

    cscale = ring_scalar(level_one_scale, exact)
    levels: dict = {0: [list(vec) for vec in a[: N + 1]]}
    bexp = [None]  # per-level coefficient lists

    for k in range(1, kmax + 1):
        # Right-hand side R_k: level-k part of g applied to levels < k.
        if k >= 2 and spec.has_nonlinearity():
            gk = graded_g_apply(spec, levels, k, N, exact).get(k)
            rho = gk if gk is not None else [[zero] * n for _ in range(N + 1)]
        else:
            rho = [[zero] * n for _ in range(N + 1)]

        if k == 1:
            b = _solve_level_one(spec, lam, bd, D, rho, r, cscale, N, exact)
        else:
            b = _solve_level_k(spec, lam, bd, D, rho, r, k, N, exact)
        bexp.append(b)
        levels[k] = b

    series = [
        FormalSeries(
            leading_offset=ring_scalar(0, exact),
            coeffs=tuple(tuple(vec) for vec in a[:N]),
            n=n,
            exact=exact,
        )
    ]
    for k in range(1, kmax + 1):
        offs = r * ring_scalar(k, exact) if exact else r * k
        series.append(
            FormalSeries(
                leading_offset=offs,
                coeffs=tuple(tuple(vec) for vec in bexp[k][:N]),
                n=n,
                exact=exact,
            )
        )
    record = NormalizationRecord(
        component=0,
        power=to_float_complex(r),
        value=to_float_complex(cscale),
    )
    return TransSeries(levels=tuple(series), r=r if exact else to_float_complex(r), normalization=record, exact=exact)


def _level_rhs(lam, bd, D, rho, offs, b, j, n, zero, exact):
    """rhs_j = rho_j + (offs + j - 1) b_{j-1} - B b_{j-1} + sum D_{j'} b_{j-j'}."""
    rhs = list(rho[j])
    if j >= 1:
        prev = b[j - 1]
        w = offs + ring_scalar(j - 1, exact)
        for i in range(n):
            rhs[i] = rhs[i] + (w - bd[i]) * prev[i]
        for jp in range(1, j + 1):
            dv = _matvec(D[jp], b[j - jp], n, zero)
            rhs = [x + y for x, y in zip(rhs, dv)]
    return rhs


def _solve_level_k(spec, lam, bd, D, rho, r, k, N, exact):
    n = spec.n
    zero = ring_zero(exact)
    kk = ring_scalar(k, exact)
    diag = [lam[i] - kk for i in range(n)]
    for i, d in enumerate(diag):
        if (exact and not d) or (not exact and abs(d) < 1e-12):
            raise ResonanceError(
                f"level {k}: LAM - {k} is singular in component {i + 1}"
            )
    offs = r * kk
    b = []
    for j in range(N):
        rhs = _level_rhs(lam, bd, D, rho, offs, b, j, n, zero, exact)
        b.append([rhs[i] / diag[i] for i in range(n)])
    return b


def _solve_level_one(spec, lam, bd, D, rho, r, cscale, N, exact):
    """Bordered march for level 1 (LAM - 1 annihilates the first row).

    Rows >= 2 of the order-j equation give b_j[1:]; the first row of the
    order-(j+1) equation is the solvability condition that forces b_j[0].
    """
    n = spec.n
    zero = ring_zero(exact)
    one = ring_scalar(1, exact)
    diag = [lam[i] - one for i in range(n)]
    for i in range(1, n):
        if (exact and not diag[i]) or (not exact and abs(diag[i]) < 1e-12):
            raise ResonanceError(f"level 1: LAM - 1 is singular in component {i + 1}")

    b = [[zero] * n for _ in range(N)]
    b[0][0] = cscale
    for j in range(1, N + 1):
        # First row of the order-j equation pins b_{j-1}[0].  With
        # r = beta - D_1[0][0] the b_{j-1}[0] terms collapse to (j-1) b_{j-1}[0].
        acc = rho[j][0]
        for h in range(1, n):
            if D[1][0][h] and b[j - 1][h]:
                acc = acc + D[1][0][h] * b[j - 1][h]
        for jp in range(2, j + 1):
            row = D[jp][0]
            vec = b[j - jp]
            for h in range(n):
                if row[h] and vec[h]:
                    acc = acc + row[h] * vec[h]
        if j == 1:
            # Solvability at leading order: automatic (R_1 = 0); guard anyway.
            bad = bool(acc) if exact else abs(acc) > 1e-10
            if bad:
                raise ResonanceError(
                    "level 1 leading-order solvability violated "
                    f"(first-row defect {acc!r})"
                )
        else:
            b[j - 1][0] = -acc / ring_scalar(j - 1, exact)
        if j < N:
            rhs = _level_rhs(lam, bd, D, rho, r, b, j, n, zero, exact)
            for i in range(1, n):
                b[j][i] = rhs[i] / diag[i]
    return b


# ---------------------------------------------------------------------------
# Independent substitution residuals
# ---------------------------------------------------------------------------


def transseries_residuals(spec: SystemSpec, ts: TransSeries) -> dict:
    """Coefficients of y' + (LAM - k + B/x) y - f0 - g(x, y) per level.

    Substitutes the truncated trans-series into the system directly (the
    nonlinearity expanded by graded multiplication, not via the Jacobian
    decomposition the recursion uses) and returns {k: list over j of
    n-vectors} for j = 0..order-1.  All entries vanish for a correctly
    computed trans-series; in exact mode they vanish identically.
    """
    exact = ts.exact
    zero = ring_zero(exact)
    n = spec.n
    kmax = ts.kmax
    N = min(fs.order for fs in ts.levels)
    lam = [ring_scalar(v, exact) for v in spec.lam]
    bd = [ring_scalar(v, exact) for v in spec.b_diag]
    r = ts.r if exact else ring_scalar(ts.r, exact=False)

    levels = {
        k: [list(ts.levels[k].coeffs[j]) if j < ts.levels[k].order else [zero] * n for j in range(N + 1)]
        for k in range(kmax + 1)
    }
    gy = graded_g_apply(spec, levels, kmax, N, exact) if spec.has_nonlinearity() else {}

    out = {}
    for k in range(kmax + 1):
        kk = ring_scalar(k, exact)
        offs = r * kk
        b = levels[k]
        gk = gy.get(k)
        rows = []
        for j in range(N):
            res = [zero] * n
            for i in range(n):
                res[i] = (lam[i] - kk) * b[j][i]
            if j >= 1:
                w = offs + ring_scalar(j - 1, exact)
                for i in range(n):
                    res[i] = res[i] - (w - bd[i]) * b[j - 1][i]
            if k == 0:
                fv = spec.f0_coeffs.get(j)
                if fv is not None:
                    for i in range(n):
                        res[i] = res[i] - ring_scalar(fv[i], exact)
            if gk is not None:
                for i in range(n):
                    if gk[j][i]:
                        res[i] = res[i] - gk[j][i]
            rows.append(res)
        out[k] = rows
    return out


def max_residual_norm(residuals: dict) -> float:
    """Largest |entry| across a transseries_residuals table (float collapse)."""
    worst = 0.0
    for rows in residuals.values():
        for vec in rows:
            for c in vec:
                worst = max(worst, abs(to_float_complex(c)))
    return worst
