"""Formal layer: coefficient recursions against symbolic solves, exactness."""

from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from borelsum.systems import SystemSpec
from borelsum.transseries import (
    ResonanceError,
    compute_transseries,
    compute_y0_series,
    max_residual_norm,
    transseries_residuals,
)

QUADRATIC = SystemSpec(
    n=1,
    lam=(1.0,),
    b_diag=(0.5,),
    f0_coeffs={2: (1.0,)},
    g_table={(0, (2,)): (0.25,)},
)


def test_exa1_levels_are_the_known_closed_forms(exa1_case):
    ts = compute_transseries(exa1_case.spec, kmax=2, order=10)
    y0, y1, y2 = ts.levels
    # y_0 = 1/x: single coefficient at x^-1
    assert abs(y0.coeffs[1][0] - 1) < 1e-15
    assert max(abs(c[0]) for j, c in enumerate(y0.coeffs) if j != 1) < 1e-15
    # y_1 = x^-1/2 on the nose, exponent step r = beta
    assert abs(ts.r - 0.5) < 1e-15
    assert abs(y1.offset_complex() - 0.5) < 1e-15
    assert abs(y1.coeffs[0][0] - 1) < 1e-15
    assert max(abs(c[0]) for c in y1.coeffs[1:]) < 1e-15
    assert max(abs(c[0]) for c in y2.coeffs) < 1e-15


def sympy_y0_coeffs(nmax: int) -> list:
    """Power-by-power symbolic solve of the quadratic test equation.

    y' = x^-2 - y - y/(2x) + y^2/4 admits a unique formal solution
    sum_{j>=2} a_j x^-j; each a_j comes from one linear equation.
    """
    x = sp.symbols("x", positive=True)
    syms = sp.symbols(f"a2:{nmax + 1}")
    y = sum(s * x ** -(j + 2) for j, s in enumerate(syms))
    resid = sp.expand(
        y.diff(x) - (x**-2 - y - y / (2 * x) + y**2 / 4)
    )
    poly = sp.Poly(resid.subs(x, 1 / x), x)
    known = {}
    for j in range(2, nmax + 1):
        eq = poly.coeff_monomial(x**j).subs(known)
        (sol,) = sp.linsolve([eq], syms[j - 2])
        known[syms[j - 2]] = sol[0]
    return [known[s] for s in syms]


def test_y0_matches_independent_symbolic_solve():
    nmax = 8
    series = compute_y0_series(QUADRATIC, order=nmax + 1, exact=True)
    want = sympy_y0_coeffs(nmax)
    assert series.offset_complex() == 0
    got = [series.coeffs[j][0] for j in range(2, nmax + 1)]
    for g, w in zip(got, want):
        w = sp.Rational(w)
        assert g.re == Fraction(int(w.p), int(w.q)) and g.im == 0
    assert series.coeffs[0][0] == 0 and series.coeffs[1][0] == 0


class TestExactMode:
    def test_residuals_vanish_identically_exa1(self, exa1_case):
        ts = compute_transseries(exa1_case.spec, kmax=3, order=8, exact=True)
        res = transseries_residuals(exa1_case.spec, ts)
        for k, rows in res.items():
            for vec in rows:
                assert all(c == 0 for c in vec), f"level {k} residual {vec}"

    def test_residuals_vanish_identically_quadratic(self):
        ts = compute_transseries(QUADRATIC, kmax=3, order=8, exact=True)
        assert max_residual_norm(transseries_residuals(QUADRATIC, ts)) == 0

    def test_homogeneity_bit_exact(self):
        c = Fraction(3, 7)
        base = compute_transseries(QUADRATIC, kmax=3, order=8, exact=True)
        scaled = compute_transseries(
            QUADRATIC, kmax=3, order=8, exact=True, level_one_scale=c
        )
        for k, (lv_b, lv_s) in enumerate(zip(base.levels, scaled.levels)):
            factor = c**k
            for vb, vs in zip(lv_b.coeffs, lv_s.coeffs):
                assert vs[0] == factor * vb[0]

    def test_scaled_levels_still_solve_the_hierarchy(self):
        ts = compute_transseries(
            QUADRATIC, kmax=2, order=8, exact=True,
            level_one_scale=Fraction(-5, 3),
        )
        assert max_residual_norm(transseries_residuals(QUADRATIC, ts)) == 0


def test_float_mode_residuals_at_roundoff(eqpert_case):
    ts = compute_transseries(eqpert_case.spec, kmax=2, order=12)
    assert max_residual_norm(transseries_residuals(eqpert_case.spec, ts)) < 1e-12


def test_resonant_spectrum_raises():
    spec = SystemSpec(
        n=2, lam=(1.0, 2.0), b_diag=(0.5, 0.5),
        f0_coeffs={2: (1.0, 1.0)}, g_table={},
    )
    with pytest.raises(ResonanceError):
        compute_transseries(spec, kmax=2, order=6)


def test_bad_arguments_rejected(exa1_case):
    with pytest.raises(ValueError):
        compute_transseries(exa1_case.spec, kmax=0, order=8)
    with pytest.raises(ValueError):
        compute_transseries(exa1_case.spec, kmax=1, order=1)


@settings(max_examples=20, deadline=None)
@given(
    beta=st.fractions(min_value=Fraction(1, 8), max_value=1, max_denominator=8),
    c=st.fractions(min_value=-2, max_value=2, max_denominator=6),
    f2=st.fractions(min_value=-3, max_value=3, max_denominator=6),
)
def test_exact_residuals_vanish_for_random_quadratic_systems(beta, c, f2):
    spec = SystemSpec(
        n=1, lam=(1.0,), b_diag=(beta,),
        f0_coeffs={2: (f2,)},
        g_table={(0, (2,)): (c,)} if c else {},
    )
    ts = compute_transseries(spec, kmax=2, order=6, exact=True)
    assert max_residual_norm(transseries_residuals(spec, ts)) == 0
