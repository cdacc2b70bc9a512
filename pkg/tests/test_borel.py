"""Borel transform of formal series: factorials out, radius estimates."""

import math

import numpy as np
import pytest

from borelsum.borel import (
    GermEvalError,
    borel_transform,
    germ_eval,
    germ_eval_many,
)
from borelsum.transseries import FormalSeries


def series_from(coeffs, offset=0.0):
    return FormalSeries(
        leading_offset=offset,
        coeffs=tuple((complex(c),) for c in coeffs),
        n=1,
    )


def test_monomial_rule():
    # x^-1 -> 1, x^-3 -> p^2/2
    germ = borel_transform(series_from([0, 1]))
    assert germ.leading_exponent == 0
    assert germ.taylor[0, 0] == 1
    germ = borel_transform(series_from([0, 0, 0, 1]))
    assert abs(germ.taylor[2, 0] - 0.5) < 1e-15


def test_fractional_offset_picks_up_gamma():
    # x^-1/2 -> p^-1/2 / Gamma(1/2)
    germ = borel_transform(series_from([1], offset=0.5))
    assert abs(complex(germ.leading_exponent) - (-0.5)) < 1e-15
    assert abs(germ.taylor[0, 0] - 1 / math.sqrt(math.pi)) < 1e-15


def test_geometric_series_transforms_to_exponential():
    # sum_j x^-(j+1) -> sum_j p^j / j! = e^p; the advisory radius of the
    # truncated germ grows with the retained order (the function is entire)
    order = 18
    series = series_from([0] + [1] * order)
    germ = borel_transform(series)
    assert germ.radius > order / 2
    for p in (0.3, 1.0, 2.5, 1.0 + 0.5j):
        val, bound = germ_eval(germ, p)
        assert abs(val[0] - np.exp(p)) < 1e-9 + bound


def test_gevrey_series_has_unit_radius():
    # sum_j (-1)^j j! x^-(j+1) -> 1/(1+p): the factorials cancel exactly
    order = 40
    series = series_from([0] + [(-1) ** j * math.factorial(j) for j in range(order)])
    germ = borel_transform(series)
    assert abs(germ.radius - 1.0) < 0.05
    val, _ = germ_eval(germ, 0.25)
    assert abs(val[0] - 1 / 1.25) < 1e-12


def test_eval_refuses_points_outside_trusted_disk():
    series = series_from([0] + [(-1) ** j * math.factorial(j) for j in range(40)])
    germ = borel_transform(series)
    with pytest.raises(GermEvalError):
        germ_eval(germ, 0.9)


def test_constant_term_is_rejected():
    with pytest.raises(ValueError):
        borel_transform(series_from([1.0, 2.0]))


def test_eval_many_matches_scalar_eval():
    series = series_from([0, 1, 1, 0.5, -0.25])
    germ = borel_transform(series)
    ps = np.array([0.05, 0.1, 0.2])
    block = germ_eval_many(germ, ps)
    for i, p in enumerate(ps):
        val, _ = germ_eval(germ, complex(p))
        assert abs(block[i, 0] - val[0]) < 1e-15


def test_transform_is_linear():
    s1 = series_from([0, 1, 2, 3])
    s2 = series_from([0, -1, 0.5, 4])
    both = series_from([0, 0, 2.5, 7])
    g = borel_transform(both)
    g1 = borel_transform(s1)
    g2 = borel_transform(s2)
    np.testing.assert_allclose(g.taylor, g1.taylor + g2.taylor, atol=1e-15)


def test_levels_of_exa1_transform_to_known_germs(exa1_case):
    from borelsum.transseries import compute_transseries

    ts = compute_transseries(exa1_case.spec, kmax=2, order=10)
    g0 = borel_transform(ts.levels[0])
    assert abs(g0.taylor[0, 0] - 1.0) < 1e-15  # Y_0 = 1
    g1 = borel_transform(ts.levels[1])
    # Y_1 = p^-1/2 / sqrt(pi)
    assert abs(complex(g1.leading_exponent) + 0.5) < 1e-15
    assert abs(g1.taylor[0, 0] - 1 / math.sqrt(math.pi)) < 1e-14
