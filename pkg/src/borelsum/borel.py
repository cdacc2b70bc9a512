"""Term-by-term Borel transform of formal series into germs at p = 0.

Convention (the standard inverse Laplace): a monomial x^{-s} with Re(s) > 0
maps to p^{s-1} / Gamma(s).  A series x^{-r} sum_j c_j x^{-j} therefore maps
to the germ p^{r-1} sum_j (c_j / Gamma(r+j)) p^j.  This is the convention the
Laplace round-trip test pins down; see ERRATA.md for the places the source
material's displayed divisors deviate from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .transseries import FormalSeries


class GermEvalError(ValueError):
    """Evaluation requested outside the germ's trusted disk."""

    def __init__(self, message: str, radius: float):
        super().__init__(message)
        self.radius = radius


@dataclass(frozen=True)
class BorelGerm:
    """Truncated Taylor germ p^{leading_exponent} sum_j taylor[j] p^j.

    ``taylor`` is a (terms, n) complex array; ``radius`` is the estimated
    radius of convergence (ratio test over the trailing quarter of the
    coefficients, root test as fallback, inf for polynomial germs).  The
    estimate is advisory; ``germ_eval`` trusts |p| < safety_fraction * radius.
    """

    leading_exponent: complex
    taylor: np.ndarray
    radius: float
    n: int

    @property
    def terms(self) -> int:
        return self.taylor.shape[0]

    def component(self, h: int) -> "BorelGerm":
        return BorelGerm(
            leading_exponent=self.leading_exponent,
            taylor=self.taylor[:, h : h + 1].copy(),
            radius=self.radius,
            n=1,
        )


def _estimate_radius(taylor: np.ndarray) -> float:
    mags = np.max(np.abs(taylor), axis=1)
    nz = np.nonzero(mags > 0)[0]
    if len(nz) < 4:
        return math.inf
    # Polynomial germ: trailing coefficients all zero.
    if nz[-1] < len(mags) - max(2, len(mags) // 4):
        return math.inf
    start = max(nz[0], len(mags) - max(4, len(mags) // 4))
    ratios = []
    for j in range(start, len(mags) - 1):
        if mags[j] > 0 and mags[j + 1] > 0:
            ratios.append(mags[j] / mags[j + 1])
    if len(ratios) >= 2:
        return float(np.median(ratios))
    # Root test fallback.
    j = int(nz[-1])
    return float(mags[j] ** (-1.0 / j)) if j > 0 else math.inf


def borel_transform(series: FormalSeries) -> BorelGerm:
    """Borel transform of a formal series, x^{-s} -> p^{s-1}/Gamma(s).

    For leading offset 0 the (vanishing) constant term is skipped and the
    germ grid starts at p^0; for fractional offset r the germ carries the
    leading exponent r - 1.  Linear in the input by construction.
    """
    if series.order == 0:
        raise ValueError("cannot transform an empty series")
    r = series.offset_complex()
    coeffs = np.array(series.coeffs_complex(), dtype=complex)
    if r == 0:
        if np.any(coeffs[0] != 0):
            raise ValueError(
                "series has a constant term; its Borel transform is not a germ"
            )
        base = coeffs[1:]
        exponent = 0.0 + 0.0j
        orders = np.arange(1, len(coeffs), dtype=float)
    else:
        base = coeffs
        exponent = r - 1
        orders = r + np.arange(len(coeffs))
    if len(base) == 0:
        base = np.zeros((1, series.n), dtype=complex)
        orders = np.array([r if r != 0 else 1.0])
    taylor = base / _gamma(orders)[:, None]
    return BorelGerm(
        leading_exponent=exponent,
        taylor=taylor,
        radius=_estimate_radius(taylor),
        n=series.n,
    )


def germ_eval(
    germ: BorelGerm,
    p: complex,
    safety_fraction: float = 0.5,
) -> tuple[np.ndarray, float]:
    """Evaluate the truncated germ at p inside its trusted disk.

    Returns (value, bound) where bound is the magnitude of the last retained
    term, the reported truncation-error estimate.  Raises GermEvalError when
    |p| >= safety_fraction * radius.
    """
    if math.isfinite(germ.radius) and abs(p) >= safety_fraction * germ.radius:
        raise GermEvalError(
            f"|p| = {abs(p):.6g} outside the trusted disk "
            f"(radius estimate {germ.radius:.6g}, safety {safety_fraction})",
            radius=germ.radius,
        )
    a = complex(germ.leading_exponent)
    if p == 0:
        if a == 0:
            return germ.taylor[0].copy(), 0.0
        if a.real > 0:
            return np.zeros(germ.n, dtype=complex), 0.0
        raise GermEvalError("germ is singular at p = 0", radius=germ.radius)
    powers = np.power(p, np.arange(germ.terms))
    value = (germ.taylor * powers[:, None]).sum(axis=0)
    prefac = p**a if a != 0 else 1.0
    bound = float(np.max(np.abs(germ.taylor[-1])) * abs(powers[-1]) * abs(prefac))
    return prefac * value, bound


def germ_eval_many(germ: BorelGerm, p: np.ndarray, safety_fraction: float = 0.5) -> np.ndarray:
    """Vectorized germ evaluation over an array of points (no p = 0 entries)."""
    p = np.asarray(p, dtype=complex)
    out = np.empty(p.shape + (germ.n,), dtype=complex)
    for idx in np.ndindex(p.shape):
        out[idx], _ = germ_eval(germ, complex(p[idx]), safety_fraction)
    return out
