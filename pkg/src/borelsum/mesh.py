"""Graded panel meshes and product-integration quadrature rules.

A mesh covers [0, pmax] with panels geometrically refined toward 0 and each
positive integer below pmax (where the Borel-plane functions are singular or,
on rotated rays, merely steep).  Each panel carries q Gauss-Legendre nodes;
panel values are understood as the degree q-1 interpolant, evaluated by the
barycentric formula.

Weighted rules handle algebraic endpoint factors: quadrature over [a, b]
against (u-a)^{gL} (b-u)^{gR} times a smooth factor comes from Gauss-Jacobi
nodes, which keeps the advertised composite order against singular weights.
Exponents must be real and > -1 (complex beta would need modified moments;
that is outside the tested envelope and raises).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def _leggauss(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


@lru_cache(maxsize=None)
def _bary_weights(q: int) -> np.ndarray:
    """Barycentric weights for the degree q-1 Legendre-node interpolant."""
    x, _ = _leggauss(q)
    w = np.empty(q)
    for j in range(q):
        w[j] = 1.0 / np.prod(x[j] - np.delete(x, j))
    return w


@lru_cache(maxsize=None)
def jacobi_rule(q: int, g_left: float, g_right: float):
    """Nodes/weights on [0,1] for weight u^{g_left} (1-u)^{g_right}.

    Exact for polynomial smooth factors up to degree 2q-1.  g = 0 on both
    sides reduces to Gauss-Legendre.
    """
    if g_left <= -1 or g_right <= -1:
        raise ValueError("weight exponents must be > -1 for integrability")
    if g_left == 0.0 and g_right == 0.0:
        x, w = _leggauss(q)
        return (x + 1.0) / 2.0, w / 2.0
    # roots_jacobi weight is (1-x)^alpha (1+x)^beta on [-1,1]; u=(1+x)/2.
    x, w = roots_jacobi(q, g_right, g_left)
    u = (x + 1.0) / 2.0
    scale = 2.0 ** (-(g_left + g_right + 1.0))
    return u, w * scale


def weighted_segment(a: float, b: float, q: int, g_left: float = 0.0, g_right: float = 0.0):
    """Quadrature points/weights for int_a^b (u-a)^{gL} (b-u)^{gR} F(u) du.

    Returns (points, weights) such that the integral is sum(weights * F(points)).
    The singular factors are part of the WEIGHTS; F is only the smooth part.
    """
    if not (b > a):
        raise ValueError(f"empty segment [{a}, {b}]")
    u, w = jacobi_rule(q, float(g_left), float(g_right))
    h = b - a
    return a + h * u, w * h ** (g_left + g_right + 1.0)


@dataclass(frozen=True)
class PanelMesh:
    """Panels edges[i]..edges[i+1], each holding q Gauss-Legendre nodes."""

    edges: np.ndarray
    q: int
    nodes: np.ndarray
    gl_weights: np.ndarray  # per-node quadrature weights (plain GL scaling)

    @property
    def pmax(self) -> float:
        return float(self.edges[-1])

    @property
    def npanels(self) -> int:
        return len(self.edges) - 1

    @property
    def nnodes(self) -> int:
        return len(self.nodes)

    def panel_slice(self, i: int) -> slice:
        return slice(i * self.q, (i + 1) * self.q)

    def panel_of(self, t: np.ndarray) -> np.ndarray:
        """Index of the panel containing each query point (clipped to range)."""
        idx = np.searchsorted(self.edges, t, side="right") - 1
        return np.clip(idx, 0, self.npanels - 1)

    def interpolate(self, values: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Barycentric evaluation of panel interpolants at query points.

        ``values`` is (nnodes,) or (nnodes, n).  Accurate wherever the
        underlying function is smooth on the containing panel; callers handle
        singular neighborhoods through local models instead.
        """
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        vals2d = values if values.ndim == 2 else values[:, None]
        xref, _ = _leggauss(self.q)
        bw = _bary_weights(self.q)
        panel = self.panel_of(flat)
        a = self.edges[panel]
        b = self.edges[panel + 1]
        xi = (2.0 * flat - (a + b)) / (b - a)
        pv = vals2d.reshape(self.npanels, self.q, -1)[panel]  # (m, q, n)
        diff = xi[:, None] - xref[None, :]
        hit = diff == 0.0
        diff_safe = np.where(hit, 1.0, diff)
        c = bw[None, :] / diff_safe
        num = np.einsum("mq,mqn->mn", c, pv)
        den = c.sum(axis=1)
        out = num / den[:, None]
        rows = hit.any(axis=1)
        if rows.any():
            cols = hit[rows].argmax(axis=1)
            out[rows] = pv[rows, cols]
        out = out.reshape(t.shape + (vals2d.shape[1],)).astype(vals2d.dtype)
        return out if values.ndim == 2 else out[..., 0]

    def refinement_ladder(self, loc: float) -> np.ndarray:
        """Distances of mesh edges from ``loc`` (used to refine mapped points)."""
        d = np.abs(self.edges - loc)
        d = np.unique(d[(d > 0) & (d < 0.6)])
        return d


def build_graded_mesh(
    pmax: float,
    q: int = 10,
    ratio: float = 0.65,
    min_panel: float = 4e-6,
    special: tuple[float, ...] | None = None,
) -> PanelMesh:
    """Composite mesh on [0, pmax], graded toward 0 and interior integers.

    Consecutive special points bound subintervals; within each, panel edges
    form two geometric ladders (factor ``ratio``) meeting at the midpoint and
    terminating at panels of roughly ``min_panel`` next to the special points.
    """
    if pmax <= 0:
        raise ValueError("pmax must be positive")
    if not (0 < ratio < 1):
        raise ValueError("grading ratio must lie in (0,1)")
    if special is None:
        special = tuple(float(j) for j in range(int(math.ceil(pmax)) + 1) if j <= pmax)
    pts = sorted(set([0.0, float(pmax)] + [float(s) for s in special if 0 <= s <= pmax]))
    edges = [0.0]
    for a, b in zip(pts, pts[1:]):
        h = (b - a) / 2.0
        levels = max(1, int(math.ceil(math.log(min_panel / h) / math.log(ratio))))
        ladder = [h * ratio**i for i in range(levels)]
        left = [a + d for d in reversed(ladder)]
        right = [b - d for d in ladder]
        edges.extend(left[1:] if left and left[0] <= a else left)
        edges.extend(right)
        edges.append(b)
    edges = np.unique(np.array(edges))
    xref, wref = _leggauss(q)
    nodes = np.empty((len(edges) - 1) * q)
    weights = np.empty_like(nodes)
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        nodes[i * q : (i + 1) * q] = (a + b) / 2.0 + (b - a) / 2.0 * xref
        weights[i * q : (i + 1) * q] = (b - a) / 2.0 * wref
    return PanelMesh(edges=edges, q=q, nodes=nodes, gl_weights=weights)
