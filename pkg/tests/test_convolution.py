"""Convolution on graded meshes: algebra identities, order, closed forms."""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.special import beta as beta_fn

from borelsum.borel import BorelGerm
from borelsum.convolution import convolve
from borelsum.grids import BranchGrid, shift_heaviside
from borelsum.mesh import PanelMesh, build_graded_mesh

from conftest import rel_err


def uniform_mesh(pmax: float, npan: int, q: int) -> PanelMesh:
    edges = np.linspace(0.0, pmax, npan + 1)
    xr, wr = leggauss(q)
    nodes = np.empty(npan * q)
    weights = np.empty_like(nodes)
    for i in range(npan):
        a, b = edges[i], edges[i + 1]
        nodes[i * q : (i + 1) * q] = (a + b) / 2 + (b - a) / 2 * xr
        weights[i * q : (i + 1) * q] = (b - a) / 2 * wr
    return PanelMesh(edges=edges, q=q, nodes=nodes, gl_weights=weights)


def power_grid(mesh: PanelMesh, alpha: float, label: str = "f") -> BranchGrid:
    """The grid of p^alpha with its origin germ."""
    germ = BorelGerm(
        leading_exponent=complex(alpha),
        taylor=np.array([[1.0 + 0j]]),
        radius=np.inf,
        n=1,
    )
    return BranchGrid(
        mesh=mesh, phi=0.0, values=mesh.nodes.astype(complex) ** alpha,
        label=label, level=0, germ=germ, germ_cut=0.3,
    )


def smooth_grid(mesh: PanelMesh, fn, label: str = "f") -> BranchGrid:
    return BranchGrid(
        mesh=mesh, phi=0.0, values=fn(mesh.nodes).astype(complex),
        label=label, level=0,
    )


@pytest.fixture(scope="module")
def mesh():
    return build_graded_mesh(3.0, q=10)


def test_monomial_identity(mesh):
    p = power_grid(mesh, 1.0, "p")
    h = convolve(p, p)
    assert rel_err(h.values[:, 0], mesh.nodes**3 / 6) < 1e-12


def test_fractional_powers_give_beta_function(mesh):
    # p^{a-1} * p^{b-1} = B(a, b) p^{a+b-1}
    for a, b in ((0.5, 0.5), (0.5, 0.75), (0.3, 1.4)):
        f = power_grid(mesh, a - 1.0)
        g = power_grid(mesh, b - 1.0)
        h = convolve(f, g)
        exact = beta_fn(a, b) * mesh.nodes ** (a + b - 1)
        assert rel_err(h.values[:, 0], exact) < 1e-10, (a, b)


def test_unit_convolution_is_integration(mesh):
    one = power_grid(mesh, 0.0, "1")
    f = smooth_grid(mesh, np.exp, "e")
    h = convolve(one, f)
    assert rel_err(h.values[:, 0], np.exp(mesh.nodes) - 1) < 1e-12


def test_commutativity(mesh):
    f = power_grid(mesh, -0.5)
    g = smooth_grid(mesh, lambda t: np.cos(t) + 0.2 * t)
    sel = mesh.nodes > 1e-3
    assert rel_err(
        convolve(f, g).values[sel, 0], convolve(g, f).values[sel, 0]
    ) < 1e-11


def test_bilinearity(mesh):
    f = smooth_grid(mesh, np.exp)
    g = smooth_grid(mesh, lambda t: 1 / (1 + t))
    lhs = convolve(
        BranchGrid(mesh=mesh, phi=0.0, values=2.0 * f.values, label="2f", level=0),
        g,
    )
    assert rel_err(lhs.values[:, 0], 2.0 * convolve(f, g).values[:, 0]) < 1e-13


def test_shift_identity(mesh):
    one = power_grid(mesh, 0.0, "1")
    g1 = shift_heaviside(one, 1)
    h = convolve(g1, g1)
    exact = np.where(mesh.nodes > 2, mesh.nodes - 2, 0.0)
    assert float(np.max(np.abs(h.values[:, 0] - exact))) < 1e-12


def test_error_drops_at_advertised_order_under_halving():
    # with q nodes per panel the factor interpolation limits the composite
    # rule to order q: halving panels must shrink the error by about 2^q
    q = 5
    errs = []
    for npan in (4, 8, 16):
        m = uniform_mesh(2.0, npan, q)
        f = smooth_grid(m, np.exp)
        h = convolve(f, f)
        exact = m.nodes * np.exp(m.nodes)
        errs.append(rel_err(h.values[:, 0], exact))
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[1] > 2 ** (q - 2)
    assert errs[1] / errs[2] > 2 ** (q - 2)


def test_solved_level0_square_matches_closed_form(eqpert_run, eqpert_case):
    y0 = eqpert_run.plus.levels[0]
    h = convolve(y0, y0, label="Y0*Y0")
    nodes = eqpert_run.mesh.nodes
    # the closed form covers (0, 2); past p = 2 a second sheet opens up
    sel = h.valid_mask & (nodes > 0.01) & (nodes < 1.99)
    want = eqpert_case.conv00(nodes[sel])
    got = h.values[sel, 0]
    assert rel_err(got, want) < 1e-6


def test_thread_count_invariance(mesh, monkeypatch):
    f = power_grid(mesh, -0.5)
    g = smooth_grid(mesh, lambda t: np.exp(-t) + t)
    serial = convolve(f, g).values
    monkeypatch.setenv("RESURGENCE_THREADS", "3")
    threaded = convolve(f, g).values
    assert np.array_equal(serial, threaded)
