"""Laplace resummation: exact transforms, the ODE oracle, C extraction."""

import math

import numpy as np
from scipy.special import erf

from borelsum.laplace import (
    ResumSolution,
    extract_C,
    fd_residual,
    laplace_ray,
    laplace_tail_bound,
    ode_oracle,
    sum_transseries,
)

from conftest import rel_err


def test_transform_of_one_is_truncated_inverse(exa1_run):
    g = exa1_run.plus.levels[0]  # identically 1
    xs = np.array([2.0, 3.5, 5.0, 8.0])
    got = laplace_ray(g, xs)[:, 0]
    pmax = exa1_run.mesh.pmax
    want = (1.0 - np.exp(-xs * pmax)) / xs
    assert rel_err(got, want) < 1e-11


def test_transform_of_inverse_sqrt(exa1_run):
    # Y_1 = p^-1/2/sqrt(pi): the truncated transform is erf(sqrt(x pmax))/sqrt(x)
    g = exa1_run.plus.levels[1]
    xs = np.array([2.0, 4.0, 6.0, 9.0])
    got = laplace_ray(g, xs)[:, 0]
    want = erf(np.sqrt(xs * exa1_run.mesh.pmax)) / np.sqrt(xs)
    assert rel_err(got, want) < 1e-9


def test_tail_bound_controls_truncation(exa1_run):
    g = exa1_run.plus.levels[1]
    xs = np.array([3.0, 5.0, 8.0])
    gap = np.abs(
        1 / np.sqrt(xs) - laplace_ray(g, xs)[:, 0]
    )
    bound = laplace_tail_bound(g, xs)
    # the gap is truncation tail plus quadrature noise; the bound covers the
    # former (with |Y| frozen at the last valid node), the floor the latter
    assert np.all(gap <= 3.0 * bound + 1e-11)
    assert np.all(bound < 1e-5)


def test_resummed_transseries_is_the_exact_solution(exa1_run_deep, exa1_case):
    levels = exa1_run_deep.ba_levels
    xs = np.linspace(3.0, 9.0, 13)
    for C in (0.0, 1.0, -0.4):
        got = sum_transseries(levels, C, xs)[:, 0]
        want = exa1_case.solution(xs, C)
        assert rel_err(got, want) < 1e-9, C


def test_resum_solution_callable_shapes(exa1_run):
    sol = ResumSolution(levels=exa1_run.ba_levels, C=0.3)
    xs = np.array([4.0, 5.0])
    block = sol(xs)
    assert block.shape == (2, 1)
    single = sol(4.0)  # scalar x -> component vector
    assert single.shape == (1,)
    assert abs(single[0] - block[0, 0]) < 1e-15


def test_ode_oracle_reproduces_closed_solution(eqpert_case):
    xs = np.linspace(4.0, 8.0, 9)
    C = 0.6
    y0 = np.array([eqpert_case.solution(8.0, C)], dtype=complex)
    got = ode_oracle(eqpert_case.spec, 8.0, y0, xs)[:, 0]
    want = eqpert_case.solution(xs, C)
    assert rel_err(got, want) < 1e-10


def test_ode_oracle_output_order_matches_input(eqpert_case):
    xs = np.array([6.0, 4.5, 7.0])
    y0 = np.array([eqpert_case.solution(8.0, 0.0)], dtype=complex)
    got = ode_oracle(eqpert_case.spec, 8.0, y0, xs)[:, 0]
    want = eqpert_case.solution(xs, 0.0)
    assert rel_err(got, want) < 1e-10


def test_fd_residual_vanishes_on_exact_solution(eqpert_case):
    def exact(xs):
        return np.atleast_2d(eqpert_case.solution(np.asarray(xs), 0.8)).T

    rep = fd_residual(eqpert_case.spec, exact, (4.0, 8.0))
    assert rep.relative < 1e-9


def test_extract_constant_round_trip(exa1_run):
    xs = np.linspace(4.0, 8.0, 9)
    for C in (0.37, -1.2 + 0.3j):
        y = ResumSolution(levels=exa1_run.ba_levels, C=C)(xs)
        got, misfit = extract_C(exa1_run.ba_levels, xs, y)
        assert abs(got - C) < 1e-8
        assert misfit < 1e-10


def test_transform_respects_thread_setting(exa1_run, monkeypatch):
    g = exa1_run.plus.levels[0]
    xs = np.linspace(3.0, 7.0, 5)
    serial = laplace_ray(g, xs)
    monkeypatch.setenv("RESURGENCE_THREADS", "4")
    threaded = laplace_ray(g, xs)
    assert np.array_equal(serial, threaded)
