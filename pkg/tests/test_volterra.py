"""Marching the convolution equations along rays: exact cases, families."""

import math

import numpy as np

from borelsum.mesh import build_graded_mesh
from borelsum.pipeline import PipelineSettings, solve_case
from borelsum.transseries import compute_transseries
from borelsum.volterra import solve_branch_family, solve_levels_ray

from conftest import rel_err


class TestConstantCase:
    def test_level0_is_identically_one(self, exa1_run):
        for fam in (exa1_run.plus, exa1_run.minus):
            g = fam.levels[0]
            err = np.max(np.abs(g.values[g.valid_mask, 0] - 1.0))
            assert err < 1e-10

    def test_level1_matches_power_law(self, exa1_run):
        g = exa1_run.plus.levels[1]
        t = exa1_run.mesh.nodes
        sel = g.valid_mask & (t > 0.01)
        want = t[sel] ** -0.5 / math.sqrt(math.pi)
        assert rel_err(g.values[sel, 0], want) < 1e-8

    def test_level2_vanishes(self, exa1_run):
        g = exa1_run.plus.levels[2]
        assert np.max(np.abs(g.values[g.valid_mask, 0])) < 1e-10

    def test_extrapolation_errors_reported_per_level(self, exa1_run):
        err = exa1_run.plus.extrapolation_error
        assert sorted(err) == [0, 1, 2]
        assert all(v < 1e-8 for v in err.values())


class TestPerturbedCase:
    def test_lateral_branches_match_closed_form(self, eqpert_run, eqpert_case):
        t = eqpert_run.mesh.nodes
        for side, fam in ((+1, eqpert_run.plus), (-1, eqpert_run.minus)):
            g = fam.levels[0]
            sel = g.valid_mask & (t > 0.02)
            want = eqpert_case.borel_level(0, t[sel], side)
            assert rel_err(g.values[sel, 0], want) < 1e-6, side

    def test_branch_point_detected_at_one(self, eqpert_run):
        g = eqpert_run.plus.levels[0]
        locs = {s.loc: s for s in g.branch_points()}
        assert 1.0 in locs
        s = locs[1.0]
        assert s.kind == "branch"
        assert s.margin > 0
        assert abs(complex(s.exponent).real - (-0.5)) < 0.05

    def test_level0_real_on_the_axis_before_the_cut(self, eqpert_run):
        g = eqpert_run.plus.levels[0]
        t = eqpert_run.mesh.nodes
        sel = g.valid_mask & (t < 0.95)
        assert np.max(np.abs(g.values[sel, 0].imag)) < 1e-9


def test_family_solve_is_deterministic(exa1_case):
    ts = compute_transseries(exa1_case.spec, kmax=1, order=10)
    mesh = build_graded_mesh(2.5, q=8)
    a = solve_branch_family(exa1_case.spec, mesh, ts, +1, kmax=1)
    b = solve_branch_family(exa1_case.spec, mesh, ts, +1, kmax=1)
    for k in (0, 1):
        assert np.array_equal(a.levels[k].values, b.levels[k].values)


def test_off_axis_ray_has_no_singularity(exa1_case):
    ts = compute_transseries(exa1_case.spec, kmax=1, order=10)
    mesh = build_graded_mesh(2.5, q=8)
    levels, info = solve_levels_ray(exa1_case.spec, mesh, 0.3, ts, kmax=1)
    g = levels[0]
    assert np.max(np.abs(g.values[g.valid_mask, 0] - 1.0)) < 1e-10
    assert not g.branch_points()


def test_smaller_delta_family_agrees_with_default(eqpert_case):
    # the Richardson limit should be stable against the delta ladder choice
    ts = compute_transseries(eqpert_case.spec, kmax=1, order=12)
    mesh = build_graded_mesh(2.2, q=10)
    base = solve_branch_family(eqpert_case.spec, mesh, ts, +1, kmax=1)
    finer = solve_branch_family(
        eqpert_case.spec, mesh, ts, +1, kmax=1, delta0=5e-4
    )
    g0, g1 = base.levels[0], finer.levels[0]
    sel = g0.valid_mask & g1.valid_mask & (mesh.nodes > 0.02)
    assert rel_err(g0.values[sel, 0], g1.values[sel, 0]) < 1e-7
