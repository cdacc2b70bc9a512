"""Stokes data: jump vs fit estimators, resurgence bridges, the average."""

import cmath
import math

import numpy as np

from borelsum.grids import grid_eval
from borelsum.stokes import balanced_average, continue_across

from conftest import by_name, rel_err


class TestStokesConstant:
    def test_matches_exact_value(self, eqpert_run, eqpert_case):
        s = eqpert_run.s_beta
        assert abs(s - eqpert_case.s_beta) / abs(eqpert_case.s_beta) < 1e-6

    def test_estimators_agree(self, eqpert_run):
        rep = eqpert_run.stokes
        assert {"jump", "fit_left", "fit_right"} <= set(rep.estimates)
        assert rep.disagreement() < 1e-4

    def test_jump_estimator_is_stable_over_its_window(self, eqpert_run):
        assert eqpert_run.stokes.jump_spread < 1e-6

    def test_fitted_exponent(self, eqpert_run):
        rep = eqpert_run.stokes
        assert rep.exponent_expected == -0.5
        assert abs(rep.exponent_fitted - rep.exponent_expected) < 0.01

    def test_classical_normalization_factor(self, eqpert_run):
        rep = eqpert_run.stokes
        want = 2 * cmath.sin(math.pi * (1 - rep.beta)) * rep.s_beta / 1j
        assert abs(rep.s_classical - want) < 1e-15

    def test_zero_for_the_unperturbed_case(self, exa1_run):
        assert abs(exa1_run.s_beta) < 1e-9


class TestResurgenceIdentities:
    def test_every_identity_within_tolerance(self, eqpert_checks):
        for c in eqpert_checks:
            assert c.residual < c.tolerance, c.identity

    def test_level_jump_reconstructions_are_tight(self, eqpert_checks):
        for k in (1, 2):
            c = by_name(eqpert_checks, f"S^{k} Y_{k}")
            assert c.residual < 1e-10

    def test_full_branch_identity(self, eqpert_checks):
        c = by_name(eqpert_checks, "minus = plus + sum")
        assert c.residual < 1e-10
        assert c.interval[1] >= 2.9


class TestBalancedAverage:
    def test_midpoint_property(self, eqpert_checks):
        c = by_name(eqpert_checks, "(Y^+ + Y^-)/2")
        assert c.residual < 1e-10

    def test_reality(self, eqpert_checks):
        c = by_name(eqpert_checks, "Im Y^ba")
        assert c.residual < 1e-10

    def test_commutes_with_convolution(self, eqpert_checks):
        c = by_name(eqpert_checks, "(y*y)^ba")
        assert c.residual < 1e-6

    def test_naive_continuation_witness_is_large(self, eqpert_checks):
        c = by_name(eqpert_checks, "naive continuation")
        # residual = 10 tol / witness, so < 1 certifies witness >= 10 tol
        assert c.residual < 1.0

    def test_level_shift_weights(self, eqpert_run):
        # with kmax = 2, the average of level 0 adds the j = 1, 2 translates
        s = eqpert_run.s_beta
        ba = balanced_average(eqpert_run.plus.levels, s, kmax=2)
        t = eqpert_run.mesh.nodes
        plus = eqpert_run.plus.levels
        sel = ba.valid_mask & (t > 1.05) & (t < 1.9)
        direct = (
            plus[0].values[sel, 0]
            + 0.5 * s * grid_eval(plus[1], t[sel] - 1.0)[:, 0]
        )
        assert rel_err(ba.values[sel, 0], direct) < 1e-10


def test_single_crossing_continuation_jump(eqpert_run, eqpert_case):
    # crossing (1, 2) once from below: Y^{-+} - Y^+ = S Y_1(. - 1)
    plus = eqpert_run.plus.levels
    crossed = continue_across(plus, eqpert_run.s_beta, 0, 1)
    t = eqpert_run.mesh.nodes
    sel = crossed.valid_mask & (t > 1.05) & (t < 1.95)
    jump = crossed.values[sel, 0] - plus[0].values[sel, 0]
    want = eqpert_run.s_beta * eqpert_case.borel_level(1, t[sel] - 1.0)
    assert rel_err(jump, want) < 1e-8
