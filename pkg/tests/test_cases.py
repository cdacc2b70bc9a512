"""Shipped cases: self-validation, oracle identities, config round trips."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from borelsum.cases import (
    build_case,
    builtin_cases,
    case_from_dict,
    case_to_dict,
    load_case,
    validate_case,
)
from borelsum.systems import system_to_dict

from conftest import rel_err

CASES_DIR = Path(__file__).resolve().parent.parent / "cases"


def test_builtins_self_validate():
    for name in builtin_cases():
        assert validate_case(build_case(name)) == []


def test_exact_stokes_constant_is_linear_in_eps():
    for eps in (0.05, 0.1, 0.2):
        case = build_case("eqpert", eps=eps)
        assert abs(case.s_beta - (-2j * eps * math.sqrt(math.pi))) < 1e-15


def test_branch_jump_equals_stokes_times_shifted_level(eqpert_case):
    # (Y_0^- - Y_0^+)(p) = S Y_1(p - 1) on (1, 2): the defining jump
    p = np.linspace(1.05, 1.9, 40)
    jump = eqpert_case.borel_level(0, p, -1) - eqpert_case.borel_level(0, p, +1)
    want = eqpert_case.s_beta * eqpert_case.borel_level(1, p - 1.0)
    assert rel_err(jump, want) < 1e-13


def test_sides_merge_below_the_branch_point(eqpert_case):
    p = np.linspace(0.05, 0.9, 20)
    up = eqpert_case.borel_level(0, p, +1)
    dn = eqpert_case.borel_level(0, p, -1)
    assert np.max(np.abs(up - dn)) < 1e-15
    assert np.max(np.abs(up.imag)) < 1e-15


def test_solution_satisfies_the_equation(eqpert_case):
    # fourth-order stencil residual of y' = f0 - y - y/(2x) + nothing
    spec = eqpert_case.spec
    h = 1e-3
    for x in (3.0, 5.0, 7.5):
        y = eqpert_case.solution(x, 0.4)
        dy = (
            8 * (eqpert_case.solution(x + h, 0.4) - eqpert_case.solution(x - h, 0.4))
            - (eqpert_case.solution(x + 2 * h, 0.4) - eqpert_case.solution(x - 2 * h, 0.4))
        ) / (12 * h)
        f0 = sum(c[0] * x**-m for m, c in spec.f0_coeffs.items())
        rhs = f0 - y - spec.beta * y / x
        assert abs(dy - rhs) < 1e-9


class TestConfigFiles:
    def test_shipped_files_match_builders(self):
        for name in builtin_cases():
            doc = json.loads((CASES_DIR / f"{name}.json").read_text())
            assert doc == case_to_dict(build_case(name))

    def test_round_trip_keeps_oracles(self, eqpert_case):
        again = case_from_dict(case_to_dict(eqpert_case))
        assert again.has_oracle
        assert again.spec == eqpert_case.spec
        assert again.s_beta == eqpert_case.s_beta

    def test_embedded_system_is_cross_checked(self, eqpert_case):
        doc = case_to_dict(eqpert_case)
        doc["system"]["b_diag"] = [[0.75, 0.0]]
        with pytest.raises(ValueError):
            case_from_dict(doc)

    def test_unknown_family_loads_without_oracles(self, exa1_case):
        doc = {
            "case": "mystery",
            "params": {},
            "system": system_to_dict(exa1_case.spec),
        }
        case = case_from_dict(doc)
        assert case.name == "mystery"
        assert not case.has_oracle
        with pytest.raises(KeyError):
            case.solution(4.0, 0.0)

    def test_load_by_name_from_search_dir(self):
        case = load_case("eqpert", search=(CASES_DIR,))
        assert case.has_oracle
        assert case.params["eps"] == 0.1

    def test_load_missing_name_raises(self):
        with pytest.raises(FileNotFoundError):
            load_case("nosuchcase", search=(CASES_DIR,))

    def test_parameter_override_builds_fresh_case(self):
        case = build_case("eqpert", eps=0.2)
        assert case.params["eps"] == 0.2
        assert abs(case.spec.f0_coeffs[1][0] - 1.2) < 1e-15
