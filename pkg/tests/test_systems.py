"""System definitions: validation rules, serialization round trips."""

import json

import pytest
from hypothesis import given, strategies as st

from borelsum.systems import (
    SystemSpec,
    SystemValidationError,
    emit_system,
    load_system,
    system_from_dict,
    system_to_dict,
    validate_system,
)


def make_spec(**over):
    base = dict(
        n=1,
        lam=(1.0,),
        b_diag=(0.5,),
        f0_coeffs={2: (1.0,)},
        g_table={},
    )
    base.update(over)
    return SystemSpec(**base)


class TestValidation:
    def test_valid_spec_has_no_violations(self):
        assert validate_system(make_spec()) == []

    def test_lambda_one_must_be_unity(self):
        bad = make_spec(lam=(2.0,))
        assert any("lambda[0]" in v for v in validate_system(bad))

    def test_beta_window(self):
        for beta in (0.0, -0.25, 1.5):
            bad = make_spec(b_diag=(beta,))
            assert any("Re(beta)" in v for v in validate_system(bad))
        # the closed end of the window is allowed
        assert validate_system(make_spec(b_diag=(1.0,))) == []

    def test_dimension_mismatch_rejected_at_construction(self):
        with pytest.raises(SystemValidationError) as err:
            make_spec(n=2)
        assert any("expected n=2" in v for v in err.value.violations)

    def test_order_one_forcing_needs_flag(self):
        bad = make_spec(f0_coeffs={1: (1.0,)})
        assert any("m=1" in v for v in validate_system(bad))
        ok = make_spec(f0_coeffs={1: (1.0,)}, allow_order_one_forcing=True)
        assert validate_system(ok) == []

    def test_nonlinearity_must_be_quadratic_or_higher(self):
        bad = make_spec(g_table={(0, (1,)): (1.0,)})
        assert any("|l|" in v or "l=" in v for v in validate_system(bad))

    def test_resonant_angles_rejected(self):
        bad = SystemSpec(
            n=2, lam=(1.0, 2.0), b_diag=(0.5, 0.5),
            f0_coeffs={2: (1.0, 1.0)}, g_table={},
        )
        assert any("arg(lambda)" in v for v in validate_system(bad))

    def test_multiple_violations_all_reported(self):
        bad = make_spec(lam=(2.0,), b_diag=(3.0,), f0_coeffs={1: (1.0,)})
        msgs = validate_system(bad)
        assert len(msgs) >= 3


class TestSerialization:
    def test_round_trip_exact(self, eqpert_case):
        spec = eqpert_case.spec
        again = system_from_dict(system_to_dict(spec))
        assert again == spec

    def test_round_trip_nonlinear(self):
        spec = make_spec(g_table={(0, (2,)): (0.25 + 0.1j,)})
        assert system_from_dict(system_to_dict(spec)) == spec

    def test_load_system_from_path(self, tmp_path):
        spec = make_spec()
        path = tmp_path / "sys.json"
        path.write_text(emit_system(spec))
        assert load_system(path) == spec

    def test_load_system_rejects_invalid(self, tmp_path):
        doc = system_to_dict(make_spec())
        doc["lambda"] = [[2.0, 0.0]]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SystemValidationError) as err:
            load_system(path)
        assert any("lambda[0]" in v for v in err.value.violations)

    def test_load_system_rejects_garbage_keys(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"spam": 1}')
        with pytest.raises(SystemValidationError):
            load_system(path)

    @given(
        beta=st.floats(min_value=0.05, max_value=1.0),
        c_re=st.floats(min_value=-5, max_value=5),
        c_im=st.floats(min_value=-5, max_value=5),
        m=st.integers(min_value=2, max_value=6),
    )
    def test_round_trip_random_linear(self, beta, c_re, c_im, m):
        spec = make_spec(b_diag=(beta,), f0_coeffs={m: (complex(c_re, c_im),)})
        assert system_from_dict(system_to_dict(spec)) == spec


def test_beta_property_is_first_b_entry():
    spec = SystemSpec(
        n=2, lam=(1.0, 1.0j), b_diag=(0.75, 2.0),
        f0_coeffs={2: (1.0, 0.0)}, g_table={},
    )
    assert spec.beta == 0.75
