"""Shared fixtures: the expensive solves happen once per session."""

import numpy as np
import pytest

from borelsum.cases import build_case
from borelsum.pipeline import (
    PipelineSettings,
    identity_checks,
    solve_case,
    stokes_jump_table,
)


@pytest.fixture(scope="session")
def exa1_case():
    return build_case("exa1")


@pytest.fixture(scope="session")
def eqpert_case():
    return build_case("eqpert")


@pytest.fixture(scope="session")
def exa1_run(exa1_case):
    """exa1 solved at default settings (linear, sub-second)."""
    return solve_case(exa1_case, PipelineSettings())


@pytest.fixture(scope="session")
def exa1_run_deep(exa1_case):
    """exa1 solved to pmax = 10 so resummation reaches down to x = 2."""
    return solve_case(exa1_case, PipelineSettings(pmax=10.0))


@pytest.fixture(scope="session")
def eqpert_run(eqpert_case):
    """The workhorse: eqpert at default settings, both branches, kmax = 2."""
    return solve_case(eqpert_case, PipelineSettings())


@pytest.fixture(scope="session")
def eqpert_checks(eqpert_run):
    """Every identity check, including the convolution commutation block."""
    return identity_checks(eqpert_run, with_convolution=True)


@pytest.fixture(scope="session")
def eqpert_jump(eqpert_run):
    """C(phi) of the C = 0 median solution at phi = -0.2, 0, +0.2."""
    return stokes_jump_table(eqpert_run, (-0.2, 0.0, 0.2), 0.0)


def by_name(checks, fragment):
    """The unique identity check whose name contains the fragment."""
    hits = [c for c in checks if fragment in c.identity]
    assert hits, f"no identity matching {fragment!r}"
    assert len(hits) == 1, f"ambiguous fragment {fragment!r}: {hits}"
    return hits[0]


def rel_err(got, want):
    got = np.asarray(got)
    want = np.asarray(want)
    return float(np.max(np.abs(got - want)) / np.max(np.abs(want)))
