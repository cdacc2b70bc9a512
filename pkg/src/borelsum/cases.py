"""Shipped example systems with exact Borel-plane and solution oracles.

Both cases are scalar with lambda = 1 and beta = 1/2, driven by

    y' = (1 + eps) x^{-1} - x^{-2}/2 - y - y/(2x),

``exa1`` being the unperturbed point eps = 0.  Everything about them is
known in closed form:

    Y_0 = 1 + eps (1 - p)^{-1/2},    Y_1 = p^{-1/2} / sqrt(pi),
    Y_k = 0 for k >= 2,              S   = -2 i eps sqrt(pi),

with the branch of (1 - p)^{-1/2} continued through the cut from above or
below according to the side.  These closed forms make the pair a complete
end-to-end oracle: singularity location and exponent, Stokes constant,
convolution products, and the resummed solution are all checkable exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.special import erfi

from .systems import (
    SystemSpec,
    SystemValidationError,
    system_from_dict,
    system_to_dict,
    validate_system,
)


@dataclass(frozen=True)
class OracleCase:
    """A system bundled with whatever exact reference data it has.

    ``exact`` maps oracle names to callables; shipped cases provide
    ``borel_level``, ``solution`` and ``conv00``.  A case loaded from a
    config file with an unrecognized family has an empty table and still
    supports every numerical pipeline, just not exact verification.
    """

    name: str
    spec: SystemSpec
    params: Mapping[str, float] = field(default_factory=dict)
    s_beta: complex | None = None
    exact: Mapping[str, Callable] = field(default_factory=dict)

    @property
    def has_oracle(self) -> bool:
        return bool(self.exact)

    def borel_level(self, k: int, p, side: int = +1) -> np.ndarray:
        """Exact branch values of Y_k at the points ``p`` (side: +1, -1, 0)."""
        if "borel_level" not in self.exact:
            raise KeyError(f"case {self.name} has no exact Borel data")
        return self.exact["borel_level"](k, p, side)

    def solution(self, x, C: complex = 0.0) -> np.ndarray:
        """Exact solution in the balanced normalization with constant C."""
        if "solution" not in self.exact:
            raise KeyError(f"case {self.name} has no exact solution")
        return self.exact["solution"](x, C)

    def conv00(self, p) -> np.ndarray:
        """Closed form of (Y_0 * Y_0) on the upper branch, p in (0, 2)."""
        if "conv00" not in self.exact:
            raise KeyError(f"case {self.name} has no convolution oracle")
        return self.exact["conv00"](p)


def _perturbed_root_spec(eps: float) -> SystemSpec:
    return SystemSpec(
        n=1,
        lam=(1.0,),
        b_diag=(0.5,),
        f0_coeffs={1: (1.0 + eps,), 2: (-0.5,)},
        g_table={},
        allow_order_one_forcing=True,
    )


def _perturbed_root_case(name: str, eps: float) -> OracleCase:
    eps = float(eps)

    def borel_level(k: int, p, side: int = +1) -> np.ndarray:
        p = np.asarray(p, dtype=complex)
        if k == 1:
            return np.power(p, -0.5) / math.sqrt(math.pi)
        if k != 0:
            return np.zeros_like(p)
        if eps == 0.0:
            return np.ones_like(p)
        # the branch through the cut: approach the real axis from the side.
        # For real-axis p the difference 1 - p lands exactly on sqrt's cut
        # with imag +0.0; continuation from above (side +1) needs the limit
        # from imag -0.0 there, which conjugation supplies.
        w = 1.0 - p
        real_line = np.abs(p.imag) == 0
        if side == 0:
            w = np.where(real_line & (p.real > 1), np.inf + 0j, w)
        elif side == +1:
            w = np.where(real_line, np.conj(w), w)
        elif side != -1:
            raise ValueError(f"side must be +1, -1 or 0, got {side}")
        return 1.0 + eps / np.sqrt(w)

    def solution(x, C: complex = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        rx = np.sqrt(x)
        return (1.0 / x
                + eps * math.sqrt(math.pi) * np.exp(-x) * erfi(rx) / rx
                + C * np.exp(-x) / rx)

    def conv00(p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        out = np.empty(p.shape, dtype=complex)
        below = p < 1.0
        above = ~below
        z = p / (2.0 - p)
        out[below] = (p[below]
                      + 4 * eps * (1 - np.sqrt(1 - p[below]))
                      + 2 * eps**2 * np.arcsin(z[below]))
        out[above] = (p[above]
                      + 4 * eps * (1 + 1j * np.sqrt(p[above] - 1))
                      + 2 * eps**2 * (np.pi / 2 + 1j * np.arccosh(z[above])))
        return out

    case = OracleCase(
        name=name,
        spec=_perturbed_root_spec(eps),
        params={"eps": eps},
        s_beta=-2j * eps * math.sqrt(math.pi),
        exact={
            "borel_level": borel_level,
            "solution": solution,
            "conv00": conv00,
        },
    )
    problems = validate_case(case)
    if problems:
        raise SystemValidationError(problems)
    return case


def validate_case(case: OracleCase) -> list[str]:
    """Consistency of the exact data with the system it claims to solve.

    Substitutes the closed forms into the fixed-point form of the Borel
    equation, (1 - p) Y_0 + beta int_0^p Y_0 = F_0, and into the
    differential equation itself; both must vanish to rounding error.
    """
    out = list(validate_system(case.spec))
    if not case.has_oracle:
        return out
    eps = float(case.params.get("eps", 0.0))
    beta = case.spec.beta

    p = np.array([0.1, 0.4, 0.8, 0.95])
    y0 = case.borel_level(0, p)
    integral = p + 2 * eps * (1 - np.sqrt(1 - p))
    f0 = (1 + eps) - p / 2
    resid = np.max(np.abs((1 - p) * y0 + beta * integral - f0))
    if resid > 1e-12:
        out.append(f"exact Y_0 violates the Borel equation by {resid:.2e}")

    x = np.linspace(3.0, 6.0, 7)
    h = 1e-3
    stencil = (
        8 * (case.solution(x + h, 0.7) - case.solution(x - h, 0.7))
        - (case.solution(x + 2 * h, 0.7) - case.solution(x - 2 * h, 0.7))
    ) / (12 * h)
    y = case.solution(x, 0.7)
    rhs = ((1 + eps) / x - 0.5 / x**2 - y - y / (2 * x))
    resid = np.max(np.abs(stencil - rhs))
    if resid > 1e-9:
        out.append(f"exact solution violates the equation by {resid:.2e}")
    return out


_BUILDERS: dict[str, Callable[..., OracleCase]] = {
    "exa1": lambda **kw: _perturbed_root_case("exa1", kw.get("eps", 0.0)),
    "eqpert": lambda **kw: _perturbed_root_case("eqpert", kw.get("eps", 0.1)),
}


def builtin_cases() -> tuple[str, ...]:
    return tuple(sorted(_BUILDERS))


def build_case(name: str, **params) -> OracleCase:
    """Construct a built-in case by name, overriding default parameters."""
    if name not in _BUILDERS:
        raise KeyError(
            f"unknown case {name!r}; built-ins: {', '.join(builtin_cases())}"
        )
    return _BUILDERS[name](**params)


def case_to_dict(case: OracleCase) -> dict:
    return {
        "case": case.name,
        "params": dict(case.params),
        "system": system_to_dict(case.spec),
    }


def case_from_dict(doc: Mapping) -> OracleCase:
    """Case from a parsed config tree.

    A recognized ``case`` family is rebuilt with its oracles and checked
    against the embedded system document; anything else becomes a plain
    case around the document's system, against which all numerics (but no
    exact verification) run.
    """
    name = str(doc.get("case", "custom"))
    params = {k: float(v) for k, v in dict(doc.get("params", {})).items()}
    if name in _BUILDERS:
        case = _BUILDERS[name](**params)
        if "system" in doc:
            embedded = system_from_dict(doc["system"])
            if system_to_dict(embedded) != system_to_dict(case.spec):
                raise SystemValidationError(
                    [f"case file {name!r} embeds a system that does not "
                     "match its declared family and parameters"]
                )
        return case
    if "system" not in doc:
        raise SystemValidationError(
            [f"case {name!r} is not built in and carries no system document"]
        )
    return OracleCase(name=name, spec=system_from_dict(doc["system"]), params=params)


def load_case(source: str | Path, search: tuple[Path, ...] = ()) -> OracleCase:
    """Resolve a case name or path to an OracleCase.

    Resolution order: an existing file path; ``<dir>/<name>.json`` for each
    search directory (the CLI passes ``cases/``); a built-in name.
    """
    p = Path(source)
    if p.suffix == ".json" and p.exists():
        return case_from_dict(json.loads(p.read_text(encoding="utf-8")))
    for d in search:
        candidate = Path(d) / f"{source}.json"
        if candidate.exists():
            return case_from_dict(json.loads(candidate.read_text(encoding="utf-8")))
    if str(source) in _BUILDERS:
        return build_case(str(source))
    raise FileNotFoundError(
        f"no case file or built-in named {source!r} "
        f"(built-ins: {', '.join(builtin_cases())})"
    )
