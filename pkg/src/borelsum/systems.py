"""Normalized ODE system data: definition, validation, and config I/O.

The object of study is the rank-one system

    y'(x) = f0(x) - LAM y - (1/x) B y + g(x, y),    y in C^n,

with LAM = diag(lambda_1..lambda_n), lambda_1 = 1, B diagonal with
beta = B[0,0], Re(beta) in (0, 1], f0(x) = sum_m f_{0,m} x^{-m} starting at
m = 2 (or m = 1 under an explicit extended-forcing flag), and g given as a
finite Taylor table g_{m,l} over (x^{-m}, y^l) with g_{0,l} = g_{1,l} = 0
for |l| = 1.

``SystemSpec`` is immutable after construction and safe to share across
threads.  ``load_system``/``emit_system`` round-trip the spec through a JSON
document with complex numbers as [re, im] pairs and multi-indices as integer
arrays of length n.
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

MultiIndex = tuple[int, ...]


class SystemValidationError(ValueError):
    """Raised by load_system when the document violates a spec invariant."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class SystemSpec:
    """Data of the normalized system; see the module docstring for the form.

    Attributes
    ----------
    n : int
        System dimension.
    lam : tuple of complex
        Spectrum of the diagonal linear part, lam[0] = 1.
    b_diag : tuple of complex
        Diagonal of B; ``beta`` is b_diag[0].
    f0_coeffs : mapping int -> tuple of complex
        Coefficients of the forcing f0(x) = sum f_{0,m} x^{-m}, m >= 2
        (m = 1 admitted only with ``allow_order_one_forcing``).
    g_table : mapping (m, l) -> tuple of complex
        Finite Taylor table of the nonlinearity; keys are (m, multi-index l),
        values are n-vectors g_{m,l}.
    allow_order_one_forcing : bool
        Admit an f0 entry at m = 1 (used by the worked x^{-1}-forced cases).
    truncation : tuple (max_m, max_abs_l)
        Declared maximum x-order and |l| present in the tables.
    """

    n: int
    lam: tuple[complex, ...]
    b_diag: tuple[complex, ...]
    f0_coeffs: Mapping[int, tuple[complex, ...]]
    g_table: Mapping[tuple[int, MultiIndex], tuple[complex, ...]]
    allow_order_one_forcing: bool = False
    truncation: tuple[int, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(complex(v) for v in self.lam))
        object.__setattr__(self, "b_diag", tuple(complex(v) for v in self.b_diag))
        object.__setattr__(
            self,
            "f0_coeffs",
            {int(m): _as_vector(v, self.n) for m, v in self.f0_coeffs.items()},
        )
        object.__setattr__(
            self,
            "g_table",
            {
                (int(m), tuple(int(c) for c in l)): _as_vector(v, self.n)
                for (m, l), v in self.g_table.items()
            },
        )
        if self.truncation is None:
            max_m = max(
                [m for m, _ in self.g_table] + list(self.f0_coeffs) + [0]
            )
            max_l = max([sum(l) for _, l in self.g_table] + [0])
            object.__setattr__(self, "truncation", (max_m, max_l))
        else:
            object.__setattr__(self, "truncation", tuple(self.truncation))

    @property
    def beta(self) -> complex:
        return self.b_diag[0]

    def g_entries(self):
        """Iterate (m, l, coeff) over the nonlinearity table, zeros skipped."""
        for (m, l), coeff in sorted(self.g_table.items()):
            if any(c != 0 for c in coeff):
                yield m, l, coeff

    def has_nonlinearity(self) -> bool:
        return any(True for _ in self.g_entries())


def _as_vector(value, n: int) -> tuple[complex, ...]:
    vec = tuple(complex(c) for c in value)
    if len(vec) != n:
        raise SystemValidationError(
            [f"coefficient vector has length {len(vec)}, expected n={n}"]
        )
    return vec


def validate_system(spec: SystemSpec) -> list[str]:
    """Return the list of invariant violations of ``spec`` (empty iff valid).

    Deterministic and side-effect free; each entry names the offending field
    and the rule it breaks.
    """
    out: list[str] = []
    if spec.n < 1:
        out.append(f"n must be a positive integer, got {spec.n}")
        return out
    if len(spec.lam) != spec.n:
        out.append(f"lambda has {len(spec.lam)} entries, expected n={spec.n}")
        return out
    if len(spec.b_diag) != spec.n:
        out.append(f"b_diag has {len(spec.b_diag)} entries, expected n={spec.n}")
        return out

    if spec.lam[0] != 1:
        out.append(f"lambda[0] must equal 1 exactly, got {spec.lam[0]}")
    if any(v == 0 for v in spec.lam):
        out.append("lambda entries must be nonzero")
    args = [cmath.phase(v) for v in spec.lam if v != 0]
    if len(set(args)) != len(args):
        out.append("non-resonance violated: arg(lambda) values must be pairwise distinct")
    elif any(a2 <= a1 for a1, a2 in zip(args, args[1:])):
        out.append("lambda must be sorted with strictly increasing arg")

    re_beta = spec.beta.real
    if not (0 < re_beta <= 1):
        out.append(f"Re(beta) out of (0,1]: beta = {spec.beta}")

    for m in spec.f0_coeffs:
        if m < 1 or (m == 1 and not spec.allow_order_one_forcing):
            out.append(
                f"f0_coeffs has entry at m={m}: forcing must be O(x^-2) "
                "(set allow_order_one_forcing for m=1)"
            )

    for (m, l), coeff in spec.g_table.items():
        if len(l) != spec.n:
            out.append(f"g_table multi-index {l} has length {len(l)}, expected n={spec.n}")
            continue
        if any(c < 0 for c in l) or sum(l) < 1:
            out.append(f"g_table multi-index {l} must be nonnegative with |l| >= 1")
        if m < 0:
            out.append(f"g_table order m={m} must be nonnegative")
        if sum(l) == 1 and m in (0, 1) and any(c != 0 for c in coeff):
            out.append(f"g_{{{m},l}} must vanish for |l|=1, got {coeff} at l={l}")

    max_m, max_l = spec.truncation
    actual_m = max([m for m, _ in spec.g_table] + list(spec.f0_coeffs) + [0])
    actual_l = max([sum(l) for _, l in spec.g_table] + [0])
    if actual_m > max_m or actual_l > max_l:
        out.append(
            f"declared truncation {spec.truncation} does not cover the tables "
            f"(found m={actual_m}, |l|={actual_l})"
        )
    return out


# ---------------------------------------------------------------------------
# Config document I/O (JSON tree; complex as [re, im], l as integer array)
# ---------------------------------------------------------------------------


def _decode_complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise SystemValidationError([f"cannot parse complex number from {value!r}"])


def _encode_complex(z: complex) -> list[float]:
    return [z.real, z.imag]


def system_from_dict(doc: Mapping) -> SystemSpec:
    """Build a SystemSpec from a parsed config tree, checking all invariants."""
    try:
        n = int(doc["n"])
        lam = [_decode_complex(v) for v in doc["lambda"]]
        if "b_diag" in doc:
            b_diag = [_decode_complex(v) for v in doc["b_diag"]]
        elif "b" in doc:
            b = [[_decode_complex(v) for v in row] for row in doc["b"]]
            for i, row in enumerate(b):
                for j, v in enumerate(row):
                    if i != j and v != 0:
                        raise SystemValidationError(
                            [f"B must be diagonal; found B[{i}][{j}] = {v}"]
                        )
            b_diag = [b[i][i] for i in range(len(b))]
        else:
            raise KeyError("b_diag")
        f0 = {
            int(m): tuple(_decode_complex(v) for v in vec)
            for m, vec in doc.get("f0_coeffs", {}).items()
        }
        g_raw = doc.get("g_table", [])
        if isinstance(g_raw, Mapping):
            raise SystemValidationError(
                ["g_table must be a list of {m, l, coeff} entries"]
            )
        g = {}
        for entry in g_raw:
            key = (int(entry["m"]), tuple(int(c) for c in entry["l"]))
            g[key] = tuple(_decode_complex(v) for v in entry["coeff"])
        flag = bool(doc.get("allow_order_one_forcing", False))
        truncation = doc.get("truncation")
        if truncation is not None:
            truncation = (int(truncation[0]), int(truncation[1]))
    except SystemValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SystemValidationError([f"config parse failure: {exc!r}"]) from exc

    spec = SystemSpec(
        n=n,
        lam=tuple(lam),
        b_diag=tuple(b_diag),
        f0_coeffs=f0,
        g_table=g,
        allow_order_one_forcing=flag,
        truncation=truncation,
    )
    violations = validate_system(spec)
    if violations:
        raise SystemValidationError(violations)
    return spec


def system_to_dict(spec: SystemSpec) -> dict:
    """Inverse of ``system_from_dict`` (exact round trip)."""
    return {
        "n": spec.n,
        "lambda": [_encode_complex(v) for v in spec.lam],
        "b_diag": [_encode_complex(v) for v in spec.b_diag],
        "f0_coeffs": {
            str(m): [_encode_complex(v) for v in vec]
            for m, vec in sorted(spec.f0_coeffs.items())
        },
        "g_table": [
            {
                "m": m,
                "l": list(l),
                "coeff": [_encode_complex(v) for v in coeff],
            }
            for (m, l), coeff in sorted(spec.g_table.items())
        ],
        "allow_order_one_forcing": spec.allow_order_one_forcing,
        "truncation": list(spec.truncation),
    }


def load_system(source: str | Path) -> SystemSpec:
    """Load and validate a system config from a path or a JSON string.

    Raises SystemValidationError naming every violated field and rule.
    """
    if isinstance(source, Path) or (
        isinstance(source, str) and not source.lstrip().startswith("{")
    ):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemValidationError([f"config parse failure: {exc}"]) from exc
    return system_from_dict(doc)


def emit_system(spec: SystemSpec) -> str:
    """Serialize ``spec`` to the JSON config format (load_system inverse)."""
    return json.dumps(system_to_dict(spec), indent=2, sort_keys=True)
