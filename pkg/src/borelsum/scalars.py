"""Exact complex-rational arithmetic for the formal series layer.

The trans-series recursion only ever divides by eigenvalue combinations and
integer order counters, so when the system data are rational the whole formal
layer closes over Q(i).  ``QC`` is a minimal complex number over
``fractions.Fraction`` used for the exact mode; the float mode simply uses the
builtin ``complex``.  Both types support ``+ - * /`` and equality, which is
all the recursion needs.
"""

from __future__ import annotations

from fractions import Fraction


class QC:
    """A complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def from_complex(cls, z: complex) -> "QC":
        """Exact conversion: every float is a binary rational."""
        z = complex(z)
        return cls(Fraction(z.real), Fraction(z.imag))

    def to_complex(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __add__(self, other):
        other = _coerce(other)
        return QC(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        return QC(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return _coerce(other).__sub__(self)

    def __mul__(self, other):
        other = _coerce(other)
        return QC(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        den = other.re * other.re + other.im * other.im
        if den == 0:
            raise ZeroDivisionError("division by exact zero")
        return QC(
            (self.re * other.re + self.im * other.im) / den,
            (self.im * other.re - self.re * other.im) / den,
        )

    def __rtruediv__(self, other):
        return _coerce(other).__truediv__(self)

    def __neg__(self):
        return QC(-self.re, -self.im)

    def __eq__(self, other):
        try:
            other = _coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def __repr__(self):
        return f"QC({self.re!r}, {self.im!r})"


def _coerce(value) -> QC:
    if isinstance(value, QC):
        return value
    if isinstance(value, (int, Fraction)):
        return QC(value)
    if isinstance(value, float):
        return QC(Fraction(value))
    if isinstance(value, complex):
        return QC.from_complex(value)
    raise TypeError(f"cannot coerce {type(value).__name__} to QC")


def ring_zero(exact: bool):
    """Additive identity of the working scalar ring."""
    return QC() if exact else 0j


def ring_scalar(value, exact: bool):
    """Convert ``value`` into the working ring (exactly, in exact mode)."""
    if exact:
        return _coerce(value)
    if isinstance(value, QC):
        return value.to_complex()
    return complex(value)


def to_float_complex(value) -> complex:
    """Collapse either scalar type to a builtin complex."""
    if isinstance(value, QC):
        return value.to_complex()
    return complex(value)
