"""Working precision, tolerances and high-precision scalar helpers.

All scalars are :class:`gmpy2.mpc` values.  The user-facing precision is
``bits``; arithmetic internally runs at ``work_bits``, which adds guard bits
sized to the basis cap because monomial-form Hermite polynomials lose about
two bits per degree to cancellation.
"""

from __future__ import annotations

import contextvars
import math
from contextlib import contextmanager
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterator

import gmpy2
from gmpy2 import mpc, mpfr, mpq

from .errors import NonFiniteError, PrecisionError

DEFAULT_BITS = 256
DEFAULT_CAP = 512


@dataclass(frozen=True)
class PrecisionContext:
    bits: int = DEFAULT_BITS
    basis_cap: int = DEFAULT_CAP
    tol_override: float | None = None

    def __post_init__(self):
        if self.bits < 64:
            raise PrecisionError(f"precision must be at least 64 bits, got {self.bits}")
        if self.basis_cap < 0:
            raise PrecisionError("basis cap must be non-negative")

    @property
    def tol(self) -> mpfr:
        """Equality tolerance, 2**(-bits/2) unless overridden."""
        if self.tol_override is not None:
            return mpfr(self.tol_override)
        return gmpy2.exp2(mpfr(-self.bits) / 2)

    @property
    def work_bits(self) -> int:
        return self.bits + 2 * self.basis_cap + 64

    @property
    def digits(self) -> int:
        """Decimal digits used when serializing scalars."""
        return int(math.ceil(self.bits * math.log10(2))) + 1


_current: contextvars.ContextVar[PrecisionContext] = contextvars.ContextVar(
    "tempered_precision", default=PrecisionContext()
)


def get_context() -> PrecisionContext:
    return _current.get()


def set_context(ctx: PrecisionContext) -> None:
    _current.set(ctx)


@contextmanager
def precision(bits: int | None = None, basis_cap: int | None = None,
              tol: float | None = None) -> Iterator[PrecisionContext]:
    """Temporarily change the precision context."""
    ctx = get_context()
    changes = {}
    if bits is not None:
        changes["bits"] = bits
    if basis_cap is not None:
        changes["basis_cap"] = basis_cap
    if tol is not None:
        changes["tol_override"] = tol
    new = replace(ctx, **changes)
    token = _current.set(new)
    try:
        yield new
    finally:
        _current.reset(token)


@contextmanager
def working() -> Iterator[None]:
    """Run gmpy2 arithmetic at the working precision (never lowers it)."""
    prec = max(gmpy2.get_context().precision, get_context().work_bits)
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        yield


def tol() -> mpfr:
    return get_context().tol


# -- scalar conversion -------------------------------------------------------

def to_real(v) -> mpfr:
    """Convert a real-valued input (int, float, str, Fraction, mpfr) to mpfr."""
    if isinstance(v, mpfr):
        return v
    with working():
        return _to_real(v)


def _to_real(v) -> mpfr:
    if isinstance(v, Fraction):
        return mpfr(mpq(v.numerator, v.denominator))
    if isinstance(v, str):
        v = v.strip()
        if "/" in v:
            return to_real(Fraction(v))
        return mpfr(v)
    if isinstance(v, float):
        # floats mean their shortest decimal repr, matching to_fraction
        return to_real(to_fraction(v))
    if isinstance(v, (mpfr, int)) or type(v).__name__ == "mpz":
        return mpfr(v)
    if isinstance(v, mpq):
        return mpfr(v)
    if isinstance(v, mpc):
        return v.real
    return mpfr(float(v))


def to_scalar(v) -> mpc:
    """Convert any numeric input to a complex high-precision scalar."""
    if isinstance(v, mpc):
        return v
    with working():
        if isinstance(v, complex):
            return mpc(v.real, v.imag)
        if isinstance(v, (tuple, list)) and len(v) == 2:
            return mpc(to_real(v[0]), to_real(v[1]))
        return mpc(to_real(v), 0)


def to_fraction(v) -> Fraction:
    """Exact rational from int, Fraction, decimal string or float.

    Floats go through their shortest repr so ``0.1`` becomes ``1/10``.
    """
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, mpq):
        return Fraction(int(v.numerator), int(v.denominator))
    if isinstance(v, float):
        if not math.isfinite(v):
            raise NonFiniteError(f"non-finite value {v!r}")
        return Fraction(repr(v))
    return Fraction(str(v))


def frac_mpq(f: Fraction) -> mpq:
    return mpq(f.numerator, f.denominator)


def is_finite(z) -> bool:
    if isinstance(z, mpc):
        return gmpy2.is_finite(z.real) and gmpy2.is_finite(z.imag)
    if isinstance(z, complex):
        return math.isfinite(z.real) and math.isfinite(z.imag)
    if isinstance(z, mpfr):
        return gmpy2.is_finite(z)
    return math.isfinite(z)


def check_finite(z, what: str = "value"):
    if not is_finite(z):
        raise NonFiniteError(f"non-finite {what}: {z}")
    return z


def log2_mag(z) -> float:
    """Cheap base-2 exponent of |z|; -inf for an exact zero."""
    if isinstance(z, mpc):
        parts = [p for p in (z.real, z.imag) if not gmpy2.is_zero(p)]
        if not parts:
            return -math.inf
        return float(max(gmpy2.get_exp(p) for p in parts))
    if z == 0:
        return -math.inf
    return float(gmpy2.get_exp(mpfr(z)))


# -- decimal serialization ---------------------------------------------------

def fmt_real(x, digits: int | None = None) -> str:
    """Deterministic scientific-notation decimal string for a real scalar."""
    if isinstance(x, (float, int)) and not isinstance(x, bool):
        if isinstance(x, float) and not math.isfinite(x):
            raise NonFiniteError(f"non-finite value {x!r}")
        if isinstance(x, float):
            return repr(x)
        return str(x)
    if not isinstance(x, mpfr):
        x = to_real(x)
    if not gmpy2.is_finite(x):
        raise NonFiniteError(f"non-finite value {x}")
    if gmpy2.is_zero(x):
        return "0"
    d = digits if digits is not None else get_context().digits
    mant, exp, _ = x.digits(10, d)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    lead, rest = mant[0], mant[1:]
    body = lead + ("." + rest if rest else "")
    return f"{sign}{body}e{exp - 1:+d}"


def fmt_scalar(z, digits: int | None = None) -> list[str]:
    """[re, im] pair of decimal strings."""
    if isinstance(z, mpc):
        return [fmt_real(z.real, digits), fmt_real(z.imag, digits)]
    if isinstance(z, complex):
        return [fmt_real(z.real), fmt_real(z.imag)]
    return [fmt_real(z, digits), "0"]


def parse_scalar(pair) -> mpc:
    with working():
        if isinstance(pair, str):
            return mpc(mpfr(pair), 0)
        re_, im_ = pair
        return mpc(mpfr(re_), mpfr(im_))
