"""Exact arithmetic on finite sums of polynomial-times-Gaussian functions.

A :class:`GaussianPolySum` is ``sum_i P_i(x) exp(-c_i x**2)`` with rational
rates ``c_i > 0`` and complex high-precision polynomial coefficients.  The
class is closed under products, derivatives, the unitary Fourier transform,
convolution and polynomial multipliers, and every integral over a line,
half-line or interval union has a closed form through Gaussian moments and
``erfc``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence, Union

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import BackendError
from .precision import (
    fmt_scalar, frac_mpq, get_context, log2_mag, parse_scalar, to_fraction,
    to_real, to_scalar, working,
)

_ZERO = mpc(0)


# -- regions ---------------------------------------------------------------

@dataclass(frozen=True)
class Full:
    """The whole real line."""

    def __str__(self):
        return "full"


@dataclass(frozen=True)
class HalfLine:
    endpoint: Fraction = Fraction(0)
    side: str = "right"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        object.__setattr__(self, "endpoint", to_fraction(self.endpoint))

    def __str__(self):
        return f"halfline:{self.endpoint}:{self.side}"


@dataclass(frozen=True)
class IntervalUnion:
    intervals: tuple

    def __post_init__(self):
        ivs = tuple(sorted((to_fraction(a), to_fraction(b)) for a, b in self.intervals))
        for lo, hi in ivs:
            if not lo < hi:
                raise ValueError(f"interval needs lower < upper, got [{lo}, {hi}]")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if lo < hi:
                raise ValueError("intervals must be pairwise disjoint")
        object.__setattr__(self, "intervals", ivs)

    def __str__(self):
        return "intervals:" + ",".join(f"{a}:{b}" for a, b in self.intervals)


Region = Union[Full, HalfLine, IntervalUnion]


def parse_region(text: str) -> Region:
    """Parse ``full``, ``halfline:a:side`` or ``intervals:a:b,c:d``."""
    text = text.strip()
    if text == "full":
        return Full()
    if text.startswith("halfline:"):
        _, a, side = text.split(":")
        return HalfLine(to_fraction(a), side)
    if text.startswith("intervals:"):
        body = text[len("intervals:"):]
        pairs = []
        for chunk in body.split(","):
            a, b = chunk.split(":")
            pairs.append((to_fraction(a), to_fraction(b)))
        return IntervalUnion(tuple(pairs))
    raise ValueError(f"unknown region {text!r}")


# -- coefficient-array helpers ------------------------------------------------

def _arr(values: Iterable) -> np.ndarray:
    out = np.empty(0, dtype=object)
    vals = list(values)
    if vals:
        out = np.empty(len(vals), dtype=object)
        out[:] = vals
    return out


def _zeros(n: int) -> np.ndarray:
    out = np.empty(n, dtype=object)
    out[:] = [_ZERO] * n
    return out


def _padd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) < len(b):
        a, b = b, a
    out = a.copy()
    out[: len(b)] = out[: len(b)] + b
    return out


def _pderive(p: np.ndarray, rate) -> np.ndarray:
    """Coefficients of d/dx [P(x) exp(-c x^2)] / exp(-c x^2) = P' - 2cxP."""
    n = len(p)
    if n == 0:
        return p
    out = _zeros(n + 1)
    if n > 1:
        out[: n - 1] = p[1:] * _arr(range(1, n))
    out[1:] = out[1:] - p * (2 * rate)
    return out


_LG_CACHE: list[float] = []


def _half_log2_gamma(kmax: int) -> list[float]:
    """0.5*log2(Gamma(k + 1/2)) for k <= kmax (float precision is plenty)."""
    while len(_LG_CACHE) <= kmax:
        k = len(_LG_CACHE)
        _LG_CACHE.append(0.5 * math.lgamma(k + 0.5) / math.log(2))
    return _LG_CACHE


def _weighted_exps(p: np.ndarray, rate: Fraction) -> list[float]:
    """log2 of |c_k| * ||x^k exp(-c x^2)||_2, used as a scale-aware magnitude."""
    lg = _half_log2_gamma(len(p))
    l2c = math.log2(2 * rate.numerator / rate.denominator)
    return [log2_mag(c) + lg[k] - 0.5 * (k + 0.5) * l2c for k, c in enumerate(p)]


# -- the function class ---------------------------------------------------------

@dataclass(frozen=True)
class GaussianTerm:
    """``P(x) exp(-rate x^2)``; ``coeffs[k]`` multiplies ``x**k``."""

    rate: Fraction
    coeffs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rate", to_fraction(self.rate))
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if self.coeffs and self.coeffs[-1] == 0:
            raise ValueError("last coefficient of a GaussianTerm must be nonzero")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def array(self) -> np.ndarray:
        return _arr(self.coeffs)


@dataclass(frozen=True)
class GaussianPolySum:
    """Canonical finite sum of Gaussian terms with strictly increasing rates."""

    terms: tuple = ()

    def __post_init__(self):
        rates = [t.rate for t in self.terms]
        if any(not t.coeffs for t in self.terms):
            raise ValueError("zero terms are not allowed in a GaussianPolySum")
        if any(a >= b for a, b in zip(rates, rates[1:])):
            raise ValueError("term rates must be strictly increasing")

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls) -> "GaussianPolySum":
        return cls(())

    @classmethod
    def gaussian(cls, rate, coeffs: Sequence = (1,)) -> "GaussianPolySum":
        """``(sum_k coeffs[k] x^k) exp(-rate x^2)`` from any numeric coefficients."""
        with working():
            arr = _arr(to_scalar(c) for c in coeffs)
        return canonical({to_fraction(rate): arr})

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((t.degree for t in self.terms), default=-1)

    @property
    def rates(self) -> tuple:
        return tuple(t.rate for t in self.terms)

    def parts(self) -> dict:
        return {t.rate: t.array() for t in self.terms}

    @cached_property
    def scale(self) -> float:
        """Largest weighted coefficient magnitude (log2); -inf for zero."""
        best = -math.inf
        for t in self.terms:
            best = max(best, max(_weighted_exps(t.array(), t.rate)))
        return best

    def term(self, rate) -> GaussianTerm | None:
        rate = to_fraction(rate)
        for t in self.terms:
            if t.rate == rate:
                return t
        return None

    # sugar ---------------------------------------------------------------
    def __add__(self, other):
        return gp_add(self, other)

    def __sub__(self, other):
        return gp_add(self, gp_scale(other, -1))

    def __neg__(self):
        return gp_scale(self, -1)

    def __mul__(self, other):
        if isinstance(other, GaussianPolySum):
            return gp_mul(self, other)
        return gp_scale(self, other)

    __rmul__ = __mul__

    def __call__(self, x):
        return gp_eval(self, x)

    def conj(self) -> "GaussianPolySum":
        with working():
            return GaussianPolySum(tuple(
                GaussianTerm(t.rate, tuple(c.conjugate() for c in t.coeffs)) for t in self.terms))

    def to_json(self) -> dict:
        return gp_to_json(self)

    def __repr__(self):
        inner = ", ".join(f"{t.rate}:deg{t.degree}" for t in self.terms)
        return f"GaussianPolySum([{inner}])"


def canonical(parts: dict, ref: float = -math.inf) -> GaussianPolySum:
    """Build a canonical GaussianPolySum from ``{rate: coefficient array}``.

    Coefficients whose weighted magnitude sits at rounding-noise level relative
    to the largest weighted coefficient (of the result or of ``ref``, the scale
    of the operands) are set to exact zero; trailing zeros and empty terms are
    dropped.
    """
    work = get_context().work_bits
    weighted = {}
    top = ref
    for rate, arr in parts.items():
        if len(arr):
            w = _weighted_exps(arr, rate)
            weighted[rate] = w
            top = max(top, max(w))
    cutoff = top - (work - 32)
    terms = []
    for rate in sorted(weighted):
        arr = parts[rate]
        w = weighted[rate]
        vals = [c if wk > cutoff else _ZERO for c, wk in zip(arr, w)]
        while vals and vals[-1] == 0:
            vals.pop()
        if vals:
            terms.append(GaussianTerm(rate, tuple(vals)))
    return GaussianPolySum(tuple(terms))


def _as_gps(f) -> GaussianPolySum:
    if isinstance(f, GaussianPolySum):
        return f
    raise TypeError(f"expected GaussianPolySum, got {type(f).__name__}")


# -- gp_eval ----------------------------------------------------------------

def gp_eval(f: GaussianPolySum, x) -> mpc:
    """Value of ``f`` at a real point, at working precision."""
    with working():
        xr = to_real(x)
        x2 = xr * xr
        total = mpc(0)
        for t in f.terms:
            acc = mpc(0)
            for c in reversed(t.coeffs):
                acc = acc * xr + c
            total += acc * gmpy2.exp(-frac_mpq(t.rate) * x2)
        return total


# -- gp_arith ---------------------------------------------------------------

def gp_add(f: GaussianPolySum, g: GaussianPolySum) -> GaussianPolySum:
    f, g = _as_gps(f), _as_gps(g)
    if f.is_zero:
        return g
    if g.is_zero:
        return f
    with working():
        parts = f.parts()
        for rate, arr in g.parts().items():
            parts[rate] = _padd(parts[rate], arr) if rate in parts else arr
        return canonical(parts, ref=max(f.scale, g.scale))


def gp_sum(items: Iterable[GaussianPolySum]) -> GaussianPolySum:
    """Sum of many values with a single canonicalization."""
    with working():
        parts: dict = {}
        ref = -math.inf
        for f in items:
            ref = max(ref, f.scale)
            for rate, arr in f.parts().items():
                parts[rate] = _padd(parts[rate], arr) if rate in parts else arr
        return canonical(parts, ref=ref)


def gp_scale(f: GaussianPolySum, s) -> GaussianPolySum:
    f = _as_gps(f)
    with working():
        s = to_scalar(s)
        if s == 0:
            return GaussianPolySum.zero()
        return canonical({r: a * s for r, a in f.parts().items()})


def gp_mul(f: GaussianPolySum, g: GaussianPolySum) -> GaussianPolySum:
    """Pointwise product; rates add termwise."""
    f, g = _as_gps(f), _as_gps(g)
    with working():
        parts: dict = {}
        for tf in f.terms:
            af = tf.array()
            for tg in g.terms:
                rate = tf.rate + tg.rate
                prod = np.convolve(af, tg.array())
                parts[rate] = _padd(parts[rate], prod) if rate in parts else prod
        return canonical(parts)


def gp_mul_poly(f: GaussianPolySum, q: Sequence) -> GaussianPolySum:
    """Multiply by the plain polynomial ``sum_k q[k] x^k``."""
    f = _as_gps(f)
    with working():
        qa = _arr(to_scalar(c) for c in q)
        if not len(qa) or all(c == 0 for c in qa):
            return GaussianPolySum.zero()
        return canonical({r: np.convolve(a, qa) for r, a in f.parts().items()})


def gp_arith(f: GaussianPolySum, g: GaussianPolySum | None = None, op: str = "add",
             s=None, q: Sequence | None = None) -> GaussianPolySum:
    """Dispatch for ``add``, ``scale``, ``mul`` and ``mul_poly``."""
    if op == "add":
        return gp_add(f, g)
    if op == "scale":
        return gp_scale(f, s)
    if op == "mul":
        return gp_mul(f, g)
    if op == "mul_poly":
        return gp_mul_poly(f, q)
    raise ValueError(f"unknown op {op!r}")


# -- gp_derive ----------------------------------------------------------------

def gp_derive(f: GaussianPolySum, order: int = 1) -> GaussianPolySum:
    f = _as_gps(f)
    with working():
        for _ in range(order):
            if f.is_zero:
                break
            f = canonical({t.rate: _pderive(t.array(), frac_mpq(t.rate)) for t in f.terms},
                          ref=f.scale)
        return f


# -- gp_integral ----------------------------------------------------------------

def _full_moments(rate: Fraction, kmax: int) -> list:
    """M_k = int x^k exp(-c x^2) dx over the line, k <= kmax."""
    c = frac_mpq(rate)
    out = [mpfr(0)] * (kmax + 1)
    out[0] = gmpy2.sqrt(gmpy2.const_pi() / c)
    for k in range(0, kmax - 1, 2):
        out[k + 2] = out[k] * (k + 1) / (2 * c)
    return out


def _tail_moments(rate: Fraction, a: Fraction, kmax: int) -> list:
    """R_k(a) = int_a^inf x^k exp(-c x^2) dx, k <= kmax."""
    c = frac_mpq(rate)
    out = [mpfr(0)] * (kmax + 1)
    if a == 0:
        for k in range(kmax + 1):
            out[k] = gmpy2.gamma(mpfr(k + 1) / 2) / (2 * c ** (mpfr(k + 1) / 2))
        return out
    am = frac_mpq(a)
    e = gmpy2.exp(-c * am * am)
    out[0] = gmpy2.sqrt(gmpy2.const_pi() / c) / 2 * gmpy2.erfc(gmpy2.sqrt(c) * am)
    if kmax >= 1:
        out[1] = e / (2 * c)
    apow = mpfr(am)  # a^(k-1) for k = 2
    for k in range(2, kmax + 1):
        out[k] = apow * e / (2 * c) + (k - 1) * out[k - 2] / (2 * c)
        apow = apow * am
    return out


def _region_moments(rate: Fraction, region: Region, kmax: int) -> list:
    if isinstance(region, Full):
        return _full_moments(rate, kmax)
    if isinstance(region, HalfLine):
        if region.side == "right":
            return _tail_moments(rate, region.endpoint, kmax)
        tail = _tail_moments(rate, -region.endpoint, kmax)
        return [m if k % 2 == 0 else -m for k, m in enumerate(tail)]
    if isinstance(region, IntervalUnion):
        total = [mpfr(0)] * (kmax + 1)
        for lo, hi in region.intervals:
            rl = _tail_moments(rate, lo, kmax)
            rh = _tail_moments(rate, hi, kmax)
            total = [t + a - b for t, a, b in zip(total, rl, rh)]
        return total
    raise TypeError(f"unknown region {region!r}")


def gp_integral(f: GaussianPolySum, region: Region | None = None) -> mpc:
    """Exact integral of ``f`` over a region (default: the real line)."""
    region = Full() if region is None else region
    with working():
        total = mpc(0)
        for t in f.terms:
            mom = _region_moments(t.rate, region, t.degree)
            total += np.dot(t.array(), _arr(mom))
        return total


def moment_vector(f: GaussianPolySum, shift: Fraction, kmax: int) -> list:
    """``mu_k = int x^k f(x) exp(-shift x^2) dx`` for k <= kmax."""
    with working():
        out = np.empty(kmax + 1, dtype=object)
        out[:] = [mpc(0)] * (kmax + 1)
        for t in f.terms:
            arr = t.array()
            mom = _arr(_full_moments(t.rate + shift, kmax + t.degree))
            for k in range(kmax + 1):
                out[k] = out[k] + np.dot(arr, mom[k: k + len(arr)])
        return list(out)


# -- inner products, number operator, norms ---------------------------------

def gp_inner(f: GaussianPolySum, g: GaussianPolySum) -> mpc:
    """``int f conj(g) dx``."""
    return gp_integral(gp_mul(f, g.conj()), Full())


def gp_number_op(f: GaussianPolySum) -> GaussianPolySum:
    """``-f'' + (x^2/4) f + f/2``; has eigenpairs ``(h_n, n + 1)``."""
    with working():
        quarter = mpfr(1) / 4
        half = mpfr(1) / 2
        return gp_sum([
            gp_scale(gp_derive(f, 2), -1),
            gp_mul_poly(f, [0, 0, quarter]),
            gp_scale(f, half),
        ])


def gp_norm(f: GaussianPolySum, m: int = 0) -> mpfr:
    if m < 0:
        raise ValueError("norm order must be >= 0")
    g = f
    for _ in range(m):
        g = gp_number_op(g)
    with working():
        return gmpy2.sqrt(abs(gp_inner(g, g).real))


def gp_inner_norm(f: GaussianPolySum, g: GaussianPolySum | None = None,
                  op: str = "inner", m: int = 0):
    if op == "inner":
        return gp_inner(f, g)
    if op == "number_op":
        return gp_number_op(f)
    if op == "norm":
        return gp_norm(f, m)
    raise ValueError(f"unknown op {op!r}")


# -- Fourier transform and convolution ----------------------------------------

def _fourier_term(t: GaussianTerm) -> tuple:
    """Transform of one term: returns (new_rate, coefficient array)."""
    c = frac_mpq(t.rate)
    new_rate = 1 / (4 * t.rate)
    nr = frac_mpq(new_rate)
    cur = _arr([mpc(1 / gmpy2.sqrt(2 * c))])
    acc = cur * t.coeffs[0]
    ipow = mpc(1)
    for k in range(1, len(t.coeffs)):
        cur = _pderive(cur, nr)
        ipow = ipow * mpc(0, 1)
        if t.coeffs[k] != 0:
            acc = _padd(acc, cur * (t.coeffs[k] * ipow))
    return new_rate, acc


def gp_fourier(f: GaussianPolySum, direction: str = "forward") -> GaussianPolySum:
    """Unitary transform ``(2 pi)^(-1/2) int exp(-i t x) f(x) dx`` and its inverse."""
    if direction not in ("forward", "inverse"):
        raise BackendError(f"direction must be forward or inverse, got {direction!r}")
    with working():
        parts: dict = {}
        for t in f.terms:
            rate, arr = _fourier_term(t)
            if direction == "inverse":
                arr = arr.copy()
                arr[1::2] = -arr[1::2]
            parts[rate] = _padd(parts[rate], arr) if rate in parts else arr
        return canonical(parts)


def gp_convolve(f: GaussianPolySum, g: GaussianPolySum) -> GaussianPolySum:
    """``(f * g)(t) = int f(t - x) g(x) dx``, computed exactly in the class."""
    with working():
        prod = gp_mul(gp_fourier(f), gp_fourier(g))
        return gp_scale(gp_fourier(prod, "inverse"), gmpy2.sqrt(2 * gmpy2.const_pi()))


# -- numeric (float64) evaluation ---------------------------------------------

def gp_numeric(f: GaussianPolySum):
    """Vectorized double-precision evaluator (Horner per term)."""
    terms = []
    for t in f.terms:
        cs = np.array([complex(c) for c in t.coeffs])
        terms.append((float(t.rate), cs if np.any(cs.imag) else cs.real))
    real = all(np.isrealobj(cs) for _, cs in terms)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=float if real else complex)
        for rate, cs in terms:
            acc = np.zeros(x.shape, dtype=cs.dtype)
            for c in cs[::-1]:
                acc = acc * x + c
            out = out + acc * np.exp(-rate * x * x)
        return out

    return evaluate


# -- serialization ---------------------------------------------------------------

def gp_to_json(f: GaussianPolySum, digits: int | None = None) -> dict:
    if digits is None:
        digits = int(math.ceil(get_context().work_bits * math.log10(2))) + 1
    return {
        "terms": [
            {"rate": f"{t.rate.numerator}/{t.rate.denominator}",
             "coeffs": [fmt_scalar(c, digits) for c in t.coeffs]}
            for t in f.terms
        ]
    }


def gp_from_json(data: dict) -> GaussianPolySum:
    with working():
        parts = {}
        for t in data["terms"]:
            rate = Fraction(t["rate"])
            parts[rate] = _arr(parse_scalar(p) for p in t["coeffs"])
        return canonical(parts)
