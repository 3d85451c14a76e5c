"""Hermite functions ``h_n(x) = (sqrt(2 pi) n!)^(-1/2) exp(-x^2/4) He_n(x)``.

``He_n`` are the probabilists' Hermite polynomials.  Basis functions are
generated from the exact integer recurrence ``He_{n+1} = x He_n - n He_{n-1}``
and normalized once, so every ``h_n`` is a single-term GaussianPolySum of rate
1/4 whose coefficients are correctly rounded at working precision.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import CapExceeded
from .gauss import (
    GaussianPolySum, GaussianTerm, _arr, _zeros, canonical,
    moment_vector,
)
from .precision import fmt_scalar, get_context, to_fraction, to_real, to_scalar, working

QUARTER = Fraction(1, 4)

_he_lock = threading.Lock()
_he_table: list[list[int]] = [[1], [0, 1]]


def _check_cap(n: int) -> None:
    if n < 0:
        raise ValueError(f"basis index must be >= 0, got {n}")
    cap = get_context().basis_cap
    if n > cap:
        raise CapExceeded(f"basis index {n} exceeds the configured cap {cap}")


def he_coeffs(n: int) -> list[int]:
    """Integer coefficients of the probabilists' Hermite polynomial He_n."""
    with _he_lock:
        while len(_he_table) <= n:
            k = len(_he_table) - 1
            a, b = _he_table[k - 1], _he_table[k]
            nxt = [0] + b
            for i, v in enumerate(a):
                nxt[i] -= k * v
            _he_table.append(nxt)
        return _he_table[n]


def norm_const(n: int) -> mpfr:
    """(sqrt(2 pi) n!)^(-1/2)."""
    with working():
        return 1 / gmpy2.sqrt(gmpy2.sqrt(2 * gmpy2.const_pi()) * gmpy2.factorial(n))


@lru_cache(maxsize=None)
def _hermite_array(n: int, work_bits: int) -> tuple:
    with working():
        c = norm_const(n)
        return tuple(mpc(c * k) for k in he_coeffs(n))


def hermite_coeff_array(n: int) -> np.ndarray:
    _check_cap(n)
    return _arr(_hermite_array(n, get_context().work_bits))


def hermite_fn(n: int) -> GaussianPolySum:
    """The n-th Hermite function as an exact GaussianPolySum of rate 1/4."""
    _check_cap(n)
    return GaussianPolySum((GaussianTerm(QUARTER, _hermite_array(n, get_context().work_bits)),))


# -- values at zero (closed form) and at general points (recurrence) ------------

@lru_cache(maxsize=None)
def _wallis_logs(nmax: int, work_bits: int) -> tuple:
    """Cumulative log of prod_{k even <= n} (k-1)/k for even n <= nmax."""
    with working():
        out = [mpfr(0)] * (nmax + 1)
        acc = mpfr(0)
        for n in range(2, nmax + 1, 2):
            acc = acc + gmpy2.log(mpfr(n - 1) / n)
            out[n] = acc
        return tuple(out)


def wallis(n: int) -> mpfr:
    """prod_{k even <= n} (k-1)/k = (n-1)!!/n!! for even n, via log space."""
    if n % 2:
        raise ValueError("wallis product is defined for even n")
    size = max(64, 1 << (n.bit_length()))
    with working():
        return gmpy2.exp(_wallis_logs(size, get_context().work_bits)[n])


def hermite_at_zero(n: int) -> mpfr:
    """Closed form of h_n(0)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n % 2:
        return mpfr(0)
    with working():
        val = gmpy2.sqrt(wallis(n)) / gmpy2.root(2 * gmpy2.const_pi(), 4)
        return -val if (n // 2) % 2 else val


class _PointTable:
    """Growing table of h_j(y) from the normalized three-term recurrence."""

    def __init__(self, y):
        self.y = y
        self.values: list = []
        self.lock = threading.Lock()

    def upto(self, n: int) -> list:
        with self.lock:
            if len(self.values) <= n:
                with working():
                    y = to_real(self.y)
                    vals = self.values
                    if not vals:
                        vals.append(gmpy2.exp(-y * y / 4) / gmpy2.root(2 * gmpy2.const_pi(), 4))
                    if len(vals) == 1 and n >= 1:
                        vals.append(y * vals[0])
                    while len(vals) <= n:
                        k = len(vals) - 1
                        vals.append((y * vals[k] - gmpy2.sqrt(k) * vals[k - 1]) / gmpy2.sqrt(k + 1))
            return self.values[: n + 1]


@lru_cache(maxsize=256)
def _point_table(y: Fraction, work_bits: int) -> _PointTable:
    return _PointTable(y)


def hermite_values(n: int, y) -> list:
    """[h_0(y), ..., h_n(y)] at working precision."""
    _check_cap(n)
    return _point_table(to_fraction(y), get_context().work_bits).upto(n)


# -- projection and synthesis ----------------------------------------------------

@dataclass(frozen=True)
class HermiteCoefficients:
    """Entry j is <phi, h_j>."""

    values: tuple

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, j):
        return self.values[j]

    def __len__(self):
        return len(self.values)

    def to_csv(self) -> str:
        return coefficients_csv(self.values)


def coefficients_csv(values: Sequence, header: Sequence[str] = ("n", "value")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for n, v in enumerate(values):
        re_, im_ = fmt_scalar(v)
        w.writerow([n, re_ if im_ == "0" else f"{re_}{'' if im_.startswith('-') else '+'}{im_}j"])
    return buf.getvalue()


def project(f: GaussianPolySum, order: int) -> HermiteCoefficients:
    """Exact Hermite coefficients <f, h_j>, j <= order."""
    _check_cap(order)
    with working():
        mu = _arr(moment_vector(f, QUARTER, order))
        vals = []
        for j in range(order + 1):
            vals.append(np.dot(hermite_coeff_array(j), mu[: j + 1]))
        return HermiteCoefficients(tuple(vals))


def synth(coeffs) -> GaussianPolySum:
    """sum_j c_j h_j as a single rate-1/4 GaussianPolySum."""
    values = coeffs.values if isinstance(coeffs, HermiteCoefficients) else coeffs
    values = list(values)
    if not values:
        return GaussianPolySum.zero()
    _check_cap(len(values) - 1)
    with working():
        out = _zeros(len(values))
        for j, c in enumerate(values):
            c = to_scalar(c)
            if c == 0:
                continue
            arr = hermite_coeff_array(j)
            out[: j + 1] = out[: j + 1] + arr * c
        return canonical({QUARTER: out})


# -- Christoffel-Darboux kernel ---------------------------------------------------

def cd_kernel(n: int, y) -> GaussianPolySum:
    """sum_{j<=n} h_j(y) h_j, by direct summation."""
    return synth(hermite_values(n, y))


def cd_closed_form(n: int, x, y) -> mpfr:
    """sqrt(n+1) (h_{n+1}(x) h_n(y) - h_{n+1}(y) h_n(x)) / (x - y), for x != y."""
    with working():
        hx = hermite_values(n + 1, x)
        hy = hermite_values(n + 1, y)
        num = hx[n + 1] * hy[n] - hy[n + 1] * hx[n]
        return gmpy2.sqrt(n + 1) * num / (to_real(x) - to_real(y))


# -- coefficient-space ladders ------------------------------------------------------

def ladder_derive(a: Sequence) -> list:
    """Hermite coefficients of D(sum a_j h_j), using 2h_j' = sqrt(j) h_{j-1} - sqrt(j+1) h_{j+1}."""
    n = len(a)
    if n == 0:
        return []
    with working():
        out = [mpc(0)] * (n + 1)
        for j, c in enumerate(a):
            if c == 0:
                continue
            if j > 0:
                out[j - 1] += c * gmpy2.sqrt(j) / 2
            out[j + 1] -= c * gmpy2.sqrt(j + 1) / 2
        return out


def ladder_x(a: Sequence) -> list:
    """Hermite coefficients of x * sum a_j h_j, using x h_j = sqrt(j+1) h_{j+1} + sqrt(j) h_{j-1}."""
    n = len(a)
    if n == 0:
        return []
    with working():
        out = [mpc(0)] * (n + 1)
        for j, c in enumerate(a):
            if c == 0:
                continue
            if j > 0:
                out[j - 1] += c * gmpy2.sqrt(j)
            out[j + 1] += c * gmpy2.sqrt(j + 1)
        return out


def ladder_poly(a: Sequence, q: Sequence) -> list:
    """Hermite coefficients of Q(x) * sum a_j h_j for a plain polynomial Q."""
    with working():
        q = [to_scalar(c) for c in q]
        acc: list = []
        for c in reversed(q):
            acc = ladder_x(acc) if acc else []
            scaled = [v * c for v in a]
            acc = [x + y for x, y in zip(_pad(acc, len(scaled)), _pad(scaled, len(acc)))]
        return acc


def _pad(v: list, n: int) -> list:
    return list(v) + [mpc(0)] * max(0, n - len(v))


# -- double-precision evaluation of Hermite series ---------------------------------

def hermite_series_numeric(coeffs: Sequence, x) -> np.ndarray:
    """Evaluate sum_j c_j h_j(x) on a float array with the stable recurrence."""
    c = np.array([complex(v) for v in coeffs])
    if not np.any(c.imag):
        c = c.real
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=c.dtype)
    if len(c) == 0:
        return out
    h_prev = np.exp(-x * x / 4) / (2 * np.pi) ** 0.25
    out += c[0] * h_prev
    if len(c) == 1:
        return out
    h_cur = x * h_prev
    out += c[1] * h_cur
    for k in range(1, len(c) - 1):
        h_next = (x * h_cur - np.sqrt(k) * h_prev) / np.sqrt(k + 1)
        h_prev, h_cur = h_cur, h_next
        if c[k + 1] != 0:
            out += c[k + 1] * h_cur
    return out
