"""Shared oracles and strategies.

The mpmath helpers rebuild functions from decimal strings so they share no
arithmetic with the package under test.
"""

from fractions import Fraction

import mpmath
import pytest
from hypothesis import strategies as st

from tempered import GaussianPolySum
from tempered.precision import get_context

RATES = [Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(1), Fraction(3, 2)]


def tol() -> float:
    return float(get_context().tol)


def mp_function(f: GaussianPolySum):
    """Independent mpmath evaluator of a GaussianPolySum."""
    terms = [(mpmath.mpf(t.rate.numerator) / t.rate.denominator,
              [mpmath.mpc(str(c.real), str(c.imag)) for c in t.coeffs]) for t in f.terms]

    def ev(x):
        total = mpmath.mpc(0)
        for rate, cs in terms:
            total += mpmath.polyval(cs[::-1], x) * mpmath.exp(-rate * x * x)
        return total

    return ev


def mp_quad(f: GaussianPolySum, a=-mpmath.inf, b=mpmath.inf, dps: int = 60):
    with mpmath.workdps(dps):
        ev = mp_function(f)
        pts = [a, 0, b] if a == -mpmath.inf and b == mpmath.inf else [a, b]
        return mpmath.quad(ev, pts)


def mp_hermite_fn(n: int, x):
    """h_n(x) from mpmath's physicists' polynomials: He_n(x) = 2^(-n/2) H_n(x/sqrt 2)."""
    x = mpmath.mpf(x)
    he = mpmath.hermite(n, x / mpmath.sqrt(2)) / mpmath.power(2, mpmath.mpf(n) / 2)
    norm = 1 / mpmath.sqrt(mpmath.sqrt(2 * mpmath.pi) * mpmath.factorial(n))
    return norm * mpmath.exp(-x * x / 4) * he


@st.composite
def gaussian_sums(draw, max_terms=2, max_degree=4, complex_coeffs=True):
    n_terms = draw(st.integers(1, max_terms))
    rates = draw(st.lists(st.sampled_from(RATES), min_size=n_terms, max_size=n_terms,
                          unique=True))
    out = GaussianPolySum.zero()
    for r in rates:
        deg = draw(st.integers(0, max_degree))
        re = draw(st.lists(st.integers(-5, 5), min_size=deg + 1, max_size=deg + 1))
        if complex_coeffs and draw(st.booleans()):
            im = draw(st.lists(st.integers(-3, 3), min_size=deg + 1, max_size=deg + 1))
        else:
            im = [0] * (deg + 1)
        out = out + GaussianPolySum.gaussian(r, [complex(a, b) for a, b in zip(re, im)])
    return out


@pytest.fixture(autouse=True)
def _mp_precision():
    with mpmath.workdps(60):
        yield


def mp_hermite_quad(n: int, weight=None, a=-mpmath.inf, b=mpmath.inf, breaks=()):
    """int_a^b weight(x) h_n(x) dx with mpmath, splitting the range where h_n oscillates."""
    weight = weight or (lambda x: 1)
    lo = max(a, -40) if a != -mpmath.inf else -40
    hi = min(b, 40) if b != mpmath.inf else 40
    pts = sorted({lo + (hi - lo) * mpmath.mpf(k) / 40 for k in range(41)} | set(breaks))
    if a == -mpmath.inf:
        pts = [a] + pts
    if b == mpmath.inf:
        pts = pts + [b]
    return mpmath.quad(lambda x: weight(x) * mp_hermite_fn(n, x), pts)


def mp_hermite_moment(n: int, p: int, full: bool = False):
    """int_0^inf x^p h_n(x) dx (or over the whole line) by termwise gamma integrals."""
    norm = 1 / mpmath.sqrt(mpmath.sqrt(2 * mpmath.pi) * mpmath.factorial(n))
    total = mpmath.mpf(0)
    for m in range(n // 2 + 1):
        k = n - 2 * m + p
        c = (-1) ** m * mpmath.factorial(n) / (mpmath.factorial(m) * mpmath.factorial(n - 2 * m)
                                               * mpmath.power(2, m))
        half = mpmath.power(2, k) * mpmath.gamma(mpmath.mpf(k + 1) / 2)
        total += c * (half * (1 + (-1) ** k) if full else half)
    return norm * total
