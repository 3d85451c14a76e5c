"""Hermite coefficient streams of tempered distributions and the embedding.

A distribution ``T`` is carried by its coefficient stream ``n -> T(h_n)``;
``embed`` turns a stream into the sequence of partial sums
``T_n = sum_{j<=n} T(h_j) h_j``.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import NonFiniteError
from .gauss import (
    GaussianPolySum, HalfLine, _arr, _zeros, canonical, gp_integral, gp_mul_poly,
    moment_vector,
)
from .hermite import (
    QUARTER, hermite_at_zero, hermite_coeff_array, hermite_fn, hermite_values,
    wallis,
)
from .precision import (
    fmt_scalar, get_context, is_finite, to_fraction, to_real, to_scalar, tol, working,
)
from .sequences import RepSequence

log = logging.getLogger(__name__)


@dataclass
class CoefficientStream:
    """Rule ``n -> T(h_n)`` with a label and an optional claimed growth order."""

    rule: Callable[[int], object]
    label: str
    claimed_order: float | None = None
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self._memo: dict = {}
        self._lock = threading.Lock()

    def __call__(self, n: int) -> mpc:
        key = (n, get_context().work_bits)
        val = self._memo.get(key)
        if val is None:
            with working():
                val = to_scalar(self.rule(n))
            if not is_finite(val):
                raise NonFiniteError(f"{self.label}: non-finite coefficient at n={n}")
            self._memo[key] = val
        return val

    def values(self, nmax: int) -> list:
        return [self(n) for n in range(nmax + 1)]

    def check_growth(self, nmax: int) -> tuple[bool, float]:
        """Fit C in |T(h_n)| <= C (n+1)^p over the prefix; True if the claim holds.

        C is fitted on the first half and the bound is checked on the rest.
        """
        if self.claimed_order is None:
            raise ValueError("stream has no claimed order")
        p = self.claimed_order
        ratios = [float(abs(self(n))) / (n + 1) ** p for n in range(nmax + 1)]
        half = max(1, len(ratios) // 2)
        c = max(ratios[:half])
        return all(r <= c * (1 + 1e-9) for r in ratios[half:]), c

    def __add__(self, other: "CoefficientStream") -> "CoefficientStream":
        return combine(1, self, 1, other)

    def __rmul__(self, s) -> "CoefficientStream":
        s_ = to_scalar(s)
        return CoefficientStream(lambda n: s_ * self(n), f"{s}*{self.label}")

    def to_json(self) -> dict:
        return {"kind": self.descriptor.get("kind", "custom"),
                "params": self.descriptor.get("params", {})}


def combine(alpha, s: CoefficientStream, beta, t: CoefficientStream) -> CoefficientStream:
    a, b = to_scalar(alpha), to_scalar(beta)
    return CoefficientStream(lambda n: a * s(n) + b * t(n), f"{alpha}*{s.label}+{beta}*{t.label}")


# -- classical distributions ------------------------------------------------------

def w_values(y, nmax: int) -> list:
    """W_0..W_nmax at y: W_0 = W_1 = 1, W_{n+2} = y W_n + n(n-1) W_{n-2}."""
    with working():
        y = to_real(y) if not isinstance(y, mpfr) else y
        w = [mpfr(1), mpfr(1)][: nmax + 1]
        for n in range(0, nmax - 1):
            # the n(n-1) factor vanishes for n in {0, 1}, so W_{-2}, W_{-1} are never read
            prev = w[n - 2] if n >= 2 else mpfr(0)
            w.append(y * w[n] + n * (n - 1) * prev)
        return w


def _xplus_formula(p, n: int) -> mpfr:
    with working():
        pr = to_real(p)
        norm = 1 / gmpy2.sqrt(gmpy2.sqrt(2 * gmpy2.const_pi()) * gmpy2.factorial(n))
        wn = w_values(2 * pr + 1, n)[n]
        if n % 2 == 0:
            return norm * gmpy2.exp2(pr) * gmpy2.gamma((pr + 1) / 2) * wn
        return norm * gmpy2.exp2(pr + 1) * gmpy2.gamma((pr + 2) / 2) * wn


def _xplus_quadrature(p: int, n: int) -> mpc:
    """int_0^inf x^p h_n(x) dx exactly, for integer p."""
    return gp_integral(gp_mul_poly(hermite_fn(n), [0] * p + [1]), HalfLine(0, "right"))


def _xplus_rule(p, verify: bool):
    gated = verify and float(p).is_integer() and int(p) in (0, 1, 2)

    def rule(n: int):
        val = _xplus_formula(p, n)
        if gated and n <= 50:
            ref = _xplus_quadrature(int(p), n)
            with working():
                if abs(ref - val) > 10 * tol() * max(1, abs(ref)):
                    log.warning("x_+^%s coefficient n=%d: formula %s differs from quadrature %s",
                                p, n, val, ref)
                    return ref
        return val

    return rule


def _one_rule(n: int):
    if n % 2:
        return mpfr(0)
    with working():
        return gmpy2.root(8 * gmpy2.const_pi(), 4) * gmpy2.sqrt(wallis(n))


def _delta_prime_rule(n: int):
    # delta'(phi) = -phi'(0) and h_n'(0) = sqrt(n) h_{n-1}(0)
    if n == 0:
        return mpfr(0)
    with working():
        return -gmpy2.sqrt(n) * hermite_at_zero(n - 1)


def delta_prime_as_printed(n: int) -> mpfr:
    """The published coefficient sqrt(n) h_{n-1}(0), kept only for the erratum check."""
    if n == 0:
        return mpfr(0)
    with working():
        return gmpy2.sqrt(n) * hermite_at_zero(n - 1)


def stream_classic(kind: str, p=None, a=0, verify: bool = True) -> CoefficientStream:
    """Coefficient streams of delta (optionally at a), 1, x_+^p, delta' and H."""
    if kind == "delta":
        a = to_fraction(a)
        if a == 0:
            return CoefficientStream(hermite_at_zero, "delta", 0,
                                     {"kind": "delta", "params": {}})
        return CoefficientStream(lambda n: hermite_values(n, a)[n], f"delta_{a}", 0,
                                 {"kind": "delta", "params": {"a": str(a)}})
    if kind == "one":
        return CoefficientStream(_one_rule, "one", 0, {"kind": "one", "params": {}})
    if kind in ("xplus", "heaviside"):
        if kind == "heaviside":
            p = 0
        if p is None or float(p) < 0:
            raise ValueError("xplus needs p >= 0")
        return CoefficientStream(_xplus_rule(p, verify), f"xplus^{p}", float(p) + 1,
                                 {"kind": kind, "params": {"p": str(p)}})
    if kind == "delta_prime":
        return CoefficientStream(_delta_prime_rule, "delta'", 1,
                                 {"kind": "delta_prime", "params": {}})
    raise ValueError(f"unknown classical distribution {kind!r}")


# -- general streams ------------------------------------------------------------

def _abs_rule(a: Fraction):
    def rule(n: int):
        h = hermite_fn(n)
        shifted = gp_mul_poly(h, [-a, 1])
        right = gp_integral(shifted, HalfLine(a, "right"))
        left = gp_integral(shifted, HalfLine(a, "left"))
        return right - left
    return rule


def _sgn_rule(a: Fraction):
    def rule(n: int):
        h = hermite_fn(n)
        return gp_integral(h, HalfLine(a, "right")) - gp_integral(h, HalfLine(a, "left"))
    return rule


class _Projector:
    """<phi, h_n> for growing n, reusing one moment vector."""

    def __init__(self, phi: GaussianPolySum):
        self.phi = phi
        self.mu: list = []
        self.bits = None
        self.lock = threading.Lock()

    def __call__(self, n: int):
        with self.lock:
            bits = get_context().work_bits
            if len(self.mu) <= n or self.bits != bits:
                size = max(n + 1, 2 * len(self.mu), 16)
                self.mu = moment_vector(self.phi, QUARTER, size - 1)
                self.bits = bits
            mu = self.mu
        with working():
            return np.dot(hermite_coeff_array(n), _arr(mu[: n + 1]))


def stream_general(kind: str, a=0, phi: GaussianPolySum | None = None,
                   action: Callable[[GaussianPolySum], object] | None = None,
                   label: str | None = None) -> CoefficientStream:
    """Streams of |x-a|, sgn(x-a), a Gaussian-polynomial function, or a custom action."""
    if kind == "abs":
        a = to_fraction(a)
        return CoefficientStream(_abs_rule(a), f"abs_{a}", 1,
                                 {"kind": "abs", "params": {"a": str(a)}})
    if kind == "sgn":
        a = to_fraction(a)
        return CoefficientStream(_sgn_rule(a), f"sgn_{a}", 0,
                                 {"kind": "sgn", "params": {"a": str(a)}})
    if kind == "from_gps":
        if phi is None:
            raise ValueError("from_gps needs phi")
        return CoefficientStream(_Projector(phi), label or "phi", None,
                                 {"kind": "from_gps", "params": {"phi": phi.to_json()}})
    if kind == "custom":
        if action is None:
            raise ValueError("custom needs an action")

        def rule(n: int):
            val = action(hermite_fn(n))
            if not is_finite(to_scalar(val)):
                raise NonFiniteError(f"custom action returned non-finite value at n={n}")
            return val

        return CoefficientStream(rule, label or "custom", None, {"kind": "custom", "params": {}})
    raise ValueError(f"unknown stream kind {kind!r}")


def stream_derive(s: CoefficientStream) -> CoefficientStream:
    """Stream of DT: (DT)(h_n) = -T(h_n') = (sqrt(n+1) T(h_{n+1}) - sqrt(n) T(h_{n-1})) / 2."""
    def rule(n: int):
        with working():
            up = gmpy2.sqrt(n + 1) * s(n + 1)
            down = gmpy2.sqrt(n) * s(n - 1) if n > 0 else 0
            return (up - down) / 2

    order = None if s.claimed_order is None else s.claimed_order + 1
    return CoefficientStream(rule, f"D({s.label})", order,
                             {"kind": "derive", "params": {"of": s.to_json()}})


def hermite_stream(k: int) -> CoefficientStream:
    """Stream of the single basis function h_k (exact 0/1 coefficients)."""
    return CoefficientStream(lambda n: 1 if n == k else 0, f"h{k}", 0,
                             {"kind": "hermite", "params": {"k": k}})


# -- embedding ---------------------------------------------------------------------

class _PartialSums:
    """Running sum_{j<=n} c_j h_j, extended incrementally."""

    def __init__(self, stream: CoefficientStream):
        self.stream = stream
        self.acc = None
        self.upto = -1
        self.bits = None
        self.lock = threading.Lock()

    def __call__(self, n: int) -> GaussianPolySum:
        with self.lock, working():
            bits = get_context().work_bits
            if self.bits != bits:
                self.acc, self.upto, self.bits = _zeros(0), -1, bits
            if n < self.upto:
                # going backwards: sum afresh, keep the running total
                acc = _zeros(n + 1)
                for j in range(n + 1):
                    c = self.stream(j)
                    if c != 0:
                        acc[: j + 1] = acc[: j + 1] + hermite_coeff_array(j) * c
                return canonical({QUARTER: acc})
            if self.upto < n:
                acc = _zeros(n + 1)
                acc[: len(self.acc)] = self.acc
                for j in range(self.upto + 1, n + 1):
                    c = self.stream(j)
                    if c != 0:
                        acc[: j + 1] = acc[: j + 1] + hermite_coeff_array(j) * c
                self.acc, self.upto = acc, n
            return canonical({QUARTER: self.acc[: n + 1].copy()})


def embed(c: CoefficientStream) -> RepSequence:
    """n -> sum_{j<=n} T(h_j) h_j."""
    return RepSequence(_PartialSums(c), f"embed({c.label})", coeffs=c.values)


def stream_csv_rows(c: CoefficientStream, nmax: int) -> list:
    return [[n, *fmt_scalar(c(n))] for n in range(nmax + 1)]
