"""Lazy sequence types: representative sequences and tempered numbers.

A :class:`RepSequence` stands for a class ``[f_n]``: it holds one
representative rule ``n -> GaussianPolySum``.  When every representative is a
finite Hermite combination the sequence also carries the coefficient rule,
which keeps derivatives, polynomial multipliers and the spectral transform in
coefficient space and lets the stochastic code evaluate in double precision
through the stable recurrence.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

from .gauss import GaussianPolySum
from .hermite import synth
from .precision import check_finite, get_context, to_scalar, working


class RepSequence:
    """Representative sequence ``n -> f_n`` of a tempered generalized function."""

    def __init__(self, rule: Callable[[int], GaussianPolySum] | None = None,
                 provenance: str = "seq", *,
                 coeffs: Callable[[int], Sequence] | None = None):
        if rule is None and coeffs is None:
            raise ValueError("need a representative rule or a coefficient rule")
        self._rule = rule
        self._coeffs = coeffs
        self.provenance = provenance
        self._memo: dict = {}
        self._lock = threading.Lock()

    @property
    def hermite_form(self) -> bool:
        return self._coeffs is not None

    def coeffs(self, n: int) -> list | None:
        """Hermite coefficients of the n-th representative (hermite-form only)."""
        if self._coeffs is None:
            return None
        key = ("c", n, get_context().work_bits)
        val = self._memo.get(key)
        if val is None:
            val = list(self._coeffs(n))
            self._memo[key] = val
        return val

    def at(self, n: int) -> GaussianPolySum:
        if n < 0:
            raise ValueError("sequence index must be >= 0")
        key = ("f", n, get_context().work_bits)
        val = self._memo.get(key)
        if val is None:
            if self._rule is not None:
                val = self._rule(n)
            else:
                val = synth(self.coeffs(n))
            self._memo[key] = val
        return val

    __call__ = at

    def __repr__(self):
        tag = ", hermite" if self.hermite_form else ""
        return f"RepSequence({self.provenance}{tag})"

    # operator sugar; implementations live in algebra
    def __add__(self, other):
        from .algebra import seq_add
        return seq_add(self, other)

    def __sub__(self, other):
        from .algebra import seq_add, seq_scale
        return seq_add(self, seq_scale(other, -1))

    def __neg__(self):
        from .algebra import seq_scale
        return seq_scale(self, -1)

    def __mul__(self, other):
        from .algebra import seq_mul, seq_scale, seq_scale_tn
        if isinstance(other, RepSequence):
            return seq_mul(self, other)
        if isinstance(other, TemperedNumber):
            return seq_scale_tn(self, other)
        return seq_scale(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def derive(self, order: int = 1) -> "RepSequence":
        from .algebra import seq_derive
        out = self
        for _ in range(order):
            out = seq_derive(out)
        return out


class TemperedNumber:
    """Scalar sequence ``n -> a_n`` standing for a class in s'/s."""

    def __init__(self, rule: Callable[[int], object], provenance: str = "num"):
        self._rule = rule
        self.provenance = provenance
        self._memo: dict = {}

    def at(self, n: int):
        key = (n, get_context().work_bits)
        val = self._memo.get(key)
        if val is None:
            val = check_finite(self._rule(n), f"{self.provenance}[{n}]")
            self._memo[key] = val
        return val

    __call__ = at

    def values(self, nmax: int, start: int = 0) -> list:
        return [self.at(n) for n in range(start, nmax + 1)]

    def __repr__(self):
        return f"TemperedNumber({self.provenance})"

    def __add__(self, other):
        from .algebra import tn_arith
        return tn_arith(self, _as_tn(other), "add")

    __radd__ = __add__

    def __sub__(self, other):
        from .algebra import tn_arith
        return tn_arith(self, tn_arith(_as_tn(other), _as_tn(-1), "mul"), "add")

    def __rsub__(self, other):
        return _as_tn(other) - self

    def __mul__(self, other):
        from .algebra import tn_arith
        return tn_arith(self, _as_tn(other), "mul")

    __rmul__ = __mul__


def _as_tn(v) -> TemperedNumber:
    if isinstance(v, TemperedNumber):
        return v
    from .algebra import tn_from_real
    return tn_from_real(v)


def constant_sequence(f: GaussianPolySum, provenance: str = "const") -> RepSequence:
    return RepSequence(lambda n: f, provenance)


def scalar_at(v):
    with working():
        return to_scalar(v)
