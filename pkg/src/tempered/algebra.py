"""Calculus on representative sequences and tempered numbers.

Every operation acts representative-wise, ``[f_n] -> [op(f_n)]``, through the
exact routines in :mod:`tempered.gauss`.  Statements about classes (association,
moderation, negligibility) are decided from finite prefixes by the explicit
heuristics in this module; they are diagnostics, not proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc

from .dist import CoefficientStream
from .errors import BackendError
from .gauss import (
    Full, GaussianPolySum, Region, _arr, gp_add, gp_convolve, gp_derive, gp_eval,
    gp_fourier, gp_integral, gp_mul, gp_mul_poly, gp_norm, gp_scale,
)
from .hermite import (
    hermite_coeff_array, hermite_fn, ladder_derive, ladder_poly, project,
    synth,
)
from .precision import fmt_scalar, get_context, to_fraction, to_scalar, working
from .sequences import RepSequence, TemperedNumber

ASSOC_TOL = 1e-3


# -- sequence arithmetic ---------------------------------------------------------

def _padded_sum(a: Sequence, b: Sequence, beta=1) -> list:
    n = max(len(a), len(b))
    with working():
        out = [mpc(0)] * n
        for j, v in enumerate(a):
            out[j] += v
        for j, v in enumerate(b):
            out[j] += beta * v
        return out


def seq_add(f: RepSequence, g: RepSequence) -> RepSequence:
    coeffs = None
    if f.hermite_form and g.hermite_form:
        coeffs = lambda n: _padded_sum(f.coeffs(n), g.coeffs(n))
    return RepSequence(lambda n: gp_add(f(n), g(n)),
                       f"add({f.provenance},{g.provenance})", coeffs=coeffs)


def seq_scale(f: RepSequence, s) -> RepSequence:
    s_ = to_scalar(s)
    coeffs = None
    if f.hermite_form:
        def coeffs(n):
            with working():
                return [v * s_ for v in f.coeffs(n)]
    return RepSequence(lambda n: gp_scale(f(n), s_), f"scale({s},{f.provenance})",
                       coeffs=coeffs)


def seq_scale_tn(f: RepSequence, a: TemperedNumber) -> RepSequence:
    """h-module action: n -> a_n f_n."""
    coeffs = None
    if f.hermite_form:
        def coeffs(n):
            with working():
                an = to_scalar(a(n))
                return [v * an for v in f.coeffs(n)]
    return RepSequence(lambda n: gp_scale(f(n), a(n)),
                       f"scale_tn({a.provenance},{f.provenance})", coeffs=coeffs)


def seq_mul(f: RepSequence, g: RepSequence) -> RepSequence:
    return RepSequence(lambda n: gp_mul(f(n), g(n)), f"mul({f.provenance},{g.provenance})")


def seq_derive(f: RepSequence) -> RepSequence:
    coeffs = None
    if f.hermite_form:
        coeffs = lambda n: ladder_derive(f.coeffs(n))
        # synthesizing from the ladder keeps the representative single-rate
        return RepSequence(None, f"D({f.provenance})", coeffs=coeffs)
    return RepSequence(lambda n: gp_derive(f(n)), f"D({f.provenance})")


def seq_mul_poly(f: RepSequence, q: Sequence) -> RepSequence:
    q = list(q)
    label = f"mul_poly({','.join(str(c) for c in q)};{f.provenance})"
    if f.hermite_form:
        return RepSequence(None, label, coeffs=lambda n: ladder_poly(f.coeffs(n), q))
    return RepSequence(lambda n: gp_mul_poly(f(n), q), label)


def seq_arith(f: RepSequence, g: RepSequence | None = None, op: str = "add", *,
              a: TemperedNumber | None = None, q: Sequence | None = None, s=None) -> RepSequence:
    if op == "add":
        return seq_add(f, g)
    if op == "mul":
        return seq_mul(f, g)
    if op == "derive":
        return seq_derive(f)
    if op == "scale":
        return seq_scale(f, s)
    if op == "scale_tn":
        return seq_scale_tn(f, a)
    if op == "mul_poly":
        return seq_mul_poly(f, q)
    raise ValueError(f"unknown op {op!r}")


def seq_from_function(phi: GaussianPolySum, label: str = "phi") -> RepSequence:
    """The constant sequence n -> phi (the canonical representative of a Schwartz function)."""
    return RepSequence(lambda n: phi, f"const({label})")


# -- Fourier transform and convolution --------------------------------------------

def seq_fourier(f: RepSequence, backend: str = "analytic",
                direction: str = "forward") -> RepSequence:
    """Fourier transform per representative.

    ``analytic`` applies the exact integral transform to each f_n.  ``spectral``
    maps Hermite coefficients a_k -> (-i)^k a_k (i^k for the inverse) and needs
    a hermite-form input.
    """
    if direction not in ("forward", "inverse"):
        raise BackendError(f"direction must be forward or inverse, got {direction!r}")
    tag = "F" if direction == "forward" else "Finv"
    if backend == "analytic":
        return RepSequence(lambda n: gp_fourier(f(n), direction),
                           f"{tag}[analytic]({f.provenance})")
    if backend == "spectral":
        if not f.hermite_form:
            raise BackendError("spectral Fourier backend needs a Hermite-form sequence")
        unit = mpc(0, -1) if direction == "forward" else mpc(0, 1)
        powers = [mpc(1), unit, mpc(-1), -unit]

        def coeffs(n):
            with working():
                return [powers[k % 4] * v for k, v in enumerate(f.coeffs(n))]

        return RepSequence(None, f"{tag}[spectral]({f.provenance})", coeffs=coeffs)
    raise BackendError(f"unknown Fourier backend {backend!r}")


def seq_convolve(f: RepSequence, g: RepSequence) -> RepSequence:
    return RepSequence(lambda n: gp_convolve(f(n), g(n)),
                       f"conv({f.provenance},{g.provenance})")


# -- tempered numbers ----------------------------------------------------------

def tn_from_real(r) -> TemperedNumber:
    with working():
        v = to_scalar(r)
    return TemperedNumber(lambda n: v, f"const({r})")


def tn_arith(a: TemperedNumber | None = None, b: TemperedNumber | None = None, op: str = "add",
             r=None) -> TemperedNumber:
    if op == "from_real":
        return tn_from_real(r)
    if op == "add":
        def rule(n):
            with working():
                return to_scalar(a(n)) + to_scalar(b(n))
        return TemperedNumber(rule, f"add({a.provenance},{b.provenance})")
    if op == "mul":
        def rule(n):
            with working():
                return to_scalar(a(n)) * to_scalar(b(n))
        return TemperedNumber(rule, f"mul({a.provenance},{b.provenance})")
    raise ValueError(f"unknown op {op!r}")


def seq_integrate(f: RepSequence, region: Region | None = None) -> TemperedNumber:
    region = Full() if region is None else region
    return TemperedNumber(lambda n: gp_integral(f(n), region),
                          f"int[{region}]({f.provenance})")


def seq_point_value(f: RepSequence, a) -> TemperedNumber:
    a = to_fraction(a)
    return TemperedNumber(lambda n: gp_eval(f(n), a), f"at[{a}]({f.provenance})")


class _ProbeProjection:
    """Growing table of <phi, h_j>."""

    def __init__(self, phi: GaussianPolySum):
        self.phi = phi
        self.values: list = []
        self.bits = None

    def upto(self, n: int) -> list:
        bits = get_context().work_bits
        if len(self.values) <= n or self.bits != bits:
            size = max(n + 1, 2 * len(self.values), 16)
            size = min(size, get_context().basis_cap + 1)
            self.values = list(project(self.phi, max(size - 1, n)).values)
            self.bits = bits
        return self.values


def seq_pairing(f: RepSequence, phi: GaussianPolySum, exact: bool = False) -> TemperedNumber:
    """n -> int f_n phi dx.

    Hermite-form sequences are paired through the probe's Hermite coefficients
    unless ``exact`` asks for the direct product integral.
    """
    if f.hermite_form and not exact:
        table = _ProbeProjection(phi)

        def rule(n):
            c = f.coeffs(n)
            p = table.upto(len(c) - 1)
            with working():
                return np.dot(_arr(c), _arr(p[: len(c)])) if c else mpc(0)
    else:
        def rule(n):
            return gp_integral(gp_mul(f(n), phi), Full())
    return TemperedNumber(rule, f"pair({f.provenance})")


# -- association ------------------------------------------------------------------

@dataclass
class Verdict:
    verdict: str
    prefix: int
    exponent: float | None = None
    witness: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "exponent": self.exponent,
                "witness": self.witness, "prefix": self.prefix}


def default_probes(k_max: int = 4, seed: int = 0) -> list[tuple[str, GaussianPolySum]]:
    """h_0..h_K plus two seeded random polynomial-times-Gaussian probes."""
    rng = np.random.default_rng(seed)
    probes = [(f"h{k}", hermite_fn(k)) for k in range(k_max + 1)]
    for rate in (Fraction(1, 3), Fraction(3, 4)):
        coeffs = [Fraction(int(rng.integers(-8, 9)), 4) for _ in range(3)]
        if coeffs[-1] == 0:
            coeffs[-1] = Fraction(1)
        label = f"gauss[{rate};{','.join(str(c) for c in coeffs)}]"
        probes.append((label, GaussianPolySum.gaussian(rate, coeffs)))
    return probes


def _fit_exponent(ns: Sequence[int], vals: Sequence[float]) -> float | None:
    pts = [(math.log(n + 1), math.log(v)) for n, v in zip(ns, vals) if v > 0]
    if len(pts) < 2:
        return None
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def _classify(mags: list[float], assoc_tol: float) -> tuple[str, float | None]:
    """Apply the prefix heuristic to |pairing_n|, n = 0..N.

    The envelope max(|v_n|, |v_{n-1}|) smooths out parity zeros.  Associated:
    the envelope does not increase over the last half and its final value is
    below assoc_tol * peak.  Not associated: the envelope stays above
    10 * assoc_tol * peak throughout the last quarter.
    """
    peak = max(mags)
    if peak == 0:
        return "Associated", None
    env = [max(mags[i], mags[i - 1]) if i else mags[0] for i in range(len(mags))]
    n = len(env)
    half = env[n // 2:]
    quarter = env[-max(2, n // 4):]
    ns = list(range(n))[-len(quarter):]
    expo = _fit_exponent(ns, quarter)
    decreasing = all(b <= a * (1 + 1e-9) for a, b in zip(half, half[1:])) or \
        max(half[len(half) // 2:]) <= max(half[: len(half) // 2])
    if decreasing and env[-1] < assoc_tol * peak:
        return "Associated", expo
    if min(quarter) > 10 * assoc_tol * peak:
        return "NotAssociated", expo
    return "Inconclusive", expo


def associated(f: RepSequence, g: RepSequence,
               probes: Sequence[tuple[str, GaussianPolySum]] | None = None,
               nmax: int = 64, assoc_tol: float = ASSOC_TOL, k_max: int = 4,
               seed: int = 0) -> Verdict:
    """Decide f ~ g from the pairings <f_n - g_n, phi>, n <= nmax, per probe."""
    if probes is None:
        probes = default_probes(k_max, seed)
    if not probes:
        raise ValueError("probe list must be non-empty")
    diff = seq_add(f, seq_scale(g, -1))
    table = {}
    verdicts = []
    for label, phi in probes:
        tn = seq_pairing(diff, phi)
        vals = tn.values(nmax)
        table[label] = vals
        mags = [float(abs(v)) for v in vals]
        verdicts.append((label,) + _classify(mags, assoc_tol))
    out = _combine(verdicts, nmax)
    out.diagnostics["pairings"] = table
    return out


def _combine(verdicts, nmax: int) -> Verdict:
    for label, v, expo in verdicts:
        if v == "NotAssociated":
            return Verdict("NotAssociated", nmax, expo, label)
    if all(v == "Associated" for _, v, _ in verdicts):
        expos = [e for _, _, e in verdicts if e is not None]
        return Verdict("Associated", nmax, min(expos) if expos else None, None)
    bad = next(label for label, v, _ in verdicts if v == "Inconclusive")
    return Verdict("Inconclusive", nmax, None, bad)


def tn_associated(a: TemperedNumber, b: TemperedNumber, nmax: int = 64,
                  assoc_tol: float = ASSOC_TOL) -> Verdict:
    diff = tn_arith(a, tn_arith(b, tn_from_real(-1), "mul"), "add")
    vals = diff.values(nmax)
    v, expo = _classify([float(abs(x)) for x in vals], assoc_tol)
    out = Verdict(v, nmax, expo, None if v != "NotAssociated" else "value")
    out.diagnostics["values"] = vals
    return out


def pairing_rows(verdict: Verdict) -> list:
    """CSV rows (n, probe, value) from an association verdict."""
    rows = []
    for label, vals in verdict.diagnostics.get("pairings", {}).items():
        for n, v in enumerate(vals):
            rows.append([n, label, *fmt_scalar(v)])
    return rows


# -- moderation ---------------------------------------------------------------------

def _norm_grid(nmax: int, points: int = 14) -> list[int]:
    grid = {0, nmax}
    for x in np.geomspace(1, nmax, points):
        grid.add(int(round(x)))
    return sorted(grid)


def seq_norm(f: RepSequence, n: int, m: int):
    """||f_n||_m; Hermite-form sequences use the spectral identity."""
    if f.hermite_form:
        with working():
            c = f.coeffs(n)
            total = sum(((j + 1) ** (2 * m)) * abs(v) ** 2 for j, v in enumerate(c) if v != 0)
            return gmpy2.sqrt(gmpy2.mpfr(total))
    return gp_norm(f(n), m)


def moderation_class(f: RepSequence, m: int = 0, nmax: int = 200,
                     spectral: bool = False, points: int = 14) -> Verdict:
    """Moderate (polynomial growth), Negligible (super-polynomial decay) or Inconclusive.

    Norms are computed with the number operator unless ``spectral`` is set.
    The log-log slopes between consecutive grid points drive the verdict:
    slopes that keep falling and end below -8 mean negligible, slopes in the
    upper half of the grid agreeing to within 0.25 mean moderate.
    """
    if nmax < 16:
        raise ValueError("moderation needs nmax >= 16")
    grid = _norm_grid(nmax, points)
    norms = []
    for n in grid:
        if spectral:
            norms.append(float(seq_norm(f, n, m)))
        else:
            norms.append(float(gp_norm(f(n), m)))
    diag = {"grid": grid, "norms": norms}
    tail = [(n, v) for n, v in zip(grid, norms) if n >= 1]
    if all(v == 0 for _, v in tail[len(tail) // 2:]):
        return Verdict("Negligible", nmax, None, None, dict(diag, evidence="identically zero"))
    if any(v == 0 for _, v in tail):
        return Verdict("Inconclusive", nmax, None, None, diag)
    logs = [(math.log(n + 1), math.log(v)) for n, v in tail]
    slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(logs, logs[1:])]
    diag["slopes"] = slopes
    upper = slopes[len(slopes) // 2:]
    if all(b < a for a, b in zip(upper, upper[1:])) and upper[-1] < -8:
        return Verdict("Negligible", nmax, None, None, dict(diag, evidence=f"slope {upper[-1]:.3g}"))
    if max(upper) - min(upper) <= 0.25:
        half = [(n, v) for n, v in tail if n >= grid[-1] // 4]
        expo = _fit_exponent([n for n, _ in half], [v for _, v in half])
        return Verdict("Moderate", nmax, expo, None, diag)
    return Verdict("Inconclusive", nmax, None, None, diag)


# -- symmetric Hermite product ------------------------------------------------------

@dataclass
class SymProduct:
    """Per-k sequences <S_n T_n, h_k> with convergence diagnostics."""

    ns: list
    table: list  # table[k][i] = <S_n T_n, h_k> at n = ns[i]
    converged: list
    spread: list
    exponent: list

    def limits(self) -> list:
        return [row[-1] for row in self.table]

    def synthesize(self) -> GaussianPolySum:
        return synth(self.limits())

    def rows(self) -> list:
        out = []
        for k, row in enumerate(self.table):
            for n, v in zip(self.ns, row):
                out.append([k, n, *fmt_scalar(v)])
        return out

    def summary(self) -> list[dict]:
        return [{"k": k, "last": fmt_scalar(row[-1]), "converged": self.converged[k],
                 "spread": self.spread[k], "exponent": self.exponent[k]}
                for k, row in enumerate(self.table)]


def symmetric_product(s: CoefficientStream, t: CoefficientStream, kmax: int = 4,
                      nmax: int = 64, ns: Sequence[int] | None = None,
                      tail: float = 0.25) -> SymProduct:
    """Diagnostics for c_k = lim <T_n S_n, h_k>; never asserts the limit exists.

    A row counts as converged when the values over the last ``tail`` fraction of
    the n-grid agree to the comparison tolerance.
    """
    ns = list(range(nmax + 1)) if ns is None else sorted(ns)
    top = ns[-1]
    with working():
        hk = [hermite_coeff_array(k) for k in range(kmax + 1)]
        # rate 1/4 + 1/4 for the product, 1/4 for h_k
        mom = _arr(_moments_rate(Fraction(3, 4), 2 * top + kmax))
        table = [[] for _ in range(kmax + 1)]
        for n in ns:
            a = _prefix_poly(s, n)
            b = a if t is s else _prefix_poly(t, n)
            prod = np.convolve(a, b)
            # mu_j = sum_i prod_i M_{i+j}
            for k in range(kmax + 1):
                total = mpc(0)
                for j, hc in enumerate(hk[k]):
                    if hc != 0:
                        total += hc * np.dot(prod, mom[j: j + len(prod)])
                table[k].append(total)
    tol = float(get_context().tol)
    converged, spread, expo = [], [], []
    cut = max(1, int(len(ns) * tail))
    for row in table:
        last = row[-cut:]
        mags = [float(abs(v)) for v in last]
        sp = max(float(abs(v - last[-1])) for v in last)
        spread.append(sp)
        converged.append(sp <= tol * max(1.0, float(abs(last[-1]))))
        expo.append(_fit_exponent(ns[-cut:], mags) if len(last) > 1 else None)
    return SymProduct(ns, table, converged, spread, expo)


def _prefix_poly(s: CoefficientStream, n: int) -> np.ndarray:
    """Monomial coefficients of sum_{j<=n} s(h_j) h_j / exp(-x^2/4), kept on the stream."""
    bits = get_context().work_bits
    ent = getattr(s, "_prefix", None)
    if ent is None or ent[0] != bits or ent[1] > n:
        ent = [bits, -1, np.empty(0, dtype=object)]
        s._prefix = ent
    _, upto, acc = ent
    if upto < n:
        new = np.empty(n + 1, dtype=object)
        new[:] = [mpc(0)] * (n + 1)
        new[: len(acc)] = acc
        for j in range(upto + 1, n + 1):
            c = s(j)
            if c != 0:
                new[: j + 1] = new[: j + 1] + hermite_coeff_array(j) * c
        ent[1], ent[2] = n, new
        acc = new
    return acc[: n + 1].copy()


def _moments_rate(rate: Fraction, kmax: int) -> list:
    from .gauss import _full_moments
    return _full_moments(rate, kmax)


def leibniz_check(s: CoefficientStream, t: CoefficientStream, kmax: int = 4,
                  nmax: int = 16) -> list:
    """Residuals of D(S.T) - (DS.T + S.DT) on the first kmax coefficients."""
    from .dist import stream_derive
    ds, dt = stream_derive(s), stream_derive(t)
    st = symmetric_product(s, t, kmax + 1, nmax, ns=[nmax]).limits()
    lhs = ladder_derive(st)[: kmax + 1]
    a = symmetric_product(ds, t, kmax, nmax, ns=[nmax]).limits()
    b = symmetric_product(s, dt, kmax, nmax, ns=[nmax]).limits()
    with working():
        return [lhs[k] - a[k] - b[k] for k in range(kmax + 1)]
