"""Simulated semimartingales and pathwise checks of the generalized Ito calculus.

Paths come from an Euler-Maruyama scheme driven by a counter-based generator
(Philox keyed by ``(seed, path_id)``), so each path depends only on its own key
and Monte Carlo batches give the same numbers under any scheduling.  Stochastic
integrals are left-endpoint Riemann sums on the path grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import numpy as np

from .dist import embed, stream_classic, stream_general
from .errors import GridOverflow
from .gauss import (
    GaussianPolySum, gp_add, gp_convolve, gp_derive, gp_eval, gp_numeric, gp_scale,
)
from .hermite import hermite_series_numeric, ladder_derive
from .precision import to_fraction, working
from .sequences import RepSequence, TemperedNumber

MAX_STEPS = 10 ** 7


# -- process specifications --------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseLinear:
    """Finite-variation component through the knots (times[i], values[i])."""

    times: tuple = (0.0, 1.0)
    values: tuple = (0.0, 0.0)

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) < 2:
            raise ValueError("need at least two knots with matching values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("knot times must be increasing")

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def total_variation(self, T: float) -> float:
        ts = [t for t in self.times if t < T] + [T]
        vs = self(np.array(ts))
        return float(np.sum(np.abs(np.diff(vs))))


@dataclass(frozen=True)
class BM:
    x0: float = 0.0
    sigma: float = 1.0
    V: PiecewiseLinear | None = None


@dataclass(frozen=True)
class DriftBM:
    x0: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0
    V: PiecewiseLinear | None = None


@dataclass(frozen=True)
class OU:
    x0: float = 0.0
    theta: float = 1.0
    mean: float = 0.0
    sigma: float = 1.0
    V: PiecewiseLinear | None = None


@dataclass(frozen=True)
class Deterministic:
    """x(t) = sum_k coeffs[k] t^k; no martingale part."""

    coeffs: tuple = (0.0, 1.0)
    V: PiecewiseLinear | None = None


ProcessSpec = BM | DriftBM | OU | Deterministic
_KINDS = {"BM": BM, "DriftBM": DriftBM, "OU": OU, "Deterministic": Deterministic}


def spec_to_json(spec) -> dict:
    d = asdict(spec)
    if d.get("V") is not None:
        d["V"] = {"times": list(spec.V.times), "values": list(spec.V.values)}
    if "coeffs" in d:
        d["coeffs"] = list(d["coeffs"])
    return {"kind": type(spec).__name__, **d}


def spec_from_json(d: dict):
    d = dict(d)
    cls = _KINDS[d.pop("kind")]
    if d.get("V") is not None:
        d["V"] = PiecewiseLinear(tuple(d["V"]["times"]), tuple(d["V"]["values"]))
    if "coeffs" in d:
        d["coeffs"] = tuple(d["coeffs"])
    return cls(**d)


def _sigma(spec) -> float:
    if isinstance(spec, Deterministic):
        return 0.0
    if spec.sigma < 0:
        raise ValueError("sigma must be >= 0")
    return float(spec.sigma)


# -- sample paths -------------------------------------------------------------------

@dataclass
class SamplePath:
    """Uniform grid, values and realized quadratic variation of the martingale part."""

    t: np.ndarray
    x: np.ndarray
    qv: np.ndarray
    dt: float
    spec: object = None
    path_id: int = 0

    def __post_init__(self):
        if not (len(self.t) == len(self.x) == len(self.qv)):
            raise ValueError("grid, values and qv must have equal length")

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def analytic_qv(self) -> np.ndarray:
        """sigma^2 t for the simulated families (all have constant sigma)."""
        s = _sigma(self.spec) if self.spec is not None else 0.0
        return s * s * self.t


def grid_steps(T, dt) -> int:
    if to_fraction(dt) <= 0:
        raise ValueError("dt must be positive")
    ratio = to_fraction(T) / to_fraction(dt)
    if ratio.denominator != 1:
        raise GridOverflow(f"T/dt = {ratio} is not an integer")
    n = int(ratio)
    if n > MAX_STEPS:
        raise GridOverflow(f"T/dt = {n} exceeds {MAX_STEPS} steps")
    if n < 1:
        raise GridOverflow("T/dt must be at least 1")
    return n


def normals(seed: int, path_id: int, n: int) -> np.ndarray:
    """The n standard normals of one path; Philox counter stream keyed by (seed, path_id)."""
    bitgen = np.random.Philox(key=np.array([seed, path_id], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal(n)


def simulate(spec, T, dt, seed: int, path_id: int = 0) -> SamplePath:
    n = grid_steps(T, dt)
    dtf = float(to_fraction(dt))
    t = np.arange(n + 1) * dtf
    if isinstance(spec, Deterministic):
        x = np.polynomial.polynomial.polyval(t, np.array(spec.coeffs, dtype=float))
        qv = np.zeros(n + 1)
    else:
        sig = _sigma(spec)
        noise = sig * math.sqrt(dtf) * normals(seed, path_id, n)
        if isinstance(spec, BM):
            x = spec.x0 + np.concatenate(([0.0], np.cumsum(noise)))
        elif isinstance(spec, DriftBM):
            x = spec.x0 + np.concatenate(([0.0], np.cumsum(noise + spec.mu * dtf)))
        else:
            x = np.empty(n + 1)
            x[0] = spec.x0
            a = 1.0 - spec.theta * dtf
            b = spec.theta * spec.mean * dtf
            for i in range(n):
                x[i + 1] = a * x[i] + b + noise[i]
        qv = np.concatenate(([0.0], np.cumsum(noise * noise)))
    if spec.V is not None:
        x = x + spec.V(t)
    return SamplePath(t, x, qv, dtf, spec, path_id)


def constant_path(c: float, T: float = 1.0, dt: float = 0.01) -> SamplePath:
    n = grid_steps(T, dt)
    dtf = float(to_fraction(dt))
    t = np.arange(n + 1) * dtf
    return SamplePath(t, np.full(n + 1, float(c)), np.zeros(n + 1), dtf,
                      Deterministic((float(c),)))


def run_paths(fn: Callable[[int], object], M: int, workers: int = 8,
              chunk: int = 64) -> list:
    """fn(path_id) for path_id < M, results in path order whatever the pool size."""
    if workers <= 1:
        return [fn(i) for i in range(M)]
    blocks = [range(i, min(M, i + chunk)) for i in range(0, M, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda b: [fn(i) for i in b], blocks)
        return [r for part in parts for r in part]


# -- double-precision evaluation of representatives ---------------------------------

class NumericRep:
    """Float evaluators of f_n and its derivatives, cached per (n, order)."""

    def __init__(self, f: RepSequence):
        self.f = f
        self._cache: dict = {}

    def __call__(self, n: int, order: int = 0) -> Callable[[np.ndarray], np.ndarray]:
        key = (n, order)
        ev = self._cache.get(key)
        if ev is None:
            if self.f.hermite_form:
                c = self.f.coeffs(n)
                for _ in range(order):
                    c = ladder_derive(c)
                cf = np.array([complex(v) for v in c])
                ev = lambda x, cf=cf: _real_if(hermite_series_numeric(cf, x))
            else:
                g = gp_derive(self.f(n), order) if order else self.f(n)
                num = gp_numeric(g)
                ev = lambda x, num=num: _real_if(num(x))
            self._cache[key] = ev
        return ev


def _real_if(v):
    if np.iscomplexobj(v) and not np.any(v.imag):
        return v.real
    return v


def _numeric(f) -> NumericRep:
    return f if isinstance(f, NumericRep) else NumericRep(f)


def _driver(X: SamplePath, kind: str, V: PiecewiseLinear | None, qv_mode: str):
    if kind == "ito":
        return np.diff(X.x)
    if kind == "fv":
        if V is None:
            V = X.spec.V if X.spec is not None else None
        if V is None:
            raise ValueError("fv integral needs a finite-variation process V")
        return np.diff(V(X.t))
    if kind == "qv":
        q = X.qv if qv_mode == "realized" else X.analytic_qv()
        return np.diff(q)
    raise ValueError(f"unknown integral kind {kind!r}")


_ORDER = {"ito": 1, "fv": 0, "qv": 2}


def pathwise_sum(f, X: SamplePath, n: int, kind: str, V=None, qv_mode: str = "realized"):
    """sum_i g_n(X_i) * Delta(driver)_i with g = f, Df or D^2 f per kind."""
    if kind not in _ORDER:
        raise ValueError(f"unknown integral kind {kind!r}")
    num = _numeric(f)
    g = num(n, _ORDER[kind])
    d = _driver(X, kind, V, qv_mode)
    return _scalar(np.dot(g(X.x[:-1]), d))


def _scalar(v):
    v = complex(v)
    return v.real if v.imag == 0 else v


def pathwise_integrals(f: RepSequence, X: SamplePath, kind: str, V=None,
                       qv_mode: str = "realized") -> TemperedNumber:
    num = NumericRep(f)
    return TemperedNumber(lambda n: pathwise_sum(num, X, n, kind, V, qv_mode),
                          f"{kind}({f.provenance})")


def ito_terms(f, X: SamplePath, n: int, qv_mode: str = "realized") -> dict:
    num = _numeric(f)
    f0 = num(n, 0)
    ends = f0(np.array([X.x[0], X.x[-1]]))
    lhs = _scalar(ends[1] - ends[0])
    ito = pathwise_sum(num, X, n, "ito")
    qv = pathwise_sum(num, X, n, "qv", qv_mode=qv_mode)
    return {"lhs": lhs, "ito": ito, "qv": qv, "residual": lhs - ito - 0.5 * qv}


def ito_residual(f: RepSequence, X: SamplePath, qv_mode: str = "realized") -> TemperedNumber:
    """n -> f_n(X_T) - f_n(X_0) - int Df_n dX - 1/2 int D^2 f_n d<X>."""
    num = NumericRep(f)
    return TemperedNumber(lambda n: ito_terms(num, X, n, qv_mode)["residual"],
                          f"ito_residual({f.provenance})")


@dataclass
class Experiment:
    """Monte Carlo summary over seeded paths."""

    values: list
    config: dict = field(default_factory=dict)

    @property
    def rms(self) -> float:
        v = np.abs(np.asarray(self.values))
        return float(np.sqrt(np.mean(v * v)))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.values)))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def stderr(self) -> float:
        v = np.asarray(self.values)
        return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def ito_experiment(f: RepSequence, spec, T, dt, M: int, seed: int, n: int,
                   qv_mode: str = "realized", workers: int = 8) -> Experiment:
    num = NumericRep(f)
    num(n, 0), num(n, 1), num(n, 2)  # fill the cache before threads start

    def one(pid):
        X = simulate(spec, T, dt, seed, pid)
        return ito_terms(num, X, n, qv_mode)["residual"]

    vals = run_paths(one, M, workers)
    return Experiment(vals, {"n": n, "dt": float(to_fraction(dt)), "paths": M,
                             "seed": seed, "T": float(to_fraction(T)), "qv": qv_mode,
                             "spec": spec_to_json(spec)})


# -- Tanaka ---------------------------------------------------------------------------

class TanakaKit:
    """sgn(x-a) and delta_a embedded at level n, as float evaluators."""

    def __init__(self, a, n: int):
        self.a = to_fraction(a)
        self.n = n
        self.sgn = NumericRep(embed(stream_general("sgn", a=self.a)))(n, 0)
        self.delta = NumericRep(embed(stream_classic("delta", a=self.a)))(n, 0)

    def terms(self, X: SamplePath) -> dict:
        a = float(self.a)
        lhs = abs(X.x[-1] - a) - abs(X.x[0] - a)
        xs = X.x[:-1]
        ito = float(np.dot(self.sgn(xs), np.diff(X.x)))
        lt = float(np.dot(self.delta(xs), np.diff(X.qv)))
        return {"lhs": float(lhs), "ito": ito, "local_time": lt,
                "residual": float(lhs - ito - lt)}


def tanaka_residual(a, X: SamplePath, n: int) -> float:
    return TanakaKit(a, n).terms(X)["residual"]


def local_time_histogram(X: SamplePath, a: float, eps: float) -> float:
    """Occupation-density estimate (1/2eps) int 1{|X-a|<eps} d<X>."""
    near = np.abs(X.x[:-1] - a) < eps
    return float(np.dot(near, np.diff(X.qv)) / (2 * eps))


def tanaka_experiment(a, spec, T, dt, M: int, seed: int, ns: Sequence[int],
                      workers: int = 8) -> dict:
    kits = {n: TanakaKit(a, n) for n in ns}

    def one(pid):
        X = simulate(spec, T, dt, seed, pid)
        return {n: kits[n].terms(X) for n in ns}

    rows = run_paths(one, M, workers)
    return {n: Experiment([r[n]["residual"] for r in rows],
                          {"n": n, "dt": float(to_fraction(dt)), "paths": M, "seed": seed,
                           "a": str(to_fraction(a)), "spec": spec_to_json(spec),
                           "local_time": [r[n]["local_time"] for r in rows]})
            for n in ns}


# -- expectation and Dynkin -------------------------------------------------------------

class MCNumber(TemperedNumber):
    """Tempered number whose entries are Monte Carlo means, with standard errors."""

    def __init__(self, samples: Callable[[int], np.ndarray], provenance: str):
        self._samples = samples
        self._sample_memo: dict = {}
        super().__init__(lambda n: _scalar(np.mean(self.samples(n))), provenance)

    def samples(self, n: int) -> np.ndarray:
        s = self._sample_memo.get(n)
        if s is None:
            s = self._sample_memo[n] = self._samples(n)
        return s

    def stderr(self, n: int) -> float:
        s = self.samples(n)
        if np.all(s == s[0]):
            return 0.0
        return float(np.std(s, ddof=1) / math.sqrt(len(s))) if len(s) > 1 else 0.0


def _default_dt(t) -> Fraction:
    return to_fraction(t) / 1000


def terminal_values(spec, t, M: int, seed: int, dt=None, workers: int = 8) -> np.ndarray:
    dt = _default_dt(t) if dt is None else dt
    return np.array(run_paths(lambda pid: simulate(spec, t, dt, seed, pid).x[-1], M, workers))


def expectation_mc(f: RepSequence, spec, t, M: int, seed: int, dt=None,
                   workers: int = 8) -> MCNumber:
    """n -> mean of f_n(X_t) over M seeded paths."""
    if M < 100:
        raise ValueError("expectation needs M >= 100 paths")
    xs = terminal_values(spec, t, M, seed, dt, workers)
    num = NumericRep(f)
    return MCNumber(lambda n: np.asarray(num(n, 0)(xs)), f"E({f.provenance})")


def dynkin_residual(f: RepSequence, x, t, M: int, dt, seed: int,
                    workers: int = 8) -> MCNumber:
    """n -> E f_n(B_t + x) - f_n(x) - 1/2 int_0^t E D^2 f_n(B_s + x) ds.

    The time integral is a trapezoid sum over the path grid; per-path residuals
    are averaged, so ``stderr`` covers the whole expression.
    """
    if M < 100:
        raise ValueError("dynkin needs M >= 100 paths")
    spec = BM(float(to_fraction(x)), 1.0)
    num = NumericRep(f)
    dtf = float(to_fraction(dt))
    paths = run_paths(lambda pid: simulate(spec, t, dt, seed, pid).x, M, workers)

    def samples(n):
        f0, f2 = num(n, 0), num(n, 2)
        x0 = f0(np.array([float(to_fraction(x))]))[0]
        out = np.empty(M, dtype=complex if np.iscomplexobj(x0) else float)
        for i, p in enumerate(paths):
            d2 = f2(p)
            trap = dtf * (np.sum(d2) - 0.5 * (d2[0] + d2[-1]))
            out[i] = f0(p[-1:])[0] - x0 - 0.5 * trap
        return out

    return MCNumber(samples, f"dynkin({f.provenance})")


# -- heat equation ------------------------------------------------------------------------

def heat_kernel(t) -> GaussianPolySum:
    """p_t(x) = (2 pi t)^(-1/2) exp(-x^2 / 2t)."""
    t = to_fraction(t)
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    with working():
        c = 1 / gmpy2.sqrt(2 * gmpy2.const_pi() * gmpy2.mpfr(gmpy2.mpq(t.numerator, t.denominator)))
    return GaussianPolySum.gaussian(1 / (2 * t), [c])


class HeatFamily:
    """(n, t) -> f_n * p_t, the exact solution of d_t g = 1/2 d_x^2 g with g(0) = f_n."""

    def __init__(self, f: RepSequence, horizon=None):
        self.f = f
        self.horizon = None if horizon is None else to_fraction(horizon)
        self._memo: dict = {}

    def at(self, n: int, t) -> GaussianPolySum:
        t = to_fraction(t)
        if t < 0:
            raise ValueError("time must be >= 0")
        if t == 0:
            return self.f(n)
        key = (n, t)
        g = self._memo.get(key)
        if g is None:
            g = self._memo[key] = gp_convolve(self.f(n), heat_kernel(t))
        return g

    __call__ = at

    def dt(self, n: int, t, h=None) -> GaussianPolySum:
        """Richardson-extrapolated central difference in t (two levels, ratio 2)."""
        t = to_fraction(t)
        h = t / (1 << 20) if h is None else to_fraction(h)
        with working():
            def central(step):
                return gp_scale(gp_add(self.at(n, t + step), gp_scale(self.at(n, t - step), -1)),
                                gmpy2.mpq(1) / (2 * gmpy2.mpq(step.numerator, step.denominator)))
            coarse, fine = central(h), central(h / 2)
            return gp_add(gp_scale(fine, gmpy2.mpq(4, 3)), gp_scale(coarse, gmpy2.mpq(-1, 3)))


def heat_evolve(f: RepSequence, t=None) -> HeatFamily:
    if t is not None and to_fraction(t) < 0:
        raise ValueError("time must be >= 0")
    return HeatFamily(f, t)


def heat_residual(H: HeatFamily, t, x, n: int) -> float:
    """|d_t g - 1/2 d_x^2 g| at (t, x), level n."""
    if to_fraction(t) <= 0:
        raise ValueError("heat residual needs t > 0")
    with working():
        lhs = gp_eval(H.dt(n, t), x)
        rhs = gp_eval(gp_derive(H.at(n, t), 2), x) / 2
        return float(abs(lhs - rhs))


def time_dependent_ito(H: HeatFamily, X: SamplePath, n: int,
                       qv_mode: str = "realized") -> dict:
    """Four-term residual g(T,X_T) - g(0,X_0) - int d_t g dt - int D g dX - 1/2 int D^2 g d<X>.

    Slices are rebuilt exactly at every grid time, so keep the grid coarse.
    """
    ts = [to_fraction(float(v)).limit_denominator(10 ** 9) for v in X.t]
    dts = np.diff(X.t)
    dx = np.diff(X.x)
    dq = np.diff(X.qv if qv_mode == "realized" else X.analytic_qv())
    total_t = total_x = total_q = 0.0
    for i in range(len(ts) - 1):
        g = H.at(n, ts[i])
        xi = np.array([X.x[i]])
        gt = _eval_float(H.dt(n, ts[i]) if ts[i] > 0 else
                         gp_scale(gp_derive(g, 2), gmpy2.mpq(1, 2)), xi)
        total_t += gt * dts[i]
        total_x += _eval_float(gp_derive(g, 1), xi) * dx[i]
        total_q += _eval_float(gp_derive(g, 2), xi) * dq[i]
    end = _eval_float(H.at(n, ts[-1]), np.array([X.x[-1]]))
    start = _eval_float(H.at(n, ts[0]), np.array([X.x[0]]))
    lhs = end - start
    return {"lhs": lhs, "dt": total_t, "ito": total_x, "qv": total_q,
            "residual": lhs - total_t - total_x - 0.5 * total_q}


def _eval_float(g: GaussianPolySum, x: np.ndarray) -> float:
    return _scalar(gp_eval(g, float(x[0])))


def fv_bound(f: RepSequence, n: int, V: PiecewiseLinear, T: float,
             lo: float = -40.0, hi: float = 40.0, points: int = 20001) -> float:
    """sup|f_n| (dense grid) times |V|_T."""
    g = NumericRep(f)(n, 0)
    sup = float(np.max(np.abs(g(np.linspace(lo, hi, points)))))
    return sup * V.total_variation(T)


def report_rows(exps: dict) -> list:
    """CSV rows n, dt, paths, residual_rms, residual_max, stderr."""
    rows = []
    for key, e in exps.items():
        c = e.config
        rows.append([c.get("n", key), repr(c["dt"]), c["paths"], repr(e.rms), repr(e.max_abs),
                     repr(e.stderr)])
    return rows
