import math
from fractions import Fraction

import numpy as np
import pytest

from tempered import (
    GridOverflow, embed, gp_convolve, gp_eval, hermite_at_zero, hermite_fn,
    seq_add, stream_classic, stream_general,
)
from tempered.algebra import seq_from_function
from tempered.gauss import gp_derive, gp_numeric
from tempered.stochastic import (
    BM, OU, Deterministic, DriftBM, PiecewiseLinear, TanakaKit, constant_path,
    dynkin_residual, expectation_mc, fv_bound, heat_evolve, heat_kernel, heat_residual,
    ito_experiment, ito_residual, ito_terms, local_time_histogram, normals,
    pathwise_integrals, report_rows, run_paths, simulate, spec_from_json, spec_to_json,
    tanaka_experiment, tanaka_residual, terminal_values, time_dependent_ito,
)

H0 = embed(stream_general("from_gps", phi=hermite_fn(0)))
H2 = embed(stream_general("from_gps", phi=hermite_fn(2)))
DELTA = embed(stream_classic("delta"))


# -- simulation ----------------------------------------------------------------------

def test_deterministic_path():
    X = simulate(Deterministic((0.0, 1.0)), 1, "1/100", seed=0)
    assert np.allclose(X.x, X.t)
    assert np.all(X.qv == 0)
    assert len(X.t) == 101 and X.T == 1.0


def test_bm_variance():
    xs = terminal_values(BM(), 1, 10_000, seed=11, dt="1/100")
    sq = xs * xs
    assert abs(sq.mean() - 1) <= 3 * sq.std(ddof=1) / math.sqrt(len(sq))


def test_bm_quadratic_variation():
    qv = [simulate(BM(), 1, "1/10000", 5, pid).qv[-1] for pid in range(100)]
    assert abs(np.mean(qv) - 1) <= 0.05
    X = simulate(BM(), 1, "1/1000", 5, 0)
    assert X.qv[0] == 0 and np.all(np.diff(X.qv) >= 0)


def test_determinism_and_keys():
    a = simulate(BM(), 1, "1/1000", 3, 7)
    b = simulate(BM(), 1, "1/1000", 3, 7)
    c = simulate(BM(), 1, "1/1000", 3, 8)
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)
    assert np.array_equal(normals(1, 2, 5), normals(1, 2, 10)[:5])


def test_run_paths_order_independent_of_workers():
    fn = lambda pid: float(normals(9, pid, 3).sum())
    ref = run_paths(fn, 300, workers=1)
    for w in (2, 8):
        for chunk in (7, 64):
            assert run_paths(fn, 300, workers=w, chunk=chunk) == ref


def test_experiment_bit_identical_across_workers():
    a = ito_experiment(H2, BM(), 1, "1/500", 150, 4, n=6, workers=1)
    b = ito_experiment(H2, BM(), 1, "1/500", 150, 4, n=6, workers=8)
    assert a.values == b.values


def test_drift_and_ou():
    X = simulate(DriftBM(1.0, 2.0, 0.0), 1, "1/100", 0)
    assert np.allclose(X.x, 1 + 2 * X.t)
    ou = simulate(OU(2.0, 1.0, 0.0, 0.0), 1, "1/1000", 0)
    assert abs(ou.x[-1] - 2 * math.exp(-1)) < 2e-3
    xs = terminal_values(OU(0.0, 2.0, 1.0, 0.5), 3, 2000, seed=1, dt="1/100")
    assert abs(xs.mean() - (1 - math.exp(-6))) < 0.05


def test_finite_variation_component():
    V = PiecewiseLinear((0.0, 0.5, 1.0), (0.0, 1.0, 0.0))
    X = simulate(Deterministic((3.0,), V), 1, "1/100", 0)
    assert abs(X.x[50] - 4) < 1e-12 and abs(X.x[-1] - 3) < 1e-12
    assert V.total_variation(1.0) == pytest.approx(2.0)
    assert V.total_variation(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PiecewiseLinear((0.0, 0.0), (1.0, 2.0))


def test_grid_overflow():
    with pytest.raises(GridOverflow):
        simulate(BM(), 1, "3/10000000000", 0)
    with pytest.raises(GridOverflow):
        simulate(BM(), 1, "1/1000000000", 0)
    with pytest.raises(GridOverflow):
        simulate(BM(), 1, 2, 0)
    with pytest.raises(ValueError):
        simulate(BM(), 1, 0, 0)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        simulate(BM(0.0, -1.0), 1, "1/10", 0)


def test_spec_json_round_trip():
    for spec in (BM(0.5, 2.0), DriftBM(0, 1, 1), OU(1, 2, 3, 4),
                 Deterministic((1.0, 2.0), PiecewiseLinear((0.0, 1.0), (0.0, 3.0)))):
        assert spec_from_json(spec_to_json(spec)) == spec


# -- pathwise integrals and Ito -------------------------------------------------------

def test_fv_constant_integrand():
    c = 0.7
    V = PiecewiseLinear((0.0, 1.0), (0.0, 1.0))
    X = constant_path(c, 1, "1/100")
    val = pathwise_integrals(H0, X, "fv", V).at(4)
    assert val == pytest.approx(float(gp_eval(hermite_fn(0), c).real) * 1.0, abs=1e-12)


def test_fv_bound_holds():
    V = PiecewiseLinear((0.0, 0.3, 1.0), (0.0, 2.0, -1.0))
    for seed in range(5):
        X = simulate(BM(0.0, 1.0, V), 1, "1/1000", seed)
        for n in (0, 8, 20):
            assert abs(pathwise_integrals(DELTA, X, "fv").at(n)) <= fv_bound(DELTA, n, V, 1.0)


def test_fv_needs_process():
    X = constant_path(0.0)
    with pytest.raises(ValueError):
        pathwise_integrals(H0, X, "fv").at(0)
    with pytest.raises(ValueError):
        pathwise_integrals(H0, X, "strat").at(0)


def test_ito_constant_path_exact_zero():
    for c in (0.0, 1.3):
        X = constant_path(c)
        r = ito_residual(H2, X)
        assert all(r.at(n) == 0 for n in (0, 2, 10))


def test_ito_deterministic_path():
    dt = 1e-3
    X = simulate(Deterministic((0.0, 1.0)), 1, "1/1000", 0)
    xs = np.linspace(-10, 10, 4001)
    f2 = np.abs(gp_numeric(gp_derive(hermite_fn(2), 2))(xs)).max()
    for n in (2, 5):
        t = ito_terms(H2, X, n)
        assert t["qv"] == 0
        assert abs(t["residual"]) <= 5 * dt * f2


def test_ito_residual_shrinks_in_analytic_mode():
    coarse = ito_experiment(H2, BM(), 1, "1/1000", 400, 1, n=2, qv_mode="analytic")
    fine = ito_experiment(H2, BM(), 1, "1/4000", 400, 1, n=2, qv_mode="analytic")
    assert fine.rms < coarse.rms
    assert 1.5 <= coarse.rms / fine.rms <= 2.6


def test_ito_realized_mode_first_order():
    coarse = ito_experiment(H2, BM(), 1, "1/1000", 400, 1, n=2)
    fine = ito_experiment(H2, BM(), 1, "1/2000", 400, 1, n=2)
    assert 1.7 <= coarse.rms / fine.rms <= 2.3


def test_report_rows():
    e = ito_experiment(H2, BM(), 1, "1/100", 20, 0, n=2)
    rows = report_rows({2: e})
    assert rows[0][:3] == [2, "0.01", 20]


# -- Tanaka ---------------------------------------------------------------------------

def test_tanaka_constant_path():
    X = constant_path(0.8)
    assert tanaka_residual(0, X, 16) == 0


def test_tanaka_decreases_with_level():
    res = tanaka_experiment(0, BM(), 1, "1/2000", 100, 3, [4, 16, 64])
    m = [res[n].mean_abs for n in (4, 16, 64)]
    assert m[0] > m[1] > m[2]


def test_tanaka_local_time():
    res = tanaka_experiment(0, BM(), 1, "1/10000", 200, 7, [64])[64]
    lt = np.array(res.config["local_time"])
    assert lt.min() >= -2 * res.mean_abs
    assert abs(lt.mean() - math.sqrt(2 / math.pi)) <= 3 * lt.std(ddof=1) / math.sqrt(len(lt)) + 0.05


def test_local_time_matches_histogram():
    X = simulate(BM(), 1, "1/10000", 2, 0)
    kit = TanakaKit(0, 64).terms(X)
    assert abs(kit["local_time"] - local_time_histogram(X, 0, 0.05)) < 0.25


def test_tanaka_reflection_antisymmetry():
    a = 0.25
    kit = TanakaKit(a, 16)
    diffs = []
    for pid in range(100):
        X = simulate(BM(a), 1, "1/1000", 13, pid)
        Y = simulate(BM(a), 1, "1/1000", 13, pid)
        Y.x = 2 * a - X.x
        r1, r2 = kit.terms(X)["residual"], kit.terms(Y)["residual"]
        diffs.append(r1 - r2)
    diffs = np.array(diffs)
    # sgn is odd and delta even about a, so reflected paths give matching residuals on average
    assert abs(diffs.mean()) <= 3 * diffs.std(ddof=1) / math.sqrt(len(diffs)) + 1e-12


# -- expectation and Dynkin -------------------------------------------------------------

def test_expectation_matches_convolution():
    t = Fraction(1, 2)
    e = expectation_mc(H0, BM(), t, 10_000, seed=21, dt="1/20")
    exact = float(gp_eval(gp_convolve(hermite_fn(0), heat_kernel(t)), 0).real)
    assert abs(e.at(0) - exact) <= 3 * e.stderr(0)


def test_expectation_deterministic_spec():
    e = expectation_mc(H2, Deterministic((0.5,)), 1, 100, seed=0, dt="1/10")
    assert e.stderr(3) == 0
    assert e.at(3) == pytest.approx(float(gp_eval(hermite_fn(2), 0.5).real), abs=1e-14)


def test_expectation_additive():
    f = seq_add(H0, H2)
    e_sum = expectation_mc(f, BM(), 1, 200, seed=3, dt="1/10")
    e0 = expectation_mc(H0, BM(), 1, 200, seed=3, dt="1/10")
    e2 = expectation_mc(H2, BM(), 1, 200, seed=3, dt="1/10")
    for n in (0, 2, 5):
        assert e_sum.at(n) == pytest.approx(e0.at(n) + e2.at(n), abs=1e-14)


def test_expectation_needs_paths():
    with pytest.raises(ValueError):
        expectation_mc(H0, BM(), 1, 50, seed=0)
    with pytest.raises(ValueError):
        dynkin_residual(H0, 0, 1, 50, "1/10", 0)


def test_dynkin_small_for_gaussian():
    dt = 0.01
    r = dynkin_residual(H0, 0, Fraction(1, 2), 1000, "1/100", seed=5)
    assert abs(r.at(3)) <= 3 * (r.stderr(3) + 10 * dt)


# -- heat equation ----------------------------------------------------------------------

def test_heat_kernel_unit_mass():
    from tempered import gp_integral
    assert abs(gp_integral(heat_kernel(Fraction(3, 7))) - 1) < 1e-60
    with pytest.raises(ValueError):
        heat_kernel(0)


def test_heat_example():
    H = heat_evolve(H0)
    v = gp_eval(H.at(0, 2), 0)
    expected = float(hermite_at_zero(0)) / math.sqrt(2)
    assert abs(float(v.real) - expected) < 1e-15


def test_heat_identity_at_zero():
    H = heat_evolve(DELTA)
    assert H.at(7, 0) == DELTA.at(7)
    with pytest.raises(ValueError):
        H.at(7, -1)
    with pytest.raises(ValueError):
        heat_evolve(DELTA, -1)


@pytest.mark.parametrize("t", [Fraction(1, 10), Fraction(1)])
@pytest.mark.parametrize("x", [0, 1])
def test_heat_residual(t, x):
    assert heat_residual(heat_evolve(DELTA), t, x, 32) <= 1e-8


def test_time_dependent_ito():
    H = heat_evolve(H2)
    T = Fraction(1, 2)
    for pid in range(3):
        X = simulate(BM(), T, "1/50", 9, pid)
        td = time_dependent_ito(H, X, 4)
        frozen = ito_terms(seq_from_function(H.at(4, T)), X, 0)
        assert abs(td["residual"] - frozen["residual"]) < 0.1


def test_time_dependent_ito_mean_zero():
    H = heat_evolve(H2)
    vals = []
    for pid in range(40):
        X = simulate(BM(), Fraction(1, 2), "1/40", 17, pid)
        vals.append(time_dependent_ito(H, X, 4)["residual"])
    vals = np.array(vals)
    assert abs(vals.mean()) <= 3 * vals.std(ddof=1) / math.sqrt(len(vals)) + 0.01
