from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import gmpy2
import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tol
from tempered import (
    BackendError, Full, GaussianPolySum, HalfLine, IntervalUnion, RepSequence,
    TemperedNumber, associated, embed, gp_add, gp_derive, gp_fourier, gp_integral,
    gp_mul, gp_mul_poly, gp_norm, gp_scale, hermite_at_zero, hermite_fn, leibniz_check,
    moderation_class, seq_add, seq_arith, seq_convolve, seq_derive, seq_fourier,
    seq_from_function, seq_integrate, seq_mul, seq_mul_poly, seq_point_value, seq_scale,
    seq_scale_tn, stream_classic, stream_general, symmetric_product, tn_arith,
    tn_associated, tn_from_real,
)
from tempered.algebra import default_probes, pairing_rows, seq_norm, seq_pairing
from tempered.expr import zero_sequence
from tempered.gauss import gp_convolve
from tempered.hermite import project, synth, wallis
from tempered.precision import working


def dist(f, g) -> float:
    d = gp_add(f, gp_scale(g, -1))
    return max((float(abs(c)) for t in d.terms for c in t.coeffs), default=0.0)


def mpv(v):
    return mpmath.mpf(str(v.real))


DELTA = embed(stream_classic("delta"))
PHI = GaussianPolySum.gaussian(Fraction(1, 2))
ALT_EVEN = TemperedNumber(lambda n: 1 + (-1) ** n, "1+(-1)^n")
ALT_ODD = TemperedNumber(lambda n: 1 + (-1) ** (n + 1), "1+(-1)^(n+1)")


# -- arithmetic -------------------------------------------------------------------

def test_delta_squared_n0():
    sq = seq_mul(DELTA, DELTA).at(0)
    # h_0(0)^2 h_0^2 = (2 pi)^(-1) exp(-x^2/2)
    assert sq.rates == (Fraction(1, 2),)
    assert len(sq.terms[0].coeffs) == 1
    assert abs(mpmath.mpf(str(sq.terms[0].coeffs[0].real)) - 1 / (2 * mpmath.pi)) < 1e-50
    assert not seq_mul(DELTA, DELTA).hermite_form


def test_derive_embedding_interior_matches_delta_prime():
    d = seq_derive(DELTA)
    dp = stream_classic("delta_prime")
    assert d.hermite_form
    for n in (3, 10, 40):
        c = d.coeffs(n)
        assert all(abs(c[k] - dp(k)) <= tol() for k in range(n))


def test_derive_agrees_with_function_space():
    for n in (0, 5, 12):
        assert dist(seq_derive(DELTA).at(n), gp_derive(DELTA.at(n))) <= tol()


def test_zero_divisor_scaling():
    f = seq_scale_tn(seq_scale_tn(DELTA, ALT_EVEN), ALT_ODD)
    for n in range(10):
        assert f.at(n).is_zero or dist(f.at(n), GaussianPolySum.zero()) == 0
    assert f.hermite_form


def test_hermite_form_flags():
    assert seq_add(DELTA, DELTA).hermite_form
    assert seq_scale(DELTA, 2).hermite_form
    assert seq_mul_poly(DELTA, [0, 1]).hermite_form
    assert not seq_from_function(PHI).hermite_form
    assert not seq_add(DELTA, seq_from_function(PHI)).hermite_form


def test_hermite_form_values_are_single_rate():
    for f in (seq_add(DELTA, DELTA), seq_derive(DELTA), seq_mul_poly(DELTA, [1, 0, 2])):
        for n in (0, 7):
            v = f.at(n)
            assert v.is_zero or v.rates == (Fraction(1, 4),)


def test_mul_poly_matches_function_space():
    f = seq_mul_poly(DELTA, [1, -2, 3])
    for n in (0, 4, 9):
        assert dist(f.at(n), gp_mul_poly(DELTA.at(n), [1, -2, 3])) <= tol()


def test_seq_arith_dispatch():
    f = seq_from_function(PHI)
    assert dist(seq_arith(f, f, "add").at(0), gp_scale(PHI, 2)) == 0
    assert dist(seq_arith(f, f, "mul").at(0), gp_mul(PHI, PHI)) == 0
    assert dist(seq_arith(f, op="derive").at(0), gp_derive(PHI)) == 0
    assert dist(seq_arith(f, op="scale", s=3).at(0), gp_scale(PHI, 3)) == 0
    assert dist(seq_arith(f, op="mul_poly", q=[0, 1]).at(0), gp_mul_poly(PHI, [0, 1])) == 0
    assert seq_arith(f, op="scale_tn", a=tn_from_real(0)).at(3).is_zero
    with pytest.raises(ValueError):
        seq_arith(f, f, "divide")


def test_operator_sugar():
    f = seq_from_function(PHI)
    assert dist((f + f).at(1), gp_scale(PHI, 2)) == 0
    assert (f - f).at(1).is_zero
    assert dist((-f).at(1), gp_scale(PHI, -1)) == 0
    assert dist((2 * f).at(1), gp_scale(PHI, 2)) == 0
    assert dist((f * f).at(1), gp_mul(PHI, PHI)) == 0


def test_product_compatibility_band_limited():
    a = gp_add(hermite_fn(1), gp_scale(hermite_fn(3), 2))
    b = gp_add(hermite_fn(0), hermite_fn(2))
    ea = embed(stream_general("from_gps", phi=a))
    eb = embed(stream_general("from_gps", phi=b))
    for n in (3, 6):
        d = gp_add(gp_mul(a, b), gp_scale(seq_mul(ea, eb).at(n), -1))
        assert float(gp_norm(d, 2)) <= 10 * tol()


def test_product_compatibility_gaussian():
    psi = GaussianPolySum.gaussian(Fraction(1, 3), [1, 1])
    ea = embed(stream_general("from_gps", phi=PHI))
    eb = embed(stream_general("from_gps", phi=psi))
    errs = []
    for n in (20, 60, 120):
        d = gp_add(gp_mul(PHI, psi), gp_scale(seq_mul(ea, eb).at(n), -1))
        errs.append(float(gp_norm(d, 3)) * (n + 1) ** 3)
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6


def test_concurrent_evaluation_matches_sequential():
    f = seq_mul(embed(stream_classic("one")), DELTA)
    seq = [f.at(n) for n in range(12)]
    g = seq_mul(embed(stream_classic("one")), embed(stream_classic("delta")))
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(g.at, reversed(range(12))))[::-1]
    assert all(dist(a, b) == 0 for a, b in zip(seq, par))


# -- Fourier ----------------------------------------------------------------------

def test_spectral_fourier_of_delta():
    fd = seq_fourier(DELTA, "spectral")
    for n in (0, 5, 12):
        c = fd.coeffs(n)
        for k in range(n + 1):
            with working():
                ref = (gmpy2.mpc(0, -1) ** k) * hermite_at_zero(k)
            assert c[k] == ref


def test_spectral_fourier_period_four():
    f = embed(stream_classic("one"))
    g = f
    for _ in range(4):
        g = seq_fourier(g, "spectral")
    for n in (3, 10):
        assert max(abs(a - b) for a, b in zip(g.coeffs(n), f.coeffs(n))) <= tol()


def test_spectral_inverse():
    g = seq_fourier(seq_fourier(DELTA, "spectral"), "spectral", "inverse")
    assert all(abs(a - b) <= tol() for a, b in zip(g.coeffs(9), DELTA.coeffs(9)))


def test_spectral_norm_preservation():
    f = embed(stream_classic("xplus", p=1))
    g = seq_fourier(f, "spectral")
    for m in (0, 2):
        assert seq_norm(g, 15, m) == seq_norm(f, 15, m)


def test_spectral_rejects_non_hermite_form():
    with pytest.raises(BackendError):
        seq_fourier(seq_mul(DELTA, DELTA), "spectral")
    with pytest.raises(BackendError):
        seq_fourier(DELTA, "wavelet")
    with pytest.raises(BackendError):
        seq_fourier(DELTA, "analytic", "sideways")


def test_analytic_derivative_rule():
    f = embed(stream_classic("one"))
    for n in (2, 7):
        lhs = seq_fourier(seq_derive(f)).at(n)
        rhs = gp_mul_poly(seq_fourier(f).at(n), [0, 1j])
        assert dist(lhs, rhs) <= tol()


def test_convention_witness():
    # the integral transform does not fix h_0
    assert dist(gp_fourier(hermite_fn(0)), hermite_fn(0)) > 0.3


def test_convolution_per_n():
    f, g = DELTA, embed(stream_classic("one"))
    for n in (0, 4):
        assert dist(seq_convolve(f, g).at(n), gp_convolve(f.at(n), g.at(n))) == 0
        with working():
            c = gmpy2.sqrt(2 * gmpy2.const_pi())
        via = gp_scale(gp_fourier(gp_mul(seq_fourier(f).at(n), seq_fourier(g).at(n)),
                                  "inverse"), c)
        assert dist(seq_convolve(f, g).at(n), via) <= tol()


# -- integration and point values ---------------------------------------------------

def test_delta_squared_integral_formula():
    tn = seq_integrate(seq_mul(DELTA, DELTA))
    for n in (0, 1, 2, 7, 30, 31):
        with working():
            ref = (n + 1) / gmpy2.sqrt(2 * gmpy2.const_pi()) * wallis(n + n % 2)
        assert abs(tn.at(n) - ref) <= 1e-20 * ref
    assert abs(float(tn.at(0).real) - 0.3989423) < 1e-7


def test_delta_pairing_rapid_decrease():
    tn = seq_integrate(seq_mul(DELTA, embed(stream_general("from_gps", phi=PHI))))
    errs = [float(abs(tn.at(n) - 1)) * (n + 1) ** 3 for n in (20, 60, 120)]
    assert errs[0] > errs[1] > errs[2]


def test_band_limited_integral_saturates():
    phi = gp_add(hermite_fn(0), gp_scale(hermite_fn(4), 3))
    tn = seq_integrate(embed(stream_general("from_gps", phi=phi)))
    for n in (4, 9):
        assert abs(tn.at(n) - gp_integral(phi)) <= 10 * tol()


@settings(max_examples=20, deadline=None)
@given(st.fractions(-2, 2, max_denominator=6), st.integers(0, 12))
def test_integral_additive(a, n):
    f = seq_mul(DELTA, embed(stream_classic("one")))
    left = seq_integrate(f, HalfLine(a, "left")).at(n)
    right = seq_integrate(f, HalfLine(a, "right")).at(n)
    with working():
        assert abs(left + right - seq_integrate(f, Full()).at(n)) <= 10 * tol()


def test_integral_module_linearity():
    f = seq_scale_tn(DELTA, TemperedNumber(lambda n: n + 1, "n+1"))
    reg = IntervalUnion(((Fraction(-1), Fraction(2)),))
    for n in (0, 3, 8):
        with working():
            assert abs(seq_integrate(f, reg).at(n) - (n + 1) * seq_integrate(DELTA, reg).at(n)) \
                <= 10 * tol()


def test_point_value_examples():
    v = seq_point_value(DELTA, 1).at(0)
    ref = mpmath.exp(-mpmath.mpf(1) / 4) / mpmath.sqrt(2 * mpmath.pi)
    assert abs(mpv(v) - ref) < 1e-50
    xp = seq_point_value(embed(stream_classic("xplus", p=1)), 0).at(0)
    assert abs(mpv(xp) - 2 / mpmath.sqrt(2 * mpmath.pi)) < 1e-50
    h2 = seq_point_value(embed(stream_general("from_gps", phi=hermite_fn(2))), 0)
    assert all(abs(h2.at(n) - hermite_at_zero(2)) <= tol() for n in (2, 5))


def test_point_value_cd_form():
    a = Fraction(1, 1)
    from tempered import cd_closed_form
    for n in (0, 4, 11):
        assert abs(seq_point_value(DELTA, a).at(n) - cd_closed_form(n, a, 0)) <= 10 * tol()


def test_xplus_point_value_decays():
    tn = seq_point_value(embed(stream_classic("xplus", p=1)), 0)
    first = float(abs(tn.at(0)))
    late = [float(abs(tn.at(n))) for n in (40, 80, 160)]
    assert first > late[0] > late[1] > late[2]


# -- pairing ----------------------------------------------------------------------

def test_pairing_backends_agree():
    f = seq_mul_poly(DELTA, [0, 1, 1])
    psi = GaussianPolySum.gaussian(Fraction(1, 3), [1, 0, 2])
    fast, slow = seq_pairing(f, psi), seq_pairing(f, psi, exact=True)
    for n in (0, 6, 20):
        assert abs(fast.at(n) - slow.at(n)) <= 10 * tol()


# -- association ----------------------------------------------------------------------

def test_x_delta_associated_to_zero():
    xd = seq_mul_poly(DELTA, [0, 1])
    v = associated(xd, zero_sequence(), nmax=200)
    assert v.verdict == "Associated"
    for k in range(11):
        for n in range(k + 1, 201, 13):
            c = xd.coeffs(n)
            assert abs(c[k]) <= 2.0 ** -100


def test_delta_not_associated_to_delta_prime():
    v = associated(DELTA, embed(stream_classic("delta_prime")), nmax=64)
    assert v.verdict == "NotAssociated"
    assert v.witness == "h0"
    vals = v.diagnostics["pairings"]["h0"]
    assert abs(vals[-1] - hermite_at_zero(0)) <= tol()


def test_self_association():
    v = associated(DELTA, DELTA, nmax=32)
    assert v.verdict == "Associated"
    assert all(x == 0 for vals in v.diagnostics["pairings"].values() for x in vals)
    assert v.to_json()["verdict"] == "Associated"


def test_association_survives_derivative_and_multiplier():
    xd = seq_mul_poly(DELTA, [0, 1])
    assert associated(seq_derive(xd), zero_sequence(), nmax=120).verdict == "Associated"
    assert associated(seq_mul_poly(xd, [1, 0, 1]), zero_sequence(),
                      nmax=120).verdict == "Associated"


def test_inconclusive_on_slow_oscillation():
    osc = RepSequence(lambda n: gp_scale(hermite_fn(0), 1 / (1 + (n % 7))), "osc")
    assert associated(osc, zero_sequence(), nmax=40).verdict in ("Inconclusive", "NotAssociated")


def test_empty_probes_rejected():
    with pytest.raises(ValueError):
        associated(DELTA, DELTA, probes=[])


def test_default_probes_reproducible():
    a, b = default_probes(seed=3), default_probes(seed=3)
    assert [l for l, _ in a] == [l for l, _ in b]
    assert len(a) == 7


def test_pairing_rows_shape():
    v = associated(DELTA, DELTA, nmax=4)
    rows = pairing_rows(v)
    assert len(rows) == 7 * 5
    assert rows[0][:2] == [0, "h0"]


def test_number_association():
    decay = TemperedNumber(lambda n: gmpy2.mpfr(1) / (n + 1) ** 4, "decay")
    assert tn_associated(decay, tn_from_real(0)).verdict == "Associated"
    assert tn_associated(tn_from_real(1), tn_from_real(0)).verdict == "NotAssociated"


# -- moderation -------------------------------------------------------------------------

def test_moderation_delta():
    v = moderation_class(DELTA, 0, 200)
    assert v.verdict == "Moderate"
    assert 0.15 <= v.exponent <= 1.5
    # independent estimate: ||delta_n||^2 = sum h_j(0)^2 grows like sqrt(n)
    assert abs(v.exponent - 0.25) < 0.02


def test_moderation_negligible():
    f = RepSequence(lambda n: gp_scale(hermite_fn(n), mpmath_inv_factorial(n)), "h_n/n!")
    v = moderation_class(f, 1, 60)
    assert v.verdict == "Negligible"


def mpmath_inv_factorial(n):
    with working():
        return 1 / gmpy2.factorial(n)


def test_moderation_constant():
    f = RepSequence(lambda n: hermite_fn(0), "h0")
    for m in (0, 2):
        v = moderation_class(f, m, 40)
        assert v.verdict == "Moderate"
        assert abs(v.exponent) < 1e-9
        assert all(abs(x - 1) < 1e-12 for x in v.diagnostics["norms"])


def test_moderation_zero_and_guards():
    assert moderation_class(zero_sequence(), 0, 32).verdict == "Negligible"
    with pytest.raises(ValueError):
        moderation_class(DELTA, 0, 8)


def test_moderation_spectral_matches_operator():
    a = moderation_class(DELTA, 1, 64)
    b = moderation_class(DELTA, 1, 64, spectral=True)
    assert a.verdict == b.verdict
    assert all(abs(x - y) <= 1e-12 * y for x, y in zip(a.diagnostics["norms"],
                                                      b.diagnostics["norms"]))


# -- symmetric product -------------------------------------------------------------------

def test_symprod_band_limited():
    h1 = stream_general("from_gps", phi=hermite_fn(1))
    sp = symmetric_product(h1, h1, kmax=4, nmax=8)
    sq = project(gp_mul(hermite_fn(1), hermite_fn(1)), 4)
    for k in range(5):
        for i, n in enumerate(sp.ns):
            if n >= 1:
                assert abs(sp.table[k][i] - sq[k]) <= 10 * tol()
    assert all(sp.converged)
    assert dist(sp.synthesize(), synth(sq.values)) <= tol()


def test_symprod_synthesis_matches_classical_product():
    h1 = stream_general("from_gps", phi=hermite_fn(1))
    sp = symmetric_product(h1, h1, kmax=30, nmax=4)
    approx = sp.synthesize()
    err = gp_norm(gp_add(approx, gp_scale(gp_mul(hermite_fn(1), hermite_fn(1)), -1)), 0)
    assert float(err) < 1e-6


def test_symprod_delta_does_not_converge():
    d = stream_classic("delta")
    sp = symmetric_product(d, d, kmax=0, nmax=400, ns=list(range(0, 401, 50)))
    row = [float(abs(v)) for v in sp.table[0]]
    assert not sp.converged[0]
    assert row[-1] > row[1]
    assert sp.exponent[0] > 0.3
    assert sp.summary()[0]["converged"] is False
    assert len(sp.rows()) == len(sp.ns)


def test_symprod_one_sided():
    d, phi = stream_classic("delta"), stream_general("from_gps", phi=PHI)
    sp = symmetric_product(d, phi, kmax=2, nmax=120, ns=[40, 80, 120])
    assert len(sp.table) == 3
    # delta . phi = phi(0) delta, whose k-th coefficient is h_k(0)
    for k in range(3):
        assert abs(sp.table[k][-1] - hermite_at_zero(k)) < 1e-3


def test_leibniz_rule_schwartz_pairs():
    s = stream_general("from_gps", phi=gp_add(hermite_fn(1), hermite_fn(2)))
    t = stream_general("from_gps", phi=hermite_fn(3))
    res = leibniz_check(s, t, kmax=6, nmax=12)
    assert max(abs(r) for r in res) <= 100 * tol()


# -- tempered numbers -------------------------------------------------------------

def test_tn_zero_divisors():
    prod = tn_arith(ALT_EVEN, ALT_ODD, "mul")
    assert all(v == 0 for v in prod.values(20))
    assert any(v != 0 for v in ALT_EVEN.values(4)) and any(v != 0 for v in ALT_ODD.values(4))


def test_tn_identities():
    a = TemperedNumber(lambda n: n * n - 3, "a")
    s = tn_arith(a, tn_from_real(0), "add")
    assert [s.at(n) for n in range(5)] == [a.at(n) for n in range(5)]
    six = tn_arith(tn_from_real(2), tn_from_real(3), "mul")
    assert all(v == 6 for v in six.values(5))
    assert tn_arith(op="from_real", r=Fraction(1, 3)).at(7) == tn_from_real(Fraction(1, 3)).at(0)
    with pytest.raises(ValueError):
        tn_arith(a, a, "pow")
