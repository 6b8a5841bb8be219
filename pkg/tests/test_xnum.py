import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mpf

from qacert.errors import DomainError, InputError
from qacert.xnum import (ScaledComplex, ScaledReal, default_precision, factorial_log, format_decimal,
                         magnitude_record, pow_int, precision, sum_audited)

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300)


def test_zero_is_canonical():
    z = ScaledReal(0)
    assert (z.significand, z.exponent, z.sign) == (0, 0, 1)


@pytest.mark.parametrize("v", [1, 1.5, 3, -7.25, 1e-300, 2 ** 1000])
def test_significand_in_unit_octave(v):
    x = ScaledReal(v)
    assert 1 <= x.significand < 2
    assert x.sign * x.significand * mpf(2) ** x.exponent == mpf(v)


def test_exponent_range_is_unbounded():
    x = ScaledReal(10) ** 100000
    assert x.exponent == math.floor(100000 * math.log2(10))
    assert (x / x) == 1


def test_factorial_log_examples():
    assert factorial_log(0) == 0 and factorial_log(1) == 0
    # oracle: exact integer product, then ln
    exact = mpmath.log(math.prod(range(2, 11)))
    assert abs(factorial_log(10).mpf - exact) < mpf(2) ** -240
    assert abs(factorial_log(10).mpf - mpf("15.104412573075515295225709329251")) < 1e-28


def test_factorial_log_increments():
    for k in (5, 100, 5000, 100000):
        diff = factorial_log(k + 1).mpf - factorial_log(k).mpf
        assert abs(diff - mpmath.log(k + 1)) <= mpf(2) ** -(256 - 8) * factorial_log(k + 1).mpf


def test_sum_audited_examples():
    a = sum_audited([ScaledComplex(1), ScaledComplex(-1), ScaledComplex(mpf("1e-30"))])
    assert abs(a.result.mpc - mpf("1e-30")) < mpf("1e-100")
    assert a.cancellation_loss_bits == math.ceil(math.log2(1e30))
    empty = sum_audited([])
    assert empty.result.mpc == 0 and empty.cancellation_loss_bits == 0
    single = sum_audited([ScaledComplex(3, 4)])
    assert single.result.modulus() == 5 and single.cancellation_loss_bits == 0


def test_pow_int_examples():
    assert pow_int(ScaledComplex(0, 1), 4) == ScaledComplex(1)
    assert pow_int(ScaledComplex(2), -3) == ScaledComplex(mpf("0.125"))
    assert pow_int(ScaledComplex(1, 1), 2) == ScaledComplex(0, 2)
    with pytest.raises(DomainError):
        pow_int(ScaledComplex(0), -1)


def test_decimal_format_shape():
    assert format_decimal(mpf(0)) == "+0.0e+0"
    s = ScaledReal(-1234.5).to_decimal()
    assert s.startswith("-1.2345") and s.endswith("e+3")


def test_magnitude_record_huge():
    rec = magnitude_record(ScaledReal(10) ** 800)
    assert rec["sign"] == 1 and abs(rec["log10"] - 800) < 1e-9


def test_precision_env(monkeypatch):
    monkeypatch.setenv("QACERT_PRECISION", "512")
    assert default_precision() == 512
    monkeypatch.setenv("QACERT_PRECISION", "300")
    with pytest.raises(InputError):
        default_precision()
    with precision(1024) as bits:
        assert mpmath.mp.prec == bits == 1024


@given(finite)
def test_decimal_round_trip(v):
    x = ScaledReal(v)
    assert ScaledReal.from_decimal(x.to_decimal()) == x


@given(st.fractions(max_denominator=10 ** 6).filter(lambda f: abs(f) < 10 ** 9),
       st.fractions(max_denominator=10 ** 6).filter(lambda f: abs(f) < 10 ** 9))
@settings(max_examples=200)
def test_pair_sum_error(a, b):
    fa, fb = (mpf(a.numerator) / a.denominator), (mpf(b.numerator) / b.denominator)
    got = sum_audited([ScaledComplex(fa), ScaledComplex(fb)]).result.mpc.real
    exact = Fraction(a) + Fraction(b)
    err = abs(got - mpf(exact.numerator) / exact.denominator)
    assert err <= mpf(2) ** -(256 - 4) * (abs(fa) + abs(fb)) + mpf(2) ** -300


@given(finite.filter(lambda v: v != 0), finite.filter(lambda v: v != 0))
def test_product_exponents_add(a, b):
    x, y = ScaledReal(a), ScaledReal(b)
    p = x * y
    assert p.exponent in (x.exponent + y.exponent, x.exponent + y.exponent + 1)
    assert p.sign == x.sign * y.sign
