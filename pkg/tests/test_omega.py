import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mpf

from qacert import omega as O
from qacert.errors import DomainError, InputError

IDENTITY = O.omega_catalog("identity")
DAMPED = O.omega_catalog("log_damped")
ROOT = O.omega_catalog("power", {"a": 0.5})


def decades(lo, hi, per=8):
    return [10 ** (lo + i / per) for i in range((hi - lo) * per + 1)]


def grid_sup(omega, t, s_max=40, steps=40000):
    """Brute-force oracle for the conjugate on a uniform s grid."""
    return max(s * t - omega.phi(s) for s in (mpf(s_max) * i / steps for i in range(steps + 1)))


def test_catalog_examples():
    assert IDENTITY(3) == 3
    assert ROOT(4) == 2
    e1 = mpmath.e - 1
    assert abs(DAMPED(e1) - e1 / 2) < mpf(2) ** -200
    assert abs(DAMPED(e1) - mpf("0.85914")) < 1e-5
    with pytest.raises(InputError):
        O.omega_catalog("nope")
    with pytest.raises(InputError):
        O.omega_catalog("power", {"a": 2})
    with pytest.raises(DomainError):
        IDENTITY(-1)


def test_descriptor_round_trip():
    tab = O.omega_table([(0, 0), (1, 1), (10, 5), (100, 20)])
    for w in (IDENTITY, ROOT, DAMPED, tab):
        again = O.from_descriptor(w.descriptor())
        assert again(mpf("7.5")) == w(mpf("7.5"))


def test_table_is_monotone_interpolant():
    tab = O.omega_table([(0, 0), (1, 1), (10, 5), (100, 20)])
    xs = [mpf(i) / 4 for i in range(401)]
    vals = [tab(x) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert tab(10) == 5
    with pytest.raises(DomainError):
        tab(101)
    with pytest.raises(InputError):
        O.omega_table([(0, 0), (1, 2), (2, 1)])


def test_report_identity():
    rep = O.check_weight_function(IDENTITY, decades(-2, 8))
    assert rep.om2_ratio == 1
    assert rep.concavity_defect == 0
    assert rep.small_o_t == "flat"
    assert rep.om4_convexity == 0


def test_report_root_and_damped():
    rep = O.check_weight_function(ROOT, decades(-2, 8))
    assert abs(rep.om1_ratio - math.sqrt(2)) < 1e-12
    assert rep.small_o_t == "decreasing"
    rep = O.check_weight_function(DAMPED, decades(0, 8))
    assert rep.small_o_t == "decreasing"
    assert rep.om3_gap > 0


def test_report_rejects_bad_grid():
    with pytest.raises(InputError):
        O.check_weight_function(IDENTITY, [1, 2, 3])
    with pytest.raises(InputError):
        O.check_weight_function(IDENTITY, decades(0, 2))


def test_conjugate_examples():
    cv = O.young_conjugate(IDENTITY, mpmath.e)
    assert abs(cv.value.mpf) < mpf(10) ** -15
    assert abs(cv.s_star.mpf - 1) < mpf(10) ** -9
    cv = O.young_conjugate(IDENTITY, 1)
    assert cv.value.mpf == -1 and cv.at_zero
    for w in (IDENTITY, ROOT, DAMPED):
        small = O.young_conjugate(w, mpf("1e-30"))
        assert abs(small.value.mpf + w(1)) < mpf(10) ** -25
        assert O.young_conjugate(w, 0).value.mpf == -w(1)


@pytest.mark.parametrize("t", [mpmath.e, 5, 50])
def test_conjugate_closed_form(t):
    t = mpf(t)
    exact = t * mpmath.log(t) - t
    got = O.young_conjugate(IDENTITY, t).value.mpf
    assert abs(got - exact) <= mpf(10) ** -15 * max(1, abs(exact))


@pytest.mark.parametrize("omega,t", [(ROOT, 3), (DAMPED, 7), (IDENTITY, 20)])
def test_conjugate_against_grid(omega, t):
    got = O.young_conjugate(omega, t).value.mpf
    brute = grid_sup(omega, t)
    assert brute <= got + mpf(10) ** -20
    assert got - brute < mpf(10) ** -3


def test_fenchel_inequality_grid():
    ss = [mpf(i) / 10 for i in range(40)]
    ts = [mpf(1) / 4 + i for i in range(25)]
    for w in (IDENTITY, DAMPED):
        conj = {t: O.young_conjugate(w, t).value.mpf for t in ts}
        for s in ss:
            ph = w.phi(s)
            for t in ts:
                assert s * t <= ph + conj[t] + mpf(2) ** -40


def test_conjugate_convex():
    ts = [mpf(i) / 2 for i in range(1, 30)]
    vals = [O.young_conjugate(DAMPED, t).value.mpf for t in ts]
    for a, b, c in zip(vals, vals[1:], vals[2:]):
        assert b <= (a + c) / 2 + mpf(2) ** -40


@given(st.floats(min_value=0.01, max_value=60))
@settings(max_examples=40, deadline=None)
def test_fenchel_property(t):
    cv = O.young_conjugate(ROOT, t)
    for s in (0, 0.5, 1, 2, 5, 10, 20):
        assert mpf(s) * mpf(t) <= ROOT.phi(s) + cv.value.mpf + mpf(2) ** -40


def test_seminorm_weight_examples():
    assert abs(O.omega_seminorm_weight(IDENTITY, 1, 1).mpf - mpmath.e) < mpf(10) ** -30
    assert abs(O.omega_seminorm_weight(IDENTITY, 2, 0).mpf - mpmath.exp(mpf(1) / 2)) < mpf(10) ** -30
    w3 = O.omega_seminorm_weight(IDENTITY, 1, 3).mpf
    assert abs(w3 - mpmath.e ** 3 / 27) < mpf(10) ** -15
    assert abs(w3 - mpf("0.74391")) < 1e-5
    with pytest.raises(InputError):
        O.omega_seminorm_weight(IDENTITY, 0, 1)


def test_seminorm_weight_eventually_nonincreasing():
    vals = [O.omega_seminorm_weight(DAMPED, 1, j).mpf for j in range(1, 40)]
    peak = max(range(len(vals)), key=lambda i: vals[i])
    tail = vals[peak:]
    assert all(b <= a * (1 + mpf(2) ** -40) for a, b in zip(tail, tail[1:]))


def test_qa_integral_identity():
    rep = O.qa_integral_partial(IDENTITY, 1e6)
    exact = mpmath.log(1 + mpf(10) ** 12) / 2
    assert abs(rep.value.mpf - exact) < mpf(10) ** -10 * exact
    assert abs(rep.value.mpf - mpf("13.8155")) < 1e-4
    assert rep.growth_classification == "diverging"


def test_qa_integral_root_plateaus():
    assert O.qa_integral_partial(ROOT, 1e8).growth_classification == "plateauing"


def test_qa_integral_zero_weight():
    zero = O.omega_table([(0, 0), (1, 0), (2, 0)])
    assert O.qa_integral_partial(zero, 1).value.mpf == 0


def test_associated_family_examples():
    fam = O.associated_family(IDENTITY, 1, 8)
    assert abs(fam[3] - 27 / (6 * mpmath.e ** 3)) < mpf(10) ** -15
    assert abs(fam[3] - mpf("0.2240")) < 1e-4
    # phi*(0) = -omega(1), so the k = 0 entry is exp(-omega(1)/x)
    assert abs(fam[0] - mpmath.exp(-IDENTITY(1))) < mpf(10) ** -30
    half = O.associated_family(DAMPED, 0.5, 8)
    one = O.associated_family(DAMPED, 1, 8)
    assert half[8] <= one[8]


def test_associated_family_monotone():
    xs = [0.25, 0.5, 1, 2]
    fams = [O.associated_family(DAMPED, x, 24) for x in xs]
    for lo, hi in zip(fams, fams[1:]):
        assert all(lo[k] <= hi[k] * (1 + mpf(2) ** -40) for k in range(25))
