import itertools
import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mpf

from qacert import weights as W
from qacert.errors import InputError, PreconditionError, TruncationError


def close(a, b, rel=mpf(2) ** -200):
    a = getattr(a, "mpf", a)
    return abs(a - b) <= rel * (abs(b) + mpf(2) ** -250)


# --- catalog and descriptors --------------------------------------------------


def test_catalog_examples(log_power, gevrey2, constant_one):
    assert constant_one[5] == 1
    assert close(log_power[1], mpmath.log(1 + mpmath.e))
    assert abs(log_power[1] - mpf("1.313261687")) < 1e-9
    assert gevrey2[4] == 24


def test_quotients_and_generator_agree(log_power):
    for k in (0, 7, 100):
        assert close(log_power.quotients[k].mpf * log_power[k], log_power[k + 1])
        assert close(log_power[k], log_power.generator.value(k))


def test_descriptor_round_trip(gevrey2):
    again = W.from_descriptor(gevrey2.descriptor(), 40)
    assert all(again[k] == gevrey2[k] for k in range(41))


def test_table_rejects_nonpositive():
    with pytest.raises(InputError):
        W.table([1, 0, 3])
    with pytest.raises(InputError):
        W.parse_spec("no_such_sequence")


# --- regularity and quasianalyticity ------------------------------------------


def test_regularity_examples(gevrey2, constant_one):
    assert W.check_regular(gevrey2, 200).log_convex_ok
    bad = W.check_regular(W.table([1, 3, 4]))
    assert not bad.log_convex_ok and bad.first_log_convex_violation == 1
    assert not W.check_regular(constant_one, 50).roots_strictly_increasing


def test_qa_constant_one_is_harmonic(constant_one):
    rep = W.qa_partial_sums(constant_one, 2000)
    assert close(rep.final, mpmath.harmonic(2001), mpf(10) ** -60)
    assert rep.growth_classification == "diverging"


def test_qa_gevrey_plateaus(gevrey2):
    K = 2000
    rep = W.qa_partial_sums(gevrey2, K)
    # oracle: zeta(2) minus the trigamma tail
    exact = mpmath.pi ** 2 / 6 - mpmath.polygamma(1, K + 2)
    assert close(rep.final, exact, mpf(10) ** -60)
    assert rep.growth_classification == "plateauing"


def test_qa_log_power_diverges(log_power):
    assert W.qa_partial_sums(log_power, 512).growth_classification == "diverging"


def test_qa_monotone_in_kmax(gevrey2):
    a = W.qa_partial_sums(gevrey2, 256).final
    b = W.qa_partial_sums(gevrey2, 512).final
    assert b > a


# --- associated function ------------------------------------------------------


def _assoc_oracle(values, t: Fraction):
    """Exact sup of t^(k+1)/M_k over rational data, with the argmax."""
    best = max(range(len(values)), key=lambda k: (t ** (k + 1) / values[k], k))
    return t ** (best + 1) / values[best], best


def test_assoc_examples(constant_one, gevrey2):
    a = W.assoc_function(constant_one, mpf(1) / 2, 60)
    assert a.value == mpf(1) / 2 and a.argmax == 0
    fact = [Fraction(math.factorial(k)) for k in range(51)]
    v, arg = _assoc_oracle(fact, Fraction(3))
    assert v == Fraction(27, 2) and arg == 3
    b = W.assoc_function(gevrey2, 3, 50)
    assert b.value == mpf(27) / 2 and b.argmax == 3 and b.interior
    tiny = W.assoc_function(gevrey2, mpf("1e-20"), 50)
    assert tiny.value == mpf("1e-20")


def test_assoc_identity(gevrey2, log_power, constant_one):
    assert W.assoc_identity_check(gevrey2, 5, 60).mpf < mpf(10) ** -60
    assert W.assoc_identity_check(log_power, 10, 120).mpf < mpf(10) ** -60
    with pytest.raises(PreconditionError):
        W.assoc_identity_check(constant_one, 3, 20)


@pytest.mark.parametrize("name,params", [("log_power", {"delta": 1}), ("log_power", {"delta": 2}),
                                         ("gevrey", {"s": 2}), ("gevrey", {"s": 1.5})])
def test_assoc_identity_all_orders(name, params):
    M = W.catalog(name, params, 200)
    for k in range(1, 65):
        assert W.assoc_identity_check(M, k, 200).mpf < mpf(2) ** -(256 - 16)


# --- indicators --------------------------------------------------------------


def test_inclusion_indicator_examples(gevrey2, constant_one):
    same = W.inclusion_indicator(gevrey2, gevrey2, 128)
    assert same.bounded and all(v == 1 for v in same.values)
    sq = W.inclusion_indicator(W.derive_sqrt(gevrey2), gevrey2, 256)
    assert sq.classification == "to_zero"
    r = W.inclusion_indicator(gevrey2, constant_one, 10)
    assert abs(r.values[9].mpf - mpf(math.factorial(10)) ** (mpf(1) / 10)) < 1e-60
    assert abs(r.values[9].mpf - mpf("4.5287")) < 1e-4


def test_derivation_stability_examples(constant_one, gevrey2):
    assert W.derivation_stability_indicator(constant_one, 100).bounded
    rep = W.derivation_stability_indicator(gevrey2, 500)
    assert rep.bounded
    assert max(rep.values).mpf == mpf(2)  # (k+1)^(1/k) peaks at k = 1
    dbl = W.table([mpf(2) ** (k * k) for k in range(130)])
    rep = W.derivation_stability_indicator(dbl, 128)
    assert rep.bounded
    for k in (1, 10, 128):
        assert close(rep.values[k - 1], mpf(2) ** (mpf(2 * k + 1) / k))


# --- derived sequences -------------------------------------------------------


def test_derived_examples(gevrey2, constant_one, log_power):
    assert abs(W.derive_sqrt(gevrey2)[10] - mpf("1904.94") ) < 0.01
    assert all(v == 1 for v in W.derive_sqrt(constant_one).raw[:20])
    assert close(W.derive_sqrt(log_power)[4], mpmath.log(4 + mpmath.e) ** 2)
    assert W.derive_shift(gevrey2, 2)[3] == 120
    assert all(W.derive_shift(gevrey2, 0)[k] == gevrey2[k] for k in range(30))
    assert all(v == 1 for v in W.derive_shift(constant_one, 5).raw[:20])


def test_padded_examples(log_power, gevrey2):
    c = 2 * log_power[3]
    P = W.derive_padded(log_power, 3, c, 20)
    assert P[2] == 1 and close(P[3], c * log_power[3])
    assert close(P[5], c ** 5 * log_power[5])
    assert W.derive_padded(gevrey2, 1, gevrey2[1], 10)[2] == 2
    with pytest.raises(PreconditionError):
        W.derive_padded(log_power, 3, log_power[3] / 2)
    w = W.padded_equivalence_witness(log_power, P, c)
    assert w["ok"]


# --- convex minorant ---------------------------------------------------------


def _minorant_oracle(vals):
    """Largest log-convex minorant via all supporting lines through pairs."""
    L = [mpmath.log(v) for v in vals]
    n = len(vals)
    # at each k take the highest supporting line through a pair of points
    res = []
    for k in range(n):
        cands = [L[k]] if k in (0, n - 1) else []
        for a, b in itertools.combinations(range(n), 2):
            slope = (L[b] - L[a]) / (b - a)
            line = [L[a] + slope * (i - a) for i in range(n)]
            if all(line[i] <= L[i] + mpf(2) ** -200 for i in range(n)):
                cands.append(line[k])
        res.append(mpmath.exp(max(cands)))
    return res


def test_minorant_example():
    V = W.log_convex_minorant(W.table([1, 10, 2, 30]))
    expect = [1, mpmath.sqrt(2), 2, 30]
    assert all(abs(V[k] - e) < mpf(2) ** -100 for k, e in enumerate(expect))
    oracle = _minorant_oracle([mpf(1), mpf(10), mpf(2), mpf(30)])
    assert all(abs(V[k] - o) < mpf(2) ** -100 for k, o in enumerate(oracle))


def test_minorant_fixed_points(gevrey2):
    V = W.log_convex_minorant(gevrey2, 40)
    assert all(close(V[k], gevrey2[k]) for k in range(41))
    one = W.log_convex_minorant(W.table([1, 1]))
    assert list(one.raw) == [1, 1]


log_table = st.lists(st.floats(min_value=-20, max_value=20), min_size=2, max_size=14)


@given(log_table)
@settings(max_examples=150, deadline=None)
def test_minorant_properties(logs):
    M = W.table([mpmath.exp(v) for v in logs])
    V = W.log_convex_minorant(M)
    tol = mpf(2) ** -200
    assert all(V[k] <= M[k] * (1 + tol) for k in range(M.kmax + 1))
    for k in range(1, V.kmax):
        assert 2 * V.logs[k] <= V.logs[k - 1] + V.logs[k + 1] + mpf(2) ** -180
    touches = sum(1 for k in range(M.kmax + 1) if abs(V.logs[k] - M.logs[k]) < mpf(2) ** -180)
    assert touches >= 2
    oracle = _minorant_oracle(list(M.raw))
    assert all(abs(V.logs[k] - mpmath.log(oracle[k])) < mpf(2) ** -150 for k in range(M.kmax + 1))


# --- composition inequality ---------------------------------------------------


def test_compositions_enumeration():
    for k in range(1, 9):
        comps = list(W.compositions(k))
        assert len(comps) == 2 ** (k - 1) and len(set(comps)) == len(comps)
        assert all(sum(c) == k for c in comps)


@pytest.mark.parametrize("short", ["constant_one", "log_power:1", "log_power:2", "gevrey:2", "gevrey:1.5"])
def test_composition_inequality_catalog(short):
    assert W.composition_inequality_violations(W.parse_spec(short, 20), 12) == []


increments = st.lists(st.floats(min_value=0, max_value=5), min_size=12, max_size=12)


@given(increments)
@settings(max_examples=60, deadline=None)
def test_composition_inequality_random_log_convex(incs):
    # nondecreasing log-increments starting at >= 0 give log-convex M, M_0 = 1 <= M_1
    incs = sorted(incs)
    logs = [mpf(0)]
    for d in incs:
        logs.append(logs[-1] + mpf(d))
    M = W.table([mpmath.exp(v) for v in logs])
    assert W.composition_inequality_violations(M, 12) == []


# --- diagonal sequence --------------------------------------------------------


def _exp_family(Kmax):
    return lambda x: W.table([mpmath.exp(x * k * mpmath.sqrt(k)) for k in range(Kmax + 1)])


def test_diagonal_root_floor():
    D = W.diagonal_sequence(_exp_family(512), [1 / p for p in range(1, 7)], 512)
    assert all(b.root_floor_ok in (True, None) for b in D.blocks)
    js = [b.j for b in D.blocks]
    assert js == sorted(set(js))
    assert W.check_regular(D.sequence).log_convex_ok


def test_diagonal_single_member(gevrey2):
    D = W.diagonal_sequence([gevrey2.extended(200)], [1.0], 200)
    j1 = D.blocks[0].j
    expect = W.log_convex_minorant(D.raw)
    assert all(D.sequence[k] == expect[k] for k in range(201))
    assert all(close(D.raw[k], mpmath.sqrt(gevrey2[k])) for k in range(j1, 201))


def test_diagonal_gevrey_family_to_zero():
    fam = lambda x: W.catalog("gevrey", {"s": 2 + x}, 512)
    D = W.diagonal_sequence(fam, [1 / p for p in range(1, 6)], 512)
    rep = W.inclusion_indicator(D.sequence, fam(1.0), 512)
    assert rep.classification == "to_zero"


def test_diagonal_rejects_bad_schedules(gevrey2):
    with pytest.raises(InputError):
        W.diagonal_sequence(_exp_family(64), [1, 2], 64)
    with pytest.raises(PreconditionError):
        W.diagonal_sequence(lambda x: W.catalog("gevrey", {"s": 2 + 1 / x}, 64), [1, 0.5], 64)
