"""The one-dimensional pole-sum building block and its radial lift.

    f(x) = sum_{k=1}^{K} 2^{-k} / phi(m_k) * 1 / (x - i/m_k)

with m_k = M_{k+1}/M_k and phi the associated function of M.  All
derivatives come from partial fractions, so any order is an exact finite
sum; omitted poles k > K are covered by explicit tail bounds.

The lift g(|x - a|^2) is evaluated along lines: restricted to
x = base + s e, the argument |x - a|^2 is a monic quadratic in s, each
pole term factors over two complex roots, and derivatives in s follow
from a divided-difference recurrence that never subtracts nearly equal
quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import mpmath
from mpmath import mp, mpc, mpf

from .errors import InputError, PrecisionError, PreconditionError, TruncationError
from .weights import WeightSequence, assoc_function, check_regular
from .xnum import ScaledComplex, ScaledReal, SumAudit, audited_sum_raw, magnitude_record

DEFAULT_K_POLE = 64
# poles whose weight is below 2^-(P + PRUNE_GUARD) of the largest are bounded, not summed
PRUNE_GUARD = 32


@dataclass(frozen=True)
class DerivativeValue:
    value: ScaledComplex
    order: int
    tail_bound: ScaledReal
    audit: SumAudit

    @property
    def modulus(self) -> ScaledReal:
        return self.value.modulus()

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "re": magnitude_record(self.value.re),
            "im": magnitude_record(self.value.im),
            "modulus": magnitude_record(self.modulus),
            "tail_bound": magnitude_record(self.tail_bound),
            "cancellation_bits": self.audit.cancellation_loss_bits,
        }


@dataclass(frozen=True, eq=False)
class Gadget:
    """Poles i*inv_m[k] with weights coef[k]; ``source`` None marks an exact toy."""

    source: WeightSequence | None
    inv_m: tuple
    coef: tuple
    k_pole: int

    @classmethod
    def from_poles(cls, inv_m: Sequence, coef: Sequence) -> "Gadget":
        """Finite pole sum given explicitly (no omitted tail)."""
        if len(inv_m) != len(coef) or not inv_m:
            raise InputError("need matching nonempty pole and coefficient lists")
        return cls(None, tuple(mpf(v) for v in inv_m), tuple(mpf(c) for c in coef), len(inv_m))

    @property
    def poles(self) -> tuple:
        return tuple(ScaledComplex(0, v) for v in self.inv_m)

    @property
    def coefficients(self) -> tuple:
        return tuple(ScaledReal._wrap(c) for c in self.coef)

    def class_bound(self, j: int) -> mpf | None:
        """M_j of the source sequence (None for toys)."""
        return None if self.source is None else self.source.at(j)

    def omitted_weight(self) -> mpf:
        """Upper bound on the total weight of poles beyond K_pole."""
        return mpf(0) if self.source is None else mpmath.ldexp(1, -self.k_pole)

    @cached_property
    def grouped(self) -> tuple:
        """(inv_m, weight) with equal poles merged, in first-appearance order."""
        out: list = []
        for v, c in zip(self.inv_m, self.coef):
            if out and out[-1][0] == v:
                out[-1][1] += c
            else:
                out.append([v, c])
        return tuple((v, c) for v, c in out)

    def descriptor(self) -> dict:
        src = None if self.source is None else self.source.descriptor()
        return {"sequence": src, "K_pole": self.k_pole}


def build_gadget(M: WeightSequence, K_pole: int = DEFAULT_K_POLE, strict: bool = True) -> Gadget:
    """Gadget of a regular sequence.

    ``strict=False`` admits sequences whose roots are only nondecreasing
    (the padded sequences, whose leading quotients equal 1); the bounds
    used downstream only need log-convexity and M_0 = 1 <= M_1.
    """
    if K_pole < 1:
        raise InputError("K_pole must be at least 1")
    need = K_pole + 3
    if M.kmax < need:
        M = M.extended(need)
    window = min(M.kmax, K_pole + 8)
    rep = check_regular(M, window)
    if not rep.regular:
        raise PreconditionError("gadget needs a log-convex sequence with M_0 = 1 <= M_1")
    if strict and not rep.roots_strictly_increasing:
        raise PreconditionError("gadget needs strictly increasing roots M_k^(1/k)")
    inv_m, coef = [], []
    for k in range(1, K_pole + 1):
        m = M[k + 1] / M[k]
        if m <= 1:
            # M is nondecreasing, so t^(k+1)/M_k <= t for t <= 1 and phi(t) = t
            phi_m = m
        else:
            phi = assoc_function(M, m, window)
            if not phi.interior:
                raise TruncationError(f"phi(m_{k}) attained at the prefix boundary")
            phi_m = phi.value.mpf
        inv_m.append(1 / m)
        coef.append(mpmath.ldexp(1, -k) / phi_m)
    return Gadget(M, tuple(inv_m), tuple(coef), K_pole)


# --- one-dimensional derivatives ---------------------------------------------


def gadget_derivative(g: Gadget, j: int, x=0) -> DerivativeValue:
    """f^(j)(x) for real x, with the bound on omitted poles."""
    if j < 0:
        raise InputError("order must be nonnegative")
    x = x.mpf if isinstance(x, ScaledReal) else mpf(x)
    fact = mpf(math.factorial(j))
    sgn = -1 if j % 2 else 1
    terms = [sgn * fact * c / mpc(x, -v) ** (j + 1) for v, c in zip(g.inv_m, g.coef)]
    total, biggest, bits = audited_sum_raw(terms)
    tail = mpf(0)
    if g.source is not None:
        Mj = g.class_bound(j)
        tail = g.omitted_weight() * fact * Mj
        if x != 0:
            tail = min(tail, g.omitted_weight() * fact / abs(x) ** (j + 1))
        slack = 1 + mpmath.ldexp(1, -40)
        if abs(total) + tail > fact * Mj * slack:
            raise ArithmeticError(f"derivative bound violated at order {j}")
        if x != 0 and abs(total) > fact / abs(x) ** (j + 1) * slack:
            raise ArithmeticError(f"1/|x| bound violated at order {j}")
    audit = SumAudit(ScaledComplex._wrap(total), ScaledReal._wrap(biggest), bits)
    return DerivativeValue(ScaledComplex._wrap(total), j, ScaledReal._wrap(tail), audit)


def lift_radial_center_derivative(g: Gadget, order: int, n: int = 2) -> DerivativeValue:
    """d^order/dx_i^order of g(|x|^2) at 0, i.e. (2k)!/k! g^(k)(0) for order 2k."""
    if order % 2 or order < 0:
        raise InputError("radial center derivative needs an even order")
    if n < 1:
        raise InputError("dimension must be positive")
    k = order // 2
    d = gadget_derivative(g, k, 0)
    factor = mpf(math.factorial(order)) / math.factorial(k)
    value = d.value.mpc * factor
    tail = d.tail_bound.mpf * factor
    if g.source is not None and k >= 1:
        lower = mpf(math.factorial(order)) * g.class_bound(k) / mpf(2) ** k
        if abs(value) < lower - tail:
            raise ArithmeticError(f"radial lower bound fails at order {order}")
        margin = abs(value) - lower
        if tail > 0 and tail > margin / 2:
            raise PreconditionError(f"inconclusive certificate at order {order}: tail exceeds half the margin")
    audit = SumAudit(ScaledComplex._wrap(value), ScaledReal._wrap(d.audit.max_term_magnitude.mpf * factor),
                     d.audit.cancellation_loss_bits)
    return DerivativeValue(ScaledComplex._wrap(value), order, ScaledReal._wrap(tail), audit)


# --- line restriction -------------------------------------------------------


def cauchy_bound(j: int, d) -> mpf:
    """Bound on |d^j/ds^j (|u + s e|^2 - i eps)^(-1)| at s = 0 for |u| = d, any eps >= 0.

    On the disc |s| <= lam*d the real part of the quadratic stays above
    rho(lam) d^2, so Cauchy's estimate gives j!/(rho lam^j d^(j+2)).
    """
    d = mpf(d)
    if d <= 0:
        return mpf("inf")
    if j == 0:
        return 1 / d ** 2
    lam = mpf(j) / (j + 2) if j <= 2 else mpmath.sqrt(mpf(j) / (2 * j + 4))
    rho = (1 - lam) ** 2 if lam <= 0.5 else mpf(1) / 2 - lam ** 2
    return mpf(math.factorial(j)) / (rho * lam ** j * d ** (j + 2))


def _unit(direction) -> list:
    e = [mpf(v) for v in direction]
    nrm = mpmath.sqrt(sum(v * v for v in e))
    if abs(nrm - 1) > 1e-9:
        raise InputError("direction must be a unit vector")
    # float inputs are only unit to double precision
    return [v / nrm for v in e]


def _line_series(g: Gadget, gamma, beta, dist, max_order, prune):
    """Per-order term lists and tails along the line; gamma = |u|^2, beta = u.e."""
    groups = g.grouped
    wmax = max(c for _, c in groups)
    cut = wmax * mpmath.ldexp(1, -(mp.prec + PRUNE_GUARD)) if prune else mpf(0)
    terms = [[] for _ in range(max_order + 1)]
    pruned = mpf(0)
    for v, w in groups:
        if w < cut:
            pruned += w
            continue
        disc = beta * beta - gamma + mpc(0, v)
        D = mpmath.sqrt(disc)
        r1 = -beta - D if (beta * D.real) >= 0 else -beta + D
        r2 = mpc(gamma, -v) / r1
        iA, iB = -1 / r1, -1 / r2
        powA = iA
        Q = iA * iB
        sgn = 1
        fact = mpf(1)
        for j in range(max_order + 1):
            if j:
                fact *= j
                sgn = -sgn
            terms[j].append(w * sgn * fact * Q)
            powA = powA * iA
            Q = iB * (Q + powA)
    tails = []
    omitted = g.omitted_weight() + pruned
    for j in range(max_order + 1):
        tails.append(omitted * cauchy_bound(j, dist) if omitted > 0 else mpf(0))
    return terms, tails


def line_restriction_derivatives(g: Gadget, center, base, direction, max_order: int,
                                 prune: bool = True) -> list:
    """d^j/ds^j g(|base + s e - center|^2) at s = 0 for j = 0..max_order."""
    if max_order < 0:
        raise InputError("order must be nonnegative")
    e = _unit(direction)
    c = [mpf(v) for v in center]
    b = [mpf(v) for v in base]
    if not (len(c) == len(b) == len(e)):
        raise InputError("center, base and direction must share a dimension")
    u = [bi - ci for bi, ci in zip(b, c)]
    gamma = sum(x * x for x in u)
    if gamma == 0:
        out = []
        for j in range(max_order + 1):
            if j % 2:
                z = SumAudit(ScaledComplex(0), ScaledReal(0), 0)
                out.append(DerivativeValue(ScaledComplex(0), j, ScaledReal(0), z))
            else:
                out.append(lift_radial_center_derivative(g, j))
        return out
    beta = sum(x * y for x, y in zip(u, e))
    dist = mpmath.sqrt(gamma)
    base_prec = mp.prec
    for attempt in (0, 1):
        with mp.workprec(base_prec * (1 + attempt)):
            terms, tails = _line_series(g, gamma, beta, dist, max_order, prune)
            sums = [audited_sum_raw(t) for t in terms]
        worst = max(s[2] for s in sums)
        if worst <= base_prec // 2:
            break
        if attempt == 1 and worst > base_prec:
            raise PrecisionError(f"cancellation of {worst} bits in line restriction")
    out = []
    for j, ((total, biggest, bits), tail) in enumerate(zip(sums, tails)):
        total, biggest, tail = +total, +biggest, +tail
        audit = SumAudit(ScaledComplex._wrap(total), ScaledReal._wrap(biggest), min(bits, base_prec))
        out.append(DerivativeValue(ScaledComplex._wrap(total), j, ScaledReal._wrap(tail), audit))
    return out


def line_restriction_derivative(g: Gadget, center, base, direction, j: int) -> DerivativeValue:
    return line_restriction_derivatives(g, center, base, direction, j)[j]


# --- bound verification ------------------------------------------------------


@dataclass(frozen=True)
class GadgetBoundReport:
    rows: tuple
    all_pass: bool
    max_tail_slack: float

    def to_dict(self) -> dict:
        return {"all_pass": self.all_pass, "max_tail_slack_log2": self.max_tail_slack,
                "rows": list(self.rows)}


def verify_gadget_bounds(g: Gadget, j_max: int, sample_xs: Sequence) -> GadgetBoundReport:
    """Check the sup bound, the 1/|x| bound and the lower bound at 0."""
    if g.source is None:
        raise PreconditionError("bound verification needs a gadget built from a sequence")
    rows = []
    ok_all = True
    worst_slack = -math.inf
    slack = 1 + mpmath.ldexp(1, -40)
    for j in range(j_max + 1):
        fact = mpf(math.factorial(j))
        Mj = g.class_bound(j)
        upper = fact * Mj
        for x in sample_xs:
            x = mpf(x)
            d = gadget_derivative(g, j, x)
            mod, tail = abs(d.value.mpc), d.tail_bound.mpf
            row = {"j": j, "x": float(x), "modulus_log10": _lg(mod), "tail_log10": _lg(tail),
                   "upper_ok": bool(mod + tail <= upper * slack)}
            if x != 0:
                row["inverse_ok"] = bool(mod + tail <= fact / abs(x) ** (j + 1) * slack)
            elif j >= 1:
                row["lower_ok"] = bool(mod >= upper / mpf(2) ** j)
            rel = tail / upper
            if rel > 0:
                worst_slack = max(worst_slack, float(mpmath.log(rel, 2)))
            row["pass"] = all(v for k, v in row.items() if k.endswith("_ok"))
            ok_all &= row["pass"]
            rows.append(row)
    return GadgetBoundReport(tuple(rows), ok_all, worst_slack)


def _lg(v):
    return None if v == 0 else float(mpmath.log10(v))
