"""The assembled function f = sum_l 2^-l f_l and its certificates.

f_l is the radial lift g_l(|x - a_l|^2) of the gadget of the padded
sequence M^(l), centred at a point a_l of the flat arc whose last
coordinate is M_l^(-1/(4l)).  Off-diagonal contributions at a_k are
bounded by a Cauchy estimate that depends only on distances between
centres, never on the padding constants, so the constants can be
chosen after the bound is known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import mpmath
from mpmath import mp, mpf

from .errors import InputError, PrecisionError, PreconditionError
from .gadget import (DEFAULT_K_POLE, DerivativeValue, Gadget, build_gadget, cauchy_bound,
                     line_restriction_derivatives)
from .geometry import CANONICAL, FlatFunction, arc_point, flat_invert
from .weights import WeightSequence, classify_ratio_roots, derive_padded
from .xnum import ScaledComplex, ScaledReal, SumAudit, audited_sum_raw, magnitude_record

# extra truncation depth beyond twice the derivative order
TRUNC_MARGIN = 64
CENTER_GUARD_BITS = 32


# --- centres -----------------------------------------------------------------


def _center(M: WeightSequence, n: int, flat: FlatFunction, ell: int) -> tuple:
    Mk = M.at(ell)
    if not Mk > 1:
        raise PreconditionError(f"M_{ell} must exceed 1 to place a centre inside the arc")
    with mp.workprec(mp.prec + CENTER_GUARD_BITS):
        y = mpmath.exp(-mpmath.log(Mk) / (4 * ell))
        if not 0 < y < 1:
            raise PreconditionError(f"centre target for index {ell} outside (0, 1)")
        t = flat_invert(flat, y, n - 1).mpf
        pt = [v.mpf for v in arc_point(flat, n, t)]
        if abs(pt[-1] - y) >= mpmath.ldexp(y, -128):
            raise PrecisionError(f"centre {ell}: arc inversion residual too large")
    return tuple(+v for v in pt)


def build_centers(M: WeightSequence, n: int, flat: FlatFunction = CANONICAL, k_max: int = 12) -> tuple:
    """a_1..a_kmax on the arc, with last coordinate M_k^(-1/(4k))."""
    if n < 2:
        raise InputError("the construction needs n >= 2")
    pts = [_center(M, n, flat, k) for k in range(1, k_max + 1)]
    for k in range(1, len(pts)):
        if not pts[k][-1] < pts[k - 1][-1]:
            raise PreconditionError("roots M_k^(1/k) must be strictly increasing")
    return tuple(tuple(ScaledReal._wrap(v) for v in p) for p in pts)


# --- the function ------------------------------------------------------------


@dataclass(eq=False)
class CounterexampleFunction:
    """f = sum_l 2^-l g_l(|x - a_l|^2).

    By default the sum is infinite: constants beyond those set explicitly
    default to c_l = M_l and evaluations truncate at an automatic level
    with a tail bound.  ``finite=True`` keeps only the first ``k_max``
    terms.  ``synthetic_centers`` replaces the arc (finite sums only).
    """

    n: int
    M: WeightSequence
    N: WeightSequence
    k_max: int
    flat: FlatFunction = CANONICAL
    K_pole: int = DEFAULT_K_POLE
    finite: bool = False
    constants: dict = field(default_factory=dict)
    constant_scale: mpf = mpf(1)
    synthetic_centers: tuple | None = None
    _centers: dict = field(default_factory=dict, repr=False)
    _gadgets: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise InputError("the construction needs n >= 2")
        if self.k_max < 1:
            raise InputError("k_max must be at least 1")
        if self.synthetic_centers is not None:
            if not self.finite:
                raise InputError("synthetic centres need finite=True")
            pts = tuple(tuple(mpf(getattr(v, "mpf", v)) for v in p) for p in self.synthetic_centers)
            if len(pts) != self.k_max or any(len(p) != self.n for p in pts):
                raise InputError("need k_max synthetic centres of dimension n")
            self.synthetic_centers = pts

    # geometry
    def center(self, ell: int) -> tuple:
        if ell < 1 or (self.finite and ell > self.k_max):
            raise InputError(f"no centre with index {ell}")
        if self.synthetic_centers is not None:
            return self.synthetic_centers[ell - 1]
        if ell not in self._centers:
            self._centers[ell] = _center(self.M, self.n, self.flat, ell)
            prev = self._centers.get(ell - 1)
            if prev is not None and not self._centers[ell][-1] < prev[-1]:
                raise PreconditionError("roots M_k^(1/k) must be strictly increasing")
        return self._centers[ell]

    @property
    def centers(self) -> tuple:
        return tuple(tuple(ScaledReal._wrap(v) for v in self.center(k)) for k in range(1, self.k_max + 1))

    def trunc_level(self, order: int) -> int:
        return self.k_max if self.finite else 2 * order + TRUNC_MARGIN

    def tail_box(self, L: int) -> tuple | None:
        """Upper corner of a box [0, b] holding every centre beyond L."""
        if self.finite:
            return None
        return self.center(L + 1)

    # padding
    def constant(self, ell: int) -> mpf:
        c = self.constants.get(ell)
        if c is None:
            c = self.M.at(ell)
        return c * self.constant_scale

    def padded(self, ell: int) -> WeightSequence:
        return derive_padded(self.M, ell, self.constant(ell), kmax=max(ell, self.K_pole + 3))

    def gadget(self, ell: int) -> Gadget:
        key = (ell, mp.prec)
        if key not in self._gadgets:
            self._gadgets[key] = build_gadget(self.padded(ell), self.K_pole, strict=False)
        return self._gadgets[key]

    def with_constants(self, constants: dict) -> "CounterexampleFunction":
        return replace(self, constants=dict(constants), _gadgets={}, _centers=self._centers)

    def scaled(self, factor) -> "CounterexampleFunction":
        """Every c_l multiplied by ``factor`` (including the defaults)."""
        return replace(self, constant_scale=self.constant_scale * mpf(factor), _gadgets={},
                       _centers=self._centers)

    def descriptor(self) -> dict:
        return {"M": self.M.descriptor(), "N": self.N.descriptor(), "n": self.n,
                "k_max": self.k_max, "flat_function": self.flat.descriptor(),
                "K_pole": self.K_pole, "finite": self.finite, "precision": mp.prec}


def _dist(a, b) -> mpf:
    return mpmath.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def _dist_to_box(x, upper) -> mpf:
    s = mpf(0)
    for xi, ui in zip(x, upper):
        if xi < 0:
            s += xi * xi
        elif xi > ui:
            s += (xi - ui) ** 2
    return mpmath.sqrt(s)


# --- off-diagonal bound and constants ---------------------------------------


@dataclass(frozen=True)
class OffDiagonalBound:
    k: int
    value: ScaledReal
    tail: ScaledReal
    levels: int


def offdiagonal_bound(F: CounterexampleFunction, k: int) -> OffDiagonalBound:
    """S_k >= sum_{l != k} 2^-l |d^2k/dx_1^2k f_l(a_k)|, independent of every c_l.

    Gadget weights sum to at most 1 whatever the padding, so each term is
    bounded by the Cauchy estimate at the distance |a_k - a_l|.
    """
    order = 2 * k
    L = F.trunc_level(order)
    ak = F.center(k)
    terms = []
    for ell in range(1, L + 1):
        if ell == k:
            continue
        d = _dist(ak, F.center(ell))
        if d == 0:
            raise PreconditionError(f"centres {k} and {ell} coincide")
        terms.append(mpmath.ldexp(cauchy_bound(order, d), -ell))
    tail = mpf(0)
    box = F.tail_box(L)
    if box is not None:
        d = _dist_to_box(ak, box)
        if d == 0:
            raise PreconditionError(f"centre {k} lies in the tail box at level {L}")
        tail = mpmath.ldexp(cauchy_bound(order, d), -L)
    S = mpmath.fsum(terms) + tail
    return OffDiagonalBound(k, ScaledReal._wrap(S), ScaledReal._wrap(tail), L)


def constant_formula(M: WeightSequence, N: WeightSequence, k: int, S) -> mpf:
    S = S.mpf if isinstance(S, ScaledReal) else mpf(S)
    Mk = M.at(k)
    f2k = mpf(math.factorial(2 * k))
    four = mpf(4) ** k
    return max(Mk, four * M.at(2 * k) * N.at(2 * k) / Mk + four * (S + 1) / (f2k * Mk))


def choose_constants(F: CounterexampleFunction) -> CounterexampleFunction:
    """Fix c_1..c_kmax so the diagonal term beats S_k plus the target by at least 1."""
    cs = {}
    for k in range(1, F.k_max + 1):
        S = offdiagonal_bound(F, k).value
        cs[k] = constant_formula(F.M, F.N, k, S)
    return F.with_constants(cs)


def build(M: WeightSequence, N: WeightSequence, n: int, k_max: int = 12, flat: FlatFunction = CANONICAL,
          K_pole: int = DEFAULT_K_POLE, finite: bool = False) -> CounterexampleFunction:
    """Centres checked, constants chosen."""
    F = CounterexampleFunction(n, M, N, k_max, flat, K_pole, finite)
    build_centers(M, n, flat, F.trunc_level(2 * k_max) + (0 if finite else 1))
    return choose_constants(F)


# --- evaluation --------------------------------------------------------------


def evaluate_derivatives(F: CounterexampleFunction, point, direction, max_order: int,
                         levels: int | None = None) -> list:
    """d^j/ds^j f(point + s e) at s = 0 for j <= max_order, with all tails."""
    x = [mpf(getattr(v, "mpf", v)) for v in point]
    if len(x) != F.n:
        raise InputError("point dimension does not match n")
    L = F.trunc_level(max_order) if levels is None else levels
    per_order = [[] for _ in range(max_order + 1)]
    tails = [mpf(0)] * (max_order + 1)
    bits = [0] * (max_order + 1)
    for ell in range(1, L + 1):
        vals = line_restriction_derivatives(F.gadget(ell), F.center(ell), x, direction, max_order)
        for j, dv in enumerate(vals):
            per_order[j].append(dv.value.mpc * mpmath.ldexp(1, -ell))
            tails[j] += mpmath.ldexp(dv.tail_bound.mpf, -ell)
            bits[j] = max(bits[j], dv.audit.cancellation_loss_bits)
    box = F.tail_box(L)
    if box is not None:
        d = _dist_to_box(x, box)
        for j in range(max_order + 1):
            tails[j] += mpmath.ldexp(cauchy_bound(j, d), -L) if d > 0 else mpf("inf")
    out = []
    for j in range(max_order + 1):
        total, biggest, b = audited_sum_raw(per_order[j])
        audit = SumAudit(ScaledComplex._wrap(total), ScaledReal._wrap(biggest), max(b, bits[j]))
        out.append(DerivativeValue(ScaledComplex._wrap(total), j, ScaledReal._wrap(tails[j]), audit))
    return out


def evaluate_derivative(F: CounterexampleFunction, point, direction, order: int) -> DerivativeValue:
    return evaluate_derivatives(F, point, direction, order)[order]


def independent_bound(F: CounterexampleFunction, point, order: int, levels: int | None = None) -> ScaledReal:
    """Bound on any order-j directional derivative at ``point`` that ignores every c_l."""
    x = [mpf(getattr(v, "mpf", v)) for v in point]
    L = F.trunc_level(order) if levels is None else levels
    s = mpf(0)
    for ell in range(1, L + 1):
        d = _dist(x, F.center(ell))
        s += mpmath.ldexp(cauchy_bound(order, d), -ell)
    box = F.tail_box(L)
    if box is not None:
        s += mpmath.ldexp(cauchy_bound(order, _dist_to_box(x, box)), -L)
    return ScaledReal._wrap(s)


# --- blow-up ----------------------------------------------------------------


@dataclass(frozen=True)
class BlowupRow:
    k: int
    diagonal_lower: ScaledReal
    offdiagonal: ScaledReal
    computed: ScaledReal
    tail: ScaledReal
    target: ScaledReal
    lower: ScaledReal
    margin: ScaledReal
    slack: ScaledReal
    cancellation_bits: int
    passed: bool
    slack_ok: bool

    @property
    def ratio(self) -> mpf:
        return self.lower.mpf / self.target.mpf

    def to_dict(self) -> dict:
        return {"k": self.k, "order": 2 * self.k,
                "diagonal_lower_bound": magnitude_record(self.diagonal_lower),
                "offdiagonal_bound": magnitude_record(self.offdiagonal),
                "computed_modulus": magnitude_record(self.computed),
                "tail": magnitude_record(self.tail),
                "target": magnitude_record(self.target),
                "certified_lower": magnitude_record(self.lower),
                "ratio": magnitude_record(self.ratio),
                "margin": magnitude_record(self.margin),
                "constant_slack": magnitude_record(self.slack),
                "cancellation_loss_bits": self.cancellation_bits,
                "verdict": "pass" if self.passed else "fail",
                "slack_ok": self.slack_ok}


@dataclass(frozen=True)
class BlowupCertificate:
    rows: tuple
    all_pass: bool

    def to_dict(self) -> dict:
        return {"all_pass": self.all_pass, "rows": [r.to_dict() for r in self.rows]}


def blowup_certificate(F: CounterexampleFunction, ks: Sequence[int] | None = None) -> BlowupCertificate:
    """|d^2k/dx_1^2k f(a_k)| - tails >= (2k)! M_2k N_2k for each k."""
    e1 = [1] + [0] * (F.n - 1)
    rows = []
    tol = mpmath.ldexp(1, -(mp.prec - 16))
    for k in (ks or range(1, F.k_max + 1)):
        order = 2 * k
        f2k = mpf(math.factorial(order))
        dv = evaluate_derivative(F, F.center(k), e1, order)
        S = offdiagonal_bound(F, k).value.mpf
        diag = f2k * F.constant(k) * F.M.at(k) / mpf(4) ** k
        target = f2k * F.M.at(order) * F.N.at(order)
        comp = abs(dv.value.mpc)
        lower = comp - dv.tail_bound.mpf
        slack = diag - S - target
        rows.append(BlowupRow(
            k, ScaledReal._wrap(diag), ScaledReal._wrap(S), ScaledReal._wrap(comp), dv.tail_bound,
            ScaledReal._wrap(target), ScaledReal._wrap(lower), ScaledReal._wrap(lower - target),
            ScaledReal._wrap(slack), dv.audit.cancellation_loss_bits,
            bool(lower >= target), bool(slack >= 1 - tol * diag)))
    return BlowupCertificate(tuple(rows), all(r.passed for r in rows))


# --- non-membership ----------------------------------------------------------


def _first_exceed(logM, lo: int, hi: int, lnC, lnrho) -> int | None:
    """Smallest k in [lo, hi] with ln M_2k > ln C + 2k ln rho, assuming monotonicity."""
    test = lambda k: logM(2 * k) > lnC + 2 * k * lnrho
    if not test(hi):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if test(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def non_membership_witness(F: CounterexampleFunction, C_grid: Sequence = (1, 10 ** 3, 10 ** 6),
                           rho_grid: Sequence = (1, 4, 16), search_limit: int = 10 ** 12) -> dict:
    """Smallest k with M_2k > C rho^2k, first within the stored prefix, then via the rule."""
    M = F.M
    K = M.kmax
    rows = []
    gen = M.generator
    for C in C_grid:
        for rho in rho_grid:
            lnC, lnr = mpmath.log(C), mpmath.log(rho)
            k_pref = None
            for k in range(1, K // 2 + 1):
                if M.logs[2 * k] > lnC + 2 * k * lnr:
                    k_pref = k
                    break
            k_ext = k_pref
            if k_ext is None and gen is not None and C >= 1:
                hi = max(1, K // 2)
                logM = lambda i: mpmath.log(gen.value(i))
                while hi < search_limit and not logM(2 * hi) > lnC + 2 * hi * lnr:
                    hi *= 2
                if hi < search_limit:
                    k_ext = _first_exceed(logM, max(1, K // 2), hi, lnC, lnr)
            rows.append({"C": C, "rho": rho, "k_in_prefix": k_pref, "k_via_rule": k_ext,
                         "status": "found" if k_pref is not None else (
                             "found_beyond_prefix" if k_ext is not None else "inconclusive")})
    roots = [mpmath.exp(M.logs[k] / k) for k in range(1, K + 1)]
    growth = classify_ratio_roots(roots)
    lastc = [F.center(k)[-1] for k in range(1, F.k_max + 1)]
    decreasing = all(b < a for a, b in zip(lastc, lastc[1:]))
    return {"prefix_kmax": K, "rows": rows,
            "all_found_in_prefix": all(r["k_in_prefix"] is not None for r in rows),
            "centers_accumulate_at_zero": {
                "last_coordinates_decreasing": decreasing,
                "roots_growth": growth,
                "holds": bool(decreasing and growth == "unbounded")}}


# --- seminorm on sets avoiding the centres -----------------------------------


def annulus_grid(n: int, r_in=2.5, r_out=3.0, angles: int = 8) -> list:
    """Points on two circles in the (x_1, x_2) plane; other coordinates zero."""
    pts = []
    for r in (mpf(r_in), mpf(r_out)):
        for i in range(angles):
            th = 2 * mpmath.pi * i / angles
            pts.append([r * mpmath.cos(th), r * mpmath.sin(th)] + [mpf(0)] * (n - 2))
    return pts


def hypothesis_check(F: CounterexampleFunction, grid: Sequence, up_to: int) -> dict:
    """dist(a_k, grid) >= M_k^(-1/(4k)) for k <= up_to; k_0 is the largest failure."""
    bad = []
    for k in range(1, up_to + 1):
        a = F.center(k)
        d = min(_dist(a, [mpf(getattr(v, "mpf", v)) for v in x]) for x in grid)
        need = mpmath.exp(-F.M.log_at(k) / (4 * k))
        if d < need:
            bad.append(k)
    return {"checked_up_to": up_to, "violations": bad, "k0": max(bad) if bad else 0}


def _seminorm_sup(F, grid, alpha_max, directions):
    """Normalised-free table: per order the largest |D_j| + tail and c-free bound."""
    L = F.trunc_level(alpha_max)
    best = [mpf(0)] * (alpha_max + 1)
    bound = [mpf(0)] * (alpha_max + 1)
    for x in grid:
        for e in directions:
            vals = evaluate_derivatives(F, x, e, alpha_max, L)
            for j, dv in enumerate(vals):
                best[j] = max(best[j], abs(dv.value.mpc) + dv.tail_bound.mpf)
        for j in range(alpha_max + 1):
            bound[j] = max(bound[j], independent_bound(F, x, j, L).mpf)
    return best, bound


def _normalised(vals, M, rho):
    return max(v / (rho ** j * math.factorial(j) * M.at(j)) for j, v in enumerate(vals))


@dataclass(frozen=True)
class SeminormReport:
    rho: mpf
    alpha_max: int
    grid_points: int
    levels: int
    hypothesis: dict
    estimate: ScaledReal
    constant_free_bound: ScaledReal
    rho_scan: tuple
    doubled_estimate: ScaledReal | None = None
    relative_change: ScaledReal | None = None
    constant_free_change: ScaledReal | None = None

    def to_dict(self) -> dict:
        out = {"rho": float(self.rho), "alpha_max": self.alpha_max, "grid_points": self.grid_points,
               "levels": self.levels, "hypothesis": self.hypothesis,
               "estimate": magnitude_record(self.estimate),
               "constant_free_bound": magnitude_record(self.constant_free_bound),
               "rho_scan": list(self.rho_scan)}
        if self.relative_change is not None:
            out["independence"] = {
                "doubled_estimate": magnitude_record(self.doubled_estimate),
                "relative_change": magnitude_record(self.relative_change),
                "constant_free_bound_change": magnitude_record(self.constant_free_change)}
        return out


def seminorm_estimate(F: CounterexampleFunction, grid: Sequence | None = None, rho=None,
                      alpha_max: int = 8, check_independence: bool = True) -> SeminormReport:
    """sup over grid, axis directions and orders <= alpha_max of |D_j f| / (rho^j j! M_j).

    Also reports the constant-free Cauchy bound, and with
    ``check_independence`` the change under doubling every c_l.
    """
    grid = annulus_grid(F.n) if grid is None else [[mpf(getattr(v, "mpf", v)) for v in x] for x in grid]
    L = F.trunc_level(alpha_max)
    hyp = hypothesis_check(F, grid, L)
    directions = [[1 if i == c else 0 for i in range(F.n)] for c in range(F.n)]
    best, bound = _seminorm_sup(F, grid, alpha_max, directions)
    M = F.M
    scan = []
    if rho is None:
        chosen = None
        for i in range(0, 41):
            r = mpf(2) ** i
            terms = [v / (r ** j * math.factorial(j) * M.at(j)) for j, v in enumerate(best)]
            top = max(range(len(terms)), key=lambda j: terms[j])
            scan.append({"rho": float(r), "estimate": magnitude_record(max(terms)), "argmax_order": top})
            if top < alpha_max:
                chosen = r
                break
        if chosen is None:
            raise PreconditionError("no rho on the doubling grid keeps the top order subdominant")
        rho = chosen
    rho = mpf(rho)
    est = _normalised(best, M, rho)
    cfree = _normalised(bound, M, rho)
    extra = {}
    if check_independence:
        G = F.scaled(2)
        best2, bound2 = _seminorm_sup(G, grid, alpha_max, directions)
        est2 = _normalised(best2, M, rho)
        cfree2 = _normalised(bound2, M, rho)
        extra = {"doubled_estimate": ScaledReal._wrap(est2),
                 "relative_change": ScaledReal._wrap(abs(est2 - est) / est),
                 "constant_free_change": ScaledReal._wrap(abs(cfree2 - cfree) / cfree)}
    return SeminormReport(rho, alpha_max, len(grid), L, hyp, ScaledReal._wrap(est),
                          ScaledReal._wrap(cfree), tuple(scan), **extra)
