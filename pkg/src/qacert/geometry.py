"""Flat functions, the flat arc and distance certificates for monomial plots.

The canonical flat map is phi(t) = exp(1 - 1/t).  Its iterates collapse
towards zero so fast that phi_[2](2^-20) has a logarithm near -e^(2^20);
iterates are therefore also available in log form, and every distance
comparison on small t is carried out on logarithms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
from mpmath import mp, mpc, mpf

from .errors import DomainError, InputError, PrecisionError, PreconditionError
from .weights import WeightSequence
from .xnum import ScaledReal, audited_sum_raw, magnitude_record


# --- flat functions ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlatFunction:
    """phi on [0, 1]: canonical exp(1 - 1/t), or a user rule (increasing, phi(1) = 1)."""

    name: str = "canonical"
    rule: Callable | None = None

    def __call__(self, t) -> mpf:
        t = _check_unit(t)
        if self.rule is not None:
            return mpf(self.rule(t))
        if t == 0:
            return mpf(0)
        # relative condition number is 1/t; past 2^(P/2) half the bits are noise
        if t < mpmath.ldexp(1, -(mp.prec // 2)):
            raise PrecisionError("phi(t) is ill-conditioned for this t; use log_flat_iterate")
        return mpmath.exp(1 - 1 / t)

    def log(self, t) -> mpf:
        """ln phi(t) for t in (0, 1]."""
        t = _check_unit(t)
        if t == 0:
            raise DomainError("ln phi(0) is -infinity")
        if self.rule is not None:
            return mpmath.log(self.rule(t))
        return 1 - 1 / t

    def log_of_log(self, lt) -> mpf:
        """ln phi(exp(lt)) without forming exp(lt)."""
        if self.rule is not None:
            return mpmath.log(self.rule(mpmath.exp(lt)))
        return 1 - mpmath.exp(-lt)

    def inverse(self, y) -> mpf:
        """t in [0, 1] with phi(t) = y."""
        y = _check_unit(y)
        if y == 0:
            return mpf(0)
        if self.rule is None:
            return 1 / (1 - mpmath.log(y))
        lo, hi = mpf(0), mpf(1)
        stop = mpmath.ldexp(1, -(mp.prec + 8))
        for _ in range(4 * mp.prec + 64):
            mid = (lo + hi) / 2
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= stop * hi:
                break
        return (lo + hi) / 2

    def descriptor(self) -> dict:
        return {"name": self.name}


def _check_unit(t) -> mpf:
    t = t.mpf if isinstance(t, ScaledReal) else mpf(t)
    if t < 0 or t > 1:
        raise DomainError("flat functions are evaluated on [0, 1]")
    return t


CANONICAL = FlatFunction()


def flat_eval(phi: FlatFunction, t) -> ScaledReal:
    return ScaledReal._wrap(phi(t))


def flat_iterate(phi: FlatFunction, j: int, t) -> ScaledReal:
    """phi_[j](t), with phi_[0] the identity."""
    if j < 0:
        raise InputError("iterate index must be nonnegative")
    v = _check_unit(t)
    for _ in range(j):
        v = phi(v)
    return ScaledReal._wrap(v)


def log_flat_iterate(phi: FlatFunction, j: int, t) -> mpf:
    """ln phi_[j](t) computed entirely on logarithms."""
    t = _check_unit(t)
    if t == 0:
        raise DomainError("ln of phi_[j](0) is -infinity")
    lt = mpmath.log(t)
    for _ in range(j):
        lt = phi.log_of_log(lt)
    return lt


def flat_invert(phi: FlatFunction, y, j: int) -> ScaledReal:
    """t with phi_[j](t) = y, for y in (0, 1]."""
    y = y.mpf if isinstance(y, ScaledReal) else mpf(y)
    if not (0 < y <= 1):
        raise DomainError("flat_invert needs y in (0, 1]")
    t = y
    for _ in range(j):
        t = phi.inverse(t)
    return ScaledReal._wrap(t)


def arc_point(phi: FlatFunction, n: int, t) -> tuple:
    """(t, phi(t), ..., phi_[n-1](t))."""
    t = _check_unit(t)
    pts = [t]
    for _ in range(n - 1):
        pts.append(phi(pts[-1]))
    return tuple(ScaledReal._wrap(v) for v in pts)


# --- plots ------------------------------------------------------------------


@dataclass(frozen=True)
class MonomialPlot:
    """p_j(x) = x^alpha_j * u_j(x); alpha_j None marks an identically zero component.

    A unit is a positive constant or a polynomial given as a tuple of
    (exponent, coefficient) pairs that must not vanish on the domain box.
    """

    m: int
    exponents: tuple
    units: tuple = ()
    domain_box: float = 0.5

    def __post_init__(self):
        if self.m < 1:
            raise InputError("plot domain dimension must be positive")
        exps = []
        for a in self.exponents:
            if a is None:
                exps.append(None)
                continue
            a = tuple(int(v) for v in a)
            if len(a) != self.m or any(v < 0 for v in a):
                raise InputError(f"exponent {a} must have {self.m} nonnegative entries")
            exps.append(a)
        object.__setattr__(self, "exponents", tuple(exps))
        units = list(self.units) or [1] * len(exps)
        if len(units) != len(exps):
            raise InputError("units and exponents lengths differ")
        norm = []
        for u in units:
            if isinstance(u, (int, float, str)) or hasattr(u, "_mpf_"):
                if not mpf(u) > 0:
                    raise InputError("constant units must be positive")
                norm.append(mpf(u))
            else:
                norm.append(tuple((tuple(int(v) for v in e), mpf(c)) for e, c in u))
        object.__setattr__(self, "units", tuple(norm))
        if not self.n > self.m:
            raise InputError("plots must be lower dimensional (m < n)")
        if not self.domain_box > 0:
            raise InputError("domain box radius must be positive")

    @property
    def n(self) -> int:
        return len(self.exponents)

    def unit_value(self, j: int, x) -> mpf:
        u = self.units[j]
        if isinstance(u, tuple):
            return sum(c * _mono(e, x) for e, c in u)
        return u

    def component(self, j: int, x) -> mpf:
        if self.exponents[j] is None:
            return mpf(0)
        return _mono(self.exponents[j], x) * self.unit_value(j, x)

    def __call__(self, x) -> tuple:
        x = [mpf(v) for v in x]
        return tuple(self.component(j, x) for j in range(self.n))

    def component_polynomial(self, j: int) -> dict:
        """Component j as {exponent: coefficient}."""
        a = self.exponents[j]
        if a is None:
            return {}
        u = self.units[j]
        terms = u if isinstance(u, tuple) else (((0,) * self.m, u),)
        out: dict = {}
        for e, c in terms:
            k = tuple(x + y for x, y in zip(a, e))
            out[k] = out.get(k, 0) + c
        return out

    def grid(self, points_per_axis: int = 9) -> list:
        r = mpf(self.domain_box)
        axis = [r * (2 * mpf(i) / (points_per_axis - 1) - 1) for i in range(points_per_axis)]
        return [list(p) for p in itertools.product(axis, repeat=self.m)]

    def unit_range(self, j: int, grid=None) -> tuple:
        u = self.units[j]
        if not isinstance(u, tuple):
            return u, u
        vals = [self.unit_value(j, x) for x in (grid or self.grid())]
        if min(vals) <= 0 and max(vals) >= 0:
            raise PreconditionError(f"unit factor of component {j + 1} vanishes on the domain box")
        a = [abs(v) for v in vals]
        return min(a), max(a)

    def descriptor(self) -> dict:
        units = []
        for u in self.units:
            if isinstance(u, tuple):
                units.append({"terms": [[list(e), float(c)] for e, c in u]})
            else:
                units.append(float(u))
        return {"m": self.m, "n": self.n, "domain_box": self.domain_box,
                "exponents": [None if a is None else list(a) for a in self.exponents],
                "units": units}


def _mono(e, x) -> mpf:
    out = mpf(1)
    for xi, k in zip(x, e):
        if k:
            out *= xi ** k
    return out


def plot_from_descriptor(desc: dict) -> MonomialPlot:
    if not isinstance(desc, dict):
        raise InputError("plot descriptor must be a JSON object")
    try:
        units = []
        for u in desc.get("units") or []:
            if isinstance(u, dict):
                units.append(tuple((tuple(e), c) for e, c in u["terms"]))
            else:
                units.append(u)
        return MonomialPlot(int(desc["m"]), tuple(desc["exponents"]), tuple(units),
                            float(desc.get("domain_box", 0.5)))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed plot descriptor: {exc}") from exc


@dataclass(frozen=True)
class NormalForm:
    case: str
    witness: dict


def _leq(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


def plot_normal_form(p: MonomialPlot) -> NormalForm:
    """Classify a plot and, in the ordered case, pick the witness pair and power d."""
    for j, a in enumerate(p.exponents):
        if a is not None and not any(a) and p.unit_value(j, [mpf(0)] * p.m) != 0:
            return NormalForm("off_origin", {"component": j + 1})
    zeros = [j for j, a in enumerate(p.exponents) if a is None]
    if zeros:
        return NormalForm("zero_component", {"j": zeros[0] + 1})
    exps = list(p.exponents)
    for a, b in itertools.combinations(exps, 2):
        if not (_leq(a, b) or _leq(b, a)):
            return NormalForm("unsupported", {"incomparable": [list(a), list(b)]})
    order = sorted(range(p.n), key=lambda j: (sum(exps[j]), exps[j], j))
    counts = [sum(1 for v in exps[j] if v == 0) for j in order]
    for s in range(p.n - 1):
        if counts[s] == counts[s + 1]:
            i, j = order[s], order[s + 1]
            ai, aj = exps[i], exps[j]
            d = 1
            for x, y in zip(ai, aj):
                if x:
                    d = max(d, -(-y // x))
            return NormalForm("ordered_monomial", {
                "i": i + 1, "j": j + 1, "d": d, "alpha_i": list(ai), "alpha_j": list(aj),
                "zero_counts": counts})
    raise PreconditionError("no equal zero-count pair; plot is not lower dimensional")


def sandwich_constant(p: MonomialPlot, i: int, j: int, d: int, grid=None) -> mpf:
    """C with |p_j| <= C |p_i| and |p_i|^d <= C |p_j| on the domain box (1-based i, j)."""
    grid = grid or p.grid()
    ai, aj = p.exponents[i - 1], p.exponents[j - 1]
    li, ui = p.unit_range(i - 1, grid)
    lj, uj = p.unit_range(j - 1, grid)
    r = mpf(p.domain_box)
    c1 = r ** sum(y - x for x, y in zip(ai, aj)) * uj / li
    c2 = r ** sum(d * x - y for x, y in zip(ai, aj)) * ui ** d / lj
    sampled = mpf(0)
    for x in grid:
        pi, pj = abs(p.component(i - 1, x)), abs(p.component(j - 1, x))
        if pi > 0:
            sampled = max(sampled, pj / pi)
        if pj > 0:
            sampled = max(sampled, pi ** d / pj)
    return max(c1, c2, sampled, mpf(1))


@dataclass(frozen=True)
class ArcReport:
    case: str
    witness: dict
    constant: ScaledReal | None
    rows: tuple
    all_pass: bool

    def to_dict(self) -> dict:
        return {"case": self.case, "witness": self.witness,
                "constant": None if self.constant is None else magnitude_record(self.constant),
                "all_pass": self.all_pass, "rows": list(self.rows),
                "note": "sampled dyadic t; the small-t statement itself is asymptotic"}


def _lg10(lnv: mpf):
    v = lnv / mpmath.log(10)
    try:
        f = float(v)
        if math.isfinite(f):
            return round(f, 9)
    except OverflowError:
        pass
    return mpmath.nstr(v, 15)


def _arc_norm_upper(phi: FlatFunction, n: int, t) -> mpf:
    """Upper bound on |Phi(t)| from log iterates; negligible coordinates are capped."""
    lt = mpmath.log(t)
    floor = 2 * lt - mp.prec
    sq = mpf(0)
    for j in range(n):
        lc = log_flat_iterate(phi, j, t)
        sq += mpmath.exp(max(2 * lc, floor))
    return mpmath.sqrt(sq)


def arc_distance_certificate(p: MonomialPlot, phi: FlatFunction = CANONICAL, n: int | None = None,
                             t_grid: Sequence | None = None, domain_grid=None) -> ArcReport:
    """Per-t lower bounds on dist(Phi(t), p(box)) against the flat targets."""
    n = p.n if n is None else n
    if n != p.n:
        raise InputError("ambient dimension must match the plot's component count")
    t_grid = [mpf(2) ** -i for i in range(3, 21)] if t_grid is None else [mpf(t) for t in t_grid]
    grid = domain_grid or p.grid()
    nf = plot_normal_form(p)
    rows = []
    ln_target_n = lambda t: log_flat_iterate(phi, n - 1, t)
    if nf.case == "unsupported":
        raise PreconditionError("exponents are not totally ordered; monomial normal form required")
    if nf.case == "off_origin":
        eps = min(mpmath.sqrt(sum(v * v for v in p(x))) for x in grid)
        for t in t_grid:
            norm = _arc_norm_upper(phi, n, t)
            ok_region = norm <= eps / 2
            lb = eps - norm
            ln_lb = mpmath.log(lb) if lb > 0 else mpf("-inf")
            margin = ln_lb - ln_target_n(t)
            rows.append({"t_log2": float(mpmath.log(t, 2)), "margin_log10": _lg10(margin),
                         "margin_vs_n_log10": _lg10(margin), "below_threshold": bool(ok_region),
                         "pass": bool(ok_region and margin > 0)})
        return ArcReport(nf.case, dict(nf.witness, epsilon=float(eps)), None, tuple(rows),
                         all(r["pass"] for r in rows))
    if nf.case == "zero_component":
        j = nf.witness["j"]
        for t in t_grid:
            ln_lb = log_flat_iterate(phi, j - 1, t)
            margin_n = ln_lb - ln_target_n(t)
            rows.append({"t_log2": float(mpmath.log(t, 2)), "margin_log10": 0.0,
                         "margin_vs_n_log10": _lg10(margin_n), "pass": bool(margin_n >= 0)})
        return ArcReport(nf.case, nf.witness, None, tuple(rows), all(r["pass"] for r in rows))
    i, j, d = nf.witness["i"], nf.witness["j"], nf.witness["d"]
    C = sandwich_constant(p, i, j, d, grid)
    lnC = mpmath.log(C)
    flat_idx = max(i, j)
    for t in t_grid:
        lx = log_flat_iterate(phi, i - 1, t)   # ln Phi_i
        ly = log_flat_iterate(phi, j - 1, t)   # ln Phi_j
        if i < j:
            # K lies in {|y_j| >= |y_i|^d / C}; take h = Phi_i / 2
            a = lx - mpmath.log(2)
            b = d * a - lnC
            if ly < b:
                second = b + mpmath.log1p(-mpmath.exp(ly - b))
                ln_lb = min(a, second)
            else:
                ln_lb = mpf("-inf")
        else:
            # K lies in {|y_j| <= C |y_i|}; here Phi_i is the flatter coordinate
            if lnC + lx < ly:
                ln_lb = ly + mpmath.log1p(-mpmath.exp(lnC + lx - ly)) - mpmath.log(1 + C * C) / 2
            else:
                ln_lb = mpf("-inf")
        target = log_flat_iterate(phi, flat_idx - 1, t)
        margin = ln_lb - target
        margin_n = ln_lb - ln_target_n(t)
        rows.append({"t_log2": float(mpmath.log(t, 2)), "lower_bound_log10": _lg10(ln_lb),
                     "target_log10": _lg10(target), "margin_log10": _lg10(margin),
                     "margin_vs_n_log10": _lg10(margin_n), "pass": bool(margin > 0 and margin_n > 0)})
    return ArcReport(nf.case, nf.witness, ScaledReal._wrap(C), tuple(rows), all(r["pass"] for r in rows))


# --- Faa di Bruno chain -------------------------------------------------------


@dataclass(frozen=True)
class FdbBound:
    bound: ScaledReal
    combinatorial: ScaledReal
    closed_form: ScaledReal
    agree: bool


def faa_di_bruno_bound(C, rho, D, sigma, M: WeightSequence, k: int) -> FdbBound:
    """C D rho (M_1 sigma)^k (1 + D rho)^(k-1) M_k with the binomial intermediate."""
    C, rho, D, sigma = (mpf(v.mpf if isinstance(v, ScaledReal) else v) for v in (C, rho, D, sigma))
    if min(C, rho, D, sigma) <= 0:
        raise InputError("all parameters must be positive")
    if k < 1:
        raise InputError("k must be at least 1")
    x = D * rho
    comb = mpf(0)
    for j in range(1, k + 1):
        comb += math.comb(k - 1, j - 1) * x ** j
    closed = x * (1 + x) ** (k - 1)
    agree = abs(comb - closed) <= mpmath.ldexp(1, -(mp.prec - 16)) * closed
    bound = C * (M.at(1) * sigma) ** k * M.at(k) * closed
    return FdbBound(ScaledReal._wrap(bound), ScaledReal._wrap(comb), ScaledReal._wrap(closed), bool(agree))


def set_partitions(items: list):
    """All set partitions of a list (for brute-force Faa di Bruno checks)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


# --- composition along a parameter line ------------------------------------


def _pmul(a: list, b: list) -> list:
    out = [mpf(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _padd(a: list, b: list) -> list:
    if len(a) < len(b):
        a, b = b, a
    return [x + (b[i] if i < len(b) else 0) for i, x in enumerate(a)]


def curve_polynomials(p: MonomialPlot, base, direction) -> list:
    """Coefficient lists (low to high) of s -> p_j(base + s*direction)."""
    x0 = [mpf(v) for v in base]
    v = [mpf(t) for t in direction]
    if len(x0) != p.m or len(v) != p.m:
        raise InputError("base parameter and direction must live in the plot domain")
    lines = [[x0[c], v[c]] for c in range(p.m)]
    out = []
    for j in range(p.n):
        acc = [mpf(0)]
        for e, coef in p.component_polynomial(j).items():
            term = [mpf(coef)]
            for c, k in enumerate(e):
                for _ in range(k):
                    term = _pmul(term, lines[c])
            acc = _padd(acc, term)
        while len(acc) > 1 and acc[-1] == 0:
            acc.pop()
        out.append(acc)
    return out


def _curve_cauchy(jmax: int, w: mpf, shifts: list) -> list:
    """Bounds on |d^j/ds^j 1/(|P(s) - a|^2 - i eps)| at 0, j <= jmax, given |P(0) - a| >= w.

    ``shifts[d]`` is the norm of the degree-d coefficient vector; on
    |s| <= R the real part stays above 2w^2 - (w + eta(R))^2.  R runs
    over a quarter-octave grid and the best radius is taken per order.
    """
    limit = (mpmath.sqrt(2) - 1) * w
    radii = []
    R = mpf(2) ** 8
    step = mpf(2) ** 0.25
    for _ in range(160):
        eta = sum(c * R ** d for d, c in enumerate(shifts) if d >= 1)
        if eta < limit:
            radii.append((mpmath.log(R), mpmath.log(2 * w * w - (w + eta) ** 2)))
        R /= step
    if not radii:
        return [mpf("inf")] * (jmax + 1)
    out = []
    for j in range(jmax + 1):
        best = min(-j * lr - ll for lr, ll in radii)
        out.append(mpf(math.factorial(j)) * mpmath.exp(best))
    return out


def _multivariate_cauchy(j: int, d: mpf) -> mpf:
    """Operator norm bound on the j-th differential of |y - a|^2 - i eps inverse, |y - a| = d."""
    if j == 0:
        return 1 / d ** 2
    lam = (-(2 * j + 2) + mpmath.sqrt((2 * j + 2) ** 2 + 4 * j * (j + 2))) / (2 * (j + 2))
    return mpf(j) ** j / (lam ** j * d ** (j + 2) * (1 - 2 * lam - lam ** 2))


@dataclass(frozen=True)
class CompositionReport:
    rows: tuple
    rho_f: mpf
    C: mpf
    D: mpf
    sigma: mpf
    tau_fdb: mpf
    tau_found: mpf | None
    levels: int
    all_pass: bool

    def to_dict(self) -> dict:
        return {"rho_f": float(self.rho_f), "C": magnitude_record(self.C), "D": magnitude_record(self.D),
                "sigma": float(self.sigma), "tau_fdb": magnitude_record(self.tau_fdb),
                "tau_found": None if self.tau_found is None else float(self.tau_found),
                "levels": self.levels, "all_pass": self.all_pass, "rows": list(self.rows)}


def _poly_roots(coeffs_low: list):
    """Roots with escalation when the reported error is too large."""
    hi = list(reversed(coeffs_low))
    base = mp.prec
    for extra in (base, 3 * base):
        try:
            roots, err = mpmath.polyroots(hi, maxsteps=400, extraprec=extra, error=True)
        except mpmath.libmp.libhyper.NoConvergence:
            continue
        scale = max(abs(r) for r in roots) + 1
        if err <= mpmath.ldexp(scale, -(base // 2)):
            return roots
    raise PrecisionError("polynomial root residual above tolerance after escalation")


def composition_growth_check(F, p: MonomialPlot, base_param, direction=None, k_max: int = 40,
                             sigma=1) -> CompositionReport:
    """Derivatives of f(p(base + s v)) at s = 0 against the Faa di Bruno chain."""
    if direction is None:
        direction = [1] + [0] * (p.m - 1)
    v = [mpf(t) for t in direction]
    nv = mpmath.sqrt(sum(t * t for t in v))
    v = [t / nv for t in v]
    if p.n != F.n:
        raise InputError("plot target dimension must match the function")
    polys = curve_polynomials(p, base_param, v)
    deg = max(len(q) for q in polys) - 1
    if deg < 1:
        raise InputError("the curve is constant")
    y0 = [q[0] for q in polys]
    shifts = [mpmath.sqrt(sum((q[d] if d < len(q) else 0) ** 2 for q in polys)) for d in range(deg + 1)]
    L = F.trunc_level(k_max)
    guard = mpmath.ldexp(1, -(mp.prec // 4))
    dists = []
    for ell in range(1, L + 1):
        a = F.center(ell)
        d = mpmath.sqrt(sum((x - y) ** 2 for x, y in zip(y0, a)))
        if d <= guard:
            raise PreconditionError(f"plot passes through centre {ell}")
        dists.append(d)
    box = F.tail_box(L)
    dbox = None
    if box is not None:
        dbox = mpmath.sqrt(sum((x - min(max(x, 0), u)) ** 2 for x, u in zip(y0, box)))
        if dbox <= guard:
            raise PreconditionError("plot meets the box holding the far centres")

    fact = [mpf(math.factorial(j)) for j in range(k_max + 1)]
    per_order = [[] for _ in range(k_max + 1)]
    tails = [mpf(0)] * (k_max + 1)
    prune_bits = mp.prec + 32
    for ell in range(1, L + 1):
        g = F.gadget(ell)
        a = F.center(ell)
        diffs = [list(q) for q in polys]
        for i in range(p.n):
            diffs[i][0] -= a[i]
        base_q = [mpf(0)]
        for q in diffs:
            base_q = _padd(base_q, _pmul(q, q))
        groups = g.grouped
        wmax = max(c for _, c in groups)
        cut = wmax * mpmath.ldexp(1, -prune_bits)
        omitted = g.omitted_weight()
        scale = mpmath.ldexp(1, -ell)
        for inv_m, w in groups:
            if w < cut:
                omitted += w
                continue
            qc = [mpc(c) for c in base_q]
            qc[0] -= mpc(0, inv_m)
            roots = _poly_roots(qc)
            dq = [c * i for i, c in enumerate(qc)][1:]
            for r in roots:
                A = 1 / mpmath.polyval(list(reversed(dq)), r)
                ir = 1 / r
                pw = ir
                for j in range(k_max + 1):
                    per_order[j].append(-scale * w * fact[j] * A * pw)
                    pw *= ir
        if omitted > 0:
            for j, b in enumerate(_curve_cauchy(k_max, dists[ell - 1], shifts)):
                tails[j] += scale * omitted * b
    if dbox is not None:
        for j, b in enumerate(_curve_cauchy(k_max, dbox, shifts)):
            tails[j] += mpmath.ldexp(1, -L) * b

    values = []
    for j in range(k_max + 1):
        total, biggest, bits = audited_sum_raw(per_order[j])
        if bits > mp.prec // 2:
            raise PrecisionError(f"cancellation of {bits} bits at order {j}")
        values.append((abs(total), bits))

    M = F.M
    sigma = mpf(sigma)
    D = max(shifts[d] / (sigma ** d * M.at(d)) for d in range(1, deg + 1))
    T = []
    for j in range(k_max + 1):
        s = sum(mpmath.ldexp(_multivariate_cauchy(j, d), -(i + 1)) for i, d in enumerate(dists))
        if dbox is not None:
            s += mpmath.ldexp(_multivariate_cauchy(j, dbox), -L)
        T.append(s)
    best = None
    for i in range(-8, 65):
        rho = mpf(2) ** i
        C = max(T[j] / (rho ** j * fact[j] * M.at(j)) for j in range(1, k_max + 1))
        x = D * rho
        lb = mpmath.log(C * x) + k_max * mpmath.log(M.at(1) * sigma) + (k_max - 1) * mpmath.log(1 + x)
        if best is None or lb < best[0]:
            best = (lb, rho, C)
    _, rho_f, C = best
    rows = []
    for k in range(1, k_max + 1):
        bound = faa_di_bruno_bound(C, rho_f, D, sigma, M, k)
        lhs = (values[k][0] + tails[k]) / fact[k]
        rows.append({"k": k, "derivative": magnitude_record(values[k][0]),
                     "tail": magnitude_record(tails[k]),
                     "normalised": magnitude_record(lhs),
                     "fdb_bound": magnitude_record(bound.bound),
                     "cancellation_loss_bits": values[k][1],
                     "pass": bool(lhs <= bound.bound.mpf)})
    K_fdb = C * D * rho_f / (1 + D * rho_f)
    tau_found = None
    for i in range(-20, 400):
        tau = mpf(2) ** i
        sup = max((values[k][0] + tails[k]) / (tau ** k * fact[k] * M.at(k)) for k in range(1, k_max + 1))
        if sup <= K_fdb:
            tau_found = tau
            break
    tau_fdb = M.at(1) * sigma * (1 + D * rho_f)
    return CompositionReport(tuple(rows), rho_f, C, D, sigma, tau_fdb, tau_found, L,
                             all(r["pass"] for r in rows))


def composition_values(F, p: MonomialPlot, base_param, direction=None, k_max: int = 10) -> list:
    """|d^k/ds^k f(p(base + s v))| for k <= k_max (used for consistency checks)."""
    rep = composition_growth_check(F, p, base_param, direction, k_max)
    return [r["derivative"] for r in rep.rows]
