"""Weight sequences and their calculus.

A weight sequence is stored as a finite prefix M_0..M_K of positive
numbers, optionally with a closed-form rule that extends it.  Every
"tends to infinity" style statement computed here is a classification of
a prefix, never a proof; reports say so.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import mpmath
from mpmath import mp, mpf

from .errors import InputError, PreconditionError, TruncationError
from .xnum import ScaledReal, magnitude_record

DEFAULT_KMAX = 512
TAU_DIV = 0.05
TAU_PL = 1e-6
# increments shrinking by this ratio per window also count as plateauing
PLATEAU_DECAY_RATIO = 0.75


def _tol(scale=1) -> mpf:
    return mpmath.ldexp(1, -(mp.prec - 16)) * (1 + abs(scale))


# --- closed-form rules ---------------------------------------------------


@dataclass(frozen=True)
class CatalogRule:
    name: str
    param: float | None = None

    def value(self, k: int) -> mpf:
        if self.name == "constant_one":
            return mpf(1)
        if self.name == "log_power":
            if k == 0:
                return mpf(1)
            return mpmath.log(k + mpmath.e) ** (mpf(self.param) * k)
        if self.name == "gevrey":
            s1 = mpf(self.param) - 1
            if s1 == 0 or k < 2:
                return mpf(1)
            if s1 == int(s1):
                return mpf(math.factorial(k)) ** int(s1)
            return mpmath.factorial(k) ** s1
        raise InputError(f"unknown catalog rule {self.name!r}")

    def describe(self) -> dict:
        params = {} if self.param is None else {_PARAM_NAMES[self.name]: self.param}
        return {"kind": "catalog", "name": self.name, "params": params}


_PARAM_NAMES = {"log_power": "delta", "gevrey": "s"}


@dataclass(frozen=True)
class SqrtRule:
    base: object

    def value(self, k: int) -> mpf:
        return mpmath.sqrt(self.base.value(k))

    def describe(self) -> dict:
        return {"kind": "derived", "name": "sqrt", "base": self.base.describe()}


@dataclass(frozen=True)
class ShiftRule:
    base: object
    k0: int

    def value(self, k: int) -> mpf:
        return self.base.value(k + self.k0)

    def describe(self) -> dict:
        return {"kind": "derived", "name": "shift", "k0": self.k0, "base": self.base.describe()}


@dataclass(frozen=True)
class PaddedRule:
    base: object
    ell: int
    c: mpf

    def value(self, k: int) -> mpf:
        if k < self.ell:
            return mpf(1)
        return self.c ** (2 * k - 2 * self.ell + 1) * self.base.value(k)

    def describe(self) -> dict:
        return {"kind": "derived", "name": "padded", "ell": self.ell,
                "c": mpmath.nstr(self.c, 40), "base": self.base.describe()}


# --- the sequence type ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightSequence:
    """Prefix M_0..M_K (raw mpf values) plus an optional extension rule."""

    raw: tuple
    generator: object = None
    label: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.raw) == 0:
            raise InputError("a weight sequence needs at least one value")
        for k, v in enumerate(self.raw):
            if not (v > 0) or not mpmath.isfinite(v):
                raise InputError(f"weight sequence entry {k} is not positive: {v}")

    @property
    def kmax(self) -> int:
        return len(self.raw) - 1

    def __len__(self):
        return len(self.raw)

    def __getitem__(self, k: int) -> mpf:
        return self.raw[k]

    @cached_property
    def values(self) -> tuple:
        return tuple(ScaledReal._wrap(v) for v in self.raw)

    @cached_property
    def logs(self) -> tuple:
        return tuple(mpmath.log(v) for v in self.raw)

    @cached_property
    def raw_quotients(self) -> tuple:
        r = self.raw
        return tuple(r[k + 1] / r[k] for k in range(len(r) - 1))

    @property
    def quotients(self) -> tuple:
        return tuple(ScaledReal._wrap(v) for v in self.raw_quotients)

    def value(self, k: int) -> ScaledReal:
        return ScaledReal._wrap(self.at(k))

    def at(self, k: int) -> mpf:
        """M_k, using the rule beyond the stored prefix."""
        if k < len(self.raw):
            return self.raw[k]
        if self.generator is None:
            raise PreconditionError(f"index {k} beyond table prefix of length {len(self.raw)}")
        return self.generator.value(k)

    def log_at(self, k: int) -> mpf:
        if k < len(self.raw):
            return self.logs[k]
        return mpmath.log(self.at(k))

    def extended(self, kmax: int) -> "WeightSequence":
        """Same sequence with prefix length at least kmax + 1."""
        if kmax <= self.kmax:
            return self
        if self.generator is None:
            raise PreconditionError(
                f"table sequence has prefix 0..{self.kmax}; index {kmax} requested")
        extra = tuple(self.generator.value(k) for k in range(len(self.raw), kmax + 1))
        return WeightSequence(self.raw + extra, self.generator, self.label)

    def truncated(self, kmax: int) -> "WeightSequence":
        return WeightSequence(self.raw[: kmax + 1], self.generator, self.label)

    def descriptor(self) -> dict:
        if self.label:
            return dict(self.label)
        if self.generator is not None:
            return self.generator.describe()
        return {"kind": "table", "values": [mpmath.nstr(v, 30) for v in self.raw]}


def catalog(name: str, params: dict | None = None, kmax: int = DEFAULT_KMAX) -> WeightSequence:
    """Catalog sequence with its rule attached, prefix 0..kmax."""
    params = dict(params or {})
    if name == "constant_one":
        rule = CatalogRule("constant_one")
    elif name == "log_power":
        delta = float(params.get("delta", 1.0))
        if not delta > 0:
            raise InputError("log_power needs delta > 0")
        rule = CatalogRule("log_power", delta)
    elif name == "gevrey":
        s = float(params.get("s", 2.0))
        if not s > 0:
            raise InputError("gevrey needs s > 0")
        rule = CatalogRule("gevrey", s)
    elif name == "table":
        return table(params.get("values", ()))
    else:
        raise InputError(f"unknown sequence {name!r}")
    if kmax < 0:
        raise InputError("kmax must be nonnegative")
    return WeightSequence(tuple(rule.value(k) for k in range(kmax + 1)), rule)


def table(values: Sequence) -> WeightSequence:
    vals = []
    for k, v in enumerate(values):
        try:
            x = mpf(v) if not isinstance(v, ScaledReal) else v.mpf
        except (TypeError, ValueError) as exc:
            raise InputError(f"table entry {k} is not a number: {v!r}") from exc
        if not x > 0:
            raise InputError(f"table entry {k} must be positive, got {v!r}")
        vals.append(x)
    if not vals:
        raise InputError("table sequence is empty")
    return WeightSequence(tuple(vals), None, {"kind": "table", "values": [str(v) for v in values]})


def from_descriptor(desc: dict, kmax: int = DEFAULT_KMAX) -> WeightSequence:
    """Build a sequence from its JSON descriptor."""
    if not isinstance(desc, dict):
        raise InputError("sequence descriptor must be a JSON object")
    kind = desc.get("kind")
    if kind == "table":
        return table(desc.get("values") or [])
    if kind == "catalog":
        return catalog(desc.get("name"), desc.get("params") or {}, kmax)
    raise InputError(f"unknown sequence descriptor kind {kind!r}")


def parse_spec(text: str, kmax: int = DEFAULT_KMAX) -> WeightSequence:
    """Parse the short form ``name[:param]`` used on the command line."""
    name, _, arg = text.partition(":")
    if name == "constant_one":
        return catalog(name, kmax=kmax)
    if name in _PARAM_NAMES:
        try:
            p = float(arg) if arg else (1.0 if name == "log_power" else 2.0)
        except ValueError as exc:
            raise InputError(f"bad parameter in {text!r}") from exc
        return catalog(name, {_PARAM_NAMES[name]: p}, kmax)
    raise InputError(f"unknown sequence {text!r}")


# --- regularity ----------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    log_convex_ok: bool
    first_log_convex_violation: int | None
    normalization_ok: bool
    roots: tuple
    roots_strictly_increasing: bool
    first_root_violation: int | None
    roots_exceed: ScaledReal

    @property
    def regular(self) -> bool:
        return self.log_convex_ok and self.normalization_ok

    def to_dict(self) -> dict:
        return {
            "log_convex_ok": self.log_convex_ok,
            "first_log_convex_violation": self.first_log_convex_violation,
            "normalization_ok": self.normalization_ok,
            "roots_strictly_increasing": self.roots_strictly_increasing,
            "first_root_violation": self.first_root_violation,
            "roots_exceed": magnitude_record(self.roots_exceed),
            "note": "prefix diagnostics only",
        }


def check_regular(M: WeightSequence, Kmax: int | None = None) -> RegularityReport:
    K = M.kmax if Kmax is None else Kmax
    if K > M.kmax:
        raise PreconditionError(f"Kmax={K} exceeds prefix 0..{M.kmax}")
    L = M.logs
    bad_convex = None
    for k in range(1, K):
        if 2 * L[k] > L[k - 1] + L[k + 1] + _tol(abs(L[k - 1]) + abs(L[k]) + abs(L[k + 1])):
            bad_convex = k
            break
    normalized = abs(M[0] - 1) <= _tol() and (K < 1 or M[1] >= M[0] * (1 - _tol()))
    roots = [mpmath.exp(L[k] / k) for k in range(1, K + 1)]
    bad_root = None
    for k in range(1, K):
        # compare ln M_k / k in log space
        a, b = L[k] / k, L[k + 1] / (k + 1)
        if not b > a + _tol(abs(a)):
            bad_root = k
            break
    exceed = max(roots) if roots else mpf(1)
    return RegularityReport(
        log_convex_ok=bad_convex is None,
        first_log_convex_violation=bad_convex,
        normalization_ok=bool(normalized),
        roots=tuple(ScaledReal._wrap(r) for r in roots),
        roots_strictly_increasing=bad_root is None,
        first_root_violation=bad_root,
        roots_exceed=ScaledReal._wrap(exceed),
    )


# --- quasianalyticity ----------------------------------------------------


def classify_increments(incs: Sequence[float], tau_div=TAU_DIV, tau_pl=TAU_PL) -> str:
    """Three-window doubling heuristic shared by sums and integrals."""
    if all(i >= tau_div for i in incs):
        return "diverging"
    if all(i < tau_pl for i in incs):
        return "plateauing"
    # geometric decay of window increments also signals a convergent tail
    if incs[-1] < tau_div and all(incs[i] > 0 for i in range(len(incs) - 1)):
        ratios = [incs[i + 1] / incs[i] for i in range(len(incs) - 1)]
        if all(r <= PLATEAU_DECAY_RATIO for r in ratios):
            return "plateauing"
    return "inconclusive"


@dataclass(frozen=True)
class QaReport:
    partial_sums: tuple
    window_increments: tuple
    growth_classification: str

    @property
    def final(self) -> ScaledReal:
        return self.partial_sums[-1]

    def to_dict(self) -> dict:
        return {
            "Kmax": len(self.partial_sums) - 1,
            "final_partial_sum": magnitude_record(self.final),
            "window_increments": list(self.window_increments),
            "growth_classification": self.growth_classification,
            "heuristic": True,
        }


def qa_partial_sums(M: WeightSequence, Kmax: int) -> QaReport:
    """Partial sums of sum_k M_k / ((k+1) M_{k+1}) with a divergence heuristic."""
    if Kmax < 16:
        raise InputError("qa_partial_sums needs Kmax >= 16")
    M = M.extended(Kmax + 1)
    sums = []
    s = mpf(0)
    r = M.raw
    for k in range(Kmax + 1):
        s += r[k] / ((k + 1) * r[k + 1])
        sums.append(s)
    incs = []
    for W in (Kmax // 8, Kmax // 4, Kmax // 2):
        incs.append(float(sums[2 * W] - sums[W]))
    return QaReport(tuple(ScaledReal._wrap(x) for x in sums), tuple(incs), classify_increments(incs))


# --- associated function ---------------------------------------------------


@dataclass(frozen=True)
class AssociatedValue:
    value: ScaledReal
    argmax: int
    interior: bool


def assoc_function(M: WeightSequence, t, Kmax: int | None = None) -> AssociatedValue:
    """phi(t) = max_{k <= Kmax} t^{k+1} / M_k with argmax and interior flag."""
    t = t.mpf if isinstance(t, ScaledReal) else mpf(t)
    if not t > 0:
        raise InputError("assoc_function needs t > 0")
    K = M.kmax if Kmax is None else Kmax
    if K > M.kmax:
        M = M.extended(K)
    lt = mpmath.log(t)
    L = M.logs
    flt = float(lt)
    approx = [(k + 1) * flt - float(L[k]) for k in range(K + 1)]
    best = max(approx)
    scale = max(abs(a) for a in approx) + 1.0
    slack = 1e-9 * scale + 1e-9
    cands = [k for k in range(K + 1) if approx[k] >= best - slack]
    vals = {k: t ** (k + 1) / M[k] for k in cands}
    vmax = max(vals.values())
    cut = vmax * (1 - _tol())
    arg = max(k for k in cands if vals[k] >= cut)
    return AssociatedValue(ScaledReal._wrap(vmax), arg, arg < K)


def assoc_identity_check(M: WeightSequence, k: int, Kmax: int | None = None) -> ScaledReal:
    """|M_k phi(m_k) / m_k^{k+1} - 1| for a regular sequence."""
    K = M.kmax if Kmax is None else Kmax
    if k + 1 > K:
        raise PreconditionError("k must be below Kmax")
    rep = check_regular(M, min(K, M.kmax))
    if not rep.regular:
        raise PreconditionError("sequence is not regular (log-convex and normalized)")
    if not rep.roots_strictly_increasing:
        raise PreconditionError("roots M_k^(1/k) are not strictly increasing")
    m = M[k + 1] / M[k]
    phi = assoc_function(M, m, K)
    if not phi.interior:
        raise TruncationError(f"sup for phi(m_{k}) attained at the prefix boundary")
    return ScaledReal._wrap(abs(M[k] * phi.value.mpf / m ** (k + 1) - 1))


# --- indicators -----------------------------------------------------------


def classify_ratio_roots(r: Sequence[mpf], tau=TAU_DIV) -> str:
    """Doubling-window classification of a positive sequence r_1..r_K."""
    K = len(r)
    if K < 16:
        return "inconclusive"
    lr = [float(mpmath.log(x)) for x in r]
    wins = [(K // 8, K // 4), (K // 4, K // 2), (K // 2, K)]
    # r is 1-indexed in callers; list position p holds r_{p+1}
    maxes = [max(lr[a - 1:b]) for a, b in wins]
    mins = [min(lr[a - 1:b]) for a, b in wins]
    if all(maxes[i] - maxes[i + 1] >= tau for i in range(2)):
        return "to_zero"
    if all(mins[i + 1] - mins[i] >= tau for i in range(2)):
        return "unbounded"
    if all(maxes[i + 1] <= maxes[i] + 1e-12 for i in range(2)):
        return "bounded"
    return "inconclusive"


@dataclass(frozen=True)
class IndicatorReport:
    values: tuple
    classification: str

    @property
    def bounded(self) -> bool:
        return self.classification in ("bounded", "to_zero")

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "bounded": self.bounded,
            "last": magnitude_record(self.values[-1]) if self.values else None,
            "heuristic": True,
        }


def inclusion_indicator(M: WeightSequence, N: WeightSequence, Kmax: int) -> IndicatorReport:
    """r_k = (M_k / N_k)^(1/k), k = 1..Kmax, with a prefix classification."""
    M, N = M.extended(Kmax), N.extended(Kmax)
    r = [mpmath.exp((M.logs[k] - N.logs[k]) / k) for k in range(1, Kmax + 1)]
    return IndicatorReport(tuple(ScaledReal._wrap(x) for x in r), classify_ratio_roots(r))


def derivation_stability_indicator(M: WeightSequence, Kmax: int) -> IndicatorReport:
    """(M_{k+1} / M_k)^(1/k), k = 1..Kmax."""
    M = M.extended(Kmax + 1)
    r = [mpmath.exp((M.logs[k + 1] - M.logs[k]) / k) for k in range(1, Kmax + 1)]
    return IndicatorReport(tuple(ScaledReal._wrap(x) for x in r), classify_ratio_roots(r))


# --- derived sequences -----------------------------------------------------


def derive_sqrt(M: WeightSequence) -> WeightSequence:
    gen = SqrtRule(M.generator) if M.generator is not None else None
    return WeightSequence(tuple(mpmath.sqrt(v) for v in M.raw), gen)


def derive_shift(M: WeightSequence, k0: int) -> WeightSequence:
    if k0 < 0:
        raise InputError("shift must be nonnegative")
    if k0 == 0:
        return M
    if k0 > M.kmax:
        if M.generator is None:
            raise PreconditionError("prefix too short for the requested shift")
        M = M.extended(2 * k0)
    gen = ShiftRule(M.generator, k0) if M.generator is not None else None
    return WeightSequence(M.raw[k0:], gen)


def derive_padded(M: WeightSequence, ell: int, c, kmax: int | None = None) -> WeightSequence:
    """M^(ell): 1 below ell, c^(2k-2ell+1) M_k from ell on."""
    c = c.mpf if isinstance(c, ScaledReal) else mpf(c)
    if ell < 1:
        raise InputError("ell must be at least 1")
    K = M.kmax if kmax is None else kmax
    M = M.extended(max(K, ell))
    if c < M[ell] * (1 - _tol()):
        raise PreconditionError(f"padding constant c_{ell} must be at least M_{ell}")
    vals = tuple(mpf(1) if k < ell else c ** (2 * k - 2 * ell + 1) * M[k] for k in range(K + 1))
    gen = PaddedRule(M.generator, ell, c) if M.generator is not None else None
    return WeightSequence(vals, gen)


def padded_equivalence_witness(M: WeightSequence, padded: WeightSequence, c) -> dict:
    """Range of (padded_k / M_k)^(1/k) on the common prefix against max(c, 1/c)^2."""
    c = c.mpf if isinstance(c, ScaledReal) else mpf(c)
    K = min(M.kmax, padded.kmax)
    rr = [mpmath.exp((padded.logs[k] - M.logs[k]) / k) for k in range(1, K + 1)]
    bound = max(c, 1 / c) ** 2
    lo, hi = min(rr), max(rr)
    return {"min": ScaledReal._wrap(lo), "max": ScaledReal._wrap(hi),
            "bound": ScaledReal._wrap(bound), "ok": bool(hi <= bound * (1 + _tol()) and lo * bound >= 1 - _tol())}


# --- convex minorant and diagonal sequence ---------------------------------


def lower_hull(points: Sequence[tuple]) -> list[int]:
    """Indices of the lower convex hull vertices of points sorted by x."""
    hull: list[int] = []
    for i, (x, y) in enumerate(points):
        while len(hull) >= 2:
            x1, y1 = points[hull[-2]]
            x2, y2 = points[hull[-1]]
            # drop the middle point unless it lies strictly below the chord
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def log_convex_minorant(M: WeightSequence, Kmax: int | None = None) -> WeightSequence:
    """Largest log-convex sequence below M on 0..Kmax."""
    K = M.kmax if Kmax is None else Kmax
    L = M.logs[: K + 1]
    hull = lower_hull([(mpf(k), L[k]) for k in range(K + 1)])
    out = list(M.raw[: K + 1])
    for a, b in zip(hull, hull[1:]):
        for k in range(a + 1, b):
            w = mpf(k - a) / (b - a)
            out[k] = mpmath.exp(L[a] + (L[b] - L[a]) * w)
    return WeightSequence(tuple(out), None, {"kind": "table", "name": "log_convex_minorant",
                                             "hull": hull, "base": M.descriptor()})


@dataclass(frozen=True)
class DiagonalBlock:
    p: int
    x: float
    C: ScaledReal
    C_argmax: int
    j: int
    root_floor_ok: bool | None


@dataclass(frozen=True)
class DiagonalSequence:
    sequence: WeightSequence
    raw: WeightSequence
    blocks: tuple


def diagonal_sequence(family: Callable[[float], WeightSequence] | Sequence[WeightSequence],
                      x_schedule: Sequence[float], Kmax: int = DEFAULT_KMAX) -> DiagonalSequence:
    """Diagonal sequence over a decreasing schedule, then its log-convex minorant."""
    xs = [float(x) for x in x_schedule]
    if not xs or any(x <= 0 for x in xs) or any(b >= a for a, b in zip(xs, xs[1:])):
        raise InputError("schedule must be strictly decreasing positive reals")
    if callable(family):
        members = [family(x).extended(Kmax) for x in xs]
    else:
        members = [m.extended(Kmax) for m in family]
        if len(members) != len(xs):
            raise InputError("family and schedule lengths differ")
    for a, b in zip(members, members[1:]):
        for k in range(Kmax + 1):
            if b[k] > a[k] * (1 + mpmath.ldexp(1, -40)):
                raise PreconditionError(f"family is not monotone in x at index {k}")
    for p, Mx in enumerate(members, start=1):
        if not Mx.logs[Kmax] / Kmax > Mx.logs[Kmax // 2] / (Kmax // 2):
            raise PreconditionError(f"member {p} has non-growing roots on the prefix")

    blocks = []
    j_prev = 0
    for p, (x, Mx) in enumerate(zip(xs, members), start=1):
        lp = mpmath.log(p)
        vals = [k * lp - Mx.logs[k] for k in range(Kmax + 1)]
        best = max(range(Kmax + 1), key=lambda k: (vals[k], k))
        if best == Kmax:
            raise TruncationError(f"C_{p} is attained at the prefix boundary k={Kmax}")
        logC = vals[best]
        jp = max(j_prev + 1, int(math.ceil(float(logC / mpmath.log(2)) - 1e-12)), 0)
        blocks.append([p, x, mpmath.exp(logC), best, jp])
        j_prev = jp

    raw = [mpf(1)] * (Kmax + 1)
    for i, (p, x, C, arg, jp) in enumerate(blocks):
        stop = blocks[i + 1][4] if i + 1 < len(blocks) else Kmax + 1
        for j in range(jp, min(stop, Kmax + 1)):
            raw[j] = mpmath.sqrt(members[i][j])
    out_blocks = []
    for i, (p, x, C, arg, jp) in enumerate(blocks):
        stop = blocks[i + 1][4] if i + 1 < len(blocks) else Kmax + 1
        js = [j for j in range(max(jp, 1), min(stop, Kmax + 1))]
        floor = mpmath.sqrt(mpf(p) / 2)
        ok = all(mpmath.root(raw[j], j) >= floor * (1 - _tol()) for j in js) if js else None
        out_blocks.append(DiagonalBlock(p, x, ScaledReal._wrap(C), arg, jp, ok))
    rawseq = WeightSequence(tuple(raw), None, {"kind": "table", "name": "diagonal_raw"})
    return DiagonalSequence(log_convex_minorant(rawseq), rawseq, tuple(out_blocks))


# --- composition inequality ------------------------------------------------


def compositions(k: int):
    """All compositions of k into positive parts."""
    for cuts in itertools.product((0, 1), repeat=k - 1):
        parts, run = [], 1
        for c in cuts:
            if c:
                parts.append(run)
                run = 1
            else:
                run += 1
        parts.append(run)
        yield tuple(parts)


def composition_inequality_violations(M: WeightSequence, k_max: int = 12) -> list:
    """Compositions violating M_1^k M_k >= M_j prod M_{alpha_i} (exhaustive)."""
    L = M.extended(k_max).logs
    bad = []
    for k in range(1, k_max + 1):
        lhs = k * L[1] + L[k]
        for alpha in compositions(k):
            rhs = L[len(alpha)] + sum(L[a] for a in alpha)
            if rhs > lhs + _tol(abs(lhs)):
                bad.append((k, alpha))
    return bad
