"""Weight functions omega, their Young conjugates and derived sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
from mpmath import mp, mpf

from .errors import DomainError, InputError, TruncationError
from .weights import WeightSequence, classify_increments
from .xnum import ScaledReal, magnitude_record

S_MAX = 80
GOLDEN_ITERATIONS = 200
QUAD_PRECISION = 113


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """omega on [0, t_max]; closed form by name or a monotone sample table."""

    name: str
    params: dict = field(default_factory=dict)
    samples: tuple | None = None
    t_max: float | None = None

    def __post_init__(self):
        if self.samples is not None:
            import numpy as np
            from scipy.interpolate import PchipInterpolator

            ts = np.array([float(a) for a, _ in self.samples])
            ws = np.array([float(b) for _, b in self.samples])
            object.__setattr__(self, "_interp", PchipInterpolator(ts, ws, extrapolate=False))

    def __call__(self, t) -> mpf:
        t = t.mpf if isinstance(t, ScaledReal) else mpf(t)
        if t < 0:
            raise DomainError("omega is defined on [0, oo)")
        if self.t_max is not None and t > self.t_max:
            raise DomainError(f"omega table ends at {self.t_max}")
        if self.name == "identity":
            return t
        if self.name == "power":
            return t ** mpf(self.params["a"]) if t > 0 else mpf(0)
        if self.name == "log_damped":
            return t / (1 + mpmath.log1p(t))
        if self.name == "table":
            return mpf(float(self._interp(float(t))))
        raise InputError(f"unknown weight function {self.name!r}")

    def phi(self, s) -> mpf:
        """phi(s) = omega(e^s)."""
        return self(mpmath.exp(s))

    def descriptor(self) -> dict:
        if self.samples is not None:
            return {"kind": "table", "name": "table",
                    "samples": [[float(a), float(b)] for a, b in self.samples]}
        return {"kind": "catalog", "name": self.name, "params": dict(self.params)}


def omega_catalog(name: str, params: dict | None = None) -> WeightFunction:
    params = dict(params or {})
    if name == "identity":
        return WeightFunction("identity")
    if name == "power":
        a = float(params.get("a", 0.5))
        if not 0 < a <= 1:
            raise InputError("power weight needs 0 < a <= 1")
        return WeightFunction("power", {"a": a})
    if name == "log_damped":
        return WeightFunction("log_damped")
    if name == "table":
        return omega_table(params.get("samples") or [])
    raise InputError(f"unknown weight function {name!r}")


def omega_table(samples: Sequence) -> WeightFunction:
    pts = [(float(a), float(b)) for a, b in samples]
    if len(pts) < 2:
        raise InputError("table weight function needs at least two samples")
    if pts[0] != (0.0, 0.0):
        raise InputError("table weight function must start at (0, 0)")
    for (t0, w0), (t1, w1) in zip(pts, pts[1:]):
        if not t1 > t0:
            raise InputError("sample abscissae must be strictly increasing")
        if w1 < w0:
            raise InputError("weight function samples must be nondecreasing")
    return WeightFunction("table", {}, tuple(pts), pts[-1][0])


def from_descriptor(desc: dict) -> WeightFunction:
    if not isinstance(desc, dict):
        raise InputError("weight function descriptor must be a JSON object")
    if desc.get("kind") == "table":
        return omega_table(desc.get("samples") or [])
    if desc.get("kind") == "catalog":
        return omega_catalog(desc.get("name"), desc.get("params"))
    raise InputError(f"unknown weight function descriptor kind {desc.get('kind')!r}")


# --- condition checks -----------------------------------------------------


@dataclass(frozen=True)
class OmegaReport:
    om1_ratio: float
    om2_ratio: float
    om3_gap: float
    om3_trend: str
    om4_convexity: float
    concavity_defect: float
    small_o_t: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _trend(vals: Sequence[mpf]) -> str:
    lo, hi = min(vals), max(vals)
    if hi - lo <= mpmath.ldexp(1, -(mp.prec // 2)) * abs(hi):
        return "flat"
    if all(b < a for a, b in zip(vals, vals[1:])):
        return "decreasing"
    if all(b > a for a, b in zip(vals, vals[1:])):
        return "increasing"
    return "mixed"


def _chord_defects(xs, ys):
    """Largest ys[i] - chord and chord - ys[i] over consecutive triples."""
    above = below = mpf(0)
    for i in range(1, len(xs) - 1):
        x0, x1, x2 = xs[i - 1], xs[i], xs[i + 1]
        chord = ys[i - 1] + (ys[i + 1] - ys[i - 1]) * (x1 - x0) / (x2 - x0)
        above = max(above, ys[i] - chord)
        below = max(below, chord - ys[i])
    return above, below


def check_weight_function(omega: WeightFunction, grid: Sequence[float]) -> OmegaReport:
    """Grid diagnostics for the four weight-function conditions and concavity."""
    ts = [mpf(t) for t in grid]
    if len(ts) < 8 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise InputError("grid must be strictly increasing with at least 8 points")
    if ts[0] <= 0 or ts[-1] / ts[0] < 10 ** 4:
        raise InputError("grid must start above 0 and cover at least 4 decades")
    ws = [omega(t) for t in ts]
    if any(b < a for a, b in zip(ws, ws[1:])):
        raise InputError("weight function is not monotone on the grid")
    tol = mpmath.ldexp(1, -(mp.prec - 16))
    big = [i for i, t in enumerate(ts) if t >= 1]
    om1 = max((omega(2 * ts[i]) / ws[i] for i in big if ws[i] > 0
               and (omega.t_max is None or 2 * ts[i] <= omega.t_max)), default=mpf("nan"))
    om2 = max((ws[i] / ts[i] for i in big), default=mpf("nan"))
    tail = [i for i, t in enumerate(ts) if t > mpmath.e]
    gaps = [ws[i] / mpmath.log(ts[i]) for i in tail]
    om3 = min(gaps) if gaps else mpf("nan")
    # om3 trend on decade samples
    dec = _decade_indices(ts, tail)
    om3_trend = _trend([gaps[tail.index(i)] for i in dec]) if len(dec) >= 3 else "inconclusive"
    ss = [mpmath.log(t) for t in ts]
    # phi convex: a point above its chord is a defect
    conv_def, _ = _chord_defects(ss, ws)
    _, conc_def = _chord_defects(ts, ws)
    scale = max(abs(w) for w in ws)
    conv_def = conv_def if conv_def > tol * scale else mpf(0)
    conc_def = conc_def if conc_def > tol * scale else mpf(0)
    ratio_pts = _decade_indices(ts, big)
    small_o = _trend([ws[i] / ts[i] for i in ratio_pts]) if len(ratio_pts) >= 3 else "inconclusive"
    return OmegaReport(float(om1), float(om2), float(om3), om3_trend,
                       float(conv_def), float(conc_def), small_o)


def _decade_indices(ts, idx):
    """Grid indices closest to successive powers of ten within idx."""
    if not idx:
        return []
    lo = math.floor(float(mpmath.log10(ts[idx[0]])))
    hi = math.floor(float(mpmath.log10(ts[idx[-1]])))
    out = []
    for d in range(lo, hi + 1):
        target = mpf(10) ** d
        j = min(idx, key=lambda i: abs(mpmath.log(ts[i] / target)))
        if j not in out:
            out.append(j)
    return out


# --- Young conjugate -----------------------------------------------------


@dataclass(frozen=True)
class ConjugateValue:
    value: ScaledReal
    s_star: ScaledReal
    at_zero: bool
    at_upper_boundary: bool


def young_conjugate(omega: WeightFunction, t, s_max: float = S_MAX) -> ConjugateValue:
    """sup_{0 <= s <= s_max} (s t - omega(e^s)) by golden-section search."""
    t = t.mpf if isinstance(t, ScaledReal) else mpf(t)
    if t < 0:
        raise DomainError("young_conjugate needs t >= 0")
    if omega.t_max is not None:
        s_max = min(s_max, float(mpmath.log(omega.t_max)))
    if t == 0:
        v = -omega.phi(0)
        return ConjugateValue(ScaledReal._wrap(v), ScaledReal(0), True, False)
    g = lambda s: s * t - omega.phi(s)
    inv = (mpmath.sqrt(5) - 1) / 2
    a, b = mpf(0), mpf(s_max)
    c, d = b - inv * (b - a), a + inv * (b - a)
    gc, gd = g(c), g(d)
    stop = mpmath.ldexp(1, -64)
    for _ in range(GOLDEN_ITERATIONS):
        if b - a <= stop * (1 + abs(a)):
            break
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - inv * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + inv * (b - a)
            gd = g(d)
    cands = [(g(mpf(0)), mpf(0)), (gc, c), (gd, d), (g(mpf(s_max)), mpf(s_max))]
    best, s_star = max(cands, key=lambda p: p[0])
    edge = mpmath.ldexp(1, -32) * (1 + s_max)
    return ConjugateValue(ScaledReal._wrap(best), ScaledReal._wrap(s_star),
                          bool(s_star <= edge), bool(s_star >= s_max - edge))


def omega_seminorm_weight(omega: WeightFunction, rho, j: int, s_max: float = S_MAX) -> ScaledReal:
    """exp(-(1/rho) phi*(rho j))."""
    rho = mpf(rho)
    if not rho > 0:
        raise InputError("rho must be positive")
    cv = young_conjugate(omega, rho * j, s_max)
    if cv.at_upper_boundary:
        raise TruncationError("conjugate attained at s_max; raise s_max")
    return ScaledReal._wrap(mpmath.exp(-cv.value.mpf / rho))


# --- quasianalyticity integral -------------------------------------------


@dataclass(frozen=True)
class QaIntegralReport:
    value: ScaledReal
    window_increments: tuple
    growth_classification: str

    def to_dict(self) -> dict:
        return {"value": magnitude_record(self.value),
                "window_increments": list(self.window_increments),
                "growth_classification": self.growth_classification, "heuristic": True}


def qa_integral_partial(omega: WeightFunction, T: float) -> QaIntegralReport:
    """int_0^T omega(t) / (1 + t^2) dt on dyadic pieces, with the window heuristic."""
    T = mpf(T)
    if not T > 0:
        raise InputError("T must be positive")
    marks = {mpf(0), T, T / 8, T / 4, T / 2}
    p = mpf(1)
    while p < T:
        marks.add(p)
        p *= 2
    if omega.samples is not None:
        marks.update(mpf(a) for a, _ in omega.samples if 0 < a < T)
    pts = sorted(m for m in marks if 0 <= m <= T)
    f = lambda t: omega(t) / (1 + t * t)
    cum = {pts[0]: mpf(0)}
    total = mpf(0)
    with mp.workprec(QUAD_PRECISION):
        for a, b in zip(pts, pts[1:]):
            total += mpmath.quad(f, [a, b])
            cum[b] = +total
    incs = tuple(float(cum[2 * w] - cum[w]) for w in (T / 8, T / 4, T / 2))
    return QaIntegralReport(ScaledReal._wrap(total), incs, classify_increments(list(incs)))


# --- associated family ------------------------------------------------------


def associated_family(omega: WeightFunction, x, Kmax: int = 512, s_max: float = S_MAX) -> WeightSequence:
    """M^x_k = exp((1/x) phi*(x k)) / k!, raw (not normalized to M_0 = 1)."""
    x = mpf(x)
    if not x > 0:
        raise InputError("x must be positive")
    vals = []
    for k in range(Kmax + 1):
        cv = young_conjugate(omega, x * k, s_max)
        if k > 0 and cv.at_upper_boundary:
            raise TruncationError(f"conjugate at x*k={mpmath.nstr(x * k, 8)} hits s_max")
        vals.append(mpmath.exp(cv.value.mpf / x) / mpmath.factorial(k))
    return WeightSequence(tuple(vals), None, {"kind": "family", "omega": omega.descriptor(),
                                              "x": float(x), "convention": "exp(phi*(xk)/x)/k!"})
