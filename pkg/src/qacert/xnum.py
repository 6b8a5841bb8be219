"""Extended-range real and complex numbers with audited summation.

Values are backed by mpmath, whose binary floats carry an arbitrary
precision significand and an unbounded integer exponent, so magnitudes
like (2k)! M_{2k} for k in the hundreds never overflow.  The wrapper
types expose the (significand, exponent, sign) view and a stable decimal
serialization; hot loops elsewhere work on the raw mpf/mpc values and
wrap the results.
"""

from __future__ import annotations

import math
import os
from contextlib import contextmanager
from dataclasses import dataclass

import mpmath
from mpmath import mp, mpc, mpf
from mpmath import libmp

from .errors import DomainError, InputError

DEFAULT_PRECISION = 256
PRECISION_ENV = "QACERT_PRECISION"
ALLOWED_PRECISIONS = (128, 256, 512, 1024)

_LOG10_2 = math.log10(2.0)


def default_precision() -> int:
    """Default working precision in bits, honouring the environment override."""
    raw = os.environ.get(PRECISION_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_PRECISION
    try:
        prec = int(raw)
    except ValueError as exc:
        raise InputError(f"{PRECISION_ENV}={raw!r} is not an integer") from exc
    if prec not in ALLOWED_PRECISIONS:
        raise InputError(f"{PRECISION_ENV} must be one of {ALLOWED_PRECISIONS}, got {prec}")
    return prec


@contextmanager
def precision(bits: int | None = None):
    """Run a block at ``bits`` of working precision (default: configured P)."""
    if bits is None:
        bits = default_precision()
    with mp.workprec(int(bits)):
        yield int(bits)


def working_precision() -> int:
    return mp.prec


def decimal_digits(bits: int) -> int:
    """Significant decimal digits needed for a faithful round trip at ``bits``."""
    return int(math.ceil(bits * _LOG10_2)) + 2


def _to_mpf(x) -> mpf:
    if isinstance(x, ScaledReal):
        return x._v
    if isinstance(x, mpf):
        return x
    if isinstance(x, (int, float, str)):
        return mpf(x)
    if isinstance(x, mpmath.mpf.__class__):  # pragma: no cover
        return mpf(x)
    return mpf(x)


class ScaledReal:
    """Immutable extended-range real number.

    The canonical view is ``sign * significand * 2**exponent`` with the
    significand in [1, 2) for nonzero values and all-zero fields (sign +1)
    for zero.
    """

    __slots__ = ("_v",)

    def __init__(self, value=0):
        if isinstance(value, ScaledReal):
            v = value._v
        else:
            v = _to_mpf(value)
        if not mpmath.isfinite(v):
            raise DomainError(f"ScaledReal must be finite, got {value!r}")
        object.__setattr__(self, "_v", v)

    def __setattr__(self, name, value):
        raise AttributeError("ScaledReal is immutable")

    @classmethod
    def _wrap(cls, v: mpf) -> "ScaledReal":
        obj = object.__new__(cls)
        object.__setattr__(obj, "_v", v)
        return obj

    @classmethod
    def from_parts(cls, significand, exponent: int, sign: int = 1) -> "ScaledReal":
        sig = _to_mpf(significand)
        if sign not in (1, -1):
            raise DomainError("sign must be +1 or -1")
        if sig == 0:
            if exponent != 0 or sign != 1:
                raise DomainError("zero must have exponent 0 and sign +1")
            return cls._wrap(mpf(0))
        if not (1 <= sig < 2):
            raise DomainError("significand must lie in [1, 2)")
        return cls._wrap(sign * mpmath.ldexp(sig, int(exponent)))

    # canonical fields -------------------------------------------------

    @property
    def mpf(self) -> mpf:
        return self._v

    @property
    def sign(self) -> int:
        return -1 if self._v < 0 else 1

    @property
    def exponent(self) -> int:
        if self._v == 0:
            return 0
        _, man, exp, bc = self._v._mpf_
        return int(exp + bc - 1)

    @property
    def significand(self) -> mpf:
        if self._v == 0:
            return mpf(0)
        return mpmath.ldexp(abs(self._v), -self.exponent)

    def is_zero(self) -> bool:
        return self._v == 0

    # arithmetic -------------------------------------------------------

    def __add__(self, other):
        return ScaledReal._wrap(self._v + _to_mpf(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScaledReal._wrap(self._v - _to_mpf(other))

    def __rsub__(self, other):
        return ScaledReal._wrap(_to_mpf(other) - self._v)

    def __mul__(self, other):
        return ScaledReal._wrap(self._v * _to_mpf(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        d = _to_mpf(other)
        if d == 0:
            raise DomainError("division by zero")
        return ScaledReal._wrap(self._v / d)

    def __rtruediv__(self, other):
        if self._v == 0:
            raise DomainError("division by zero")
        return ScaledReal._wrap(_to_mpf(other) / self._v)

    def __pow__(self, e):
        if isinstance(e, int):
            if self._v == 0 and e < 0:
                raise DomainError("zero to a negative power")
            return ScaledReal._wrap(self._v ** e)
        if self._v < 0:
            raise DomainError("negative base with non-integer exponent")
        return ScaledReal._wrap(self._v ** _to_mpf(e))

    def __neg__(self):
        return ScaledReal._wrap(-self._v)

    def __abs__(self):
        return ScaledReal._wrap(abs(self._v))

    def __float__(self):
        return float(self._v)

    def __bool__(self):
        return self._v != 0

    def _cmp_value(self, other):
        if isinstance(other, ScaledComplex):
            return NotImplemented
        return _to_mpf(other)

    def __eq__(self, other):
        try:
            return self._v == self._cmp_value(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other):
        return self._v < self._cmp_value(other)

    def __le__(self, other):
        return self._v <= self._cmp_value(other)

    def __gt__(self, other):
        return self._v > self._cmp_value(other)

    def __ge__(self, other):
        return self._v >= self._cmp_value(other)

    def __hash__(self):
        return hash(self._v)

    # elementary functions --------------------------------------------

    def log(self) -> "ScaledReal":
        if self._v <= 0:
            raise DomainError("log of a nonpositive number")
        return ScaledReal._wrap(mpmath.log(self._v))

    def log10(self) -> "ScaledReal":
        if self._v <= 0:
            raise DomainError("log10 of a nonpositive number")
        return ScaledReal._wrap(mpmath.log10(self._v))

    def sqrt(self) -> "ScaledReal":
        if self._v < 0:
            raise DomainError("sqrt of a negative number")
        return ScaledReal._wrap(mpmath.sqrt(self._v))

    def root(self, k: int) -> "ScaledReal":
        if self._v < 0:
            raise DomainError("root of a negative number")
        return ScaledReal._wrap(mpmath.root(self._v, k))

    @staticmethod
    def exp(x) -> "ScaledReal":
        return ScaledReal._wrap(mpmath.exp(_to_mpf(x)))

    # serialization ----------------------------------------------------

    def to_decimal(self, bits: int | None = None) -> str:
        """Decimal string ``±d.ddd…e±EEE`` faithful at ``bits`` of precision."""
        return format_decimal(self._v, bits)

    @classmethod
    def from_decimal(cls, text: str, bits: int | None = None) -> "ScaledReal":
        with precision(bits or mp.prec):
            return cls._wrap(mpf(text))

    def log10_abs(self) -> float | None:
        """log10 |x| as a float (None for zero)."""
        if self._v == 0:
            return None
        return float(mpmath.log10(abs(self._v)))

    def __repr__(self):
        return f"ScaledReal({format_decimal(self._v, 64)})"

    def __str__(self):
        return format_decimal(self._v)


def format_decimal(v: mpf, bits: int | None = None) -> str:
    bits = bits or mp.prec
    if v == 0:
        return "+0.0e+0"
    digits = decimal_digits(bits)
    sign = "-" if v < 0 else "+"
    text = libmp.to_str(abs(v)._mpf_, digits, strip_zeros=False, min_fixed=1, max_fixed=0,
                        show_zero_exponent=True)
    mant, _, exp = text.partition("e")
    if "." not in mant:
        mant += ".0"
    e = int(exp) if exp else 0
    return f"{sign}{mant}e{'+' if e >= 0 else '-'}{abs(e)}"


class ScaledComplex:
    """Immutable extended-range complex number with ScaledReal parts."""

    __slots__ = ("_v",)

    def __init__(self, re=0, im=0):
        if isinstance(re, ScaledComplex):
            v = re._v
        elif isinstance(re, mpc):
            v = re
        elif isinstance(re, complex):
            v = mpc(re)
        else:
            v = mpc(_to_mpf(re), _to_mpf(im))
        object.__setattr__(self, "_v", v)

    def __setattr__(self, name, value):
        raise AttributeError("ScaledComplex is immutable")

    @classmethod
    def _wrap(cls, v) -> "ScaledComplex":
        obj = object.__new__(cls)
        object.__setattr__(obj, "_v", mpc(v))
        return obj

    @property
    def mpc(self) -> mpc:
        return self._v

    @property
    def re(self) -> ScaledReal:
        return ScaledReal._wrap(self._v.real)

    @property
    def im(self) -> ScaledReal:
        return ScaledReal._wrap(self._v.imag)

    def modulus(self) -> ScaledReal:
        return ScaledReal._wrap(abs(self._v))

    def argument(self) -> ScaledReal:
        if self._v == 0:
            raise DomainError("argument of zero")
        return ScaledReal._wrap(mpmath.arg(self._v))

    def conjugate(self) -> "ScaledComplex":
        return ScaledComplex._wrap(self._v.conjugate())

    def _other(self, other):
        if isinstance(other, ScaledComplex):
            return other._v
        if isinstance(other, ScaledReal):
            return other._v
        return mpmath.mpmathify(other)

    def __add__(self, other):
        return ScaledComplex._wrap(self._v + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScaledComplex._wrap(self._v - self._other(other))

    def __rsub__(self, other):
        return ScaledComplex._wrap(self._other(other) - self._v)

    def __mul__(self, other):
        return ScaledComplex._wrap(self._v * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        d = self._other(other)
        if d == 0:
            raise DomainError("division by zero")
        return ScaledComplex._wrap(self._v / d)

    def __neg__(self):
        return ScaledComplex._wrap(-self._v)

    def __abs__(self):
        return self.modulus()

    def __eq__(self, other):
        try:
            return self._v == self._other(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash(self._v)

    def __repr__(self):
        return f"ScaledComplex({format_decimal(self._v.real, 64)}, {format_decimal(self._v.imag, 64)})"


@dataclass(frozen=True)
class SumAudit:
    result: ScaledComplex
    max_term_magnitude: ScaledReal
    cancellation_loss_bits: int


def factorial_log(k: int) -> ScaledReal:
    """ln(k!) at the working precision."""
    if not isinstance(k, int) or k < 0:
        raise DomainError("factorial_log needs a nonnegative integer")
    if k < 2:
        return ScaledReal._wrap(mpf(0))
    return ScaledReal._wrap(mpmath.loggamma(k + 1))


def loss_bits(total_abs: mpf, max_abs: mpf, bits: int | None = None) -> int:
    """Bits lost to cancellation when terms of size ``max_abs`` sum to ``total_abs``."""
    bits = bits or mp.prec
    if max_abs == 0:
        return 0
    if total_abs == 0:
        return bits
    ratio = max_abs / total_abs
    # aligned sums can come out a hair below the largest term after rounding
    if ratio <= 1 + mpmath.ldexp(1, -(bits // 2)):
        return 0
    return int(math.ceil(float(mpmath.log(ratio, 2))))


def audited_sum_raw(values) -> tuple[mpc, mpf, int]:
    """Left-to-right sum of mpc/mpf values; returns (sum, max |term|, loss bits)."""
    total = mpc(0)
    biggest = mpf(0)
    for v in values:
        total += v
        a = abs(v)
        if a > biggest:
            biggest = a
    return total, biggest, loss_bits(abs(total), biggest)


def sum_audited(terms) -> SumAudit:
    """Deterministic index-order summation with a cancellation audit."""
    raw = []
    for t in terms:
        if isinstance(t, (ScaledComplex, ScaledReal)):
            raw.append(t._v)
        else:
            raw.append(mpmath.mpmathify(t))
    total, biggest, bits = audited_sum_raw(raw)
    return SumAudit(ScaledComplex._wrap(total), ScaledReal._wrap(biggest), bits)


def pow_int(base, e: int) -> ScaledComplex:
    """Integer power of a complex number."""
    if not isinstance(e, int):
        raise DomainError("pow_int needs an integer exponent")
    b = base._v if isinstance(base, (ScaledComplex, ScaledReal)) else mpmath.mpmathify(base)
    if b == 0 and e < 0:
        raise DomainError("zero base with negative exponent")
    return ScaledComplex._wrap(mpc(b) ** e)


def magnitude_record(x, bits: int | None = None) -> dict:
    """JSON-ready record: decimal string plus (log10 |x|, sign)."""
    v = x._v if isinstance(x, ScaledReal) else _to_mpf(x)
    if v == 0:
        return {"decimal": format_decimal(v, bits), "log10": None, "sign": 0}
    lg = mpmath.log10(abs(v))
    try:
        lg_out = round(float(lg), 12)
        if not math.isfinite(lg_out):
            raise OverflowError
    except OverflowError:
        lg_out = mpmath.nstr(lg, 17)
    return {"decimal": format_decimal(v, bits), "log10": lg_out, "sign": 1 if v > 0 else -1}


def log10_of(v) -> float | str | None:
    """log10 |v| as float when representable, else a decimal string."""
    return magnitude_record(v)["log10"]
