"""Certified numerics for quasianalytic counterexample constructions.

Importing the package raises mpmath's working precision from its 53-bit
default to the configured precision (256 bits unless overridden through
the ``QACERT_PRECISION`` environment variable).  Use
:func:`qacert.xnum.precision` to run a block at another precision.
"""

from mpmath import mp as _mp

from .xnum import default_precision as _default_precision

__version__ = "0.1.0"

if _mp.prec == 53:
    _mp.prec = _default_precision()
