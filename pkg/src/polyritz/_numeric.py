"""Element-type dispatch between float64 arrays and extended-precision arrays.

Extended-precision data lives in numpy object arrays of ``gmpy2.mpfr``.
Arithmetic, slicing and ``dot`` work on those arrays unchanged (and run in C,
roughly an order of magnitude faster than mpmath objects); only
transcendental functions and constants need dispatch, which is what this
module provides.  The working precision is a gmpy2 context, which is
thread-local; mpmath is kept in step for code that needs its special
functions.
"""
import math
from contextlib import ExitStack, nullcontext

import gmpy2
import mpmath
import numpy as np

_mp_cos = np.frompyfunc(gmpy2.cos, 1, 1)
_mp_sin = np.frompyfunc(gmpy2.sin, 1, 1)
_mp_sqrt = np.frompyfunc(gmpy2.sqrt, 1, 1)
_mp_log = np.frompyfunc(gmpy2.log, 1, 1)
_mp_atan2 = np.frompyfunc(gmpy2.atan2, 2, 1)
_mp_mpf = np.frompyfunc(gmpy2.mpfr, 1, 1)


def dps_to_bits(dps):
    return int(math.ceil(dps * math.log2(10))) + 8


def is_mp(a):
    return isinstance(a, np.ndarray) and a.dtype == object


def is_mp_scalar(x):
    return isinstance(x, type(gmpy2.mpfr(0)))


def working_precision(dps):
    """Context manager setting ``dps`` decimal digits; a no-op for float64."""
    if not dps:
        return nullcontext()
    stack = ExitStack()
    stack.enter_context(gmpy2.context(gmpy2.get_context(), precision=dps_to_bits(dps)))
    stack.enter_context(mpmath.workdps(dps))
    return stack


def current_dps():
    return int(gmpy2.get_context().precision / math.log2(10))


def convert(a, dps):
    """Return ``a`` as float64 (``dps`` falsy) or as an mpfr object array."""
    a = np.asarray(a)
    if not dps:
        return np.asarray(a, dtype=float)
    if a.dtype == object:
        return a
    with working_precision(dps):
        out = _mp_mpf(a)
    return np.asarray(out, dtype=object)


def to_float(a):
    return np.asarray(a, dtype=float)


def like(value, ref):
    """Scalar ``value`` in the element type of array ``ref``."""
    return gmpy2.mpfr(value) if is_mp(ref) else float(value)


def mpf(value):
    """mpfr at the current precision; strings are parsed exactly."""
    return gmpy2.mpfr(value)


def zeros(shape, ref):
    if not is_mp(ref):
        return np.zeros(shape)
    out = np.empty(shape, dtype=object)
    out.fill(gmpy2.mpfr(0))
    return out


def eye(n, ref):
    out = zeros((n, n), ref)
    for i in range(n):
        out[i, i] = like(1, ref)
    return out


def pi(ref=None):
    return gmpy2.const_pi() if is_mp(ref) else np.pi


def sqrt_ratio(num, den, ref):
    """``sqrt(num / den)`` for integers, exact to working precision."""
    if is_mp(ref):
        return gmpy2.sqrt(gmpy2.mpfr(num) / den)
    return math.sqrt(num / den)


def cos(a):
    return _mp_cos(a) if is_mp(a) else np.cos(a)


def sin(a):
    return _mp_sin(a) if is_mp(a) else np.sin(a)


def sqrt(a):
    if is_mp(a):
        return _mp_sqrt(a)
    if is_mp_scalar(a):
        return gmpy2.sqrt(a)
    return np.sqrt(a)


def log(a):
    if is_mp(a):
        return _mp_log(a)
    if is_mp_scalar(a):
        return gmpy2.log(a)
    return np.log(a)


def atan2(y, x):
    return _mp_atan2(y, x) if (is_mp(y) or is_mp(x)) else np.arctan2(y, x)


def abs_max(a):
    """Largest absolute entry as a Python float (0 for empty input)."""
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(to_float(a))))


def unit_roundoff(ref):
    """Relative precision of the element type of ``ref``."""
    if is_mp(ref):
        return 2.0 ** (-gmpy2.get_context().precision)
    return float(np.finfo(float).eps)
