"""Devil's staircase: the CDF of the uniform measure on the middle-third Cantor set.

Both directions are computed exactly from the binary representation of the
input double using integer arithmetic. ``cantor_cdf`` rounds its result
toward zero and ``cantor_quantile`` rounds up, so the pair satisfies the
Galois equivalence ``cantor_quantile(u) <= x  <=>  u <= cantor_cdf(x)``
exactly for every pair of doubles.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

# Significant bits of a binary64 mantissa.
_MANT_BITS = 53
# Guard against pathological inputs; subnormals need at most ~680 ternary digits.
_MAX_DIGITS = 1200
# Below this the uint64 fast path would overflow (exponent of x must be >= -9).
_FAST_MIN = 2.0**-10


def _split(x: float) -> tuple[int, int]:
    """Return (num, E) with x == num / 2**E exactly, for 0 < x < 1."""
    m, e = math.frexp(x)
    return int(m * (1 << _MANT_BITS)), _MANT_BITS - e


def cantor_cdf(x: float) -> float:
    """Cantor function value at ``x``, clamped to 0 below 0 and 1 above 1.

    Ternary digits 0/2 contribute binary digits 0/1; the first ternary digit
    equal to 1 contributes a terminal binary 1 and stops the scan. The result
    is the largest double not exceeding the exact value.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("cantor_cdf: x is NaN")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    num, E = _split(x)
    mask = (1 << E) - 1
    bits = 0
    lead = 0
    k = 0
    while k < _MAX_DIGITS:
        k += 1
        t = num * 3
        d = t >> E
        num = t & mask
        bits <<= 1
        if d == 1:
            bits |= 1
            break
        if d == 2:
            bits |= 1
            if not lead:
                lead = k
        if num == 0:
            break
        if lead and k - lead >= _MANT_BITS - 1:
            break
    return math.ldexp(bits, -k)


def cantor_cdf_array(x) -> np.ndarray:
    """Vectorised :func:`cantor_cdf`; bit-identical to the scalar version."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise DomainError("cantor_cdf: x contains NaN")
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0.0) & (x < 1.0)
    fast = inner & (x >= _FAST_MIN)
    slow = inner & ~fast
    if slow.any():
        out[slow] = [cantor_cdf(v) for v in x[slow]]
    if fast.any():
        out[fast] = _cdf_fast(x[fast])
    return out


def _cdf_fast(x: np.ndarray) -> np.ndarray:
    m, e = np.frexp(x)
    num = np.ldexp(m, _MANT_BITS).astype(np.uint64)
    E = (_MANT_BITS - e).astype(np.uint64)
    mask = (np.uint64(1) << E) - np.uint64(1)
    acc = np.zeros(x.shape)
    lead = np.zeros(x.shape, dtype=np.int64)
    done = np.zeros(x.shape, dtype=bool)
    three = np.uint64(3)
    k = 0
    while not done.all():
        k += 1
        t = num * three
        d = t >> E
        num = t & mask
        active = ~done
        hit1 = active & (d == 1)
        hit2 = active & (d == 2)
        acc[hit1 | hit2] += 2.0**-k
        lead[hit2 & (lead == 0)] = k
        done |= hit1 | (active & (num == 0)) | (active & (lead > 0) & (k - lead >= _MANT_BITS - 1))
    return acc


def cantor_quantile(u: float) -> float:
    """Generalised inverse of the Cantor function, ``inf{x : F(x) >= u}``.

    The binary digits of ``u`` become ternary digits ``2b``; the final 1 bit is
    expanded non-terminatingly (``...0111``) so the infimum of the plateau is
    returned. The result is the smallest double not below the exact value.
    """
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"cantor_quantile: u={u!r} outside [0, 1]")
    if u == 0.0 or u == 1.0:
        return u
    num, E = _split(u)
    tz = (num & -num).bit_length() - 1
    num >>= tz
    E -= tz
    # u = num / 2**E with num odd: the last 1 bit sits at position E
    digits = format(num, "b").zfill(E).replace("1", "2")
    top = int(digits[:-1] + "0", 3) + 1
    den = 3**E
    q = top / den
    qn, qd = q.as_integer_ratio()
    if qn * den < top * qd:
        q = math.nextafter(q, math.inf)
    return q


def cantor_quantile_array(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.array([cantor_quantile(v) for v in u.ravel()]).reshape(u.shape)
