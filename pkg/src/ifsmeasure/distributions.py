"""Continuous distributions on the real line, given by paired CDF / quantile evaluators.

Every distribution exposes scalar evaluators (``cdf``, ``quantile``, ``sf``,
``isf``) built on :mod:`math` for use inside Markov-chain loops, and numpy
counterparts (``cdf_array`` ...) for batch work. The quantile is the
generalised inverse ``inf{x : F(x) >= u}`` with the conventions

* ``quantile(0)`` is the essential support infimum ``sup{x : F(x) = 0}``;
* ``quantile(1)`` is the support supremum, possibly ``+inf``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cantor
from .errors import ConstructionError, DomainError, NumericError

DEFAULT_BISECTION_TOL = 1e-12
DEFAULT_BISECTION_MAX_ITER = 200
# Bracket expansion for unbounded supports: doubling from 1 reaches 2**1023.
_MAX_EXPANSIONS = 1100


class ContinuousDistribution:
    """Base class. Subclasses set ``kind``, ``support_lo``, ``support_hi``."""

    kind: str = "abstract"
    support_lo: float = -math.inf
    support_hi: float = math.inf
    continuous: bool = True

    @property
    def spec(self) -> str | None:
        """CLI specifier string that rebuilds this distribution, if one exists."""
        return None

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def quantile(self, u: float) -> float:
        return quantile_by_bisection(self, u)

    def sf(self, x: float) -> float:
        return 1.0 - self.cdf(x)

    def isf(self, s: float) -> float:
        return self.quantile(1.0 - s)

    def cdf_array(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.array([self.cdf(v) for v in x.ravel()]).reshape(x.shape)

    def quantile_array(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return np.array([self.quantile(v) for v in u.ravel()]).reshape(u.shape)

    def sf_array(self, x) -> np.ndarray:
        return 1.0 - self.cdf_array(x)

    def isf_array(self, s) -> np.ndarray:
        return self.quantile_array(1.0 - np.asarray(s, dtype=np.float64))


# --- exact generalised inverse on doubles -----------------------------------------
# Closed-form and interpolated quantiles can land an ulp or two away from
# inf{x : F(x) >= u} as computed in floating point. The helpers below move an
# estimate to that exact infimum by galloping and then bisecting over the
# doubles, ordered through an integer key. Deep in a tail F can be flat over
# very many doubles, hence the galloping.

_SIGN_BIT = 1 << 63
_MAGNITUDE_MASK = _SIGN_BIT - 1


def _key(x: float) -> int:
    b = struct.unpack("<q", struct.pack("<d", x))[0]
    return b if b >= 0 else -(b & _MAGNITUDE_MASK)


def _unkey(k: int) -> float:
    b = k if k >= 0 else (-k) | _SIGN_BIT
    return struct.unpack("<d", struct.pack("<Q", b))[0]


def snap_to_infimum(cdf, q: float, u: float, lo: float, hi: float) -> float:
    """The least double x in [lo, hi] with ``cdf(x) >= u``, searched from the estimate ``q``.

    Requires ``cdf`` nondecreasing, ``cdf(lo) < u <= cdf(hi)``.
    """
    k_min, k_max = _key(lo), _key(hi)
    k = min(max(_key(q), k_min), k_max)
    step = 1
    if cdf(_unkey(k)) >= u:
        k_hi = k
        while True:
            k_lo = max(k_hi - step, k_min)
            if k_lo == k_min or cdf(_unkey(k_lo)) < u:
                break
            k_hi, step = k_lo, 2 * step
    else:
        k_lo = k
        while True:
            k_hi = min(k_lo + step, k_max)
            if k_hi == k_max or cdf(_unkey(k_hi)) >= u:
                break
            k_lo, step = k_hi, 2 * step
    while k_hi - k_lo > 1:
        mid = (k_lo + k_hi) // 2
        if cdf(_unkey(mid)) >= u:
            k_hi = mid
        else:
            k_lo = mid
    return _unkey(k_hi)


_SIGN = np.int64(-(2**63))
_MAGNITUDE = np.int64(2**63 - 1)


def _key_array(x: np.ndarray) -> np.ndarray:
    b = np.ascontiguousarray(x, dtype=np.float64).view(np.int64)
    return np.where(b < 0, -(b & _MAGNITUDE), b)


def _unkey_array(k: np.ndarray) -> np.ndarray:
    return np.where(k < 0, (-k) | _SIGN, k).view(np.float64)


def snap_to_infimum_array(cdf_array, q: np.ndarray, u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Vectorised :func:`snap_to_infimum`; elements are handled independently."""
    k_min, k_max = np.int64(_key(lo)), np.int64(_key(hi))
    k = np.clip(_key_array(q), k_min, k_max)
    above = cdf_array(_unkey_array(k)) >= u
    k_lo, k_hi = k.copy(), k.copy()
    step = np.ones_like(k)
    down, up = above.copy(), ~above
    while down.any() or up.any():
        cand = np.where(down, np.maximum(k_hi - step, k_min), np.minimum(k_lo + step, k_max))
        f = cdf_array(_unkey_array(cand))
        d_stop = down & ((cand == k_min) | (f < u))
        u_stop = up & ((cand == k_max) | (f >= u))
        k_lo = np.where(down, cand, k_lo)
        k_hi = np.where(down & ~d_stop, cand, k_hi)
        k_hi = np.where(up, cand, k_hi)
        k_lo = np.where(up & ~u_stop, cand, k_lo)
        down &= ~d_stop
        up &= ~u_stop
        step = step * 2
    while True:
        gap = k_hi - k_lo
        active = gap > 1
        if not active.any():
            break
        mid = k_lo + gap // 2
        f = cdf_array(_unkey_array(mid)) >= u
        k_hi = np.where(active & f, mid, k_hi)
        k_lo = np.where(active & ~f, mid, k_lo)
    return _unkey_array(k_hi)


@dataclass(frozen=True)
class Uniform01(ContinuousDistribution):
    kind = "uniform"
    support_lo = 0.0
    support_hi = 1.0

    @property
    def spec(self) -> str:
        return "uniform"

    def cdf(self, x):
        return min(max(x, 0.0), 1.0)

    def quantile(self, u):
        return u

    def sf(self, x):
        return 1.0 - min(max(x, 0.0), 1.0)

    def isf(self, s):
        return 1.0 - s

    def cdf_array(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)

    def quantile_array(self, u):
        return np.array(u, dtype=np.float64)

    def sf_array(self, x):
        return 1.0 - self.cdf_array(x)

    def isf_array(self, s):
        return 1.0 - np.asarray(s, dtype=np.float64)


@dataclass(frozen=True)
class Exponential(ContinuousDistribution):
    """Exponential law with ``F(x) = 1 - exp(-rate * x)`` on ``[0, inf)``."""

    rate: float = 1.0
    kind = "exp"
    support_lo = 0.0
    support_hi = math.inf

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ConstructionError(f"exponential rate must be finite and > 0, got {self.rate!r}")

    @property
    def spec(self) -> str:
        return f"exp:{self.rate!r}"

    def cdf(self, x):
        return 0.0 if x <= 0.0 else -math.expm1(-self.rate * x)

    def sf(self, x):
        return 1.0 if x <= 0.0 else math.exp(-self.rate * x)

    def quantile(self, u):
        if u >= 1.0:
            return math.inf
        if u <= 0.0:
            return 0.0
        return snap_to_infimum(self.cdf, -math.log1p(-u) / self.rate, u, 0.0, math.inf)

    def isf(self, s):
        if s <= 0.0:
            return math.inf
        if s >= 1.0:
            return 0.0
        return -math.log(s) / self.rate

    def cdf_array(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x <= 0.0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))

    def sf_array(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x <= 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def quantile_array(self, u):
        u = np.asarray(u, dtype=np.float64)
        inner = (u > 0.0) & (u < 1.0)
        uc = np.where(inner, u, 0.5)
        q = snap_to_infimum_array(self.cdf_array, -np.log1p(-uc) / self.rate, uc, 0.0, math.inf)
        return np.where(inner, q, np.where(u >= 1.0, math.inf, 0.0))

    def isf_array(self, s):
        s = np.asarray(s, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = -np.log(np.clip(s, 0.0, 1.0)) / self.rate
        return np.where(s >= 1.0, 0.0, out)


@dataclass(frozen=True)
class Triangular(ContinuousDistribution):
    """Triangular density ``x`` on [0, 1] and ``2 - x`` on [1, 2]."""

    kind = "triangular"
    support_lo = 0.0
    support_hi = 2.0

    @property
    def spec(self) -> str:
        return "triangular"

    def cdf(self, x):
        if x <= 0.0:
            return 0.0
        if x <= 1.0:
            return x * x / 2.0
        if x < 2.0:
            return 1.0 - (2.0 - x) ** 2 / 2.0
        return 1.0

    def sf(self, x):
        if x <= 0.0:
            return 1.0
        if x <= 1.0:
            return 1.0 - x * x / 2.0
        if x < 2.0:
            return (2.0 - x) ** 2 / 2.0
        return 0.0

    def quantile(self, u):
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return 2.0
        q = math.sqrt(2.0 * u) if u <= 0.5 else 2.0 - math.sqrt(2.0 * (1.0 - u))
        return snap_to_infimum(self.cdf, q, u, 0.0, 2.0)

    def isf(self, s):
        if s <= 0.5:
            return 2.0 - math.sqrt(2.0 * s)
        return math.sqrt(2.0 * (1.0 - s))

    def cdf_array(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 2.0)
        return np.where(x <= 1.0, x * x / 2.0, 1.0 - (2.0 - x) ** 2 / 2.0)

    def sf_array(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 2.0)
        return np.where(x <= 1.0, 1.0 - x * x / 2.0, (2.0 - x) ** 2 / 2.0)

    def quantile_array(self, u):
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
        inner = (u > 0.0) & (u < 1.0)
        uc = np.where(inner, u, 0.5)
        q = np.where(uc <= 0.5, np.sqrt(2.0 * uc), 2.0 - np.sqrt(2.0 * (1.0 - uc)))
        q = snap_to_infimum_array(self.cdf_array, q, uc, 0.0, 2.0)
        return np.where(inner, q, np.where(u >= 1.0, 2.0, 0.0))

    def isf_array(self, s):
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
        return np.where(s <= 0.5, 2.0 - np.sqrt(2.0 * s), np.sqrt(2.0 * (1.0 - s)))


@dataclass(frozen=True)
class CantorUniform(ContinuousDistribution):
    """Uniform measure on the middle-third Cantor set; the CDF is the Devil's staircase."""

    kind = "cantor"
    support_lo = 0.0
    support_hi = 1.0

    @property
    def spec(self) -> str:
        return "cantor"

    def cdf(self, x):
        return cantor.cantor_cdf(x)

    def quantile(self, u):
        return cantor.cantor_quantile(u)

    def cdf_array(self, x):
        return cantor.cantor_cdf_array(x)

    def quantile_array(self, u):
        return cantor.cantor_quantile_array(u)


@dataclass(frozen=True)
class TabulatedCdf(ContinuousDistribution):
    """Piecewise-linear CDF through the knots ``(xs[k], fs[k])``.

    ``xs`` must be strictly increasing, ``fs`` nondecreasing from exactly 0
    to exactly 1; anything else would put an atom at an end of the support.
    The quantile inverts the linear piece holding ``u`` and is then snapped
    to the smallest double with ``F(x) >= u``, so the Galois equivalence
    holds exactly against the floating-point CDF.
    """

    xs: tuple[float, ...] = ()
    fs: tuple[float, ...] = ()
    source: str | None = None
    kind = "tabulated"
    _x: np.ndarray = field(init=False, repr=False, compare=False)
    _f: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.xs, dtype=np.float64)
        f = np.asarray(self.fs, dtype=np.float64)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise ConstructionError("tabulated CDF needs at least two (x, F) knots")
        if not (np.isfinite(x).all() and np.isfinite(f).all()):
            raise ConstructionError("tabulated CDF knots must be finite")
        if (np.diff(x) <= 0).any():
            raise ConstructionError("tabulated x grid must be strictly increasing")
        if (np.diff(f) < 0).any():
            raise ConstructionError("tabulated F values must be nondecreasing")
        if f[0] != 0.0 or f[-1] != 1.0:
            raise ConstructionError(
                "tabulated F must start at 0 and end at 1; otherwise the law has an atom "
                "at a support endpoint and is not continuous"
            )
        object.__setattr__(self, "xs", tuple(x.tolist()))
        object.__setattr__(self, "fs", tuple(f.tolist()))
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_f", f)

    @property
    def support_lo(self) -> float:
        return self.xs[int(np.flatnonzero(self._f == 0.0)[-1])]

    @property
    def support_hi(self) -> float:
        return self.xs[int(np.flatnonzero(self._f == 1.0)[0])]

    @property
    def spec(self) -> str | None:
        return f"{self.kind}:{self.source}" if self.source else None

    def cdf(self, x):
        return float(np.interp(x, self._x, self._f))

    def cdf_array(self, x):
        return np.interp(np.asarray(x, dtype=np.float64), self._x, self._f)

    def quantile(self, u):
        if u <= 0.0:
            return self.support_lo
        if u >= 1.0:
            return self.support_hi
        return float(self.quantile_array(np.array([u]))[0])

    def quantile_array(self, u):
        u = np.asarray(u, dtype=np.float64)
        out = _piecewise_linear_quantile(self, u.ravel())
        out[u.ravel() <= 0.0] = self.support_lo
        out[u.ravel() >= 1.0] = self.support_hi
        return out.reshape(u.shape)


@dataclass(frozen=True)
class EmpiricalSmoothed(TabulatedCdf):
    """Linear interpolation of plotting positions ``i / (N + 1)`` between order statistics."""

    kind = "empirical"


DISTRIBUTION_KINDS = ("uniform", "exp", "triangular", "cantor", "tabulated", "empirical")


def eval_cdf(dist: ContinuousDistribution, x: float) -> float:
    """F(x) clamped to [0, 1]."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"eval_cdf: x must be finite, got {x!r}")
    return min(max(dist.cdf(x), 0.0), 1.0)


def eval_quantile(dist: ContinuousDistribution, u: float) -> float:
    """Generalised inverse ``inf{x : F(x) >= u}`` with the endpoint conventions above."""
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"eval_quantile: u={u!r} outside [0, 1]")
    if u == 0.0:
        return dist.support_lo
    if u == 1.0:
        return dist.support_hi
    return dist.quantile(u)


def _bracket(dist: ContinuousDistribution, u: float) -> tuple[float, float]:
    lo, hi = dist.support_lo, dist.support_hi
    if not math.isfinite(lo):
        lo = -1.0
        for _ in range(_MAX_EXPANSIONS):
            if dist.cdf(lo) < u:
                break
            lo *= 2.0
        else:
            raise NumericError(f"could not bracket quantile u={u!r} from below (last lo={lo!r})")
    if not math.isfinite(hi):
        hi = 1.0 if lo < 1.0 else 2.0 * lo
        for _ in range(_MAX_EXPANSIONS):
            if dist.cdf(hi) >= u:
                break
            hi *= 2.0
        else:
            raise NumericError(f"could not bracket quantile u={u!r} from above (last hi={hi!r})")
    if not (dist.cdf(lo) < u <= dist.cdf(hi)):
        raise NumericError(
            f"bracket [{lo!r}, {hi!r}] does not contain quantile u={u!r}: "
            f"F(lo)={dist.cdf(lo)!r}, F(hi)={dist.cdf(hi)!r}"
        )
    return lo, hi


def quantile_by_bisection(
    dist: ContinuousDistribution,
    u: float,
    tol: float = DEFAULT_BISECTION_TOL,
    max_iter: int = DEFAULT_BISECTION_MAX_ITER,
) -> float:
    """Approximate ``inf{x : F(x) >= u}`` by bisection on the CDF.

    Keeps a bracket with ``F(lo) < u <= F(hi)`` and returns ``hi`` once both
    the bracket width and ``F(hi) - F(lo)`` are at most ``tol`` (or the
    bracket cannot shrink further in floating point).
    """
    u = float(u)
    if not 0.0 < u < 1.0:
        raise DomainError(f"quantile_by_bisection: u={u!r} outside (0, 1)")
    if not tol > 0:
        raise DomainError(f"quantile_by_bisection: tol must be > 0, got {tol!r}")
    lo, hi = _bracket(dist, u)
    f_lo, f_hi = dist.cdf(lo), dist.cdf(hi)
    for _ in range(max_iter):
        if hi - lo <= tol and f_hi - f_lo <= tol:
            break
        mid = lo + (hi - lo) / 2.0
        if mid <= lo or mid >= hi:
            break
        f_mid = dist.cdf(mid)
        if f_mid >= u:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return hi


def _piecewise_linear_quantile(dist: TabulatedCdf, u: np.ndarray) -> np.ndarray:
    x, f = dist._x, dist._f
    uc = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    # f[k-1] < u <= f[k]: invert the linear piece, then snap
    k = np.clip(np.searchsorted(f, uc, side="left"), 1, f.size - 1)
    x0, x1, f0, f1 = x[k - 1], x[k], f[k - 1], f[k]
    guess = np.clip(x0 + (uc - f0) * ((x1 - x0) / (f1 - f0)), x0, x1)
    return snap_to_infimum_array(dist.cdf_array, guess, uc, dist.support_lo, dist.support_hi)


def empirical_smoothed_from_samples(samples, min_count: int = 2, source: str | None = None) -> EmpiricalSmoothed:
    """Continuous CDF interpolating the plotting positions of a sample.

    Tied values are merged at their mean plotting position so the result
    stays continuous. The support is extended by one mean spacing on each
    side, where F reaches 0 and 1.
    """
    s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if s.size < max(min_count, 2):
        raise ConstructionError(f"need at least {max(min_count, 2)} samples, got {s.size}")
    if not np.isfinite(s).all():
        raise ConstructionError("samples must be finite")
    values, first, counts = np.unique(s, return_index=True, return_counts=True)
    if values.size < 2:
        raise ConstructionError("all samples identical: smoothed CDF would be a single atom")
    n = s.size
    # mean of ranks first+1 .. first+count
    positions = (first + (counts + 1) / 2.0) / (n + 1)
    spacing = (values[-1] - values[0]) / (values.size - 1)
    xs = np.concatenate([[values[0] - spacing], values, [values[-1] + spacing]])
    fs = np.concatenate([[0.0], positions, [1.0]])
    return EmpiricalSmoothed(xs=tuple(xs.tolist()), fs=tuple(fs.tolist()), source=source)


def _read_numeric_rows(path: Path) -> list[list[float]]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(c) for c in row if c.strip()])
            except ValueError:
                if rows:
                    raise ConstructionError(f"{path}: non-numeric row {row!r}")
                # header line
    return rows


def load_tabulated(path: str | Path) -> TabulatedCdf:
    rows = _read_numeric_rows(Path(path))
    if any(len(r) != 2 for r in rows):
        raise ConstructionError(f"{path}: expected two columns x,F")
    return TabulatedCdf(xs=tuple(r[0] for r in rows), fs=tuple(r[1] for r in rows), source=str(path))


def load_empirical(path: str | Path) -> EmpiricalSmoothed:
    rows = _read_numeric_rows(Path(path))
    if any(len(r) != 1 for r in rows):
        raise ConstructionError(f"{path}: expected one column of samples")
    return empirical_smoothed_from_samples([r[0] for r in rows], source=str(path))


def parse_dist_spec(spec: str) -> ContinuousDistribution:
    """Build a distribution from ``uniform``, ``exp:<rate>``, ``triangular``,
    ``cantor``, ``tabulated:<csv>`` or ``empirical:<csv>``."""
    name, _, arg = spec.strip().partition(":")
    name = name.lower()
    if name == "uniform" and not arg:
        return Uniform01()
    if name == "triangular" and not arg:
        return Triangular()
    if name == "cantor" and not arg:
        return CantorUniform()
    if name == "exp":
        try:
            rate = float(arg)
        except ValueError:
            raise ConstructionError(f"bad exponential rate in {spec!r}") from None
        return Exponential(rate)
    if name == "tabulated" and arg:
        return load_tabulated(arg)
    if name == "empirical" and arg:
        return load_empirical(arg)
    raise ConstructionError(f"unknown distribution specifier {spec!r}")
