"""Iterated function systems with probabilities (IFSp) on the real line.

Four kinds of monotone map are supported:

* :class:`TheoremMap` ``F^-1(u_i(F(x)))`` with the digit map ``u_i(u) = u/n + (i-1)/n``;
  for any continuous law these ``n`` maps with equal weights have that law
  as their unique stationary distribution;
* :class:`AffineMap` ``a*x + b``;
* :class:`TriangularMap`, the closed-form maps for the triangular density on [0, 2];
* :class:`ComposedMap`, ``outer(inner(x))``.

Every map has a scalar ``__call__`` (pure :mod:`math`, used by chain loops)
and a vectorised ``apply_array``. Inputs outside the map's domain are
clamped to it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .distributions import ContinuousDistribution, Triangular, eval_quantile, parse_dist_spec
from .errors import ConstructionError, DomainError, IntegrityError

PROB_SUM_TOL = 1e-12
PREIMAGE_TOL = 1e-12
# Relative slack for the monotonicity check during preimage bisection.
_MONOTONE_SLACK = 1e-12


def digit_map(n: int, i: int, u: float) -> float:
    """``u/n + (i-1)/n``: the i-th branch of the base-n digit system on [0, 1]."""
    if n < 2:
        raise DomainError(f"digit_map: n must be >= 2, got {n}")
    if not 1 <= i <= n:
        raise DomainError(f"digit_map: i={i} outside 1..{n}")
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"digit_map: u={u!r} outside [0, 1]")
    return u / n + (i - 1) / n


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True)
class TheoremMap:
    dist: ContinuousDistribution
    n: int
    i: int

    def __post_init__(self):
        if self.n < 2 or not 1 <= self.i <= self.n:
            raise ConstructionError(f"theorem map needs n >= 2 and 1 <= i <= n, got n={self.n}, i={self.i}")

    @property
    def domain(self) -> tuple[float, float]:
        return self.dist.support_lo, self.dist.support_hi

    def __call__(self, x: float) -> float:
        d, n, i = self.dist, self.n, self.i
        x = _clamp(x, d.support_lo, d.support_hi)
        w = d.cdf(x) / n + (i - 1) / n
        if w <= 0.5:
            return d.support_lo if w <= 0.0 else d.quantile(w)
        # upper half: work with the survival function so tails keep their precision
        s = d.sf(x) / n + (n - i) / n
        return d.support_hi if s <= 0.0 else d.isf(s)

    def apply_array(self, x) -> np.ndarray:
        d, n, i = self.dist, self.n, self.i
        x = np.clip(np.asarray(x, dtype=np.float64), d.support_lo, d.support_hi)
        w = d.cdf_array(x) / n + (i - 1) / n
        low = w <= 0.5
        out = np.empty(x.shape)
        if low.any():
            wl = w[low]
            out[low] = np.where(wl <= 0.0, d.support_lo, d.quantile_array(np.maximum(wl, 0.0)))
        high = ~low
        if high.any():
            s = d.sf_array(x[high]) / n + (n - i) / n
            with np.errstate(divide="ignore"):
                out[high] = np.where(s <= 0.0, d.support_hi, d.isf_array(np.maximum(s, 0.0)))
        return out


@dataclass(frozen=True)
class AffineMap:
    a: float
    b: float
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if self.a == 0 or not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ConstructionError(f"affine map needs finite a != 0 and finite b, got a={self.a!r}, b={self.b!r}")
        if not self.lo < self.hi:
            raise ConstructionError(f"affine map domain [{self.lo!r}, {self.hi!r}] is empty")

    @property
    def domain(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __call__(self, x: float) -> float:
        return self.a * _clamp(x, self.lo, self.hi) + self.b

    def apply_array(self, x) -> np.ndarray:
        return self.a * np.clip(np.asarray(x, dtype=np.float64), self.lo, self.hi) + self.b


@dataclass(frozen=True)
class TriangularMap:
    """Closed-form maps for the triangular density, evaluated exactly as written:

    branch 1: ``x/sqrt(2)`` on [0, 1], ``sqrt(2x - x**2/2 - 1)`` on [1, 2];
    branch 2: ``2 - sqrt(1 - x**2/2)`` on [0, 1], ``2 - sqrt(2 - 2x + x**2/2)`` on [1, 2].
    """

    branch: int

    def __post_init__(self):
        if self.branch not in (1, 2):
            raise ConstructionError(f"triangular branch must be 1 or 2, got {self.branch!r}")

    @property
    def domain(self) -> tuple[float, float]:
        return 0.0, 2.0

    def __call__(self, x: float) -> float:
        x = _clamp(x, 0.0, 2.0)
        if self.branch == 1:
            if x <= 1.0:
                return x / math.sqrt(2.0)
            return math.sqrt(max(2.0 * x - x * x / 2.0 - 1.0, 0.0))
        if x <= 1.0:
            return 2.0 - math.sqrt(max(1.0 - x * x / 2.0, 0.0))
        return 2.0 - math.sqrt(max(2.0 - 2.0 * x + x * x / 2.0, 0.0))

    def apply_array(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 2.0)
        if self.branch == 1:
            return np.where(x <= 1.0, x / np.sqrt(2.0), np.sqrt(np.maximum(2.0 * x - x * x / 2.0 - 1.0, 0.0)))
        return np.where(
            x <= 1.0,
            2.0 - np.sqrt(np.maximum(1.0 - x * x / 2.0, 0.0)),
            2.0 - np.sqrt(np.maximum(2.0 - 2.0 * x + x * x / 2.0, 0.0)),
        )


@dataclass(frozen=True)
class ComposedMap:
    outer: "MonotoneMap"
    inner: "MonotoneMap"

    @property
    def domain(self) -> tuple[float, float]:
        return self.inner.domain

    def __call__(self, x: float) -> float:
        return self.outer(self.inner(x))

    def apply_array(self, x) -> np.ndarray:
        return self.outer.apply_array(self.inner.apply_array(x))


MonotoneMap = Union[TheoremMap, AffineMap, TriangularMap, ComposedMap]


def apply_map(m: MonotoneMap, x: float) -> float:
    """Evaluate one map at a finite point (clamped into the map's domain)."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"apply_map: x must be finite, got {x!r}")
    return m(x)


def identity_map(lo: float = -math.inf, hi: float = math.inf) -> AffineMap:
    return AffineMap(1.0, 0.0, lo, hi)


@dataclass(frozen=True)
class Ifsp:
    maps: tuple
    probs: tuple
    label: str = ""
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        maps, probs = tuple(self.maps), tuple(float(p) for p in self.probs)
        if not maps:
            raise ConstructionError("an IFSp needs at least one map")
        if len(maps) != len(probs):
            raise ConstructionError(f"{len(maps)} maps but {len(probs)} probabilities")
        if any(not (p >= 0.0 and math.isfinite(p)) for p in probs):
            raise ConstructionError(f"probabilities must be finite and nonnegative: {probs}")
        if abs(math.fsum(probs) - 1.0) > PROB_SUM_TOL:
            raise ConstructionError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        domains = {m.domain for m in maps}
        if len(domains) != 1:
            raise ConstructionError(f"maps do not share one domain: {sorted(domains)}")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    @property
    def n(self) -> int:
        return len(self.maps)

    @property
    def support(self) -> tuple[float, float]:
        return self.maps[0].domain

    @property
    def cumulative(self) -> np.ndarray:
        return self._cum

    @property
    def dist(self) -> ContinuousDistribution | None:
        """The target law when every map is a theorem map over one distribution."""
        dists = {m.dist for m in self.maps if isinstance(m, TheoremMap)}
        if len(dists) == 1 and all(isinstance(m, TheoremMap) for m in self.maps):
            return dists.pop()
        return None


def build_theorem_ifsp(dist: ContinuousDistribution, n: int = 2) -> Ifsp:
    """The n maps ``F^-1 o u_i o F`` with probabilities 1/n."""
    if not dist.continuous:
        raise ConstructionError(
            "the construction needs a continuous distribution; laws with atoms "
            "(discrete parts) have no IFSp of this form"
        )
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ConstructionError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    label = f"theorem[{dist.spec or dist.kind}, n={n}]"
    return Ifsp(tuple(TheoremMap(dist, n, i) for i in range(1, n + 1)), (1.0 / n,) * n, label)


def symmetry_affine_ifsp(a: float, b: float) -> Ifsp:
    """Maps ``a*x + b`` and ``a*x + 1 - a - b`` with equal weights on [0, 1].

    Valid for any CDF with ``F(1-x) = 1 - F(x)`` and ``F(x)/2 = F(a*x + b)``.
    """
    if a == 0:
        raise ConstructionError("constraint violated: a != 0")
    if not 0 <= b <= 0.5:
        raise ConstructionError(f"constraint violated: 0 <= b <= 1/2 (b={b!r})")
    if not 0 <= a + b <= 0.5:
        raise ConstructionError(f"constraint violated: 0 <= a + b <= 1/2 (a + b={a + b!r})")
    maps = (AffineMap(a, b, 0.0, 1.0), AffineMap(a, 1.0 - a - b, 0.0, 1.0))
    return Ifsp(maps, (0.5, 0.5), f"symmetric-affine[a={a!r}, b={b!r}]")


def cantor_ifsp() -> Ifsp:
    return symmetry_affine_ifsp(1.0 / 3.0, 0.0)


def triangular_ifsp() -> Ifsp:
    return Ifsp((TriangularMap(1), TriangularMap(2)), (0.5, 0.5), "triangular-closed-form")


def compose_ifsp(outer: Ifsp, inner: Ifsp) -> Ifsp:
    """All maps ``outer_j o inner_i`` with weight ``p_j * q_i``, inner index fastest."""
    if outer.support != inner.support:
        raise ConstructionError(f"support mismatch: outer {outer.support} vs inner {inner.support}")
    maps, probs = [], []
    for om, op in zip(outer.maps, outer.probs):
        for im, ip in zip(inner.maps, inner.probs):
            maps.append(ComposedMap(om, im))
            probs.append(op * ip)
    return Ifsp(tuple(maps), tuple(probs), f"({outer.label}) o ({inner.label})")


@dataclass(frozen=True)
class InvarianceReport:
    grid: tuple
    residuals: tuple
    max_residual: float

    def to_dict(self) -> dict:
        return {"grid": list(self.grid), "residuals": list(self.residuals), "max_residual": self.max_residual}


def preimage_mass(
    m: MonotoneMap, dist: ContinuousDistribution, y: float, method: str = "auto", tol: float = PREIMAGE_TOL
) -> float:
    """``mu{x : m(x) <= y}`` for the law ``dist`` and a nondecreasing map ``m``.

    Theorem maps over ``dist`` itself use the closed form
    ``clamp(n F(y) - (i-1), 0, 1)``. Otherwise the mass is found by bisection
    on ``t -> m(F^-1(t))`` over [0, 1]: by the Galois property the answer is
    ``sup{t : m(F^-1(t)) <= y}``.
    """
    if method not in ("auto", "analytic", "bisection"):
        raise DomainError(f"unknown preimage method {method!r}")
    if method != "bisection" and isinstance(m, TheoremMap) and m.dist == dist:
        return min(max(m.n * dist.cdf(y) - (m.i - 1), 0.0), 1.0)
    if method == "analytic":
        raise DomainError("analytic preimage only exists for theorem maps over the same distribution")

    def g(t: float) -> float:
        return m(eval_quantile(dist, t))

    g_lo, g_hi = g(0.0), g(1.0)
    if g_hi < g_lo:
        raise IntegrityError(f"map is not nondecreasing: m(F^-1(0))={g_lo!r} > m(F^-1(1))={g_hi!r}")
    if g_hi <= y:
        return 1.0
    if g_lo > y:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = lo + (hi - lo) / 2.0
        g_mid = g(mid)
        slack = _MONOTONE_SLACK * (1.0 + abs(g_mid))
        if g_mid < g_lo - slack or g_mid > g_hi + slack:
            raise IntegrityError(f"non-monotone map detected at t={mid!r}: {g_mid!r} outside [{g_lo!r}, {g_hi!r}]")
        if g_mid <= y:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return lo


def invariance_residual(
    ifsp: Ifsp, dist: ContinuousDistribution, grid: Sequence[float], method: str = "auto"
) -> InvarianceReport:
    """Residuals ``|F(y) - sum_i p_i mu(f_i^-1(-inf, y])|`` on a grid of points y."""
    ys = tuple(float(y) for y in grid)
    res = []
    for y in ys:
        pulled = math.fsum(p * preimage_mass(m, dist, y, method) for m, p in zip(ifsp.maps, ifsp.probs))
        res.append(abs(dist.cdf(y) - pulled))
    return InvarianceReport(ys, tuple(res), max(res) if res else 0.0)


# --- JSON serialisation --------------------------------------------------------


def _enc_bound(v: float):
    return None if math.isinf(v) else v


def _dec_bound(v, default: float) -> float:
    return default if v is None else float(v)


def map_to_dict(m: MonotoneMap) -> dict:
    if isinstance(m, TheoremMap):
        if m.dist.spec is None:
            raise ConstructionError(f"distribution {m.dist.kind!r} has no specifier string and cannot be serialised")
        return {"variant": "theorem", "params": {"dist": m.dist.spec, "n": m.n, "i": m.i}}
    if isinstance(m, AffineMap):
        return {
            "variant": "affine",
            "params": {"a": m.a, "b": m.b, "lo": _enc_bound(m.lo), "hi": _enc_bound(m.hi)},
        }
    if isinstance(m, TriangularMap):
        return {"variant": "triangular", "params": {"branch": m.branch}}
    if isinstance(m, ComposedMap):
        return {"variant": "composed", "params": {"outer": map_to_dict(m.outer), "inner": map_to_dict(m.inner)}}
    raise TypeError(f"not a monotone map: {m!r}")


def map_from_dict(d: dict, _cache: dict | None = None) -> MonotoneMap:
    cache = {} if _cache is None else _cache
    try:
        variant, p = d["variant"], d["params"]
        if variant == "theorem":
            spec = p["dist"]
            if spec not in cache:
                cache[spec] = parse_dist_spec(spec)
            return TheoremMap(cache[spec], int(p["n"]), int(p["i"]))
        if variant == "affine":
            return AffineMap(float(p["a"]), float(p["b"]), _dec_bound(p.get("lo"), -math.inf), _dec_bound(p.get("hi"), math.inf))
        if variant == "triangular":
            return TriangularMap(int(p["branch"]))
        if variant == "composed":
            return ComposedMap(map_from_dict(p["outer"], cache), map_from_dict(p["inner"], cache))
    except (KeyError, TypeError) as exc:
        raise ConstructionError(f"malformed map record {d!r}: {exc}") from None
    raise ConstructionError(f"unknown map variant {d.get('variant')!r}")


def ifsp_to_dict(ifsp: Ifsp) -> dict:
    return {
        "label": ifsp.label,
        "n": ifsp.n,
        "probs": list(ifsp.probs),
        "maps": [map_to_dict(m) for m in ifsp.maps],
    }


def ifsp_from_dict(d: dict) -> Ifsp:
    try:
        cache: dict = {}
        maps = tuple(map_from_dict(m, cache) for m in d["maps"])
        probs = tuple(float(p) for p in d["probs"])
        label = str(d.get("label", ""))
    except (KeyError, TypeError) as exc:
        raise ConstructionError(f"malformed IFSp document: {exc}") from None
    if "n" in d and int(d["n"]) != len(maps):
        raise ConstructionError(f"document says n={d['n']} but lists {len(maps)} maps")
    return Ifsp(maps, probs, label)


def dumps_ifsp(ifsp: Ifsp) -> str:
    return json.dumps(ifsp_to_dict(ifsp), indent=2, allow_nan=False) + "\n"


def loads_ifsp(text: str) -> Ifsp:
    try:
        return ifsp_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConstructionError(f"IFSp document is not valid JSON: {exc}") from None


def load_ifsp(path: str | Path) -> Ifsp:
    return loads_ifsp(Path(path).read_text())


def save_ifsp(ifsp: Ifsp, path: str | Path) -> None:
    Path(path).write_text(dumps_ifsp(ifsp))
