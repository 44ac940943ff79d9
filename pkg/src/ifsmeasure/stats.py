"""Empirical CDFs, exact Kolmogorov-Smirnov distances, histograms and the
deterministic one-step stationarity test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import ContinuousDistribution
from .errors import DomainError, IntegrityError
from .ifs import Ifsp

# Asymptotic Kolmogorov critical constants c(alpha) for the rule D > c / sqrt(N).
KS_CONSTANTS = {0.05: 1.358, 0.01: 1.628}


def ks_constant(alpha: float) -> float:
    if alpha in KS_CONSTANTS:
        return KS_CONSTANTS[alpha]
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return math.sqrt(-0.5 * math.log(alpha / 2.0))


def critical_value(alpha: float, n: int) -> float:
    return ks_constant(alpha) / math.sqrt(n)


def two_sample_critical_value(alpha: float, n: int, m: int) -> float:
    return ks_constant(alpha) * math.sqrt((n + m) / (n * m))


@dataclass(frozen=True)
class KsReport:
    statistic: float
    sample_size: int
    alpha: float
    critical_value: float
    passed: bool

    @classmethod
    def build(cls, statistic: float, sample_size: int, alpha: float, critical: float | None = None) -> "KsReport":
        crit = critical_value(alpha, sample_size) if critical is None else critical
        return cls(float(statistic), int(sample_size), float(alpha), float(crit), bool(statistic <= crit))

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "n": self.sample_size,
            "alpha": self.alpha,
            "critical": self.critical_value,
            "pass": self.passed,
        }


def _finite_array(samples, name: str = "samples") -> np.ndarray:
    a = np.asarray(samples, dtype=np.float64).ravel()
    if a.size == 0:
        raise DomainError(f"{name} must be nonempty")
    if not np.isfinite(a).all():
        raise DomainError(f"{name} contain non-finite values")
    return a


def ecdf_eval(samples, x: float) -> float:
    """Fraction of the (sorted) samples that are ``<= x``."""
    s = _finite_array(samples)
    if (np.diff(s) < 0).any():
        raise IntegrityError("ecdf_eval expects samples sorted in nondecreasing order")
    return int(np.searchsorted(s, x, side="right")) / s.size


def ks_distance(samples, dist: ContinuousDistribution) -> float:
    """Exact ``sup_x |F_N(x) - F(x)|`` for a continuous F."""
    s = np.sort(_finite_array(samples))
    n = s.size
    f = dist.cdf_array(s)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_test(samples, dist: ContinuousDistribution, alpha: float = 0.01) -> KsReport:
    s = _finite_array(samples)
    return KsReport.build(ks_distance(s, dist), s.size, alpha)


def two_sample_ks(a, b) -> float:
    """Exact ``sup |F_a - F_b|`` over the pooled sample points."""
    sa = np.sort(_finite_array(a, "a"))
    sb = np.sort(_finite_array(b, "b"))
    pooled = np.concatenate([sa, sb])
    fa = np.searchsorted(sa, pooled, side="right") / sa.size
    fb = np.searchsorted(sb, pooled, side="right") / sb.size
    return float(np.max(np.abs(fa - fb)))


def two_sample_test(a, b, alpha: float = 0.01) -> KsReport:
    na, nb = np.size(a), np.size(b)
    stat = two_sample_ks(a, b)
    return KsReport.build(stat, min(na, nb), alpha, two_sample_critical_value(alpha, na, nb))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    frequencies: np.ndarray

    def rows(self):
        for k in range(len(self.counts)):
            yield float(self.edges[k]), float(self.edges[k + 1]), int(self.counts[k]), float(self.frequencies[k])


def histogram(samples, lo: float, hi: float, bins: int) -> Histogram:
    """Equal-width bins on [lo, hi], left-closed/right-open with the last bin closed.

    Frequencies are counts over the total sample size, so they sum to the
    in-range fraction.
    """
    if not lo < hi:
        raise DomainError(f"histogram needs lo < hi, got [{lo!r}, {hi!r}]")
    if bins < 1:
        raise DomainError(f"bins must be >= 1, got {bins}")
    s = np.asarray(samples, dtype=np.float64).ravel()
    counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
    freq = counts / s.size if s.size else np.zeros(bins)
    return Histogram(edges, counts, freq)


def weighted_ks_distance(values, weights, dist: ContinuousDistribution) -> float:
    """Sup-distance between the weighted empirical CDF of ``values`` and F."""
    v = _finite_array(values, "values")
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != v.shape or (w < 0).any():
        raise DomainError("weights must be nonnegative and match values")
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cw = np.cumsum(w)
    total = cw[-1]
    last = np.append(np.flatnonzero(v[1:] != v[:-1]), v.size - 1)
    after = cw[last] / total
    before = np.concatenate([[0.0], after[:-1]])
    f = dist.cdf_array(v[last])
    return float(max(np.max(after - f), np.max(f - before)))


def stratified_grid(dist: ContinuousDistribution, grid_size: int) -> np.ndarray:
    """Quantile-stratified points ``F^-1((j - 0.5) / grid_size)``, j = 1..grid_size."""
    if grid_size < 2:
        raise DomainError(f"grid_size must be >= 2, got {grid_size}")
    return dist.quantile_array((np.arange(1, grid_size + 1) - 0.5) / grid_size)


def one_step_stationarity(ifsp: Ifsp, dist: ContinuousDistribution, grid_size: int = 1000, alpha: float = 0.01) -> KsReport:
    """Push a quantile-stratified grid through every map once and compare to F.

    Each image ``f_i(x_j)`` carries weight ``p_i / grid_size``. If ``dist`` is
    stationary the pooled weighted sample is again stratified and the distance
    stays of order ``1 / (n * grid_size)``.
    """
    xs = stratified_grid(dist, grid_size)
    values = np.concatenate([m.apply_array(xs) for m in ifsp.maps])
    weights = np.concatenate([np.full(grid_size, p / grid_size) for p in ifsp.probs])
    stat = weighted_ks_distance(values, weights, dist)
    return KsReport.build(stat, ifsp.n * grid_size, alpha)
