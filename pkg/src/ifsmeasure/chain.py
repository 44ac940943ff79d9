"""Forward Markov-chain trajectories and reversed (backward) iterates.

Randomness comes from :class:`RngStream`, a PCG64 bit generator keyed by
``(seed, stream_index)`` through numpy's ``SeedSequence`` (the stream index is
the spawn key). A uniform variate is the top 53 bits of one raw 64-bit
output. Both algorithms are frozen by numpy's stream-compatibility policy, so
recorded seeds replay across versions and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, IntegrityError
from .ifs import Ifsp

U64_MAX = 2**64 - 1
_INV_2_53 = 2.0**-53


def parse_seed(text: str | int) -> int:
    """Seeds are accepted as decimal or ``0x``-prefixed hex unsigned 64-bit integers."""
    if isinstance(text, (int, np.integer)):
        value = int(text)
    else:
        s = text.strip().lower()
        try:
            value = int(s, 16) if s.startswith("0x") else int(s, 10)
        except ValueError:
            raise DomainError(f"seed {text!r} is not a decimal or 0x-hex integer") from None
    if not 0 <= value <= U64_MAX:
        raise DomainError(f"seed {value} outside the unsigned 64-bit range")
    return value


class RngStream:
    """Reproducible uniform stream identified by ``(seed, stream_index)``."""

    def __init__(self, seed: int, stream_index: int = 0):
        self.seed = parse_seed(seed)
        self.stream_index = parse_seed(stream_index)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        self._bits = np.random.PCG64(ss)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_index={self.stream_index})"

    def uniform(self) -> float:
        """One variate in [0, 1) with 53 random bits."""
        return (self._bits.random_raw() >> 11) * _INV_2_53

    def uniforms(self, size: int) -> np.ndarray:
        """``size`` variates; identical to ``size`` successive :meth:`uniform` calls."""
        raw = self._bits.random_raw(size)
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53


def index_from_uniform(u: float, cumulative: Sequence[float]) -> int:
    """Cumulative-sum inversion: the first 1-based i with ``u < cumulative[i-1]``."""
    cum = np.asarray(cumulative)
    i = int(np.searchsorted(cum, u, side="right"))
    return _last_positive(cum) if i >= cum.size else i + 1


def _last_positive(cum: np.ndarray) -> int:
    # guards u beyond a cumulative total that rounded to slightly below 1
    probs = np.diff(cum, prepend=0.0)
    return int(np.flatnonzero(probs > 0)[-1]) + 1


def indices_from_uniforms(u: np.ndarray, cumulative: Sequence[float]) -> np.ndarray:
    cum = np.asarray(cumulative)
    idx = np.searchsorted(cum, u, side="right") + 1
    idx[idx > cum.size] = _last_positive(cum)
    return idx


def draw_index(rng: RngStream, probs: Sequence[float]) -> int:
    """Draw i in 1..n with probability ``probs[i-1]``, consuming one uniform."""
    return index_from_uniform(rng.uniform(), np.cumsum(probs))


def draw_indices(rng: RngStream, probs: Sequence[float], size: int) -> np.ndarray:
    return indices_from_uniforms(rng.uniforms(size), np.cumsum(probs))


def _check_indices(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 and idx.ndim != 2:
        raise DomainError("indices must be a sequence (or matrix) of integers")
    if idx.size and (idx.min() < 1 or idx.max() > n):
        raise DomainError(f"map index outside 1..{n}")
    return idx


@dataclass
class Trajectory:
    """States ``x_0 .. x_k`` and the 1-based map indices ``I_1 .. I_k`` that produced them."""

    states: np.ndarray
    indices: np.ndarray
    seed: int | None = None
    stream_index: int | None = None
    clamped: list = field(default_factory=list)

    @property
    def x0(self) -> float:
        return float(self.states[0])

    @property
    def steps(self) -> int:
        return len(self.indices)


def simulate_forward(
    ifsp: Ifsp,
    x0: float,
    steps: int,
    rng: RngStream | None = None,
    *,
    indices: Sequence[int] | None = None,
) -> Trajectory:
    """Run ``X_{k+1} = f_{I_{k+1}}(X_k)`` for ``steps`` steps.

    Indices come from ``rng`` (one uniform per step) unless ``indices`` forces
    them. ``clamped`` lists the steps whose input state lay outside the maps'
    domain (step 0 refers to ``x0``).
    """
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    x0 = float(x0)
    if not math.isfinite(x0):
        raise DomainError(f"x0 must be finite, got {x0!r}")
    if indices is None:
        if rng is None:
            raise DomainError("simulate_forward needs an RngStream or forced indices")
        idx = draw_indices(rng, ifsp.probs, steps) if steps else np.zeros(0, dtype=np.int64)
    else:
        idx = _check_indices(indices, ifsp.n)
        if idx.ndim != 1 or len(idx) != steps:
            raise DomainError(f"expected {steps} forced indices, got {len(idx)}")
    lo, hi = ifsp.support
    maps = ifsp.maps
    states = np.empty(steps + 1)
    clamped = []
    x = x0
    if not lo <= x <= hi:
        clamped.append(0)
        x = min(max(x, lo), hi)
    states[0] = x
    for t, i in enumerate(idx.tolist()):
        if not lo <= x <= hi:
            clamped.append(t)
        x = maps[i - 1](x)
        if not math.isfinite(x):
            raise IntegrityError(f"non-finite state {x!r} produced at step {t + 1} (map {i})")
        states[t + 1] = x
    return Trajectory(
        states,
        idx,
        seed=None if rng is None else rng.seed,
        stream_index=None if rng is None else rng.stream_index,
        clamped=clamped,
    )


def replay(ifsp: Ifsp, traj: Trajectory) -> Trajectory:
    """Rebuild a trajectory from its first state and recorded indices."""
    return simulate_forward(ifsp, traj.x0, traj.steps, indices=traj.indices)


def backward_values(ifsp: Ifsp, x0, index_matrix) -> np.ndarray:
    """``f_{I_1} o ... o f_{I_d}(x0)`` for each row ``(I_1 .. I_d)`` of ``index_matrix``.

    ``x0`` may be a scalar or one start value per row. The innermost map uses
    the last drawn index, the reverse of forward simulation.
    """
    idx = np.atleast_2d(_check_indices(index_matrix, ifsp.n))
    rows = idx.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (rows,)).copy()
    lo, hi = ifsp.support
    x = np.clip(x, lo, hi)
    for col in range(idx.shape[1] - 1, -1, -1):
        column = idx[:, col]
        for i in np.unique(column).tolist():
            sel = column == i
            x[sel] = ifsp.maps[i - 1].apply_array(x[sel])
    bad = ~np.isfinite(x)
    if bad.any():
        raise IntegrityError(f"non-finite backward iterate in row {int(np.flatnonzero(bad)[0])}")
    return x


def backward_iterate(
    ifsp: Ifsp,
    x0: float,
    depth: int,
    rng: RngStream | None = None,
    *,
    indices: Sequence[int] | None = None,
) -> float:
    """Draw ``I_1 .. I_depth`` and return ``f_{I_1} o ... o f_{I_depth}(x0)``."""
    idx = _depth_indices(ifsp, depth, rng, indices)
    return float(backward_values(ifsp, x0, idx[None, :])[0])


def _depth_indices(ifsp: Ifsp, depth: int, rng, indices) -> np.ndarray:
    if depth < 1:
        raise DomainError(f"depth must be >= 1, got {depth}")
    if indices is not None:
        idx = _check_indices(indices, ifsp.n)
        if idx.ndim != 1 or len(idx) != depth:
            raise DomainError(f"expected {depth} forced indices, got {len(idx)}")
        return idx
    if rng is None:
        raise DomainError("need an RngStream or forced indices")
    return draw_indices(rng, ifsp.probs, depth)


def default_depth(n: int) -> int:
    """64 for n = 2; otherwise the smallest d with ``n**-d <= 2**-53``."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if n == 2:
        return 64
    d = 1
    while n**d < 2**53:
        d += 1
    return d


def backward_index_matrix(ifsp: Ifsp, depth: int, count: int, base_seed: int) -> np.ndarray:
    """Row j holds the ``depth`` indices drawn from ``RngStream(base_seed, j)``."""
    cum = ifsp.cumulative
    out = np.empty((count, depth), dtype=np.int64)
    for j in range(count):
        out[j] = indices_from_uniforms(RngStream(base_seed, j).uniforms(depth), cum)
    return out


def backward_sample_batch(ifsp: Ifsp, x0: float, depth: int, count: int, base_seed: int) -> np.ndarray:
    """``count`` independent approximate draws from the measure-attractor.

    Sample j is :func:`backward_iterate` on stream ``(base_seed, j)``; results
    are ordered by stream index.
    """
    if depth < 1 or count < 1:
        raise DomainError(f"depth and count must be >= 1, got depth={depth}, count={count}")
    return backward_values(ifsp, x0, backward_index_matrix(ifsp, depth, count, base_seed))


def digits_to_uniform(indices: Sequence[int], n: int) -> float:
    """``sum_k (I_k - 1) n**-k``: the base-n number whose k-th digit is ``I_k - 1``."""
    idx = list(indices)
    if not idx:
        raise DomainError("digits_to_uniform needs at least one index")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    v = 0.0
    for i in reversed(idx):
        if not 1 <= i <= n:
            raise DomainError(f"index {i} outside 1..{n}")
        v = (v + (i - 1)) / n
    return v


def backward_pair(
    ifsp: Ifsp, xa: float, xb: float, depth: int, rng: RngStream | None = None, *, indices=None
) -> tuple[float, float]:
    """Backward iterates of two starting points under one shared index draw."""
    idx = _depth_indices(ifsp, depth, rng, indices)
    a, b = backward_values(ifsp, np.array([xa, xb]), np.vstack([idx, idx]))
    return float(a), float(b)


def backward_gap(
    ifsp: Ifsp, xa: float, xb: float, depth: int, rng: RngStream | None = None, *, indices=None
) -> float:
    """Distance between the backward iterates of ``xa`` and ``xb`` at ``depth``."""
    a, b = backward_pair(ifsp, xa, xb, depth, rng, indices=indices)
    return abs(a - b)
