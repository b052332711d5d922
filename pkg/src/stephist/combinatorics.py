"""Exact spacing probabilities for splits drawn from a grid.

Choose ``K - 1`` distinct split indices uniformly from ``{1, ..., n-1}``. The
``K`` resulting cell widths, in grid units, form a composition of ``n`` into
``K`` positive parts, and every composition is equally likely. Both spacing
probabilities are therefore ratios of composition counts to ``C(n-1, K-1)``:

* all widths ``>= a``: shift each part down by ``a - 1`` and count
  unrestricted compositions, ``C(n - K a + K - 1, K - 1)``;
* all widths ``<= b``: inclusion-exclusion over the set of cells forced to
  exceed ``b``, ``sum_j (-1)^j C(K, j) C(n - j b - 1, K - 1)``.

The weights in the alternating sum are ``C(K, j)``, the number of ways to pick
which ``j`` cells overflow. Weighting by ``C(n-1, j)`` instead does not give a
probability: at ``n=3, K=2, C=2/3`` it evaluates to 3. The enumeration oracle
:func:`brute_force_spacing_probs` is the reference for both formulas.

Everything here is integer or :class:`~fractions.Fraction` arithmetic; floats
appear only in :func:`log_binom` and the Monte Carlo estimator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgumentError, TooLargeError
from .model_core import as_fraction

__all__ = [
    "ExactProbability",
    "binom",
    "count_compositions",
    "prob_min_cell",
    "prob_max_cell",
    "brute_force_spacing_probs",
    "circle_cover_exact",
    "circle_cover_mc",
    "CoverEstimate",
    "log_binom",
]

ENUMERATION_GUARD = 10**7


def binom(a: int, b: int) -> int:
    """``C(a, b)``, zero outside ``0 <= b <= a``."""
    if a < 0 or b < 0 or b > a:
        return 0
    return math.comb(a, b)


def log_binom(a: float, b: float) -> float:
    """Approximate ``log C(a, b)`` via log-gamma, for display at very large ``a``."""
    if b < 0 or b > a:
        return -math.inf
    return float(gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1))


def count_compositions(total: int, parts: int, lo: int = 1, hi: int | None = None) -> int:
    """Ordered ways to write ``total`` as ``parts`` integers each in ``[lo, hi]``."""
    if parts < 0:
        return 0
    if parts == 0:
        return int(total == 0)
    rest = total - parts * lo
    if rest < 0:
        return 0
    if hi is None:
        return binom(rest + parts - 1, parts - 1)
    if hi < lo:
        return 0
    span = hi - lo + 1
    count = 0
    j = 0
    while j <= parts and rest - j * span >= 0:
        term = binom(parts, j) * binom(rest - j * span + parts - 1, parts - 1)
        count += -term if j % 2 else term
        j += 1
    return count


@dataclass(frozen=True)
class ExactProbability:
    """A probability held as a reduced fraction.

    ``snapped`` records that the threshold was moved onto the ``1/n`` grid
    before counting.
    """

    value: Fraction
    snapped: bool = False

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ValueError(f"probability out of range: {self.value}")

    @property
    def numerator(self) -> int:
        return self.value.numerator

    @property
    def denominator(self) -> int:
        return self.value.denominator

    def __float__(self) -> float:
        return float(self.value)

    def __eq__(self, other):
        if isinstance(other, ExactProbability):
            return self.value == other.value
        if isinstance(other, (int, Fraction)):
            return self.value == other
        return NotImplemented

    def __hash__(self):
        return hash(self.value)

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


def _check_nk(n: int, K: int) -> None:
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    if n < K:
        raise InvalidArgumentError(f"need n >= K, got n={n}, K={K}")


def prob_min_cell(n: int, K: int, C) -> ExactProbability:
    """P(every cell width >= C) for uniform grid splits.

    A threshold between grid multiples is raised to the next multiple of
    ``1/n``, since widths only take values ``j/n``.
    """
    _check_nk(n, K)
    c = as_fraction(C)
    scaled = c * n
    a = max(math.ceil(scaled), 1)
    hits = count_compositions(n, K, lo=a)
    return ExactProbability(
        Fraction(hits, binom(n - 1, K - 1)), snapped=scaled.denominator != 1
    )


def prob_max_cell(n: int, K: int, C) -> ExactProbability:
    """P(every cell width <= C) for uniform grid splits.

    The threshold is lowered to the previous multiple of ``1/n``.
    """
    _check_nk(n, K)
    c = as_fraction(C)
    scaled = c * n
    b = math.floor(scaled)
    hits = count_compositions(n, K, lo=1, hi=b)
    return ExactProbability(
        Fraction(hits, binom(n - 1, K - 1)), snapped=scaled.denominator != 1
    )


def brute_force_spacing_probs(n: int, K: int, C) -> tuple[ExactProbability, ExactProbability]:
    """Enumerate every split set; return (P(min width >= C), P(max width <= C))."""
    from .partitions import enumerate_partitions

    _check_nk(n, K)
    total = binom(n - 1, K - 1)
    if total > ENUMERATION_GUARD:
        raise TooLargeError(f"C({n - 1}, {K - 1}) = {total} partitions exceeds the guard")
    threshold = as_fraction(C) * n  # compare widths in grid units
    n_min = n_max = 0
    for p in enumerate_partitions(n, K):
        widths = p.widths_units()
        if min(widths) >= threshold:
            n_min += 1
        if max(widths) <= threshold:
            n_max += 1
    return ExactProbability(Fraction(n_min, total)), ExactProbability(Fraction(n_max, total))


def _covers(points: tuple[int, ...], n: int, reach: int) -> bool:
    # closed arcs [p, p + reach] on Z_n cover iff every cyclic gap <= reach
    gaps = [b - a for a, b in zip(points, points[1:])]
    gaps.append(n - points[-1] + points[0])
    return max(gaps) <= reach


def circle_cover_exact(n: int, K: int, arc_length) -> Fraction:
    """Covering probability by enumerating all ``C(n, K)`` endpoint sets."""
    _check_nk(n, K)
    if binom(n, K) > ENUMERATION_GUARD:
        raise TooLargeError(f"C({n}, {K}) endpoint sets exceeds the guard")
    reach = math.floor(as_fraction(arc_length) * n)
    hits = sum(_covers(pts, n, reach) for pts in itertools.combinations(range(n), K))
    return Fraction(hits, binom(n, K))


class CoverEstimate(NamedTuple):
    estimate: float
    std_error: float
    hits: int
    trials: int


def circle_cover_mc(
    n: int,
    K: int,
    arc_length,
    trials: int,
    seed,
    shard_size: int | None = None,
) -> CoverEstimate:
    """Monte Carlo probability that ``K`` arcs cover a unit circle.

    Arc left endpoints are ``K`` distinct points drawn uniformly from the
    ``n`` equidistant points ``i/n``; each arc has length ``arc_length``.
    Trials are split into shards with independent child streams spawned from
    ``seed``, so the result does not depend on how shards are scheduled.
    """
    _check_nk(n, K)
    if trials < 1:
        raise InvalidArgumentError(f"trials must be positive, got {trials}")
    length = as_fraction(arc_length)
    if length >= 1:
        return CoverEstimate(1.0, 0.0, trials, trials)
    if K * length < 1:
        return CoverEstimate(0.0, 0.0, 0, trials)
    reach = math.floor(length * n)
    if shard_size is None:
        shard_size = max(1, min(1 << 16, (1 << 22) // n))
    n_shards = -(-trials // shard_size)
    children = np.random.SeedSequence(seed).spawn(n_shards)
    hits = 0
    for i, child in enumerate(children):
        m = min(shard_size, trials - i * shard_size)
        hits += _cover_shard(np.random.default_rng(child), n, K, reach, m)
    p = hits / trials
    return CoverEstimate(p, math.sqrt(p * (1 - p) / trials), hits, trials)


def _cover_shard(rng: np.random.Generator, n: int, K: int, reach: int, m: int) -> int:
    keys = rng.random((m, n))
    if K < n:
        pts = np.argpartition(keys, K - 1, axis=1)[:, :K]
    else:
        pts = np.broadcast_to(np.arange(n), (m, n))
    pts = np.sort(pts, axis=1)
    gaps = np.diff(pts, axis=1, append=pts[:, :1] + n)
    return int(np.count_nonzero(gaps.max(axis=1) <= reach))
