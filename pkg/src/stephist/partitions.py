"""Interval partitions of the design grid.

A partition of ``(0, 1]`` into ``K`` cells is stored as ``K - 1`` split indices
``0 < j_1 < ... < j_{K-1} < n``; cell ``k`` is ``(j_{k-1}/n, j_k/n]`` and holds
``j_k - j_{k-1}`` design points. All balance arithmetic is done in integer
grid units, never in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .combinatorics import binom, count_compositions
from .errors import DivisibilityError, InvalidArgumentError, NoBalancedPartitionError
from .model_core import Grid, as_fraction

__all__ = [
    "EB",
    "BI",
    "Partition",
    "BalanceConstraint",
    "DEFAULT_BALANCE",
    "equivalent_blocks",
    "cell_counts",
    "is_balanced",
    "enumerate_partitions",
    "count_balanced",
    "sample_uniform_splits",
    "sample_balanced_partition",
]

EB = "EB"
BI = "BI"
MAX_REJECTION_ATTEMPTS = 10**6


@dataclass(frozen=True)
class BalanceConstraint:
    """Cell proportions must lie in ``[c_min_sq / K, c_max_sq / K]``."""

    c_min_sq: Fraction = Fraction(1, 2)
    c_max_sq: Fraction = Fraction(2)

    def __post_init__(self):
        lo, hi = as_fraction(self.c_min_sq), as_fraction(self.c_max_sq)
        if not (0 < lo <= 1 <= hi):
            raise InvalidArgumentError(
                f"need 0 < c_min_sq <= 1 <= c_max_sq, got {self.c_min_sq}, {self.c_max_sq}"
            )
        object.__setattr__(self, "c_min_sq", lo)
        object.__setattr__(self, "c_max_sq", hi)

    @classmethod
    def min_width_only(cls, C, K: int) -> BalanceConstraint:
        """Constraint equivalent to "every width >= C" for ``K`` cells."""
        return cls(K * as_fraction(C), Fraction(K))

    def unit_bounds(self, n: int, K: int) -> tuple[int, int]:
        """Smallest and largest admissible cell size in grid units."""
        lo = max(1, math.ceil(self.c_min_sq * n / K))
        hi = min(n, math.floor(self.c_max_sq * n / K))
        return lo, hi

    def to_json(self) -> dict:
        return {"c_min_sq": str(self.c_min_sq), "c_max_sq": str(self.c_max_sq)}


DEFAULT_BALANCE = BalanceConstraint()


@dataclass(frozen=True)
class Partition:
    n: int
    splits: tuple[int, ...]
    kind: str = BI

    def __post_init__(self):
        n = int(self.n)
        splits = tuple(int(j) for j in self.splits)
        if n < 1:
            raise InvalidArgumentError(f"n must be positive, got {n}")
        prev = 0
        for j in splits:
            if not prev < j < n:
                raise InvalidArgumentError(
                    f"split indices must be strictly increasing in 1..{n - 1}: {self.splits!r}"
                )
            prev = j
        if self.kind not in (EB, BI):
            raise InvalidArgumentError(f"unknown partition kind {self.kind!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "splits", splits)
        if self.kind == EB:
            w = self.widths_units()
            # exact equal blocks, or the nearly-equal fallback (remainder on the left)
            if max(w) - min(w) > 1 or any(a < b for a, b in zip(w, w[1:])):
                raise InvalidArgumentError(f"not an equivalent-block partition: {splits}")

    @property
    def K(self) -> int:
        return len(self.splits) + 1

    @property
    def split_indices(self) -> tuple[int, ...]:
        return self.splits

    @property
    def edges(self) -> tuple[int, ...]:
        return (0, *self.splits, self.n)

    def widths_units(self) -> list[int]:
        e = self.edges
        return [b - a for a, b in zip(e[:-1], e[1:])]

    def widths(self) -> list[Fraction]:
        return [Fraction(w, self.n) for w in self.widths_units()]

    def cells(self) -> list[tuple[int, int]]:
        """Cells as ``(start, stop)`` index pairs; cell holds points ``start+1..stop``."""
        e = self.edges
        return list(zip(e[:-1], e[1:]))

    def labels(self) -> np.ndarray:
        """Zero-based cell label of every design point."""
        return np.repeat(np.arange(self.K), self.widths_units())

    def to_json(self) -> dict:
        return {"n": self.n, "splits": list(self.splits), "kind": self.kind}

    @classmethod
    def from_json(cls, obj: dict) -> Partition:
        return cls(obj["n"], tuple(obj["splits"]), obj.get("kind", BI))


def _check_nk(n: int, K: int) -> None:
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    if K > n:
        raise InvalidArgumentError(f"K={K} exceeds the number of design points n={n}")


def equivalent_blocks(n: int, K: int, nearly_equal: bool = False) -> Partition:
    """The ``K`` equivalent blocks on ``n`` points.

    Requires ``K | n`` unless ``nearly_equal`` is set, in which case the
    ``n mod K`` leftover points go one each to the leftmost cells.
    """
    _check_nk(n, K)
    c, r = divmod(n, K)
    if r and not nearly_equal:
        raise DivisibilityError(f"K={K} does not divide n={n}")
    splits, j = [], 0
    for k in range(K - 1):
        j += c + (1 if k < r else 0)
        splits.append(j)
    return Partition(n, tuple(splits), EB)


def _check_grid(p: Partition, grid: Grid | None) -> None:
    if grid is not None and grid.n != p.n:
        raise InvalidArgumentError(f"partition has n={p.n} but grid has n={grid.n}")


def cell_counts(p: Partition, grid: Grid | None = None) -> list[Fraction]:
    """Share of design points in each cell; sums to exactly 1."""
    _check_grid(p, grid)
    return p.widths()


def is_balanced(p: Partition, bc: BalanceConstraint, grid: Grid | None = None) -> bool:
    _check_grid(p, grid)
    K, n = p.K, p.n
    # c_min_sq/K <= w/n <= c_max_sq/K  <=>  c_min_sq*n <= K*w <= c_max_sq*n
    lo, hi = bc.c_min_sq * n, bc.c_max_sq * n
    return all(lo <= K * w <= hi for w in p.widths_units())


def _colex(r: int, top: int) -> Iterator[tuple[int, ...]]:
    # r-subsets of {1..top}, ordered by largest element first, then recursively
    if r == 0:
        yield ()
        return
    for last in range(r, top + 1):
        for head in _colex(r - 1, last - 1):
            yield (*head, last)


def enumerate_partitions(
    n: int, K: int, bc: BalanceConstraint | None = None
) -> Iterator[Partition]:
    """Stream every ``K``-cell partition in colex order of the split sets."""
    _check_nk(n, K)
    for splits in _colex(K - 1, n - 1):
        p = Partition(n, splits, BI)
        if bc is None or is_balanced(p, bc):
            yield p


def count_balanced(
    n: int, K: int, bc: BalanceConstraint | None = None, method: str = "formula"
) -> int:
    """Number of ``K``-partitions satisfying ``bc`` (all of them when ``bc`` is None).

    ``method="formula"`` counts compositions of ``n`` into ``K`` parts within
    the balance window; ``method="enumerate"`` walks
    :func:`enumerate_partitions` and is meant as a cross-check.
    """
    _check_nk(n, K)
    if method == "enumerate":
        return sum(1 for _ in enumerate_partitions(n, K, bc))
    if method != "formula":
        raise InvalidArgumentError(f"unknown counting method {method!r}")
    if bc is None:
        return binom(n - 1, K - 1)
    lo, hi = bc.unit_bounds(n, K)
    return count_compositions(n, K, lo, hi)


def sample_uniform_splits(n: int, K: int, rng: np.random.Generator) -> Partition:
    """Uniform ``(K-1)``-subset of ``{1, ..., n-1}``."""
    _check_nk(n, K)
    if K == 1:
        return Partition(n, (), BI)
    picks = rng.choice(n - 1, size=K - 1, replace=False) + 1
    return Partition(n, tuple(sorted(int(j) for j in picks)), BI)


def sample_balanced_partition(
    n: int,
    K: int,
    bc: BalanceConstraint,
    rng: np.random.Generator,
    max_attempts: int = MAX_REJECTION_ATTEMPTS,
) -> tuple[Partition, int]:
    """Uniform draw from the balanced set by rejection; returns ``(partition, attempts)``."""
    _check_nk(n, K)
    if count_balanced(n, K, bc) == 0:
        raise NoBalancedPartitionError(f"no balanced {K}-partition of {n} points")
    for attempt in range(1, max_attempts + 1):
        p = sample_uniform_splits(n, K, rng)
        if is_balanced(p, bc):
            return p, attempt
    raise NoBalancedPartitionError(
        f"no balanced partition found in {max_attempts} attempts (n={n}, K={K})"
    )
