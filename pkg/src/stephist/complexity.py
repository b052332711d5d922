"""How many cells a partition class needs to represent a step function exactly."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidArgumentError, OffGridError
from .model_core import Grid, StepFunction, as_fraction
from .partitions import BI, BalanceConstraint, Partition, equivalent_blocks

__all__ = [
    "ComplexityResult",
    "restricted_cell_count",
    "complexity_eb",
    "complexity_bi",
    "best_l2_approx",
]


@dataclass(frozen=True)
class ComplexityResult:
    """``k`` is None when no admissible partition exists up to ``cap``."""

    k: int | None
    witness: Partition | StepFunction | None
    cap: int

    @property
    def exceeds_cap(self) -> bool:
        return self.k is None

    def to_json(self) -> dict:
        if self.witness is None:
            witness = None
        elif isinstance(self.witness, Partition):
            witness = self.witness.to_json()
        else:
            witness = {"breakpoints": self.witness.to_json()["breakpoints"]}
        return {
            "k": "exceeds-cap" if self.k is None else self.k,
            "witness": witness,
            "cap": self.cap,
        }


def restricted_cell_count(V: tuple, f0: StepFunction) -> int:
    """Number of cells of ``f0`` that meet the half-open interval ``V = (lo, hi]``."""
    lo, hi = as_fraction(V[0]), as_fraction(V[1])
    if not (0 <= lo < hi <= 1):
        raise InvalidArgumentError(f"V must be a nonempty interval (lo, hi] in (0, 1], got {V!r}")
    return sum(1 for a, b in f0.cells() if a < hi and lo < b)


def _covers_exactly(edges, f0: StepFunction) -> bool:
    return all(restricted_cell_count((a, b), f0) == 1 for a, b in zip(edges[:-1], edges[1:]))


def complexity_eb(f0: StepFunction, n: int | None = None, cap: int | None = None) -> ComplexityResult:
    """Smallest number of equispaced blocks with no cell straddling a jump of ``f0``.

    Block edges are the multiples of ``1/K``, so this is the least common
    multiple of the breakpoint denominators. ``cap`` defaults to ``n``. When
    ``n`` is given the witness is the equivalent-block partition, which
    additionally needs ``K | n``; otherwise the witness holds the block edges
    as a step-function skeleton.
    """
    if cap is None:
        cap = n if n is not None else 10**6
    if cap < 1:
        raise InvalidArgumentError(f"cap must be positive, got {cap}")
    k = 1
    for b in f0.breakpoints:
        k = math.lcm(k, b.denominator)
    if k > cap:
        return ComplexityResult(None, None, cap)
    edges = [Fraction(i, k) for i in range(k + 1)]
    assert _covers_exactly(edges, f0)
    if n is not None and n % k == 0:
        witness = equivalent_blocks(n, k)
    else:
        witness = StepFunction(tuple(edges[1:-1]), (0.0,) * k)
    return ComplexityResult(k, witness, cap)


def _grid_cell_sizes(f0: StepFunction, n: int) -> list[int]:
    sizes = []
    for a, b in f0.cells():
        if (a * n).denominator != 1 or (b * n).denominator != 1:
            raise OffGridError(f"breakpoints of f0 are not all on the 1/{n} grid")
        sizes.append(int((b - a) * n))
    return sizes


def _split_evenly(width: int, parts: int) -> list[int]:
    q, r = divmod(width, parts)
    return [q + 1] * r + [q] * (parts - r)


def complexity_bi(
    f0: StepFunction,
    n: int,
    bc: BalanceConstraint,
    cap: int | None = None,
) -> ComplexityResult:
    """Smallest balanced ``K``-partition whose every cell sits inside one cell of ``f0``.

    Such a partition must split at every jump of ``f0``. A true cell of ``w``
    grid points can be cut into ``m`` pieces of sizes in ``[lo, hi]`` exactly
    when ``m * lo <= w <= m * hi``; ``K`` is feasible when the per-cell ranges
    of ``m`` can be chosen to sum to ``K``.
    """
    if cap is None:
        cap = n
    sizes = _grid_cell_sizes(f0, n)
    for K in range(len(sizes), min(cap, n) + 1):
        lo, hi = bc.unit_bounds(n, K)
        if lo > hi:
            continue
        m_lo = [-(-w // hi) for w in sizes]
        m_hi = [w // lo for w in sizes]
        if any(a > b for a, b in zip(m_lo, m_hi)):
            continue
        if not sum(m_lo) <= K <= sum(m_hi):
            continue
        m = list(m_lo)
        spare = K - sum(m)
        for i in range(len(m)):
            extra = min(spare, m_hi[i] - m[i])
            m[i] += extra
            spare -= extra
        widths = [piece for w, mi in zip(sizes, m) for piece in _split_evenly(w, mi)]
        splits = tuple(np.cumsum(widths[:-1]).tolist())
        return ComplexityResult(K, Partition(n, splits, BI), cap)
    return ComplexityResult(None, None, cap)


def best_l2_approx(f0: StepFunction, p: Partition, grid: Grid) -> StepFunction:
    """Project ``f0`` onto step functions over ``p`` in the empirical norm.

    Each height is the average of ``f0`` over the design points of its cell.
    """
    if p.n != grid.n:
        raise InvalidArgumentError(f"partition has n={p.n} but grid has n={grid.n}")
    values = f0.on_grid(grid)
    starts = np.asarray(p.edges[:-1])
    heights = np.add.reduceat(values, starts) / np.asarray(p.widths_units(), dtype=float)
    lows = np.minimum.reduceat(values, starts)
    flat = lows == np.maximum.reduceat(values, starts)
    heights[flat] = lows[flat]  # keep constant cells exact
    return StepFunction.from_partition(p, heights)
