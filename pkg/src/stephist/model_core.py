"""Fixed-design regression model with step-function means.

Design points sit on the equispaced grid ``x_i = i/n`` (i = 1..n), responses are
``y_i = f0(x_i) + noise_sd * z_i`` with standard normal ``z_i``. Cells are
left-open, right-closed intervals, so a breakpoint belongs to the cell on its
left.

Breakpoints are kept as exact rationals. Floats are converted through their
shortest decimal ``repr`` (``0.1`` becomes ``1/10``), which keeps comparisons
against grid points ``i/n`` free of rounding surprises.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "Grid",
    "StepFunction",
    "Dataset",
    "as_fraction",
    "make_grid",
    "evaluate",
    "canonicalize",
    "simulate",
    "empirical_norm",
]


def as_fraction(x) -> Fraction:
    """Exact rational for ``x``; floats go through their shortest decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise InvalidArgumentError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    if isinstance(x, np.integer):
        return Fraction(int(x))
    raise InvalidArgumentError(f"cannot interpret {x!r} as a rational number")


def _fraction_to_json(q: Fraction):
    if q.denominator == 1:
        return q.numerator
    as_float = float(q)
    if Fraction(repr(as_float)) == q:
        return as_float
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Grid:
    """The design ``x_i = i/n``; ``points[i] == (i + 1) / n`` for zero-based i."""

    n: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise InvalidArgumentError(f"grid size must be an integer, got {self.n!r}")
        if self.n < 1:
            raise InvalidArgumentError(f"grid size must be positive, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        pts = np.arange(1, self.n + 1, dtype=float) / self.n
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.n


def make_grid(n: int) -> Grid:
    return Grid(n)


@dataclass(frozen=True)
class StepFunction:
    """A step function on (0, 1].

    Parameters
    ----------
    breakpoints
        Strictly increasing interior points ``0 < u_1 < ... < u_{K-1} < 1``.
        Stored as :class:`~fractions.Fraction`.
    heights
        The ``K`` levels, one per cell ``(u_{k-1}, u_k]``.
    """

    breakpoints: tuple[Fraction, ...]
    heights: tuple[float, ...]

    def __post_init__(self):
        bps = tuple(as_fraction(b) for b in self.breakpoints)
        hs = tuple(float(h) for h in self.heights)
        if len(hs) != len(bps) + 1:
            raise InvalidArgumentError(
                f"need len(heights) == len(breakpoints) + 1, got {len(hs)} and {len(bps)}"
            )
        if not all(math.isfinite(h) for h in hs):
            raise InvalidArgumentError("heights must be finite")
        prev = Fraction(0)
        for b in bps:
            if not prev < b < 1:
                raise InvalidArgumentError(
                    f"breakpoints must be strictly increasing inside (0, 1): {self.breakpoints!r}"
                )
            prev = b
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "heights", hs)

    @classmethod
    def constant(cls, height: float) -> StepFunction:
        return cls((), (height,))

    @classmethod
    def from_partition(cls, partition, heights: Sequence[float]) -> StepFunction:
        """Step function with splits at grid points ``j/n`` of ``partition``."""
        n = partition.n
        return cls(tuple(Fraction(j, n) for j in partition.splits), tuple(heights))

    @property
    def K(self) -> int:
        return len(self.heights)

    @property
    def edges(self) -> tuple[Fraction, ...]:
        """Cell boundaries ``(0, u_1, ..., u_{K-1}, 1)``."""
        return (Fraction(0), *self.breakpoints, Fraction(1))

    def cells(self) -> list[tuple[Fraction, Fraction]]:
        e = self.edges
        return list(zip(e[:-1], e[1:]))

    def cell_index(self, x) -> int:
        """Zero-based index of the cell containing ``x``; ``x = 0`` maps to cell 0."""
        q = as_fraction(x)
        if q < 0 or q > 1:
            raise InvalidArgumentError(f"x must lie in [0, 1], got {x!r}")
        # number of breakpoints strictly below x
        lo, hi = 0, len(self.breakpoints)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.breakpoints[mid] < q:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def __call__(self, x) -> float:
        return self.heights[self.cell_index(x)]

    def grid_counts(self, n: int) -> np.ndarray:
        """Number of design points ``i/n`` in each cell."""
        cuts = [0, *(math.floor(b * n) for b in self.breakpoints), n]
        return np.diff(np.asarray(cuts, dtype=np.int64))

    def on_grid(self, grid: Grid | int) -> np.ndarray:
        """Values at every design point, vectorized."""
        n = grid if isinstance(grid, (int, np.integer)) else grid.n
        return np.repeat(np.asarray(self.heights, dtype=float), self.grid_counts(int(n)))

    def to_json(self) -> dict:
        return {
            "breakpoints": [_fraction_to_json(b) for b in self.breakpoints],
            "heights": list(self.heights),
        }

    @classmethod
    def from_json(cls, obj: dict) -> StepFunction:
        return cls(tuple(obj["breakpoints"]), tuple(obj["heights"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> StepFunction:
        return cls.from_json(json.loads(Path(path).read_text()))


def evaluate(f: StepFunction, x) -> float:
    return f(x)


def canonicalize(f: StepFunction) -> StepFunction:
    """Merge neighbouring cells that share a height."""
    bps: list[Fraction] = []
    hs = [f.heights[0]]
    for b, h in zip(f.breakpoints, f.heights[1:]):
        if h == hs[-1]:
            continue
        bps.append(b)
        hs.append(h)
    return StepFunction(tuple(bps), tuple(hs))


@dataclass(frozen=True)
class Dataset:
    """Responses observed on a :class:`Grid`."""

    grid: Grid
    responses: np.ndarray
    seed: int | None = None
    noise_sd: float = 1.0
    f0: StepFunction | None = field(default=None, compare=False)

    def __post_init__(self):
        y = np.array(self.responses, dtype=float)
        if y.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"expected {self.grid.n} responses, got shape {y.shape}"
            )
        y.setflags(write=False)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.grid.n

    def write_csv(self, path) -> None:
        """Write ``x,y`` rows plus a JSON sidecar next to ``path``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for x, y in zip(self.grid.points, self.responses):
                w.writerow([repr(float(x)), repr(float(y))])
        meta = {"n": self.n, "seed": self.seed, "noise_sd": self.noise_sd}
        if self.f0 is not None:
            meta["f0"] = self.f0.to_json()
        sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def read_csv(cls, path) -> Dataset:
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise InvalidArgumentError(f"{path}: no data rows")
        y = [float(r["y"]) for r in rows]
        grid = Grid(len(y))
        xs = np.array([float(r["x"]) for r in rows])
        if not np.allclose(xs, grid.points, rtol=0, atol=1e-9):
            raise InvalidArgumentError(f"{path}: x column is not the grid i/n")
        seed, noise_sd, f0 = None, 1.0, None
        side = sidecar_path(path)
        if side.exists():
            meta = json.loads(side.read_text())
            if meta.get("n", grid.n) != grid.n:
                raise InvalidArgumentError(f"{side}: n disagrees with {path}")
            seed = meta.get("seed")
            noise_sd = float(meta.get("noise_sd", 1.0))
            if meta.get("f0") is not None:
                f0 = StepFunction.from_json(meta["f0"])
        return cls(grid, np.array(y), seed=seed, noise_sd=noise_sd, f0=f0)


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def simulate(
    f0: StepFunction,
    n: int,
    noise_sd: float = 1.0,
    seed: int | np.random.Generator | None = None,
) -> Dataset:
    """Draw ``y_i = f0(i/n) + noise_sd * z_i``.

    ``seed`` may be an int (recorded on the dataset) or a ``numpy`` Generator.
    """
    grid = make_grid(n)
    if noise_sd < 0:
        raise InvalidArgumentError(f"noise_sd must be nonnegative, got {noise_sd}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(grid.n)
    y = f0.on_grid(grid) + noise_sd * z
    recorded = int(seed) if isinstance(seed, (int, np.integer)) else None
    return Dataset(grid, y, seed=recorded, noise_sd=float(noise_sd), f0=f0)


def empirical_norm(f: StepFunction, g: StepFunction, grid: Grid) -> float:
    """Root mean square of ``f - g`` over the design points."""
    d = f.on_grid(grid) - g.on_grid(grid)
    return float(np.sqrt(np.mean(d * d)))


def values_norm(values: Iterable[float], g: StepFunction, grid: Grid) -> float:
    """:func:`empirical_norm` with ``f`` given by its values on the grid."""
    d = np.asarray(values, dtype=float) - g.on_grid(grid)
    return float(np.sqrt(np.mean(d * d)))
