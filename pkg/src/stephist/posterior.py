"""Posterior inference for step-function regression with unit noise variance.

Prior: ``P(K = k) ∝ exp(-c_k k log k)`` truncated at ``k_max``; given ``K``, either
the single equivalent-block partition (class ``EB``) or a uniform draw from
the balanced ``K``-partitions (class ``BI``); independent ``N(0, 1)`` heights.

Heights integrate out cell by cell. For a cell with ``m`` responses, sum
``s`` and sum of squares ``q``,

    log ∫ ∏ φ(y_i - β) φ(β) dβ = -(m/2) log 2π - ½ log(1+m) - ½ (q - s²/(1+m)),

so every quantity over partitions is a sum over contiguous segments, which the
dynamic programs below evaluate in log space.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, NoModelError
from .model_core import Dataset, Grid, StepFunction
from .partitions import (
    BI,
    DEFAULT_BALANCE,
    EB,
    BalanceConstraint,
    Partition,
    count_balanced,
    equivalent_blocks,
)

__all__ = [
    "PriorConfig",
    "SufficientStats",
    "PosteriorSummary",
    "Evidence",
    "log_prior_k",
    "log_prior_table",
    "log_cell_marginal",
    "log_marginal_likelihood",
    "evidence_dp",
    "exact_posterior",
    "sample_partition_given_k",
    "sample_heights_given_partition",
    "mcmc_posterior",
    "concentration_mass",
]

LOG_2PI = math.log(2 * math.pi)
BI_DEFAULT_K_LIMIT = 64
MEAN_WEIGHT_FLOOR = 1e-15
MOVE_WEIGHTS = {"birth": 0.35, "death": 0.35, "relocate": 0.30}


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters.

    ``k_max`` of None means ``10 * n`` once a sample size is known (see
    :meth:`resolve`). ``bc`` is ignored for the EB class. ``noise_sd`` rescales
    responses before inference; the height prior is then ``N(0, noise_sd**2)``
    on the original scale.
    """

    c_k: float = 1.0
    k_max: int | None = None
    bc: BalanceConstraint | None = DEFAULT_BALANCE
    partition_class: str = EB
    noise_sd: float = 1.0

    def __post_init__(self):
        if not self.c_k > 0:
            raise InvalidArgumentError(f"c_k must be positive, got {self.c_k}")
        if self.k_max is not None and self.k_max < 1:
            raise InvalidArgumentError(f"k_max must be at least 1, got {self.k_max}")
        if self.partition_class not in (EB, BI):
            raise InvalidArgumentError(f"partition_class must be EB or BI, got {self.partition_class!r}")
        if not self.noise_sd > 0:
            raise InvalidArgumentError(f"noise_sd must be positive, got {self.noise_sd}")

    def resolve(self, n: int) -> PriorConfig:
        return self if self.k_max is not None else replace(self, k_max=10 * n)


@lru_cache(maxsize=64)
def _prior_table(c_k: float, k_max: int) -> tuple[np.ndarray, float]:
    k = np.arange(1, k_max + 2, dtype=float)
    logw = -c_k * k * np.log(k)
    log_z = _lse(logw[:-1])
    table = np.concatenate(([-np.inf], logw[:-1] - log_z))
    table.setflags(write=False)
    tail = float(logw[-1] - log_z)  # log of the first omitted term relative to Z
    return table, tail


def log_prior_table(cfg: PriorConfig) -> np.ndarray:
    """``table[k] = log P(K = k)`` for ``k = 0..k_max`` (entry 0 is -inf)."""
    if cfg.k_max is None:
        raise InvalidArgumentError("k_max is unresolved; call cfg.resolve(n) first")
    return _prior_table(float(cfg.c_k), int(cfg.k_max))[0]


def log_prior_k(k: int, cfg: PriorConfig) -> float:
    table = log_prior_table(cfg)
    if not 1 <= k < len(table):
        raise InvalidArgumentError(f"k={k} outside 1..{len(table) - 1}")
    return float(table[k])


def prior_tail_ratio(cfg: PriorConfig) -> float:
    """Weight of the first term beyond ``k_max`` relative to the normalizer."""
    if cfg.k_max is None:
        raise InvalidArgumentError("k_max is unresolved; call cfg.resolve(n) first")
    return math.exp(_prior_table(float(cfg.c_k), int(cfg.k_max))[1])


def log_cell_marginal(s, q, m):
    """Log marginal density of one cell's responses with its height integrated out.

    Works elementwise on arrays; ``m`` must be at least 1.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 1):
        raise InvalidArgumentError("cell count m must be at least 1")
    s = np.asarray(s, dtype=float)
    q = np.asarray(q, dtype=float)
    out = -0.5 * m_arr * LOG_2PI - 0.5 * np.log1p(m_arr) - 0.5 * (q - s * s / (1.0 + m_arr))
    return float(out) if out.ndim == 0 else out


def _lse(x, axis=None):
    """Log-sum-exp that returns -inf (silently) for all -inf slices."""
    x = np.asarray(x, dtype=float)
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - mx), axis=axis, keepdims=True)) + mx
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class SufficientStats:
    """Prefix sums of ``y`` and ``y**2``; index 0 holds 0."""

    prefix_sums: np.ndarray
    prefix_sq_sums: np.ndarray

    @classmethod
    def from_responses(cls, y: Sequence[float]) -> SufficientStats:
        y = np.asarray(y, dtype=float)
        ps = np.concatenate(([0.0], np.cumsum(y)))
        pq = np.concatenate(([0.0], np.cumsum(y * y)))
        return cls(ps, pq)

    @property
    def n(self) -> int:
        return len(self.prefix_sums) - 1

    def cell(self, start: int, stop: int) -> tuple[float, float, int]:
        """``(s, q, m)`` for the points ``start+1..stop``."""
        return (
            float(self.prefix_sums[stop] - self.prefix_sums[start]),
            float(self.prefix_sq_sums[stop] - self.prefix_sq_sums[start]),
            stop - start,
        )

    def segment(self, start: int, stop: int) -> float:
        s, q, m = self.cell(start, stop)
        return -0.5 * m * LOG_2PI - 0.5 * math.log1p(m) - 0.5 * (q - s * s / (1.0 + m))

    def band(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        """Segment log-marginals for widths ``lo..hi``.

        Returns ``(widths, S)`` with ``S[w, j]`` the value for the segment
        ending at ``j`` of width ``widths[w]`` (-inf when it would start
        before 0).
        """
        widths = np.arange(lo, hi + 1)
        j = np.arange(self.n + 1)
        start = j[None, :] - widths[:, None]
        ok = start >= 0
        st = np.where(ok, start, 0)
        s = self.prefix_sums[j][None, :] - self.prefix_sums[st]
        q = self.prefix_sq_sums[j][None, :] - self.prefix_sq_sums[st]
        m = np.broadcast_to(widths[:, None], s.shape).astype(float)
        vals = -0.5 * m * LOG_2PI - 0.5 * np.log1p(m) - 0.5 * (q - s * s / (1.0 + m))
        return widths, np.where(ok, vals, -np.inf)


def _stats(data: Dataset | SufficientStats) -> SufficientStats:
    if isinstance(data, SufficientStats):
        return data
    return SufficientStats.from_responses(data.responses)


def log_marginal_likelihood(data: Dataset | SufficientStats, p: Partition) -> float:
    """Sum of cell log-marginals over the cells of ``p``."""
    st = _stats(data)
    if p.n != st.n:
        raise InvalidArgumentError(f"partition has n={p.n} but data has n={st.n}")
    return math.fsum(st.segment(a, b) for a, b in p.cells())


def _unit_bounds(n: int, K: int, bc: BalanceConstraint | None) -> tuple[int, int]:
    return (1, n) if bc is None else bc.unit_bounds(n, K)


@dataclass(frozen=True)
class Evidence:
    """Evidence for one ``K`` summed over admissible partitions.

    ``log_sum`` is ``log Σ_p ml(p)``; ``log_mean`` divides by the number of
    admissible partitions, giving the evidence under the uniform partition
    prior. An empty admissible set has ``feasible == False`` and -inf values.
    """

    K: int
    log_sum: float
    count: int
    lo: int = field(repr=False)
    hi: int = field(repr=False)
    forward: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def feasible(self) -> bool:
        return self.count > 0 and math.isfinite(self.log_sum)

    @property
    def log_count(self) -> float:
        return math.log(self.count) if self.count > 0 else -math.inf

    @property
    def log_mean(self) -> float:
        return self.log_sum - self.log_count if self.feasible else -math.inf


def _forward(widths: np.ndarray, S: np.ndarray, n: int, K: int) -> np.ndarray:
    """``F[k, j]``: log-sum over splittings of points ``1..j`` into ``k`` cells."""
    F = np.full((K + 1, n + 1), -np.inf)
    F[0, 0] = 0.0
    src = np.arange(n + 1)[None, :] - widths[:, None]
    ok = src >= 0
    src = np.where(ok, src, 0)
    for k in range(1, K + 1):
        prev = np.where(ok, F[k - 1][src], -np.inf)
        F[k] = _lse(prev + S, axis=0)
    return F


def _backward(widths: np.ndarray, S: np.ndarray, n: int, K: int) -> np.ndarray:
    """``G[r, i]``: log-sum over splittings of points ``i+1..n`` into ``r`` cells."""
    G = np.full((K + 1, n + 1), -np.inf)
    G[0, n] = 0.0
    i = np.arange(n + 1)
    dst = i[None, :] + widths[:, None]
    ok = dst <= n
    dst = np.where(ok, dst, n)
    # segment (i, i+w] read from the end-indexed band
    seg = np.where(ok, S[np.arange(len(widths))[:, None], dst], -np.inf)
    for r in range(1, K + 1):
        nxt = np.where(ok, G[r - 1][dst], -np.inf)
        G[r] = _lse(nxt + seg, axis=0)
    return G


def evidence_dp(
    data: Dataset | SufficientStats, K: int, bc: BalanceConstraint | None = None
) -> Evidence:
    """Sum ``exp(log ml)`` over every ``K``-partition admissible under ``bc``.

    Dynamic program over the position of the last split, restricted to cell
    widths allowed by the balance window; cost ``O(n * window * K)``.
    """
    st = _stats(data)
    n = st.n
    if not 1 <= K <= n:
        raise InvalidArgumentError(f"K must be in 1..{n}, got {K}")
    lo, hi = _unit_bounds(n, K, bc)
    count = count_balanced(n, K, bc)
    if lo > hi or count == 0:
        return Evidence(K, -math.inf, 0, lo, hi, None)
    widths, S = st.band(lo, hi)
    F = _forward(widths, S, n, K)
    return Evidence(K, float(F[K, n]), count, lo, hi, F)


def sample_heights_given_partition(
    data: Dataset | SufficientStats, p: Partition, rng: np.random.Generator
) -> StepFunction:
    """Draw ``β_k ~ N(s_k / (1 + m_k), 1 / (1 + m_k))`` independently per cell."""
    st = _stats(data)
    if p.n != st.n:
        raise InvalidArgumentError(f"partition has n={p.n} but data has n={st.n}")
    e = np.asarray(p.edges)
    s = st.prefix_sums[e[1:]] - st.prefix_sums[e[:-1]]
    prec = 1.0 + np.diff(e)
    beta = s / prec + rng.standard_normal(p.K) / np.sqrt(prec)
    return StepFunction.from_partition(p, beta)


def _backward_sample(
    ev: Evidence, st: SufficientStats, m: int, rng: np.random.Generator
) -> list[Partition]:
    n, K = st.n, ev.K
    if K == 1:
        return [Partition(n, (), BI) for _ in range(m)]
    widths, S = st.band(ev.lo, ev.hi)
    F = ev.forward
    j = np.full(m, n)
    splits = np.empty((m, K - 1), dtype=np.int64)
    for k in range(K, 1, -1):
        start = j[:, None] - widths[None, :]
        ok = start >= 0
        logits = np.where(ok, F[k - 1][np.where(ok, start, 0)] + S[:, j].T, -np.inf)
        logits -= _lse(logits, axis=1)[:, None]
        cdf = np.cumsum(np.exp(logits), axis=1)
        u = rng.random(m) * cdf[:, -1]
        pick = np.minimum((cdf < u[:, None]).sum(axis=1), len(widths) - 1)
        # never land on a zero-probability width through rounding
        bad = ~np.isfinite(logits[np.arange(m), pick])
        if bad.any():
            pick[bad] = np.argmax(logits[bad], axis=1)
        j = j - widths[pick]
        splits[:, k - 2] = j
    return [Partition(n, tuple(row), BI) for row in splits.tolist()]


def sample_partition_given_k(
    data: Dataset | SufficientStats,
    K: int,
    bc: BalanceConstraint | None,
    m: int,
    rng: np.random.Generator,
) -> list[Partition]:
    """``m`` independent exact draws from ``P(partition | K, y)``."""
    st = _stats(data)
    ev = evidence_dp(st, K, bc)
    if not ev.feasible:
        raise NoModelError(f"no admissible {K}-partition of {st.n} points")
    return _backward_sample(ev, st, m, rng)


@dataclass
class PosteriorSummary:
    """Posterior over ``K`` plus draws of the whole step function."""

    log_evidence_per_k: dict[int, float]
    posterior_k: dict[int, float]
    samples: list[StepFunction]
    mean_on_grid: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def k_mode(self) -> int:
        return max(self.posterior_k, key=lambda k: (self.posterior_k[k], -k))

    def sample_matrix(self, grid: Grid | int) -> np.ndarray:
        if not self.samples:
            return np.empty((0, grid if isinstance(grid, int) else grid.n))
        return np.stack([f.on_grid(grid) for f in self.samples])

    def band(self, grid: Grid | int, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise equal-tailed credible band from the draws."""
        mat = self.sample_matrix(grid)
        a = (1 - level) / 2
        return np.quantile(mat, a, axis=0), np.quantile(mat, 1 - a, axis=0)

    def to_json(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else None

        return {
            "log_evidence_per_k": {str(k): num(v) for k, v in self.log_evidence_per_k.items()},
            "posterior_k": {str(k): v for k, v in self.posterior_k.items()},
            "k_mode": self.k_mode,
            "mean_on_grid": [float(v) for v in self.mean_on_grid],
            "samples": [f.to_json() for f in self.samples],
            "diagnostics": self.diagnostics,
        }


def _scaled(data: Dataset, cfg: PriorConfig) -> tuple[SufficientStats, float]:
    sd = float(cfg.noise_sd)
    return SufficientStats.from_responses(np.asarray(data.responses) / sd), sd


def _rescale(f: StepFunction, sd: float) -> StepFunction:
    if sd == 1.0:
        return f
    return StepFunction(f.breakpoints, tuple(h * sd for h in f.heights))


def _cell_means(st: SufficientStats, p: Partition) -> np.ndarray:
    e = np.asarray(p.edges)
    s = st.prefix_sums[e[1:]] - st.prefix_sums[e[:-1]]
    return np.repeat(s / (1.0 + np.diff(e)), np.diff(e))


def _bi_posterior_mean(st: SufficientStats, ev: Evidence) -> np.ndarray:
    """Exact ``E[f(x_t) | K, y]`` by summing segment marginal probabilities."""
    n, K = st.n, ev.K
    widths, S = st.band(ev.lo, ev.hi)
    F = ev.forward
    G = _backward(widths, S, n, K)
    # P(i, j) ∝ sum_k exp(F[k-1, i] + seg(i, j) + G[K-k, j]); the sum over k is a
    # product of two stabilized exponential matrices
    A = F[:K].T  # (n+1, K): A[i, k] = F[k, i]  for k = 0..K-1
    B = G[K - 1 :: -1][:K]  # (K, n+1): B[k, j] = G[K-1-k, j]
    a = np.max(A, axis=1)
    a = np.where(np.isfinite(a), a, 0.0)
    b = np.max(B, axis=0)
    b = np.where(np.isfinite(b), b, 0.0)
    with np.errstate(divide="ignore"):
        L = np.log(np.exp(A - a[:, None]) @ np.exp(B - b[None, :])) + a[:, None] + b[None, :]
    j = np.arange(n + 1)
    start = j[None, :] - widths[:, None]
    ok = start >= 0
    st_idx = np.where(ok, start, 0)
    logp = np.where(ok, L[st_idx, j[None, :]] + S, -np.inf) - F[K, n]
    prob = np.exp(logp)
    s = np.where(ok, st.prefix_sums[j][None, :] - st.prefix_sums[st_idx], 0.0)
    contrib = prob * s / (1.0 + widths[:, None])
    # add contrib to points start+1..j (zero-based start..j-1) via a difference array
    diff = np.zeros(n + 1)
    np.add.at(diff, st_idx[ok], contrib[ok])
    np.add.at(diff, np.broadcast_to(j, ok.shape)[ok], -contrib[ok])
    return np.cumsum(diff)[:n]


def exact_posterior(
    data: Dataset,
    cfg: PriorConfig,
    k_limit: int | None = None,
    n_samples: int = 200,
    seed=0,
) -> PosteriorSummary:
    """Posterior over ``K = 1..k_limit`` by exhaustive summation.

    For EB, ``K`` values that do not divide ``n`` have no partition and are
    skipped (listed under ``diagnostics["skipped_k"]``). ``k_limit`` defaults
    to ``n`` for EB and ``min(n, 64)`` for BI, and is capped at ``k_max``.
    ``n_samples`` joint draws of (K, partition, heights) use ``seed``.
    """
    n = data.n
    cfg = cfg.resolve(n)
    if k_limit is None:
        k_limit = n if cfg.partition_class == EB else min(n, BI_DEFAULT_K_LIMIT)
    if not 1 <= k_limit <= n:
        raise InvalidArgumentError(f"k_limit must be in 1..{n}, got {k_limit}")
    k_limit = min(k_limit, cfg.k_max)
    st, sd = _scaled(data, cfg)
    prior = log_prior_table(cfg)

    log_ev: dict[int, float] = {}
    per_k: dict[int, object] = {}
    skipped = []
    for K in range(1, k_limit + 1):
        if cfg.partition_class == EB:
            if n % K:
                skipped.append(K)
                continue
            p = equivalent_blocks(n, K)
            log_ev[K] = log_marginal_likelihood(st, p)
            per_k[K] = p
        else:
            ev = evidence_dp(st, K, cfg.bc)
            if not ev.feasible:
                skipped.append(K)
                continue
            log_ev[K] = ev.log_mean
            per_k[K] = ev
    if not log_ev:
        raise NoModelError("no admissible partition for any K")

    ks = np.array(sorted(log_ev))
    log_joint = np.array([prior[k] + log_ev[k] for k in ks])
    log_norm = _lse(log_joint)
    post = np.exp(log_joint - log_norm)
    post /= post.sum()
    posterior_k = {int(k): float(p) for k, p in zip(ks, post)}

    # K with negligible weight cannot move the mean; skip them and renormalize
    mean = np.zeros(n)
    used = 0.0
    for k, w in posterior_k.items():
        if w < MEAN_WEIGHT_FLOOR:
            continue
        used += w
        obj = per_k[k]
        if isinstance(obj, Partition):
            mean += w * _cell_means(st, obj)
        elif obj.K == 1:
            mean += w * _cell_means(st, Partition(n, (), BI))
        else:
            mean += w * _bi_posterior_mean(st, obj)
    mean /= used

    samples: list[StepFunction] = []
    if n_samples > 0:
        rng = np.random.default_rng(seed)
        draws = rng.choice(len(ks), size=n_samples, p=post)
        counts = np.bincount(draws, minlength=len(ks))
        for idx in np.flatnonzero(counts):
            k = int(ks[idx])
            obj = per_k[k]
            if isinstance(obj, Partition):
                parts = [obj] * int(counts[idx])
            else:
                parts = _backward_sample(obj, st, int(counts[idx]), rng)
            samples.extend(sample_heights_given_partition(st, p, rng) for p in parts)
        # restore draw order independence from K grouping
        order = rng.permutation(len(samples))
        samples = [_rescale(samples[i], sd) for i in order]

    diagnostics = {
        "engine": "exact",
        "partition_class": cfg.partition_class,
        "c_k": cfg.c_k,
        "k_max": cfg.k_max,
        "k_limit": k_limit,
        "skipped_k": skipped,
        "prior_tail_ratio": prior_tail_ratio(cfg),
        "mass_at_k_limit": posterior_k.get(int(ks[-1]), 0.0),
        "mean_skipped_mass": max(0.0, 1.0 - used),
        "log_marginal": float(log_norm),
    }
    return PosteriorSummary(log_ev, posterior_k, samples, mean * sd, diagnostics)


class _ChainState:
    """Split set with O(K) neighbour lookup and O(1) segment marginals."""

    def __init__(self, st: SufficientStats):
        self.st = st
        self.n = st.n
        self.splits: list[int] = []

    @property
    def K(self) -> int:
        return len(self.splits) + 1

    def neighbours(self, pos: int) -> tuple[int, int]:
        i = bisect.bisect_left(self.splits, pos)
        left = self.splits[i - 1] if i > 0 else 0
        right = self.splits[i] if i < len(self.splits) else self.n
        return left, right

    def nth_free(self, r: int) -> int:
        """The r-th (zero-based) interior index not currently a split."""
        c = r + 1
        for s in self.splits:
            if s <= c:
                c += 1
            else:
                break
        return c

    def widths_ok(self, splits: list[int], lo: int, hi: int) -> bool:
        prev = 0
        for s in (*splits, self.n):
            if not lo <= s - prev <= hi:
                return False
            prev = s
        return True


def _move_probs(K: int, k_top: int) -> dict[str, float]:
    avail = {}
    if K < k_top:
        avail["birth"] = MOVE_WEIGHTS["birth"]
    if K > 1:
        avail["death"] = MOVE_WEIGHTS["death"]
        avail["relocate"] = MOVE_WEIGHTS["relocate"]
    total = sum(avail.values())
    return {k: v / total for k, v in avail.items()}


def mcmc_posterior(
    data: Dataset,
    cfg: PriorConfig,
    iters: int,
    seed,
    burn_in: int | None = None,
    n_samples: int = 200,
) -> PosteriorSummary:
    """Collapsed Metropolis-Hastings over the number and position of splits.

    Heights are integrated out. BI moves: add a split at a uniformly chosen
    free index, remove a uniformly chosen split, or move one split to a free
    index; proposals that break the balance window are rejected. EB moves are
    a random walk over the divisors of ``n``. ``posterior_k`` is the
    post-burn-in visit frequency; ``mean_on_grid`` averages the conditional
    cell means of all post-burn-in states.
    """
    if iters < 1:
        raise InvalidArgumentError(f"iters must be positive, got {iters}")
    n = data.n
    cfg = cfg.resolve(n)
    st, sd = _scaled(data, cfg)
    prior = log_prior_table(cfg)
    rng = np.random.default_rng(seed)
    if burn_in is None:
        burn_in = iters // 10
    kept = iters - burn_in
    if kept < 1:
        raise InvalidArgumentError("burn_in leaves no iterations")
    thin = max(1, kept // max(n_samples, 1))

    if cfg.partition_class == EB:
        trace, retained, stats = _run_eb_chain(st, cfg, prior, iters, rng)
    else:
        trace, retained, stats = _run_bi_chain(st, cfg, prior, iters, rng)

    post_trace = trace[burn_in:]
    ks, counts = np.unique(post_trace, return_counts=True)
    posterior_k = {int(k): float(c) / len(post_trace) for k, c in zip(ks, counts)}

    # Rao-Blackwellized mean: every post-burn-in state weighted by its dwell time
    mean = np.zeros(n)
    for p, held in retained.dwell(burn_in, iters):
        mean += held * _cell_means(st, p)
    mean /= kept
    samples = []
    if n_samples > 0:
        for t in range(burn_in, iters, thin)[:n_samples]:
            samples.append(_rescale(sample_heights_given_partition(st, retained[t], rng), sd))

    diagnostics = {
        "engine": "mcmc",
        "partition_class": cfg.partition_class,
        "c_k": cfg.c_k,
        "k_max": cfg.k_max,
        "iters": iters,
        "burn_in": burn_in,
        "thin": thin,
        "acceptance": stats,
        "ess_k": _ess(post_trace.astype(float)),
    }
    return PosteriorSummary({}, posterior_k, samples, mean * sd, diagnostics)


class _Retained(dict):
    """Partition per iteration, stored only at change points of the chain."""

    def __init__(self):
        super().__init__()
        self._times: list[int] = []

    def record(self, t: int, p: Partition) -> None:
        self._times.append(t)
        self[t] = p

    def __missing__(self, t: int) -> Partition:
        i = bisect.bisect_right(self._times, t) - 1
        return self[self._times[i]]

    def dwell(self, start: int, stop: int):
        """Yield ``(partition, iterations held)`` over the window ``[start, stop)``."""
        i = max(bisect.bisect_right(self._times, start) - 1, 0)
        for j in range(i, len(self._times)):
            a = max(self._times[j], start)
            b = min(self._times[j + 1] if j + 1 < len(self._times) else stop, stop)
            if a >= stop:
                break
            if b > a:
                yield self[self._times[j]], b - a


def _pick_move(probs: dict[str, float], r: float) -> str:
    for name, pr in probs.items():
        if r < pr:
            return name
        r -= pr
    return next(reversed(probs))


def _partition_ml(seg, splits, n) -> float:
    total, prev = 0.0, 0
    for s in (*splits, n):
        total += seg(prev, s)
        prev = s
    return total


def _run_bi_chain(st, cfg, prior, iters, rng):
    n = st.n
    bc = cfg.bc
    k_top = min(n, cfg.k_max)
    log_card: dict[int, float] = {}

    def lcard(K):
        if K not in log_card:
            c = count_balanced(n, K, bc)
            log_card[K] = math.log(c) if c else -math.inf
        return log_card[K]

    state = _ChainState(st)
    seg = st.segment
    # columns: move type, which split / free slot, target slot, accept test
    u = rng.random((iters, 4))
    trace = np.empty(iters, dtype=np.int64)
    retained = _Retained()
    retained.record(0, Partition(n, (), BI))
    proposed = dict.fromkeys(MOVE_WEIGHTS, 0)
    accepted = dict.fromkeys(MOVE_WEIGHTS, 0)

    for t in range(iters):
        K = state.K
        splits = state.splits
        probs = _move_probs(K, k_top)
        move = _pick_move(probs, u[t, 0])
        proposed[move] += 1
        log_acc = -math.inf
        if move == "birth":
            pos = state.nth_free(int(u[t, 1] * (n - K)))
            new = sorted([*splits, pos])
            lo, hi = _unit_bounds(n, K + 1, bc)
            if state.widths_ok(new, lo, hi):
                a, b = state.neighbours(pos)
                d_ml = seg(a, pos) + seg(pos, b) - seg(a, b)
                fwd = probs["birth"] / (n - K)
                rev = _move_probs(K + 1, k_top)["death"] / K
                log_acc = (
                    prior[K + 1] - prior[K] - (lcard(K + 1) - lcard(K)) + d_ml + math.log(rev / fwd)
                )
        elif move == "death":
            idx = int(u[t, 1] * (K - 1))
            pos = splits[idx]
            new = splits[:idx] + splits[idx + 1 :]
            lo, hi = _unit_bounds(n, K - 1, bc)
            if state.widths_ok(new, lo, hi):
                a = splits[idx - 1] if idx > 0 else 0
                b = splits[idx + 1] if idx + 1 < len(splits) else n
                d_ml = seg(a, b) - seg(a, pos) - seg(pos, b)
                fwd = probs["death"] / (K - 1)
                rev = _move_probs(K - 1, k_top)["birth"] / (n - K + 1)
                log_acc = (
                    prior[K - 1] - prior[K] - (lcard(K - 1) - lcard(K)) + d_ml + math.log(rev / fwd)
                )
        else:
            idx = int(u[t, 1] * (K - 1))
            old = splits[idx]
            rest = splits[:idx] + splits[idx + 1 :]
            state.splits = rest
            r = int(u[t, 2] * (n - K))
            pos = state.nth_free(r)
            if pos >= old:  # skip the vacated index
                pos = state.nth_free(r + 1)
            state.splits = splits
            new = sorted([*rest, pos])
            lo, hi = _unit_bounds(n, K, bc)
            if state.widths_ok(new, lo, hi):
                log_acc = _partition_ml(seg, new, n) - _partition_ml(seg, splits, n)
        if log_acc > -math.inf and math.log(u[t, 3]) < log_acc:
            state.splits = new
            accepted[move] += 1
            retained.record(t, Partition(n, tuple(new), BI))
        trace[t] = state.K

    return trace, retained, _acceptance_table(proposed, accepted)


def _run_eb_chain(st, cfg, prior, iters, rng):
    n = st.n
    ks = [k for k in range(1, min(n, cfg.k_max) + 1) if n % k == 0]
    parts = {k: equivalent_blocks(n, k) for k in ks}
    ml = {k: log_marginal_likelihood(st, parts[k]) for k in ks}
    u = rng.random((iters, 2))
    trace = np.empty(iters, dtype=np.int64)
    retained = _Retained()
    i = 0
    retained.record(0, parts[ks[i]])
    proposed = {"up": 0, "down": 0}
    accepted = {"up": 0, "down": 0}

    def q(idx):  # probability of each neighbour proposal from position idx
        return 1.0 if idx in (0, len(ks) - 1) else 0.5

    for t in range(iters):
        if len(ks) > 1:
            if i == 0:
                j = 1
            elif i == len(ks) - 1:
                j = i - 1
            else:
                j = i + 1 if u[t, 0] < 0.5 else i - 1
            move = "up" if j > i else "down"
            proposed[move] += 1
            ka, kb = ks[i], ks[j]
            log_acc = prior[kb] - prior[ka] + ml[kb] - ml[ka] + math.log(q(j) / q(i))
            if math.log(u[t, 1]) < log_acc:
                i = j
                accepted[move] += 1
                retained.record(t, parts[ks[i]])
        trace[t] = ks[i]
    return trace, retained, _acceptance_table(proposed, accepted)


def _acceptance_table(proposed, accepted) -> dict:
    return {
        m: {
            "proposed": proposed[m],
            "accepted": accepted[m],
            "rate": accepted[m] / proposed[m] if proposed[m] else None,
        }
        for m in proposed
    }


def _ess(x: np.ndarray) -> float:
    """Effective sample size from the initial positive autocorrelation sequence."""
    m = len(x)
    if m < 4 or np.var(x) == 0:
        return float(m)
    xc = x - x.mean()
    size = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:m]
    acf /= acf[0]
    tau = 1.0
    for lag in range(1, m - 1, 2):
        pair = acf[lag] + acf[lag + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(m / tau)


def concentration_mass(
    summary: PosteriorSummary, f0: StepFunction, radius: float, grid: Grid
) -> float:
    """Share of posterior draws at empirical distance ``>= radius`` from ``f0``."""
    if not summary.samples:
        raise InvalidArgumentError("posterior summary holds no samples")
    dist = sample_distances(summary, f0, grid)
    return float(np.mean(dist >= radius))


def sample_distances(summary: PosteriorSummary, f0: StepFunction, grid: Grid) -> np.ndarray:
    d = summary.sample_matrix(grid) - f0.on_grid(grid)[None, :]
    return np.sqrt(np.mean(d * d, axis=1))
