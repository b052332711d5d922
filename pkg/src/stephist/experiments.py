"""Simulation harness for posterior concentration around a true step function.

For every sample size and replicate: simulate data from ``f0``, fit, and
record how far the posterior sits from ``f0`` in the empirical norm. The
reference radius at size ``n`` is ``M_n * eps_n`` with

    eps_n = sqrt(k log(n/k) / n)              (equivalent blocks)
    eps_n = sqrt(k log(n/k)^(2 beta) / n)     (balanced intervals)

where ``k`` is the complexity of ``f0`` for the partition class in use.
Replicate seeds come from ``SeedSequence([seed_base, n, rep])``, so rows do not
depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .complexity import complexity_bi, complexity_eb
from .errors import InvalidArgumentError
from .model_core import StepFunction, simulate, values_norm
from .partitions import BI, DEFAULT_BALANCE, EB
from .posterior import (
    PriorConfig,
    concentration_mass,
    exact_posterior,
    mcmc_posterior,
)

__all__ = [
    "ExperimentConfig",
    "ConcentrationRow",
    "ReplicateResult",
    "loglog_multiplier",
    "epsilon_eb",
    "epsilon_bi",
    "replicate_seeds",
    "run_concentration",
    "rate_slope",
    "ck_sensitivity",
    "rows_to_csv",
]


def loglog_multiplier(n: int) -> float:
    """Default radius multiplier ``max(1, log log n)``."""
    return max(1.0, math.log(math.log(n))) if n > 1 else 1.0


def epsilon_eb(n: int, k: int) -> float:
    return math.sqrt(k * math.log(n / k) / n)


def epsilon_bi(n: int, k: int, beta: float) -> float:
    return math.sqrt(k * math.log(n / k) ** (2 * beta) / n)


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for :func:`run_concentration`.

    ``m_n`` is either a constant or a function of ``n``. ``cap`` bounds the
    complexity search (default ``n``).
    """

    f0: StepFunction
    n_list: tuple[int, ...] = (128, 256, 512, 1024)
    reps: int = 50
    m_n: Callable[[int], float] | float = loglog_multiplier
    rate_exponent_beta: float = 0.75
    prior: PriorConfig = field(default_factory=PriorConfig)
    engine: str = "exact"
    seed_base: int = 0
    n_samples: int = 200
    mcmc_iters: int = 20_000
    noise_sd: float = 1.0
    cap: int | None = None
    workers: int = 1

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise InvalidArgumentError(f"n_list must be strictly increasing, got {self.n_list}")
        if self.reps < 1:
            raise InvalidArgumentError(f"reps must be at least 1, got {self.reps}")
        if self.rate_exponent_beta <= 0.5:
            raise InvalidArgumentError("rate_exponent_beta must exceed 1/2")
        if self.engine not in ("exact", "mcmc"):
            raise InvalidArgumentError(f"engine must be exact or mcmc, got {self.engine!r}")
        object.__setattr__(self, "n_list", n_list)

    def radius_multiplier(self, n: int) -> float:
        return float(self.m_n(n)) if callable(self.m_n) else float(self.m_n)


@dataclass(frozen=True)
class ReplicateResult:
    rep: int
    data_seed: int
    fit_seed: int
    error: float
    mass_outside: float
    k_mode: int


@dataclass(frozen=True)
class ConcentrationRow:
    """Aggregates over replicates at one sample size.

    ``median_error`` is the median over replicates of the posterior-mean
    distance to ``f0``; ``mass_outside`` is the average posterior mass beyond
    ``radius``; ``k_mode_hit_rate`` the share of replicates whose posterior
    mode of ``K`` equals ``k_f0``.
    """

    n: int
    k_f0: int
    epsilon_n: float
    median_error: float
    mass_outside: float
    k_mode_hit_rate: float
    epsilon_n_bi: float = math.nan
    radius: float = math.nan
    replicates: tuple[ReplicateResult, ...] = field(default=(), repr=False)


def replicate_seeds(seed_base: int, n: int, rep: int) -> tuple[int, int]:
    """Data and fit seeds for one replicate."""
    a, b = np.random.SeedSequence([seed_base, n, rep]).generate_state(2)
    return int(a), int(b)


def _complexity(cfg: ExperimentConfig, n: int) -> int:
    cap = cfg.cap if cfg.cap is not None else n
    if cfg.prior.partition_class == EB:
        res = complexity_eb(cfg.f0, n, cap)
    else:
        res = complexity_bi(cfg.f0, n, cfg.prior.bc or DEFAULT_BALANCE, cap)
    if res.exceeds_cap:
        raise InvalidArgumentError(
            f"invalid config: complexity of f0 exceeds cap {cap} at n={n}"
        )
    return res.k


def _fit(cfg: ExperimentConfig, data, fit_seed: int):
    if cfg.engine == "exact":
        return exact_posterior(data, cfg.prior, n_samples=cfg.n_samples, seed=fit_seed)
    return mcmc_posterior(data, cfg.prior, cfg.mcmc_iters, seed=fit_seed, n_samples=cfg.n_samples)


def _replicate(cfg: ExperimentConfig, n: int, rep: int, radius: float) -> ReplicateResult:
    data_seed, fit_seed = replicate_seeds(cfg.seed_base, n, rep)
    data = simulate(cfg.f0, n, cfg.noise_sd, seed=data_seed)
    summary = _fit(cfg, data, fit_seed)
    error = values_norm(summary.mean_on_grid, cfg.f0, data.grid)
    mass = concentration_mass(summary, cfg.f0, radius, data.grid)
    return ReplicateResult(rep, data_seed, fit_seed, error, mass, summary.k_mode)


def _replicate_task(args):
    return _replicate(*args)


def _map(cfg: ExperimentConfig, tasks: list) -> list:
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    return [_replicate_task(t) for t in tasks]


def run_concentration(cfg: ExperimentConfig) -> list[ConcentrationRow]:
    beta = cfg.rate_exponent_beta
    plan = []
    for n in cfg.n_list:
        k = _complexity(cfg, n)
        eps_eb, eps_bi = epsilon_eb(n, k), epsilon_bi(n, k, beta)
        eps = eps_eb if cfg.prior.partition_class == EB else eps_bi
        plan.append((n, k, eps, eps_bi, cfg.radius_multiplier(n) * eps))

    tasks = [(cfg, n, rep, radius) for n, _, _, _, radius in plan for rep in range(cfg.reps)]
    results = _map(cfg, tasks)

    rows = []
    for i, (n, k, eps, eps_bi, radius) in enumerate(plan):
        reps = tuple(results[i * cfg.reps : (i + 1) * cfg.reps])
        rows.append(
            ConcentrationRow(
                n=n,
                k_f0=k,
                epsilon_n=eps,
                median_error=float(np.median([r.error for r in reps])),
                mass_outside=float(np.mean([r.mass_outside for r in reps])),
                k_mode_hit_rate=float(np.mean([r.k_mode == k for r in reps])),
                epsilon_n_bi=eps_bi,
                radius=radius,
                replicates=reps,
            )
        )
    return rows


def rate_slope(rows: Sequence[ConcentrationRow]) -> float:
    """Least-squares slope of log median error against log n."""
    if len(rows) < 3:
        raise InvalidArgumentError(f"need at least 3 rows, got {len(rows)}")
    n = np.array([r.n for r in rows], dtype=float)
    err = np.array([r.median_error for r in rows], dtype=float)
    if np.any(err <= 0):
        raise InvalidArgumentError("median errors must be positive")
    x, y = np.log(n), np.log(err)
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def ck_sensitivity(cfg: ExperimentConfig, ck_list: Iterable[float]) -> list[dict]:
    """Posterior mode of ``K`` and median error at the largest ``n`` for each ``c_k``.

    Replicate data are shared across ``c_k`` values.
    """
    n = cfg.n_list[-1]
    table = []
    for ck in ck_list:
        sub = replace(cfg, n_list=(n,), prior=replace(cfg.prior, c_k=float(ck)))
        row = run_concentration(sub)[0]
        modes = [r.k_mode for r in row.replicates]
        values, counts = np.unique(modes, return_counts=True)
        table.append(
            {
                "c_k": float(ck),
                "n": n,
                "k_f0": row.k_f0,
                "k_mode": int(values[np.argmax(counts)]),
                "median_error": row.median_error,
                "k_mode_hit_rate": row.k_mode_hit_rate,
                "mass_outside": row.mass_outside,
            }
        )
    return table


ROW_COLUMNS = ("n", "k_f0", "epsilon_n", "median_error", "mass_outside", "k_mode_hit_rate", "epsilon_n_bi", "radius")


def rows_to_csv(rows: Sequence[ConcentrationRow], fh: io.TextIOBase | None = None) -> str:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in ROW_COLUMNS])
    return buf.getvalue() if fh is None else ""


def replicates_to_csv(rows: Sequence[ConcentrationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "rep", "data_seed", "fit_seed", "error", "mass_outside", "k_mode"])
    for r in rows:
        for x in r.replicates:
            w.writerow([r.n, x.rep, x.data_seed, x.fit_seed, _fmt(x.error), _fmt(x.mass_outside), x.k_mode])
    return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v
