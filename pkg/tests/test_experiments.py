import math
from dataclasses import replace

import numpy as np
import pytest

from stephist.errors import InvalidArgumentError
from stephist.experiments import (
    ConcentrationRow,
    ExperimentConfig,
    ck_sensitivity,
    epsilon_bi,
    epsilon_eb,
    loglog_multiplier,
    rate_slope,
    replicate_seeds,
    replicates_to_csv,
    rows_to_csv,
    run_concentration,
)
from stephist.model_core import StepFunction
from stephist.partitions import BI, EB
from stephist.posterior import PriorConfig

DYADIC = StepFunction((0.125, 0.5, 0.75), (0.0, 3.0, -1.0, 2.0))


def synthetic_rows(errors, ns=(128, 256, 512, 1024)):
    return [ConcentrationRow(n, 1, 0.0, e, 0.0, 1.0) for n, e in zip(ns, errors)]


class TestSchedules:
    def test_multiplier(self):
        assert loglog_multiplier(10) == 1.0
        assert loglog_multiplier(1024) == pytest.approx(math.log(math.log(1024)))

    def test_epsilons(self):
        assert epsilon_eb(128, 8) == pytest.approx(math.sqrt(8 * math.log(16) / 128))
        assert epsilon_bi(128, 8, 0.5) == pytest.approx(epsilon_eb(128, 8))
        assert epsilon_bi(128, 8, 0.75) > epsilon_eb(128, 8)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(n_list=(64, 32)), dict(n_list=()), dict(reps=0), dict(rate_exponent_beta=0.5), dict(engine="gibbs")],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            ExperimentConfig(DYADIC, **kwargs)

    def test_exceeds_cap(self):
        cfg = ExperimentConfig(DYADIC, n_list=(64,), reps=1, cap=4)
        with pytest.raises(InvalidArgumentError, match="invalid config"):
            run_concentration(cfg)


class TestRunConcentration:
    def test_one_row(self):
        rows = run_concentration(ExperimentConfig(DYADIC, n_list=(64,), reps=1))
        assert len(rows) == 1 and len(rows[0].replicates) == 1

    def test_dyadic_complexity(self):
        row = run_concentration(ExperimentConfig(DYADIC, n_list=(64,), reps=2))[0]
        assert row.k_f0 == 8
        bi = run_concentration(ExperimentConfig(DYADIC, n_list=(64,), reps=2, prior=PriorConfig(partition_class=BI)))[0]
        assert bi.k_f0 == 4

    @pytest.mark.parametrize("cls", [EB, BI])
    def test_row_invariants(self, cls):
        cfg = ExperimentConfig(DYADIC, n_list=(32, 64), reps=4, prior=PriorConfig(partition_class=cls), seed_base=3)
        for r in run_concentration(cfg):
            beta = cfg.rate_exponent_beta
            eps = epsilon_eb(r.n, r.k_f0) if cls == EB else epsilon_bi(r.n, r.k_f0, beta)
            assert abs(r.epsilon_n - eps) <= 1e-12
            assert abs(r.epsilon_n_bi - epsilon_bi(r.n, r.k_f0, beta)) <= 1e-12
            assert r.radius == pytest.approx(loglog_multiplier(r.n) * r.epsilon_n)
            assert 0 <= r.mass_outside <= 1 and 0 <= r.k_mode_hit_rate <= 1

    def test_constant_truth_mass_decreases(self):
        cfg = ExperimentConfig(StepFunction.constant(1.0), n_list=(32, 64, 128, 256), reps=50, seed_base=0)
        rows = run_concentration(cfg)
        assert all(r.k_f0 == 1 for r in rows)
        masses = [r.mass_outside for r in rows]
        assert all(a > b for a, b in zip(masses, masses[1:]))

    def test_deterministic_and_order_free(self):
        cfg = ExperimentConfig(DYADIC, n_list=(32, 64), reps=3, seed_base=11)
        a = rows_to_csv(run_concentration(cfg))
        assert a == rows_to_csv(run_concentration(cfg))
        # replicate seeds do not depend on which other sizes run
        single = run_concentration(replace(cfg, n_list=(64,)))[0]
        assert single.replicates == run_concentration(cfg)[1].replicates

    def test_workers_match_serial(self):
        cfg = ExperimentConfig(DYADIC, n_list=(32, 64), reps=4, seed_base=2)
        serial = run_concentration(cfg)
        parallel = run_concentration(replace(cfg, workers=2))
        assert rows_to_csv(serial) == rows_to_csv(parallel)
        assert replicates_to_csv(serial) == replicates_to_csv(parallel)

    def test_seeds_distinct(self):
        seeds = {replicate_seeds(0, n, r) for n in (32, 64) for r in range(20)}
        assert len(seeds) == 40

    @pytest.mark.parametrize("cls,reps,iters", [(EB, 20, 50_000), (BI, 6, 50_000)])
    def test_exact_and_mcmc_agree(self, cls, reps, iters):
        prior = PriorConfig(partition_class=cls)
        base = ExperimentConfig(DYADIC, n_list=(32,), reps=reps, prior=prior, seed_base=5)
        exact = run_concentration(base)[0]
        chain = run_concentration(replace(base, engine="mcmc", mcmc_iters=iters))[0]
        assert abs(exact.median_error - chain.median_error) <= 0.02


class TestRateSlope:
    def test_power_law(self):
        rows = synthetic_rows([3.0 * n**-0.5 for n in (128, 256, 512, 1024)])
        assert abs(rate_slope(rows) + 0.5) <= 1e-10

    def test_flat(self):
        assert abs(rate_slope(synthetic_rows([0.2] * 4))) <= 1e-12

    def test_too_few(self):
        with pytest.raises(InvalidArgumentError):
            rate_slope(synthetic_rows([0.2, 0.1]))

    def test_nonpositive(self):
        with pytest.raises(InvalidArgumentError):
            rate_slope(synthetic_rows([0.2, 0.1, 0.0]))


@pytest.fixture(scope="module")
def table():
    cfg = ExperimentConfig(DYADIC, n_list=(256,), reps=10, seed_base=1, n_samples=50)
    return ck_sensitivity(cfg, [1e-6, 0.1, 1.0, 10.0, 100.0])


class TestCkSensitivity:
    def test_rows(self, table):
        assert [row["c_k"] for row in table] == [1e-6, 0.1, 1.0, 10.0, 100.0]
        assert all(np.isfinite(row["median_error"]) for row in table)

    def test_default_present(self, table):
        default = next(row for row in table if row["c_k"] == 1.0)
        assert default["k_mode"] == default["k_f0"] == 8

    def test_strong_penalty_underfits(self, table):
        heavy = table[-1]
        assert heavy["k_mode"] < heavy["k_f0"]


def test_csv_columns():
    rows = run_concentration(ExperimentConfig(DYADIC, n_list=(32,), reps=2))
    header = rows_to_csv(rows).splitlines()[0].split(",")
    assert header[:6] == ["n", "k_f0", "epsilon_n", "median_error", "mass_outside", "k_mode_hit_rate"]
    assert len(replicates_to_csv(rows).splitlines()) == 3
