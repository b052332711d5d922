from fractions import Fraction
from math import comb, log

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stephist.combinatorics import (
    ExactProbability,
    binom,
    brute_force_spacing_probs,
    circle_cover_exact,
    circle_cover_mc,
    count_compositions,
    log_binom,
    prob_max_cell,
    prob_min_cell,
)
from stephist.errors import InvalidArgumentError, TooLargeError


def printed_weighting(n, K, C):
    """One minus the alternating sum weighted by C(n-1, k), k = 1..min(n-1, 1/C)."""
    top = min(n - 1, int(1 / C))
    total = sum(
        (-1) ** k * comb(n - 1, k) * binom(int(n * (1 - k * C)) + K - 1, K - 1)
        for k in range(1, top + 1)
    )
    return 1 - Fraction(total, comb(n - 1, K - 1))


class TestMinCell:
    def test_two_cells(self):
        assert prob_min_cell(10, 2, Fraction(2, 10)) == Fraction(7, 9)

    def test_three_cells(self):
        p = prob_min_cell(10, 3, Fraction(2, 10))
        assert p == Fraction(15, 36)
        assert (p.numerator, p.denominator) == (5, 12)

    @pytest.mark.parametrize("n,K", [(1, 1), (5, 3), (20, 7), (64, 64)])
    def test_grid_floor(self, n, K):
        assert prob_min_cell(n, K, Fraction(1, n)) == 1

    def test_infeasible(self):
        assert prob_min_cell(10, 3, Fraction(4, 10)) == 0

    def test_snapping_rounds_up(self):
        p = prob_min_cell(10, 2, 0.15)
        assert p.snapped and p == prob_min_cell(10, 2, Fraction(2, 10))
        assert not prob_min_cell(10, 2, 0.2).snapped

    def test_n_below_k(self):
        with pytest.raises(InvalidArgumentError):
            prob_min_cell(2, 3, Fraction(1, 2))


class TestMaxCell:
    def test_always(self):
        assert prob_max_cell(3, 2, Fraction(2, 3)) == 1

    def test_never(self):
        assert prob_max_cell(3, 2, Fraction(1, 3)) == 0

    @pytest.mark.parametrize("n,K,C", [(5, 2, 1), (9, 4, Fraction(3, 2)), (30, 3, 7)])
    def test_whole_interval(self, n, K, C):
        assert prob_max_cell(n, K, C) == 1

    def test_snapping_rounds_down(self):
        p = prob_max_cell(10, 2, 0.69)
        assert p.snapped and p == prob_max_cell(10, 2, Fraction(6, 10))

    def test_alternative_weighting_leaves_unit_interval(self):
        # the C(n-1, k) weighting is not a probability at this size
        assert printed_weighting(3, 2, Fraction(2, 3)) == 3
        assert prob_max_cell(3, 2, Fraction(2, 3)) == brute_force_spacing_probs(3, 2, Fraction(2, 3))[1] == 1


class TestOracle:
    def test_ten_two(self):
        lo, _ = brute_force_spacing_probs(10, 2, Fraction(2, 10))
        assert lo == Fraction(7, 9)

    def test_unit_cells(self):
        lo, hi = brute_force_spacing_probs(4, 4, Fraction(1, 4))
        assert lo == 1 and hi == 1

    def test_twelve_three(self):
        lo, hi = brute_force_spacing_probs(12, 3, Fraction(3, 12))
        assert lo == prob_min_cell(12, 3, Fraction(3, 12))
        assert hi == prob_max_cell(12, 3, Fraction(3, 12))

    def test_guard(self):
        with pytest.raises(TooLargeError):
            brute_force_spacing_probs(60, 10, Fraction(1, 60))

    @pytest.mark.parametrize("n", range(2, 13))
    def test_closed_forms_and_complement(self, n):
        for K in range(1, min(n, 5) + 1):
            for a in range(1, n + 1):
                C = Fraction(a, n)
                lo, hi = brute_force_spacing_probs(n, K, C)
                assert prob_max_cell(n, K, C) == hi
                # the oracle's complement event accounts for the rest
                assert prob_max_cell(n, K, C).value + (1 - hi.value) == 1
                if a <= n // K:
                    assert prob_min_cell(n, K, C) == lo


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))))
def test_monotone_in_threshold(case):
    n, K = case
    mins = [prob_min_cell(n, K, Fraction(a, n)).value for a in range(1, n + 1)]
    maxs = [prob_max_cell(n, K, Fraction(a, n)).value for a in range(1, n + 1)]
    assert all(x >= y for x, y in zip(mins, mins[1:]))
    assert all(x <= y for x, y in zip(maxs, maxs[1:]))
    assert maxs[-1] == 1


def test_large_n_exact():
    # binomials far beyond 64-bit integers
    p = prob_min_cell(400, 40, Fraction(3, 400))
    assert p == Fraction(comb(400 - 120 + 39, 39), comb(399, 39))
    assert p.denominator > 2**64


@pytest.mark.parametrize(
    "total,parts,lo,hi,want",
    [(5, 2, 1, None, 4), (5, 2, 2, None, 2), (6, 3, 1, 2, 1), (5, 3, 1, 2, 3), (4, 4, 1, 1, 1), (3, 4, 1, None, 0), (0, 0, 1, None, 1)],
)
def test_count_compositions(total, parts, lo, hi, want):
    assert count_compositions(total, parts, lo, hi) == want


def test_log_binom_approx():
    assert log_binom(1000, 300) == pytest.approx(log(comb(1000, 300)), rel=1e-12)


def test_exact_probability_range():
    with pytest.raises(ValueError):
        ExactProbability(Fraction(3, 2))
    assert str(ExactProbability(Fraction(2, 4))) == "1/2"


class TestCircle:
    @pytest.mark.parametrize("arc", [Fraction(1), Fraction(3, 2)])
    def test_long_arc(self, arc):
        assert circle_cover_mc(10, 1, arc, 100, seed=0).estimate == 1.0

    def test_too_short(self):
        est = circle_cover_mc(12, 3, Fraction(3, 12), 1000, seed=0)
        assert est.estimate == 0.0 and est.hits == 0

    def test_against_enumeration(self):
        exact = float(circle_cover_exact(12, 3, Fraction(5, 12)))
        est = circle_cover_mc(12, 3, Fraction(5, 12), 100_000, seed=2024)
        assert abs(est.estimate - exact) <= 3 * est.std_error

    def test_deterministic(self):
        a = circle_cover_mc(9, 3, Fraction(1, 3), 5000, seed=5)
        assert a == circle_cover_mc(9, 3, Fraction(1, 3), 5000, seed=5)

    def test_shard_bookkeeping(self):
        est = circle_cover_mc(8, 2, Fraction(1, 2), 1001, seed=1, shard_size=100)
        assert est.trials == 1001 and 0 <= est.hits <= 1001

    @pytest.mark.parametrize("n", range(2, 13))
    def test_matches_max_spacing(self, n):
        # gaps between sorted endpoints on the circle have the law of the
        # cell widths of a uniform K-partition of the n-grid
        for K in range(1, min(n, 4) + 1):
            for a in range(1, n + 1):
                assert circle_cover_exact(n, K, Fraction(a, n)) == prob_max_cell(n, K, Fraction(a, n)).value
