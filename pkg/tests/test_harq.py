import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from mimoharq.channel import CapacitySampleSet, SnrPoint, channel_stream, chi2_cdf, sample_channel
from mimoharq.harq import (
    RoundRates,
    avg_rate_from_probs,
    cc_equiv_capacity,
    ergodic_capacity,
    ir_equiv_capacity,
    optimize_cc_rate,
    optimize_ir_rates,
)
from mimoharq.channel import mimo_mutual_info


class TestRoundRates:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            RoundRates((1.0, 2.0))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            RoundRates((1.0, -0.5))

    def test_equal_rates_allowed(self):
        assert RoundRates((2.0, 2.0, 1.0)).n_max == 3


class TestAvgRateFromProbs:
    def test_single_round(self):
        assert avg_rate_from_probs((2.0,), [0.5]) == pytest.approx(1.0)

    def test_two_rounds_hand_value(self):
        # (2-1)*0.5 + 1*0.9
        assert avg_rate_from_probs((2.0, 1.0), [0.5, 0.9]) == pytest.approx(1.4)

    def test_no_outage_gives_first_rate(self):
        assert avg_rate_from_probs((3.0, 1.5, 0.5), [1.0, 1.0, 1.0]) == pytest.approx(3.0)

    def test_decreasing_probs_rejected(self):
        with pytest.raises(ValueError):
            avg_rate_from_probs((2.0, 1.0), [0.9, 0.5])

    def test_rate_monotonicity_rejected(self):
        with pytest.raises(ValueError):
            avg_rate_from_probs([1.0, 2.0], [0.5, 0.9])

    @given(st.lists(st.floats(min_value=0, max_value=10), min_size=1, max_size=6),
           st.lists(st.floats(min_value=0, max_value=1), min_size=6, max_size=6))
    def test_direct_equals_telescoped(self, raw_rates, raw_probs):
        rates = tuple(sorted(raw_rates, reverse=True))
        n = len(rates)
        probs = sorted(raw_probs[:n])
        direct = avg_rate_from_probs(rates, probs)
        p = [0.0] + list(probs)
        telescoped = sum(rates[k] * (p[k + 1] - p[k]) for k in range(n))
        assert direct == pytest.approx(telescoped, abs=1e-12)


class TestEquivalentCapacities:
    def test_ir_is_plain_mimo(self):
        rng = channel_stream(11)
        snr = SnrPoint(6.0)
        for _ in range(100):
            h = sample_channel(2, 2, rng)
            assert ir_equiv_capacity(h, snr) == mimo_mutual_info(h, snr)

    def test_ir_zero_snr(self):
        h = sample_channel(2, 1, channel_stream(12))
        assert ir_equiv_capacity(h, SnrPoint(0.0)) == 0.0

    def test_cc_round_one_is_mimo(self):
        h = sample_channel(2, 2, channel_stream(13))
        snr = SnrPoint(4.0)
        assert cc_equiv_capacity(h, snr, 1) == pytest.approx(mimo_mutual_info(h, snr))

    def test_cc_miso_closed_form(self):
        # (1/n) log2(1 + n*snr/lt * g)
        h = sample_channel(2, 1, channel_stream(14))
        g = float(np.sum(np.abs(h.h) ** 2))
        snr = SnrPoint(10.0)
        for n in (1, 2, 3):
            want = math.log2(1 + n * 10.0 / 2 * g) / n
            assert cc_equiv_capacity(h, snr, n) == pytest.approx(want, abs=1e-9)

    def test_cc_kronecker_oracle(self):
        # explicit 1_n (x) H stacking
        rng = channel_stream(15)
        snr = SnrPoint(3.0)
        for _ in range(5):
            h = sample_channel(2, 2, rng)
            for n in range(1, 5):
                h_eq = np.kron(np.ones((n, 1)), h.h)
                gram = h_eq @ h_eq.conj().T
                want = float(np.log2(np.linalg.det(np.eye(2 * n) + (3.0 / 2) * gram).real)) / n
                assert cc_equiv_capacity(h, snr, n) == pytest.approx(want, abs=1e-9)

    def test_cc_round_zero_rejected(self):
        h = sample_channel(2, 1, channel_stream(16))
        with pytest.raises(ValueError):
            cc_equiv_capacity(h, SnrPoint(1.0), 0)


def _brute_force_ir(values, n_max):
    values = np.asarray(values, dtype=float)
    u = np.unique(values)
    best_v, best_r = -1.0, None
    for tup in itertools.combinations_with_replacement(range(u.size), n_max):
        idx = tup[::-1]  # nonincreasing rates
        r = u[list(idx)]
        probs = [(values >= x).mean() for x in r]
        v = sum((r[t] - (r[t + 1] if t + 1 < n_max else 0.0)) * probs[t] for t in range(n_max))
        key = tuple(r)
        if v > best_v + 1e-13 or (abs(v - best_v) <= 1e-13 and key < best_r):
            best_v, best_r = max(v, best_v), key
    return best_v, best_r


class TestOptimizeIrRates:
    def test_single_round_quantile_example(self):
        cs = CapacitySampleSet(values=np.array([1.0, 2.0, 3.0, 4.0]), seed=0, count=4)
        res = optimize_ir_rates(cs, 1)
        assert res.optimal_rates.rates == (2.0,)
        assert res.avg_rate == pytest.approx(1.5)

    def test_more_rounds_never_hurt(self):
        cs = CapacitySampleSet.sample(2, 1, SnrPoint(8.0), 4000, seed=17)
        vals = [optimize_ir_rates(cs, n).avg_rate for n in range(1, 6)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            m = int(rng.integers(3, 11))
            n_max = int(rng.integers(1, 4))
            values = np.round(rng.uniform(0, 4, m), 2)
            cs = CapacitySampleSet(values=values, seed=0, count=m)
            res = optimize_ir_rates(cs, n_max)
            bf_v, bf_r = _brute_force_ir(values, n_max)
            assert res.avg_rate == pytest.approx(bf_v, abs=1e-12)
            assert res.optimal_rates.rates == pytest.approx(bf_r, abs=1e-12)

    def test_local_optimality_audit(self):
        # nudging any single returned threshold to an adjacent sample never helps
        cs = CapacitySampleSet.sample(2, 1, SnrPoint(10.0), 3000, seed=18)
        n_max = 3
        res = optimize_ir_rates(cs, n_max)
        values = np.unique(cs.values)
        rates = np.array(res.optimal_rates.rates)

        def objective(r):
            probs = [(cs.values >= x).mean() for x in r]
            r_ext = np.append(r, 0.0)
            return float(np.dot(r_ext[:-1] - r_ext[1:], probs))

        assert objective(rates) == pytest.approx(res.avg_rate, abs=1e-12)
        for t in range(n_max):
            pos = np.searchsorted(values, rates[t])
            for adj in (pos - 1, pos + 1):
                if not 0 <= adj < values.size:
                    continue
                cand = rates.copy()
                cand[t] = values[adj]
                cand = np.sort(cand)[::-1]
                assert objective(cand) <= res.avg_rate + 1e-12

    def test_success_probs_nondecreasing(self):
        cs = CapacitySampleSet.sample(2, 2, SnrPoint(12.0), 3000, seed=19)
        res = optimize_ir_rates(cs, 4)
        assert np.all(np.diff(res.success_probs) >= -1e-12)

    def test_weighted_matches_unit_slot_scalar_search(self):
        cs = CapacitySampleSet.sample(2, 1, SnrPoint(10.0), 3000, seed=20)
        res = optimize_ir_rates(cs, 3, round_weights="uniform")
        r1 = res.optimal_rates.rates[0]
        assert res.optimal_rates.rates == pytest.approx((r1, r1 / 2, r1 / 3))

    def test_weighted_below_free(self):
        cs = CapacitySampleSet.sample(2, 1, SnrPoint(10.0), 3000, seed=21)
        free = optimize_ir_rates(cs, 4).avg_rate
        constrained = optimize_ir_rates(cs, 4, round_weights="uniform").avg_rate
        assert constrained <= free + 1e-12


class TestOptimizeCcRate:
    def test_single_round_matches_ir(self):
        snr = SnrPoint.from_db(8)
        cc = optimize_cc_rate(snr, 2, 1, 1, 5000, channel_stream(22, 0))
        cs = CapacitySampleSet.sample(2, 1, snr, 5000, seed=22)
        ir = optimize_ir_rates(cs, 1)
        assert cc.avg_rate == pytest.approx(ir.avg_rate, abs=1e-12)
        assert cc.optimal_rates.rates[0] == pytest.approx(ir.optimal_rates.rates[0])

    def test_miso_closed_form_objective(self):
        # exact objective from the chi-square CDF, maximized on a dense grid
        snr = SnrPoint.from_db(10)
        n_max = 4
        res = optimize_cc_rate(snr, 2, 1, n_max, 100_000, channel_stream(23, 0))

        def closed(r):
            tot = 0.0
            for n in range(1, n_max + 1):
                hi = 1.0 if n == 1 else chi2_cdf((2 ** r - 1) * 2 / ((n - 1) * snr.linear), 2)
                lo = chi2_cdf((2 ** r - 1) * 2 / (n * snr.linear), 2)
                tot += (r / n) * (hi - lo)
            return tot

        grid = np.linspace(0.05, 8, 2000)
        best_closed = max(closed(r) for r in grid)
        assert res.avg_rate == pytest.approx(best_closed, rel=0.01)
        assert closed(res.optimal_rates.rates[0]) == pytest.approx(res.avg_rate, rel=0.01)

    def test_deadline_gain_negligible_at_10db(self):
        snr = SnrPoint.from_db(10)
        vals = [optimize_cc_rate(snr, 2, 1, n, 20_000, channel_stream(24, 0)).avg_rate
                for n in (1, 2, 4)]
        assert vals[0] <= vals[1] + 1e-9 <= vals[2] + 2e-9
        # rounds beyond 2 barely help Chase combining here
        assert vals[2] - vals[1] < 0.05 * vals[2]

    def test_rates_follow_harmonic_pattern(self):
        res = optimize_cc_rate(SnrPoint(5.0), 2, 1, 3, 2000, channel_stream(25, 0))
        r = res.optimal_rates.rates
        assert r[1] == pytest.approx(r[0] / 2) and r[2] == pytest.approx(r[0] / 3)

    def test_small_budget_rejected(self):
        with pytest.raises(ValueError):
            optimize_cc_rate(SnrPoint(5.0), 2, 1, 2, 10, channel_stream(0))


class TestErgodicCapacity:
    def test_zero_snr(self):
        assert ergodic_capacity(SnrPoint(0.0), 2, 1, 1000, channel_stream(26)) == 0.0

    def test_upper_bounds_optimizers(self):
        snr = SnrPoint.from_db(10)
        erg = ergodic_capacity(snr, 2, 1, 20_000, channel_stream(27, 0))
        cs = CapacitySampleSet.sample(2, 1, snr, 20_000, seed=27)
        assert erg == pytest.approx(float(np.mean(cs.values)), abs=1e-12)
        for n in (1, 2, 4):
            assert optimize_ir_rates(cs, n).avg_rate <= erg

    def test_siso_quadrature_oracle(self):
        oracle, _ = quad(lambda g: math.log2(1 + 10 * g) * math.exp(-g), 0, np.inf)
        got = ergodic_capacity(SnrPoint(10.0), 1, 1, 100_000, channel_stream(28))
        assert got == pytest.approx(oracle, rel=0.01)
