import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftlab.lorentz import (
    DivergentNorm,
    LorentzIndex,
    StepFunction,
    WeightedSamples,
    decreasing_rearrangement,
    distribution_function,
    hardy_pairing,
    lorentz_norm,
    pseudo_rearrangement,
    unit_ball_volume,
)


def samples_strategy(max_size=40):
    return st.integers(1, max_size).flatmap(
        lambda k: st.tuples(
            st.lists(st.floats(0.0, 50.0), min_size=k, max_size=k),
            st.lists(st.floats(0.01, 3.0), min_size=k, max_size=k),
        )
    ).map(lambda vw: WeightedSamples(np.array(vw[0]), np.array(vw[1])))


class TestStepFunction:
    def test_right_continuous_evaluation(self):
        # value 3 on [0, 0.5), value 1 on [0.5, 2), zero beyond
        f = StepFunction(np.array([0.5, 2.0]), np.array([3.0, 1.0]))
        assert f(0.0) == 3.0
        assert f(0.5) == 1.0  # right-continuous at the jump
        assert f(1.9) == 1.0
        assert f(2.0) == 0.0

    def test_measure_above(self):
        f = StepFunction(np.array([0.5, 2.0]), np.array([3.0, 1.0]))
        assert f.measure_above(0.5) == 2.0
        assert f.measure_above(1.0) == 0.5
        assert f.measure_above(3.0) == 0.0

    def test_integral_against_exact(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([2.0, 1.0]))
        g = StepFunction(np.array([1.5]), np.array([3.0]))
        # product: 6 on [0,1), 3 on [1,1.5), 0 beyond
        assert f.integral_against(g) == pytest.approx(6.0 + 1.5)


class TestRearrangement:
    def test_simple_two_level(self):
        ws = WeightedSamples(np.array([1.0, 2.0]), np.array([1.0, 0.5]))
        star = decreasing_rearrangement(ws)
        assert star(0.0) == 2.0
        assert star(0.5) == 1.0
        assert star(1.4) == 1.0
        assert star(1.5) == 0.0

    def test_merges_equal_values(self):
        ws = WeightedSamples(np.array([1.0, 1.0, 2.0]), np.array([0.3, 0.7, 1.0]))
        star = decreasing_rearrangement(ws)
        assert star.values.size == 2
        assert star.measure_above(0.5) == pytest.approx(2.0)
        assert star.breakpoints[-1] == pytest.approx(2.0)

    @given(samples_strategy())
    @settings(max_examples=200, deadline=None)
    def test_equimeasurable(self, ws):
        star = decreasing_rearrangement(ws)
        for t in np.unique(ws.values):
            mu = float(ws.weights[ws.values > t].sum())
            assert math.isclose(star.measure_above(t), mu, rel_tol=1e-12, abs_tol=1e-12)

    @given(samples_strategy())
    @settings(max_examples=100, deadline=None)
    def test_decreasing(self, ws):
        star = decreasing_rearrangement(ws)
        assert np.all(np.diff(star.values) < 0)
        assert np.all(np.diff(np.concatenate(([0.0], star.breakpoints))) > 0)

    def test_distribution_function_matches(self):
        rng = np.random.default_rng(3)
        ws = WeightedSamples(rng.uniform(0, 4, 30), rng.uniform(0.1, 1, 30))
        for t in [0.0, 0.5, 1.7, 3.9, 5.0]:
            got = distribution_function(ws, t)
            assert got == pytest.approx(float(ws.weights[ws.values > t].sum()))


class TestLorentzNorm:
    def test_indicator_golden(self):
        # ||chi_E||_{p,q} = (p/q)^{1/q} |E|^{1/p}
        for p, q, m in [(3.0, 1.0, 2.0), (2.0, 2.0, 0.7), (1.5, 4.0, 10.0)]:
            ws = WeightedSamples(np.array([1.0]), np.array([m]))
            got = lorentz_norm(ws, LorentzIndex(p, q))
            assert got == pytest.approx((p / q) ** (1 / q) * m ** (1 / p), rel=1e-12)

    def test_weak_norm_indicator(self):
        ws = WeightedSamples(np.array([2.0]), np.array([8.0]))
        got = lorentz_norm(ws, LorentzIndex(3.0, None))
        assert got == pytest.approx(2.0 * 8.0 ** (1 / 3), rel=1e-12)

    @given(samples_strategy(), st.floats(1.0, 5.0), st.floats(0.9, 4.0))
    @settings(max_examples=150, deadline=None)
    def test_formulas_agree(self, ws, p, q):
        a = lorentz_norm(ws, LorentzIndex(p, q), formula="rearrangement")
        b = lorentz_norm(ws, LorentzIndex(p, q), formula="distribution")
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)

    @given(samples_strategy(), st.floats(1.1, 4.0), st.floats(1.0, 3.0),
           st.floats(1.2, 2.5))
    @settings(max_examples=150, deadline=None)
    def test_power_identity(self, ws, p, q, r):
        lhs = lorentz_norm(WeightedSamples(ws.values**r, ws.weights), LorentzIndex(p, q))
        rhs = lorentz_norm(ws, LorentzIndex(p * r, q * r)) ** r
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    @given(samples_strategy(), st.floats(0.1, 5.0))
    @settings(max_examples=100, deadline=None)
    def test_homogeneous(self, ws, lam):
        idx = LorentzIndex(2.5, 1.5)
        a = lorentz_norm(WeightedSamples(lam * ws.values, ws.weights), idx)
        b = lam * lorentz_norm(ws, idx)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)

    def test_q_below_one_accepted(self):
        ws = WeightedSamples(np.array([1.0, 2.0]), np.array([1.0, 1.0]))
        val = lorentz_norm(ws, LorentzIndex(3.0, 0.5))
        assert math.isfinite(val) and val > 0


class TestHardy:
    @given(st.integers(1, 40), st.integers(0, 10000))
    @settings(max_examples=100, deadline=None)
    def test_hardy_pairing_bounded_by_rearranged_product(self, k, seed):
        # int u f dmu <= int_0^inf u*(s) f*(s) ds on shared cells
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.05, 2.0, k)
        u = WeightedSamples(rng.uniform(0, 5, k), w)
        f = WeightedSamples(rng.uniform(0, 5, k), w)
        lhs, rhs = hardy_pairing(u, f)
        assert lhs <= rhs * (1 + 1e-12) + 1e-12

    def test_pseudo_rearrangement_monotone_averages(self):
        rng = np.random.default_rng(5)
        w = rng.uniform(0.1, 1, 50)
        u = WeightedSamples(rng.uniform(0, 1, 50), w)
        f = WeightedSamples(rng.uniform(0, 1, 50), w)
        s = np.linspace(0.1, u.total_measure, 12)
        step = pseudo_rearrangement(u, f, s)
        assert np.all(np.isfinite(step.values)) and np.all(step.values >= 0)
        # total integral of the difference quotient recovers int |f|
        widths = np.diff(np.concatenate(([0.0], step.breakpoints)))
        total = float(np.sum(step.values * widths))
        assert total == pytest.approx(float(np.sum(f.values * f.weights)), rel=1e-10)


class TestUnitBallVolume:
    def test_known_dimensions(self):
        assert unit_ball_volume(1) == pytest.approx(2.0)
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


class TestIndexValidation:
    def test_rejects_bad_p(self):
        with pytest.raises(ValueError):
            LorentzIndex(0.0, 1.0)

    def test_divergent_norm_is_exception(self):
        assert issubclass(DivergentNorm, Exception)
