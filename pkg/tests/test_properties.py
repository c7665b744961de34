"""Invariant checks driven by randomized inputs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optbench import (
    BsInputs,
    MlpTrainConfig,
    OptionType,
    SplitSpec,
    bs_price,
    eta_decay,
    filter_quotes,
    histogram,
    mae,
    mape,
    norm_cdf,
    quantize_features,
    realized_vol,
    reduce_lr_on_plateau,
    split_indices,
)

from conftest import make_quote

price_floats = st.floats(min_value=1.0, max_value=5000.0)
vol_floats = st.floats(min_value=0.01, max_value=2.9)
time_floats = st.floats(min_value=0.01, max_value=5.0)
rate_floats = st.floats(min_value=-0.05, max_value=0.2)


@st.composite
def bs_inputs(draw):
    return dict(
        underlying_price=draw(price_floats),
        strike=draw(price_floats),
        maturity_years=draw(time_floats),
        rate=draw(rate_floats),
        dividend_yield=draw(st.floats(min_value=0.0, max_value=0.1)),
        sigma=draw(vol_floats),
    )


class TestPricingInvariants:
    @given(bs_inputs())
    @settings(max_examples=200)
    def test_put_call_parity(self, kw):
        call = bs_price(BsInputs(option_type=OptionType.CALL, **kw))
        put = bs_price(BsInputs(option_type=OptionType.PUT, **kw))
        s, k = kw["underlying_price"], kw["strike"]
        t, r, q = kw["maturity_years"], kw["rate"], kw["dividend_yield"]
        lhs = call - put
        rhs = s * math.exp(-q * t) - k * math.exp(-r * t)
        assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, s, k))

    @given(bs_inputs())
    @settings(max_examples=200)
    def test_price_within_no_arbitrage_bounds(self, kw):
        s, k = kw["underlying_price"], kw["strike"]
        t, r, q = kw["maturity_years"], kw["rate"], kw["dividend_yield"]
        call = bs_price(BsInputs(option_type=OptionType.CALL, **kw))
        disc_s = s * math.exp(-q * t)
        disc_k = k * math.exp(-r * t)
        assert max(disc_s - disc_k, 0.0) - 1e-9 <= call <= disc_s + 1e-9

    @given(bs_inputs(), vol_floats)
    @settings(max_examples=100)
    def test_call_price_monotone_in_vol(self, kw, other_sigma):
        lo = dict(kw, sigma=min(kw["sigma"], other_sigma))
        hi = dict(kw, sigma=max(kw["sigma"], other_sigma))
        p_lo = bs_price(BsInputs(option_type=OptionType.CALL, **lo))
        p_hi = bs_price(BsInputs(option_type=OptionType.CALL, **hi))
        assert p_hi >= p_lo - 1e-9

    @given(st.floats(min_value=-30.0, max_value=30.0))
    def test_norm_cdf_in_unit_interval(self, x):
        p = norm_cdf(x)
        assert 0.0 <= p <= 1.0
        assert norm_cdf(x) + norm_cdf(-x) == pytest.approx(1.0, abs=1e-14)


class TestFilterInvariants:
    @given(st.lists(st.integers(min_value=0, max_value=4), max_size=20))
    @settings(max_examples=50)
    def test_filter_idempotent(self, codes):
        quotes = []
        for i, code in enumerate(codes):
            if code == 0:
                quotes.append(make_quote(strike=90.0 + i))
            elif code == 1:
                quotes.append(make_quote(midpoint=2e5))
            elif code == 2:
                quotes.append(make_quote(maturity_years=0.0))
            elif code == 3:
                quotes.append(make_quote(rate=5.0))
            else:
                quotes.append(make_quote(implied_vol=None))
        once = filter_quotes(quotes)
        twice = filter_quotes(once.kept)
        assert twice.kept == once.kept
        assert twice.dropped_count == 0
        assert len(once.kept) + once.dropped_count == len(quotes)


class TestSplitInvariants:
    @given(
        st.integers(min_value=3, max_value=400),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=100)
    def test_partition_is_exact(self, n, seed):
        spec = SplitSpec(seed=seed)
        train, val, test = split_indices(n, spec)
        combined = np.concatenate([train, val, test])
        assert len(combined) == n
        assert set(combined.tolist()) == set(range(n))

    @given(st.integers(min_value=10, max_value=200))
    @settings(max_examples=50)
    def test_fraction_rounding(self, n):
        spec = SplitSpec(
            train_fraction=0.6, val_fraction=0.25, test_fraction=0.15, seed=1
        )
        train, val, test = split_indices(n, spec)
        assert len(val) == round(n * 0.25)
        assert len(test) == round(n * 0.15)
        assert len(train) == n - len(val) - len(test)


class TestScheduleInvariants:
    @given(st.integers(min_value=0, max_value=10**6))
    def test_eta_in_bounds(self, iteration):
        eta = eta_decay(iteration)
        assert 0.2 <= eta <= 0.5

    @given(st.integers(min_value=0, max_value=10**5))
    def test_eta_nonincreasing(self, iteration):
        assert eta_decay(iteration + 1) <= eta_decay(iteration)

    @given(
        st.lists(st.floats(min_value=0.1, max_value=100.0), max_size=60),
    )
    @settings(max_examples=100)
    def test_plateau_lr_bounded(self, history):
        cfg = MlpTrainConfig()
        lr = reduce_lr_on_plateau(history, cfg)
        assert cfg.min_lr <= lr <= cfg.initial_lr

    @given(st.floats(min_value=0.5, max_value=50.0), st.integers(min_value=0, max_value=40))
    @settings(max_examples=50)
    def test_plateau_more_stagnation_never_raises_lr(self, value, extra):
        cfg = MlpTrainConfig()
        base = [value] * 12
        longer = base + [value] * extra
        assert reduce_lr_on_plateau(longer, cfg) <= reduce_lr_on_plateau(base, cfg)


class TestVolInvariants:
    @given(
        st.lists(
            st.floats(min_value=0.5, max_value=2000.0), min_size=20, max_size=20
        )
    )
    @settings(max_examples=100)
    def test_realized_vol_nonnegative_finite(self, lags):
        rv = realized_vol(lags)
        assert rv >= 0.0
        assert math.isfinite(rv)

    @given(
        st.lists(st.floats(min_value=0.5, max_value=2000.0), min_size=20, max_size=20),
        st.floats(min_value=0.01, max_value=100.0),
    )
    @settings(max_examples=50)
    def test_realized_vol_scale_invariant(self, lags, scale):
        a = realized_vol(lags)
        b = realized_vol([x * scale for x in lags])
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


class TestMetricInvariants:
    @given(
        st.lists(st.floats(min_value=0.1, max_value=1e4), min_size=1, max_size=50)
    )
    @settings(max_examples=100)
    def test_mae_zero_iff_equal(self, targets):
        assert mae(targets, targets) == 0.0
        assert mape(targets, targets) == 0.0

    @given(
        st.lists(st.floats(min_value=0.1, max_value=1e4), min_size=1, max_size=50),
        st.lists(st.floats(min_value=0.1, max_value=1e4), min_size=1, max_size=50),
    )
    @settings(max_examples=100)
    def test_mae_nonnegative(self, preds, targets):
        n = min(len(preds), len(targets))
        assert mae(preds[:n], targets[:n]) >= 0.0

    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=200
        ),
        st.integers(min_value=1, max_value=40),
    )
    @settings(max_examples=100)
    def test_histogram_conserves_count(self, values, n_bins):
        bins = histogram(values, n_bins)
        assert sum(b.count for b in bins) == len(values)


class TestQuantizeInvariants:
    @given(
        st.integers(min_value=1, max_value=60),
        st.integers(min_value=1, max_value=5),
        st.integers(min_value=2, max_value=64),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=60)
    def test_codes_bounded_edges_sorted(self, n, d, n_bins, seed):
        X = np.random.default_rng(seed).normal(size=(n, d))
        binned = quantize_features(X, n_bins)
        assert binned.codes.max() < n_bins
        assert binned.codes.min() >= 0
        for edges in binned.edges:
            assert len(edges) < n_bins
            assert np.all(np.diff(edges) > 0)
