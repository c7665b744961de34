import math

import numpy as np
import pytest

from optbench import (
    Dataset,
    OptionQuote,
    OptionType,
    SplitSpec,
    ValidationError,
    encode_features,
    filter_quotes,
    split_dataset,
    split_indices,
)
from optbench.core import FEATURE_COUNT, FEATURE_NAMES

from conftest import make_quote


class TestOptionQuote:
    def test_valid_quote_has_no_violation(self, quote):
        assert quote.violation() is None
        quote.validate()

    def test_nineteen_lags_rejected(self):
        q = make_quote(lags=tuple(100.0 for _ in range(19)))
        assert q.violation().startswith("lags: expected 20")
        with pytest.raises(ValidationError, match="lags: expected 20"):
            q.validate()

    def test_nonpositive_lag_rejected(self):
        q = make_quote(lags=(0.0,) + tuple(100.0 for _ in range(19)))
        assert q.violation().startswith("lags:")

    def test_midpoint_bounds(self):
        assert make_quote(midpoint=100_000.0).violation().startswith("midpoint")
        assert make_quote(midpoint=0.0).violation().startswith("midpoint")
        assert make_quote(midpoint=99_999.99).violation() is None
        assert make_quote(midpoint=0.015).violation() is None

    def test_implied_vol_range(self):
        assert make_quote(implied_vol=3.0).violation() is None
        assert make_quote(implied_vol=3.0001).violation().startswith("implied_vol")
        assert make_quote(implied_vol=0.0).violation().startswith("implied_vol")
        assert make_quote(implied_vol=None).violation() is None

    def test_negative_terms_rejected(self):
        assert make_quote(strike=-1.0).violation().startswith("strike")
        assert make_quote(underlying_price=0.0).violation().startswith("underlying_price")
        assert make_quote(maturity_years=0.0).violation().startswith("maturity_years")
        assert make_quote(rate=math.nan).violation().startswith("rate")

    def test_option_type_must_be_enum(self):
        with pytest.raises(ValidationError, match="option_type"):
            make_quote(option_type="C")


class TestEncodeFeatures:
    def test_call_layout(self):
        lags = tuple(100.0 + i for i in range(20))
        q = make_quote(
            underlying_price=100.0,
            strike=90.0,
            rate=0.02,
            dividend_yield=0.01,
            maturity_years=0.5,
            option_type=OptionType.CALL,
            lags=lags,
        )
        row = encode_features(q)
        assert row.shape == (FEATURE_COUNT,)
        assert row[0] == 90.0
        assert row[1] == 100.0
        assert row[2] == 0.02
        assert row[3] == 0.01
        assert row[4] == 0.5
        assert row[5] == 1.0
        assert tuple(row[6:]) == lags

    def test_put_flag_is_zero(self):
        row = encode_features(make_quote(option_type=OptionType.PUT))
        assert row[5] == 0.0

    def test_implied_vol_not_encoded(self):
        a = encode_features(make_quote(implied_vol=0.2))
        b = encode_features(make_quote(implied_vol=1.7))
        assert np.array_equal(a, b)

    def test_invalid_quote_raises(self):
        with pytest.raises(ValidationError):
            encode_features(make_quote(midpoint=-3.0))

    def test_feature_names_align(self):
        assert FEATURE_NAMES[0] == "strike"
        assert FEATURE_NAMES[5] == "is_call"
        assert FEATURE_NAMES[6] == "lag_1"
        assert FEATURE_NAMES[-1] == "lag_20"
        assert len(FEATURE_NAMES) == FEATURE_COUNT == 26


class TestFilterQuotes:
    def test_empty_input(self):
        kept, dropped, by_reason = filter_quotes([])
        assert kept == [] and dropped == 0 and by_reason == {}

    def test_drops_counted_by_reason(self):
        quotes = [
            make_quote(),
            make_quote(midpoint=100_000.0),
            make_quote(maturity_years=-1.0),
            make_quote(lags=(50.0,) * 19),
            make_quote(lags=(50.0,) * 19),
        ]
        kept, dropped, by_reason = filter_quotes(quotes)
        assert len(kept) == 1
        assert dropped == 4
        assert by_reason == {"midpoint": 1, "maturity_years": 1, "lags": 2}

    def test_midpoint_upper_bound_strict(self):
        kept, dropped, _ = filter_quotes([make_quote(midpoint=100_000.0)])
        assert kept == [] and dropped == 1

    def test_small_positive_midpoint_kept(self):
        kept, _, _ = filter_quotes([make_quote(midpoint=0.015)])
        assert len(kept) == 1

    def test_idempotent(self):
        quotes = [make_quote(), make_quote(strike=0.0), make_quote(midpoint=2.0)]
        first = filter_quotes(quotes)
        second = filter_quotes(first.kept)
        assert second.kept == first.kept
        assert second.dropped_count == 0

    def test_implied_vol_not_a_filter_criterion(self):
        # vol range is a validation concern, not a structural drop
        kept, dropped, _ = filter_quotes([make_quote(implied_vol=2.999)])
        assert len(kept) == 1 and dropped == 0


class TestDataset:
    def test_from_quotes_roundtrip(self):
        quotes = [make_quote(midpoint=5.0), make_quote(midpoint=7.0, implied_vol=None)]
        ds = Dataset.from_quotes(quotes)
        assert len(ds) == 2
        assert ds.targets.tolist() == [5.0, 7.0]
        assert ds.implied_vols[0] == 0.25
        assert math.isnan(ds.implied_vols[1])
        assert ds.row_ids.tolist() == [0, 1]

    def test_arrays_frozen(self):
        ds = Dataset.from_quotes([make_quote()])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0
        with pytest.raises(ValueError):
            ds.targets[0] = 1.0

    def test_bad_shapes_rejected(self):
        with pytest.raises(ValidationError, match="features"):
            Dataset(np.zeros((2, 7)), np.ones(2), np.ones(2), np.arange(2))
        with pytest.raises(ValidationError, match="targets"):
            Dataset(np.zeros((2, 26)), np.ones(3), np.ones(2), np.arange(2))

    def test_target_range_enforced(self):
        feats = np.zeros((1, 26))
        with pytest.raises(ValidationError, match="targets"):
            Dataset(feats, np.array([0.0]), np.array([np.nan]), np.arange(1))
        with pytest.raises(ValidationError, match="targets"):
            Dataset(feats, np.array([100_000.0]), np.array([np.nan]), np.arange(1))

    def test_column_lookup(self):
        ds = Dataset.from_quotes([make_quote()])
        assert ds.column("strike")[0] == 90.0
        assert ds.column("midpoint")[0] == 12.5
        assert ds.column("implied_vol")[0] == 0.25
        with pytest.raises(ValidationError):
            ds.column("nope")


class TestSplit:
    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValidationError, match="fractions must sum to 1"):
            SplitSpec(0.5, 0.2, 0.2)

    def test_documented_sizes(self):
        train, val, test = split_indices(1000, SplitSpec(0.98, 0.01, 0.01, seed=0))
        assert (len(train), len(val), len(test)) == (980, 10, 10)

    def test_partition_disjoint_and_exhaustive(self):
        train, val, test = split_indices(101, SplitSpec(0.7, 0.15, 0.15, seed=3))
        merged = np.concatenate([train, val, test])
        assert len(merged) == 101
        assert sorted(merged.tolist()) == list(range(101))

    def test_same_seed_same_split(self):
        a = split_indices(500, SplitSpec(seed=9))
        b = split_indices(500, SplitSpec(seed=9))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_different_seed_different_split(self):
        a = split_indices(500, SplitSpec(seed=1))
        b = split_indices(500, SplitSpec(seed=2))
        assert not np.array_equal(a[0], b[0])

    def test_remainder_goes_to_train(self):
        train, val, test = split_indices(7, SplitSpec(0.5, 0.25, 0.25, seed=0))
        assert len(val) == 2 and len(test) == 2 and len(train) == 3

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            split_indices(0, SplitSpec())

    def test_split_dataset_carries_row_ids(self):
        rng = np.random.default_rng(0)
        n = 50
        feats = np.abs(rng.normal(100, 10, size=(n, 26))) + 1.0
        ds = Dataset(feats, rng.uniform(1, 10, n), np.full(n, np.nan), np.arange(n))
        train, val, test = split_dataset(ds, SplitSpec(0.8, 0.1, 0.1, seed=5))
        ids = np.concatenate([train.row_ids, val.row_ids, test.row_ids])
        assert sorted(ids.tolist()) == list(range(n))
        # subsetting preserves row alignment
        j = int(train.row_ids[0])
        assert np.array_equal(train.features[0], ds.features[j])
        assert train.targets[0] == ds.targets[j]
