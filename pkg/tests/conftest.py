import numpy as np
import pytest

from optbench import Dataset, OptionQuote, OptionType

# one line per acceptance criterion, echoed after the run
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)


def make_quote(**overrides) -> OptionQuote:
    """A valid call quote with 20 mildly varying lags."""
    fields = dict(
        underlying_price=100.0,
        strike=90.0,
        maturity_years=0.5,
        rate=0.02,
        dividend_yield=0.01,
        option_type=OptionType.CALL,
        lags=tuple(100.0 + 0.5 * ((-1) ** i) + 0.01 * i for i in range(20)),
        midpoint=12.5,
        implied_vol=0.25,
    )
    fields.update(overrides)
    return OptionQuote(**fields)


def make_dataset(n: int, seed: int = 0, with_vols: bool = True) -> Dataset:
    """Random but plausible feature rows for model-level tests."""
    rng = np.random.default_rng(seed)
    spot = rng.uniform(50.0, 500.0, size=n)
    feats = np.empty((n, 26))
    feats[:, 0] = spot * rng.uniform(0.8, 1.2, size=n)  # strike
    feats[:, 1] = spot
    feats[:, 2] = rng.uniform(0.0, 0.06, size=n)  # rate
    feats[:, 3] = rng.uniform(0.0, 0.03, size=n)  # dividend yield
    feats[:, 4] = rng.uniform(0.05, 1.5, size=n)  # maturity
    feats[:, 5] = (rng.uniform(size=n) < 0.5).astype(float)  # is_call
    feats[:, 6:] = spot[:, None] * np.exp(rng.normal(0, 0.01, size=(n, 20)))
    targets = rng.uniform(0.5, 80.0, size=n)
    vols = rng.uniform(0.1, 0.8, size=n) if with_vols else np.full(n, np.nan)
    return Dataset(feats, targets, vols, np.arange(n), "synthetic")


@pytest.fixture
def quote() -> OptionQuote:
    return make_quote()
