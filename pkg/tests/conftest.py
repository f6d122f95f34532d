import numpy as np
import pandas as pd
import pytest

from spathedonic.dataset import BASE_COLUMNS, derive_columns, write_csv
from spathedonic.evaluation import MarketDGP, simulate_market

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def market():
    """Derived 620-row synthetic market, lambda = 0."""
    return derive_columns(simulate_market(MarketDGP(seed=11)))


@pytest.fixture
def sales_frame():
    """Small valid sales table as a DataFrame of base columns."""
    rng = np.random.default_rng(3)
    n = 12
    return pd.DataFrame({
        "house_id": np.arange(1, n + 1),
        "price": rng.uniform(5e5, 3e6, n).round(),
        "sqft": rng.integers(800, 4000, n),
        "lot_sqft": rng.integers(2000, 9000, n),
        "beds": rng.integers(1, 6, n),
        "baths": rng.integers(2, 8, n) / 2,
        "stories": rng.integers(1, 3, n),
        "parking": rng.integers(0, 4, n),
        "style": ["single_family", "condo", "townhomes", "duplex_triplex"] * 3,
        "zipcode": [92629] * n,
        "year_built": rng.integers(1950, 2020, n),
        "latitude": 33.46 + rng.uniform(-0.02, 0.02, n),
        "longitude": -117.70 + rng.uniform(-0.03, 0.03, n),
        "sale_year": [2021, 2022, 2023, 2024] * 3,
        "sale_month": [8, 1, 12, 5] * 3,
        "address": [f"{i} Harbor Dr" for i in range(n)],
    })[list(BASE_COLUMNS)]


@pytest.fixture
def sales_csv(tmp_path, sales_frame):
    path = tmp_path / "sales.csv"
    sales_frame.to_csv(path, index=False)
    return path
