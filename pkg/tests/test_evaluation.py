import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from spathedonic.dataset import derive_columns, load_csv, write_csv
from spathedonic.errors import DataError
from spathedonic.evaluation import (
    HEDONIC,
    MarketDGP,
    evaluate_holdout,
    evaluate_predictions,
    monte_carlo,
    simulate_market,
    split_train_test,
)
from spathedonic.regress import ModelSpec


def test_split_partition_properties():
    train, test = split_train_test(620, 0.8, seed=1)
    assert np.intersect1d(train, test).size == 0
    assert_array_equal(np.union1d(train, test), np.arange(620))
    again = split_train_test(620, 0.8, seed=1)
    assert_array_equal(again[0], train)
    # per-row uniform draws below 0.8
    u = np.random.default_rng(1).random(620)
    assert_array_equal(train, np.flatnonzero(u < 0.8))


def test_split_sizes_binomial_band():
    sizes = np.array([split_train_test(620, 0.8, seed=s)[0].size for s in range(1000)])
    # Binomial(620, 0.8): mean 496, sd 9.96; a +/-40 band is about 4 sd wide
    assert abs(sizes.mean() - 496) < 1.5
    assert 9.0 < sizes.std() < 11.0
    assert np.mean(np.abs(sizes - 496) > 40) <= 0.005
    exact = split_train_test(620, 0.8, seed=3, exact=True)[0]
    assert exact.size == 496


def test_split_errors():
    with pytest.raises(ValueError):
        split_train_test(10, 1.0)
    with pytest.raises(DataError):
        split_train_test(1, 0.5)
    with pytest.raises(DataError, match="seed"):
        split_train_test(2, 0.01, seed=0)


def test_evaluate_hand_values():
    rep = evaluate_predictions([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (rep.rmse, rep.mae, rep.r2_test) == (0.0, 0.0, 1.0)
    rep = evaluate_predictions([1.0, 3.0], [2.0, 2.0])
    assert rep.rmse == 1.0 and rep.mae == 1.0
    assert rep.r2_test is None and rep.warnings


def test_evaluate_direct_summation_oracle():
    rng = np.random.default_rng(0)
    a = rng.normal(size=123)
    p = a + rng.normal(0, 0.5, 123)
    rep = evaluate_predictions(a, p)
    r = a - p
    total_sq = 0.0
    total_abs = 0.0
    for v in r:
        total_sq += v * v
        total_abs += abs(v)
    assert abs(rep.rmse - np.sqrt(total_sq / 123)) <= 1e-12
    assert abs(rep.mae - total_abs / 123) <= 1e-12
    assert abs(rep.r2_test - stats.pearsonr(a, p)[0] ** 2) <= 1e-12
    assert_allclose(rep.r2_ssr, 1 - r @ r / ((a - a.mean()) ** 2).sum())
    assert_allclose(rep.resid_skew, stats.skew(r))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e6, 1e6)),
       st.floats(-1e3, 1e3))
def test_rmse_at_least_mae_and_shift_invariant(resid, c):
    actual = np.linspace(0, 1, resid.size)
    rep = evaluate_predictions(actual, actual - resid)
    assert rep.rmse >= rep.mae >= 0
    shifted = evaluate_predictions(actual + c, actual - resid + c)
    assert_allclose([shifted.rmse, shifted.mae], [rep.rmse, rep.mae], rtol=1e-6, atol=1e-6)


def test_holdout_report(market):
    fit, rep = evaluate_holdout(market, ModelSpec("lnprice", HEDONIC), 0.8, seed=2)
    assert rep.n_train + rep.n_test == len(market)
    assert 0 < rep.r2_test <= 1
    assert rep.rmse >= rep.mae


def test_simulate_deterministic_and_valid(tmp_path):
    dgp = MarketDGP(n=120, seed=5)
    a, b = simulate_market(dgp), simulate_market(dgp)
    pd.testing.assert_frame_equal(a.frame, b.frame)
    path = tmp_path / "sim.csv"
    write_csv(a, path, a.columns)
    back = load_csv(path)
    assert len(back) == 120 and back.rejects == ()
    assert_allclose(back["price"], a["price"], rtol=1e-15)


def test_lambda_zero_is_linear_index():
    dgp = MarketDGP(n=200, seed=6, lam=0.0)
    ds, W, intercept = simulate_market(dgp, return_weights=True)
    d = derive_columns(ds)
    xb = intercept + sum(b * d[name] for name, b in dgp.beta.items())
    eps = d["lnprice"] - xb
    assert abs(eps.mean()) < 0.1
    dgp3 = MarketDGP(n=200, seed=6, lam=0.3)
    ds3, W3, c3 = simulate_market(dgp3, return_weights=True)
    d3 = derive_columns(ds3)
    xb3 = c3 + sum(b * d3[name] for name, b in dgp3.beta.items())
    # same seed gives the same covariates and errors, so the SAR identity holds
    assert_allclose(d3["lnprice"] - 0.3 * W3.lag(d3["lnprice"]) - xb3, eps, atol=1e-12)
    assert_array_equal(W.matrix, W3.matrix)


def test_dgp_validation():
    with pytest.raises(ValueError):
        MarketDGP(lam=1.0)
    with pytest.raises(ValueError):
        MarketDGP(n=5)
    with pytest.raises(ValueError):
        MarketDGP(noise_sd=0.0)


def test_market_moments(market):
    assert abs(market["lnprice"].mean() - 14.6) < 0.1
    assert 0.5 < market["lnprice"].std() < 0.8


def test_monte_carlo_ols_recovers_beta():
    dgp = MarketDGP(n=300)
    res = monte_carlo(dgp, "ols", reps=60)
    assert res.failures == 0
    for name, b in res.bias.items():
        assert abs(b) <= 3 * res.mc_se[name] + 1e-12, name
    with pytest.raises(ValueError):
        monte_carlo(dgp, "ols", reps=10)


def test_monte_carlo_records_failures():
    def flaky(dgp):
        if dgp.seed % 10 == 0:
            raise DataError("boom")
        return evaluate_holdout(derive_columns(simulate_market(dgp)),
                                ModelSpec("lnprice", ("lnsqft",)))[0]

    res = monte_carlo(MarketDGP(n=60), flaky, reps=50)
    assert res.failures == 5 and res.failure_rate == 0.1
    assert len(res.estimates["lnsqft"]) == 45
