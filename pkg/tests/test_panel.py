import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from spathedonic.errors import DataError, EstimationError
from spathedonic.panel import PanelIndex, fit_fe, fit_re, hausman_test
from spathedonic.regress import ModelSpec, fit_ols

SPEC = ModelSpec("y", ("x",))
INDEX = PanelIndex("unit", "t")


def panel(seed, G=30, T=4, corr=0.0, sigma_u=1.0, sigma_e=1.0, balanced=True):
    rng = np.random.default_rng(seed)
    sizes = np.full(G, T) if balanced else rng.integers(2, T + 3, G)
    unit = np.repeat(np.arange(G), sizes)
    t = np.concatenate([np.arange(s) for s in sizes])
    u = rng.normal(0, sigma_u, G)
    x = corr * u[unit] + rng.normal(size=unit.size)
    z = rng.normal(size=unit.size)
    y = 1.0 + 2.0 * x - 0.5 * z + u[unit] + rng.normal(0, sigma_e, unit.size)
    return pd.DataFrame({"y": y, "x": x, "z": z, "unit": unit, "t": t})


def test_single_unit_equals_ols():
    df = panel(0, G=1, T=25)
    fe = fit_fe(df, INDEX, SPEC)
    ols = fit_ols(df, SPEC)
    assert_allclose(fe.coef, ols.coef, atol=1e-10)


def test_fe_equals_dummy_variable_regression():
    for seed in range(5):
        df = panel(seed, G=2, T=8, corr=0.7)
        fe = fit_fe(df, INDEX, ModelSpec("y", ("x", "z")))
        lsdv = fit_ols(df, ModelSpec("y", ("x", "z"), factors=("unit",)))
        for name in ("x", "z"):
            assert abs(fe.coefficients[name] - lsdv.coefficients[name]) <= 1e-10
        assert_allclose(fe.se[1:], lsdv.se[1:3], rtol=1e-9)
        assert fe.df_resid == lsdv.df_resid


def test_singleton_panel_is_degenerate():
    df = panel(1, G=20, T=1)
    with pytest.raises(EstimationError, match="degenerate"):
        fit_fe(df, INDEX, SPEC)


def test_duplicate_unit_time_rejected():
    df = panel(2, G=3, T=3)
    df.loc[1, "t"] = 0
    with pytest.raises(DataError):
        fit_fe(df, INDEX, SPEC)


def test_unit_constant_column_dropped():
    df = panel(3, corr=0.5)
    df["const_in_unit"] = np.sin(df["unit"])
    a = fit_fe(df, INDEX, ModelSpec("y", ("x", "z")))
    b = fit_fe(df, INDEX, ModelSpec("y", ("x", "const_in_unit", "z")))
    assert b.dropped == ("const_in_unit",)
    assert_allclose(b.coef, a.coef, atol=1e-10)


def test_re_theta_limits():
    df = panel(4, balanced=False)
    pooled = fit_ols(df, ModelSpec("y", ("x", "z")))
    re0 = fit_re(df, INDEX, ModelSpec("y", ("x", "z")), theta=0.0)
    assert_allclose(re0.coef, pooled.coef, atol=1e-9)
    fe = fit_fe(df, INDEX, ModelSpec("y", ("x", "z")))
    re1 = fit_re(df, INDEX, ModelSpec("y", ("x", "z")), theta=1.0)
    assert "_cons" in re1.dropped
    assert_allclose([re1.coefficients["x"], re1.coefficients["z"]],
                    [fe.coefficients["x"], fe.coefficients["z"]], atol=1e-9)


def test_re_clipped_variance_gives_pooled_ols():
    rng = np.random.default_rng(5)
    G, T = 25, 4
    unit = np.repeat(np.arange(G), T)
    x = rng.normal(size=G * T)
    x -= np.repeat(x.reshape(G, T).mean(axis=1), T)  # identical unit means
    e = rng.normal(size=G * T)
    e -= np.repeat(e.reshape(G, T).mean(axis=1), T)
    df = pd.DataFrame({"y": 3 + x + e, "x": x, "unit": unit, "t": np.tile(np.arange(T), G)})
    re = fit_re(df, INDEX, SPEC)
    assert re.extra["sigma_u_clipped"] and re.extra["sigma_u"] == 0.0
    assert re.extra["theta"] == 0.0
    assert_allclose(re.coef, fit_ols(df, SPEC).coef, atol=1e-9)


def test_re_approaches_fe_when_unit_variance_dominates():
    df = panel(6, G=40, T=5, sigma_u=1e3, sigma_e=1.0)
    re = fit_re(df, INDEX, SPEC)
    fe = fit_fe(df, INDEX, SPEC)
    assert abs(re.coefficients["x"] - fe.coefficients["x"]) <= 1e-3


def test_re_matches_dense_gls():
    df = panel(7, G=15, T=2)
    re = fit_re(df, INDEX, ModelSpec("y", ("x", "z")))
    su2, se2 = re.extra["sigma_u"] ** 2, re.extra["sigma_e"] ** 2
    unit = df["unit"].to_numpy()
    omega = se2 * np.eye(len(df)) + su2 * (unit[:, None] == unit[None, :])
    X = np.column_stack([np.ones(len(df)), df["x"], df["z"]])
    oi = np.linalg.inv(omega)
    beta = np.linalg.solve(X.T @ oi @ X, X.T @ oi @ df["y"])
    assert_allclose(re.coef, beta, atol=1e-8)
    assert_allclose(re.vcov, np.linalg.inv(X.T @ oi @ X), rtol=1e-8)
    assert 0 < re.extra["theta"] < 1


def test_hausman_identical_and_order_invariant():
    df = panel(8, corr=0.3)
    fe = fit_fe(df, INDEX, ModelSpec("y", ("x", "z")))
    same = hausman_test(fe, fe)
    assert same.H == 0.0 and same.p == 1.0
    re = fit_re(df, INDEX, ModelSpec("y", ("x", "z")))
    a = hausman_test(fe, re, ["x", "z"])
    b = hausman_test(fe, re, ["z", "x"])
    assert_allclose(a.H, b.H, rtol=1e-10)
    assert a.H >= 0 and a.df == 2
    d = fe.coef[1:] - re.coef[1:]
    V = fe.vcov[1:, 1:] - re.vcov[1:, 1:]
    assert_allclose(a.H, d @ np.linalg.solve(V, d), rtol=1e-8)


def test_hausman_no_common_slopes():
    df = panel(9)
    fe = fit_fe(df, INDEX, ModelSpec("y", ("x",)))
    re = fit_re(df, INDEX, ModelSpec("y", ("z",)))
    with pytest.raises(EstimationError):
        hausman_test(fe, re)


def hausman_rejection(corr, reps=400):
    hits = 0
    for r in range(reps):
        df = panel(1000 + r, G=50, T=4, corr=corr)
        res = hausman_test(fit_fe(df, INDEX, SPEC), fit_re(df, INDEX, SPEC))
        hits += res.p < 0.05
    return hits / reps


def test_hausman_size_and_power():
    size = hausman_rejection(0.0)
    assert abs(size - 0.05) <= 0.03
    power = hausman_rejection(0.6)
    assert power > 0.80
