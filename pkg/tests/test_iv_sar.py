import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from spathedonic.errors import IdentificationError, RankDeficiencyError
from spathedonic.iv_sar import (
    STOCK_YOGO_SIZE_1_1,
    IvSpec,
    cragg_donald,
    fit_2sls,
    fit_sar_gs2sls,
    tsls,
    weak_iv_test,
)
from spathedonic.regress import ModelSpec, fit_ols, ols
from spathedonic.spatial import build_weights


def iv_frame(rng, n=200, strength=1.0, n_instr=1, rho=0.5):
    z = rng.normal(size=(n, n_instr))
    w = rng.normal(size=n)
    v = rng.normal(size=n)
    u = rho * v + np.sqrt(1 - rho ** 2) * rng.normal(size=n)
    x = strength * z.sum(axis=1) + 0.5 * w + v
    y = 1.0 + 2.0 * x - 1.0 * w + u
    cols = {"y": y, "x": x, "w": w}
    cols.update({f"z{j}": z[:, j] for j in range(n_instr)})
    return pd.DataFrame(cols)


def test_instrumenting_with_itself_is_ols():
    rng = np.random.default_rng(0)
    for _ in range(10):
        X = np.column_stack([np.ones(80), rng.normal(size=(80, 3))])
        y = X @ rng.normal(size=4) + rng.normal(size=80)
        a, b = tsls(y, X, X), ols(y, X)
        assert np.abs(a.coef - b.coef).max() <= 1e-10


def test_exactly_identified_matches_two_literal_stages():
    rng = np.random.default_rng(1)
    for _ in range(10):
        df = iv_frame(rng)
        fit = fit_2sls(df, IvSpec("y", ("x",), ("z0",), ("w",)))
        first = fit_ols(df, ModelSpec("x", ("z0", "w")))
        staged = df.assign(xhat=first.fitted)
        second = fit_ols(staged, ModelSpec("y", ("xhat", "w")))
        assert fit.names == ["_cons", "x", "w"]
        assert np.abs(fit.coef - second.coef).max() <= 1e-9
        Z = np.column_stack([np.ones(len(df)), df["z0"], df["w"]])
        X = np.column_stack([np.ones(len(df)), df["x"], df["w"]])
        assert_allclose(fit.coef, np.linalg.solve(Z.T @ X, Z.T @ df["y"]), rtol=1e-9)


def test_tsls_variance_and_residuals():
    rng = np.random.default_rng(2)
    df = iv_frame(rng, n_instr=2)
    fit = fit_2sls(df, IvSpec("y", ("x",), ("z0", "z1"), ("w",)))
    n = len(df)
    X = np.column_stack([np.ones(n), df["x"], df["w"]])
    Z = np.column_stack([np.ones(n), df["z0"], df["z1"], df["w"]])
    P = Z @ np.linalg.solve(Z.T @ Z, Z.T)
    beta = np.linalg.solve(X.T @ P @ X, X.T @ P @ df["y"])
    u = df["y"] - X @ beta
    assert_allclose(fit.coef, beta, rtol=1e-10)
    assert_allclose(fit.resid, u, atol=1e-10)
    assert_allclose(fit.vcov, (u @ u / n) * np.linalg.inv(X.T @ P @ X), rtol=1e-8)
    assert fit.stat_kind == "z"


def test_order_condition_and_overlap():
    with pytest.raises(IdentificationError):
        IvSpec("y", ("x", "w"), ("z0",))
    with pytest.raises(ValueError):
        IvSpec("y", ("x",), ("x",))


def test_irrelevant_instrument_not_identified():
    rng = np.random.default_rng(3)
    n = 50
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    with pytest.raises(RankDeficiencyError):
        tsls(rng.normal(size=n), X, np.column_stack([np.ones(n), np.zeros(n)]))
    with pytest.raises(IdentificationError):
        tsls(rng.normal(size=n), X, np.ones((n, 1)))
    # instrument orthogonal to both the constant and the regressor
    r = rng.normal(size=n)
    z = r - X @ np.linalg.lstsq(X, r, rcond=None)[0]
    with pytest.raises(IdentificationError):
        tsls(rng.normal(size=n), X, np.column_stack([np.ones(n), z]))


def partial_f(df, endog, excluded, included):
    full = fit_ols(df, ModelSpec(endog, tuple(excluded) + tuple(included)))
    restricted = fit_ols(df, ModelSpec(endog, tuple(included)))
    L = len(excluded)
    return ((restricted.ssr - full.ssr) / L) / (full.ssr / full.df_resid)


def test_min_eigenvalue_equals_first_stage_f():
    rng = np.random.default_rng(4)
    for i in range(20):
        L = 1 + i % 3
        df = iv_frame(rng, n=150, strength=rng.uniform(0.05, 1.0), n_instr=L)
        instr = tuple(f"z{j}" for j in range(L))
        rep = weak_iv_test(df, IvSpec("y", ("x",), instr, ("w",)))
        assert abs(rep.stat - partial_f(df, "x", instr, ("w",))) <= 1e-8 * max(1.0, rep.stat)


def test_stock_yogo_table_and_verdict():
    assert STOCK_YOGO_SIZE_1_1 == {0.10: 16.38, 0.15: 8.96, 0.20: 6.66, 0.25: 5.53}
    rng = np.random.default_rng(5)
    strong = weak_iv_test(iv_frame(rng, strength=1.0), IvSpec("y", ("x",), ("z0",), ("w",)))
    assert strong.conclusion == "strong"
    assert strong.critical_values == STOCK_YOGO_SIZE_1_1
    weak = weak_iv_test(iv_frame(rng, strength=0.0), IvSpec("y", ("x",), ("z0",), ("w",)))
    assert weak.conclusion == "weak"
    many = weak_iv_test(iv_frame(rng, n_instr=2), IvSpec("y", ("x",), ("z0", "z1"), ("w",)))
    assert many.conclusion is None and many.critical_values == {}


def test_cragg_donald_multiple_endogenous_symmetric():
    rng = np.random.default_rng(6)
    n = 300
    Z = rng.normal(size=(n, 3))
    X = Z @ rng.normal(size=(3, 2)) + rng.normal(size=(n, 2))
    a = cragg_donald(X, Z, np.ones((n, 1)))
    b = cragg_donald(X[:, ::-1], Z[:, ::-1], np.ones((n, 1)))
    assert_allclose(a, b, rtol=1e-10)
    assert a > 0


def sar_frame(seed, lam, n=150):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    W = build_weights(coords, cutoff=0.15)
    x1, x2 = rng.normal(size=n), rng.normal(size=n)
    y = np.linalg.solve(np.eye(n) - lam * W.matrix, 1 + x1 - 0.5 * x2 + 0.5 * rng.normal(size=n))
    return pd.DataFrame({"y": y, "x1": x1, "x2": x2}), W


def test_gs2sls_matches_dense_oracle():
    df, W = sar_frame(7, 0.4)
    fit = fit_sar_gs2sls(df, IvSpec("y", exogenous=("x1", "x2"), weights=W))
    M = W.matrix
    n = len(df)
    X = np.column_stack([np.ones(n), df["x1"], df["x2"]])
    H = np.column_stack([X, M @ X[:, 1:], M @ M @ X[:, 1:]])
    Xa = np.column_stack([M @ df["y"], X])
    P = H @ np.linalg.solve(H.T @ H, H.T)
    beta = np.linalg.solve(Xa.T @ P @ Xa, Xa.T @ P @ df["y"])
    assert fit.names[0] == "lambda"
    assert_allclose(fit.coef, beta, rtol=1e-9)
    pred = np.linalg.solve(np.eye(n) - beta[0] * M, X @ beta[1:])
    assert_allclose(fit.extra["pseudo_r2"], np.corrcoef(df["y"], pred)[0, 1] ** 2, rtol=1e-9)
    assert fit.extra["weights_digest"] == W.digest()


def test_gs2sls_zero_weights_falls_back():
    df, W = sar_frame(8, 0.0)
    fit = fit_sar_gs2sls(df, IvSpec("y", exogenous=("x1", "x2"), weights=np.zeros((150, 150))))
    ols_fit = fit_ols(df, ModelSpec("y", ("x1", "x2")))
    assert fit.extra["lambda"] == 0.0
    assert_allclose(fit.coef, ols_fit.coef, rtol=1e-10)
    assert "note" in fit.extra


def test_gs2sls_recovers_lambda_on_average():
    est = [fit_sar_gs2sls(df, IvSpec("y", exogenous=("x1", "x2"), weights=W)).coef[0]
           for df, W in (sar_frame(s, 0.5, 200) for s in range(30))]
    assert abs(np.mean(est) - 0.5) < 0.05
