import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from spathedonic.errors import InsufficientObservationsError, RankDeficiencyError
from spathedonic.regress import (
    ModelSpec,
    cluster_robust_vcov,
    design_matrix,
    fit_ols,
    fp_basis,
    fp_candidates,
    fp_scale,
    fracpoly_search,
    gaussian_loglik,
    ols,
    robust_vcov,
)


def random_problem(rng, n=None, k=None):
    n = n or int(rng.integers(15, 200))
    k = k or int(rng.integers(1, min(10, n - 2) + 1))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    y = X @ rng.normal(size=k) + rng.normal(size=n)
    return y, X


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(0)
    for _ in range(50):
        y, X = random_problem(rng)
        fit = ols(y, X)
        beta = np.linalg.solve(X.T @ X, X.T @ y)
        assert_allclose(fit.coef, beta, rtol=1e-8, atol=1e-10)
        assert np.abs(X.T @ fit.resid).max() <= 1e-8
        s2 = fit.ssr / (len(y) - X.shape[1])
        assert_allclose(fit.vcov, s2 * np.linalg.inv(X.T @ X), rtol=1e-8, atol=1e-14)


def test_ols_summary_statistics():
    rng = np.random.default_rng(1)
    y, X = random_problem(rng, 80, 4)
    fit = ols(y, X)
    sst = ((y - y.mean()) ** 2).sum()
    assert_allclose(fit.r2, 1 - fit.ssr / sst)
    n = len(y)
    ll = -n / 2 * (np.log(2 * np.pi) + np.log(fit.ssr / n) + 1)
    assert_allclose(fit.loglik, ll)
    assert_allclose(fit.aic, -2 * ll + 2 * 4)
    assert_allclose(fit.bic, -2 * ll + 4 * np.log(n))
    t = fit.coef / fit.se
    assert_allclose(fit.p, 2 * stats.t.sf(np.abs(t), n - 4))
    lo, hi = fit.conf_int()
    q = stats.t.ppf(0.975, n - 4)
    assert_allclose(hi - lo, 2 * q * fit.se)
    assert fit.df_model == 3


def test_gaussian_loglik_perfect_fit():
    assert gaussian_loglik(0.0, 10) == np.inf


def test_rank_deficiency_names_columns():
    rng = np.random.default_rng(2)
    n = 40
    a, b = rng.normal(size=n), rng.normal(size=n)
    X = np.column_stack([np.ones(n), a, b, a + 2 * b])
    with pytest.raises(RankDeficiencyError) as err:
        ols(rng.normal(size=n), X, ["_cons", "a", "b", "ab"])
    assert set(err.value.columns) == {"a", "b", "ab"}


def test_too_few_observations():
    with pytest.raises(InsufficientObservationsError):
        ols(np.arange(3.0), np.ones((3, 3)))


def test_robust_vcov_hc1_oracle():
    rng = np.random.default_rng(3)
    y, X = random_problem(rng, 60, 3)
    fit = ols(y, X, vce="robust")
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = (X * fit.resid[:, None] ** 2).T @ X
    assert_allclose(fit.vcov, n / (n - k) * bread @ meat @ bread, rtol=1e-10)
    assert_allclose(robust_vcov(X, fit.resid), fit.vcov, rtol=1e-10)


def test_cluster_vcov_oracle():
    rng = np.random.default_rng(4)
    y, X = random_problem(rng, 90, 3)
    g = rng.integers(0, 7, 90)
    fit = ols(y, X, vce="cluster", clusters=g)
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    for c in np.unique(g):
        s = X[g == c].T @ fit.resid[g == c]
        meat += np.outer(s, s)
    G = len(np.unique(g))
    scale = G / (G - 1) * (n - 1) / (n - k)
    assert_allclose(fit.vcov, scale * bread @ meat @ bread, rtol=1e-10)
    assert fit.df_inference == G - 1
    # singleton clusters reduce to HC1
    one = cluster_robust_vcov(X, fit.resid, np.arange(n))
    assert_allclose(one, robust_vcov(X, fit.resid), rtol=1e-10)


def grouped_frame(rng, G=None, n=None):
    G = G or int(rng.integers(2, 12))
    n = n or int(rng.integers(G * 3, 150))
    g = np.concatenate([np.arange(G), rng.integers(0, G, n - G)])
    effects = rng.normal(0, 2, G)
    x1 = rng.normal(size=n) + effects[g]
    x2 = rng.normal(size=n)
    y = 1.5 * x1 - 0.5 * x2 + effects[g] + rng.normal(size=n)
    return pd.DataFrame({"y": y, "x1": x1, "x2": x2, "g": g})


def test_absorb_equals_dummy_regression():
    rng = np.random.default_rng(5)
    for _ in range(20):
        df = grouped_frame(rng)
        areg = fit_ols(df, ModelSpec("y", ("x1", "x2"), absorb="g"))
        lsdv = fit_ols(df, ModelSpec("y", ("x1", "x2"), factors=("g",)))
        for name in ("x1", "x2"):
            assert abs(areg.coefficients[name] - lsdv.coefficients[name]) <= 1e-9
        assert_allclose(areg.ssr, lsdv.ssr, rtol=1e-9)
        assert areg.df_resid == lsdv.df_resid
        assert_allclose(areg.se[1:], lsdv.se[1:3], rtol=1e-8)
        assert_allclose(areg.r2, lsdv.r2, rtol=1e-9)


def test_absorb_cluster_vcov():
    rng = np.random.default_rng(6)
    df = grouped_frame(rng, G=8, n=120)
    res = fit_ols(df, ModelSpec("y", ("x1",), absorb="g", vce="cluster", cluster="g"))
    assert res.vce == "cluster" and res.df_inference == 7
    assert np.all(np.isfinite(res.se))


def test_factor_dummies_and_listwise_deletion():
    df = pd.DataFrame({"y": [1.0, 2.0, 3.0, 4.0, np.nan, 6.0],
                       "x": [0.5, 1.0, 1.5, 3.0, 1.0, 2.0],
                       "s": ["b", "a", "c", "a", "b", "c"]})
    d = design_matrix(df, ModelSpec("y", ("x",), ("s",)))
    assert d.names == ["_cons", "x", "b.s", "c.s"]
    assert d.X.shape == (5, 4)
    assert d.rows.tolist() == [True, True, True, True, False, True]


def test_fp_candidates_and_basis():
    cands = fp_candidates()
    assert len(cands) == 44
    assert len(set(cands)) == 44
    x = np.array([0.5, 1.0, 2.0, 4.0])
    assert_allclose(fp_basis(x, (0,))[:, 0], np.log(x))
    assert_allclose(fp_basis(x, (2, 2)), np.column_stack([x ** 2, x ** 2 * np.log(x)]))
    assert_allclose(fp_basis(x, (0, 0)), np.column_stack([np.log(x), np.log(x) ** 2]))
    assert_allclose(fp_basis(x, (-0.5, 3)), np.column_stack([x ** -0.5, x ** 3]))
    assert fp_scale(np.array([120.0, 3400.0])) == 1000.0


def test_fracpoly_recovers_cubic():
    rng = np.random.default_rng(7)
    x = rng.uniform(1, 5, 300)
    df = pd.DataFrame({"y": 2 + 0.5 * x ** 3 + rng.normal(0, 0.1, 300), "x": x})
    res = fracpoly_search(df, "y", "x")
    assert 3 in res.powers
    assert len(res.candidates) == 44
    assert res.deviance == min(d for _, d in res.candidates)
    assert_allclose(res.deviance, -2 * res.fit.loglik)
