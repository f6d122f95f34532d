"""Endogenous size and spatial spillovers.

Square footage is drawn with an error correlated with the price shock, and
prices feed back through a spatial lag.  Parking spaces serve as the
instrument for size; lagged attributes instrument the spatial lag.
"""
from spathedonic import (
    IvSpec,
    MarketDGP,
    ModelSpec,
    derive_columns,
    fit_2sls,
    fit_ols,
    fit_sar_gs2sls,
    render_report,
    simulate_market,
    weak_iv_test,
)

HEDONIC = ("lnsqft", "beds", "baths", "lndist_pch", "stories", "single_family")
EXOG = HEDONIC[1:]

dgp = MarketDGP(seed=21, lam=0.3, endogeneity=0.5)
raw, W, _ = simulate_market(dgp, return_weights=True)
ds = derive_columns(raw)
print(f"true lnsqft elasticity {dgp.beta['lnsqft']}, true spatial lag {dgp.lam}\n")

ols = fit_ols(ds, ModelSpec("lnprice", HEDONIC))
print(f"OLS lnsqft: {ols.coefficients['lnsqft']:.4f}  (biased upward by the shared shock)")

spec = IvSpec("lnprice", ("lnsqft",), ("parking",), EXOG)
print(render_report(weak_iv_test(ds, spec)))
iv = fit_2sls(ds, spec)
print(render_report(iv))

sar = fit_sar_gs2sls(ds, IvSpec("lnprice", exogenous=HEDONIC, weights=W))
print(render_report(sar))
print(f"spatial lag estimate {sar.coef[0]:.4f}, pseudo R2 {sar.extra['pseudo_r2']:.4f}")
# lnsqft enters the spatial model as exogenous, so its coefficient keeps the OLS bias
print(f"spatial-model lnsqft {sar.coefficients['lnsqft']:.4f} vs 2SLS {iv.coefficients['lnsqft']:.4f}")
