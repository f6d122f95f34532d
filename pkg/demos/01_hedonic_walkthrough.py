"""Hedonic price regressions on a simulated Dana Point market.

Run from the repository root:  python3 demos/01_hedonic_walkthrough.py
"""
import numpy as np

from spathedonic import (
    ModelSpec,
    MarketDGP,
    classification_table,
    derive_columns,
    evaluate_holdout,
    fit_binary,
    fit_ols,
    fracpoly_search,
    kmeans,
    lr_test,
    marginal_effects,
    oneway_anova_bartlett,
    render_report,
    simulate_market,
)

HEDONIC = ("lnsqft", "beds", "baths", "lndist_pch", "stories", "single_family")

ds = derive_columns(simulate_market(MarketDGP(seed=7)))
print(f"{len(ds)} sales, mean log price {ds['lnprice'].mean():.3f}\n")

# Baseline hedonic model with heteroskedasticity-robust errors
ols = fit_ols(ds, ModelSpec("lnprice", HEDONIC, vce="robust"))
print(render_report(ols))

# Neighborhoods from coordinates, then the same model with neighborhood effects absorbed
coords = np.column_stack([ds["latitude"], ds["longitude"]])
hood = kmeans(coords, 3, seed=7)
ds = ds.with_columns({"hood": hood.labels})
print(render_report(oneway_anova_bartlett(ds["lnprice"], hood.labels)))
areg = fit_ols(ds, ModelSpec("lnprice", HEDONIC, absorb="hood", vce="cluster", cluster="hood"))
print(render_report(areg))

# Functional form for square footage
fp = fracpoly_search(ds, "lnprice", "sqft", covariates=HEDONIC[1:])
print(f"best fractional-polynomial powers for sqft: {fp.powers}, deviance {fp.deviance:.2f}\n")

# Probability of an above-average price
logit = fit_binary(ds, ModelSpec("pricedummy", HEDONIC))
print(render_report(logit))
print("marginal effects at the means:",
      {k: round(v, 4) for k, v in marginal_effects(logit).items()})
print(render_report(classification_table(logit.predict(), ds["pricedummy"])))
small = fit_binary(ds, ModelSpec("pricedummy", ("lnsqft", "lndist_pch")))
lr = lr_test(logit, small)
print(f"LR test, full vs size+location only: chi2({lr.df}) = {lr.chi2:.2f}, p = {lr.p:.4g}\n")

# Out-of-sample accuracy of the baseline model
_, report = evaluate_holdout(ds, ModelSpec("lnprice", HEDONIC), train_frac=0.8, seed=7)
print(render_report(report))
