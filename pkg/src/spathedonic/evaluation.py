"""Train/test evaluation, the synthetic housing-market generator and a
Monte Carlo harness for checking estimators against known truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .dataset import BASE_COLUMNS, STYLES, PropertyDataset, derive_columns
from .errors import DataError, SpatHedonicError
from .regress import ModelSpec, design_matrix, ols
from .spatial import build_weights, point_distance


# --------------------------------------------------------------------------
# splitting and prediction metrics

def split_train_test(data, train_frac=0.8, seed=0, exact=False):
    """Random train/test partition of row positions.

    Each row is assigned to training independently with probability
    ``train_frac`` (``exact=True`` instead takes round(n * train_frac) rows
    without replacement).  Returns sorted (train, test) index arrays.
    """
    n = data if isinstance(data, (int, np.integer)) else len(data)
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie strictly between 0 and 1")
    if n < 2:
        raise DataError("need at least two rows to split")
    rng = np.random.default_rng(seed)
    if exact:
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[: int(round(n * train_frac))]] = True
    else:
        mask = rng.random(n) < train_frac
    train, test = np.flatnonzero(mask), np.flatnonzero(~mask)
    if train.size == 0 or test.size == 0:
        raise DataError(f"split with seed {seed} left an empty partition; try another seed")
    return train, test


@dataclass
class EvalReport:
    n_test: int
    rmse: float
    mae: float
    r2_test: float | None
    r2_ssr: float | None
    resid_mean: float
    resid_sd: float
    resid_skew: float | None
    n_train: int | None = None
    warnings: tuple = ()
    residuals: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        d = {k: v for k, v in vars(self).items() if k != "residuals"}
        d["warnings"] = list(self.warnings)
        return d

    def residuals_to_csv(self, path, extra=None):
        frame = pd.DataFrame({"residual": self.residuals})
        for name, values in (extra or {}).items():
            frame[name] = values
        frame.to_csv(path, index=False)


def evaluate_predictions(actual, predicted) -> EvalReport:
    """RMSE, MAE and squared actual/predicted correlation.

    ``r2_test`` is corr(actual, predicted)**2; ``r2_ssr`` is 1 - SSR/SST.
    When either vector is constant the correlation is undefined: ``r2_test``
    is None and a warning is recorded, but RMSE and MAE are still given.
    """
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.size == 0:
        raise DataError("actual and predicted must be non-empty and equal in length")
    r = a - p
    rmse = math.sqrt(float(np.mean(r ** 2)))
    mae = float(np.mean(np.abs(r)))
    warnings = []
    sa, sp = a.std(), p.std()
    if sa == 0 or sp == 0:
        r2 = None
        warnings.append("zero variance in actual or predicted values: r2 undefined")
    else:
        ac, pc = a - a.mean(), p - p.mean()
        r2 = float((ac @ pc) ** 2 / ((ac @ ac) * (pc @ pc)))
        r2 = min(max(r2, 0.0), 1.0)
    sst = float(((a - a.mean()) ** 2).sum())
    r2_ssr = 1 - float(r @ r) / sst if sst > 0 else None
    skew = float(stats.skew(r)) if r.size > 2 and np.ptp(r) > 1e-12 * max(1.0, np.abs(r).max()) \
        else None
    return EvalReport(
        n_test=a.size, rmse=rmse, mae=min(mae, rmse), r2_test=r2, r2_ssr=r2_ssr,
        resid_mean=float(r.mean()), resid_sd=float(r.std(ddof=1)) if r.size > 1 else 0.0,
        resid_skew=skew, warnings=tuple(warnings), residuals=r,
    )


def evaluate_holdout(data, spec: ModelSpec, train_frac=0.8, seed=0, exact=False):
    """Fit ``spec`` by OLS on a random training split and score the rest.

    Indicator columns that are empty in the training rows are omitted.
    Returns (fit, EvalReport).
    """
    d = design_matrix(data, spec)
    train, test = split_train_test(len(d.y), train_frac, seed, exact)
    Xt = d.X[train]
    live = [j for j in range(Xt.shape[1]) if np.any(Xt[:, j] != 0)]
    fit = ols(d.y[train], Xt[:, live], [d.names[j] for j in live], model="ols")
    pred = d.X[test][:, live] @ fit.coef
    report = evaluate_predictions(d.y[test], pred)
    report.n_train = int(train.size)
    return fit, report


# --------------------------------------------------------------------------
# synthetic market

DEFAULT_BETA = {
    "lnsqft": 0.9,
    "beds": -0.04,
    "baths": 0.1,
    "lndist_pch": 0.3,
    "stories": -0.12,
    "single_family": 0.15,
}
STYLE_PROBS = (0.905, 0.044, 0.035, 0.016)


@dataclass(frozen=True)
class MarketDGP:
    """Parameters of the synthetic coastal housing market.

    ``endogeneity`` is the correlation between the square-footage
    disturbance and the price error; ``instrument_strength`` is the
    first-stage effect of one parking space on log square footage.  The
    intercept is chosen so that mean log price is close to
    ``mean_lnprice``.  ``weights_cutoff`` is the inverse-distance band in
    degrees; ``None`` uses the median pairwise distance, which leaves the
    spatial lag weakly identified because WX is then nearly collinear with X.
    """

    n: int = 620
    beta: dict = field(default_factory=lambda: dict(DEFAULT_BETA))
    lam: float = 0.0
    endogeneity: float = 0.0
    instrument_strength: float = 0.25
    noise_sd: float = 0.4
    mean_lnprice: float = 14.6
    seed: int = 0
    weights_cutoff: float | None = 0.005
    # coastal strip end points and the highway reference point, (lat, lon)
    strip: tuple = ((33.445, -117.732), (33.495, -117.648))
    reference: tuple = (33.466, -117.697)
    cross_shore_sd: float = 0.006

    def __post_init__(self):
        if not -1 < self.lam < 1:
            raise ValueError("lam must lie in (-1, 1)")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if not -1 <= self.endogeneity <= 1:
            raise ValueError("endogeneity is a correlation and must lie in [-1, 1]")


def _sale_dates(rng, n):
    t = rng.integers(739, 773, size=n)  # Aug 2021 .. May 2024 as months since 1960
    return 1960 + t // 12, t % 12 + 1


def simulate_market(dgp: MarketDGP, return_weights=False):
    """Draw a synthetic sales table from ``dgp``.

    Coordinates are uniform along the coastal strip with Gaussian
    cross-shore jitter.  Log square footage loads on parking (instrument
    relevance) and on a disturbance correlated with the price error
    (endogeneity).  Log price solves (I - lam W) lnprice = X beta + e with W
    the row-standardized inverse-distance matrix from :func:`build_weights`.
    """
    rng = np.random.default_rng(dgp.seed)
    n = dgp.n
    (a_lat, a_lon), (b_lat, b_lon) = dgp.strip
    t = rng.random(n)
    d_lat, d_lon = b_lat - a_lat, b_lon - a_lon
    norm = math.hypot(d_lat, d_lon)
    jitter = rng.normal(0.0, dgp.cross_shore_sd, n)
    lat = a_lat + t * d_lat - jitter * d_lon / norm
    lon = a_lon + t * d_lon + jitter * d_lat / norm
    coords = np.column_stack([lat, lon])

    parking = np.minimum(1 + rng.poisson(1.25, n), 8)
    beds = np.minimum(2 + rng.poisson(1.5, n), 9)
    baths = np.minimum(1 + 0.5 * rng.poisson(3.0, n), 10.0)
    stories = 1 + rng.binomial(2, 0.37, n)
    style = np.array(STYLES)[rng.choice(len(STYLES), size=n, p=STYLE_PROBS)]
    v = rng.normal(size=n)
    e = rng.normal(size=n)
    rho = dgp.endogeneity
    eps = dgp.noise_sd * (rho * v + math.sqrt(1 - rho ** 2) * e)
    lnsqft = 7.65 + dgp.instrument_strength * (parking - 2.25) + 0.4 * v
    sqft = np.round(np.exp(lnsqft))
    lot = np.round(np.exp(rng.normal(8.7, 0.6, n)))
    year_built = rng.integers(1928, 2024, n)
    zipcode = rng.choice([92624, 92629], size=n, p=[0.25, 0.75])
    sale_year, sale_month = _sale_dates(rng, n)

    dist = point_distance(coords, dgp.reference)
    cols = {
        "lnsqft": np.log(sqft),
        "beds": beds.astype(float),
        "baths": baths,
        "lndist_pch": np.log(dist),
        "stories": stories.astype(float),
        "single_family": (style == "single_family").astype(float),
    }
    xb = sum(coef * cols[name] for name, coef in dgp.beta.items())
    intercept = dgp.mean_lnprice * (1 - dgp.lam) - float(np.mean(xb))
    W = build_weights(coords, cutoff=dgp.weights_cutoff, standardize=True)
    lnprice = linalg.solve(np.eye(n) - dgp.lam * W.matrix, intercept + xb + eps)

    frame = pd.DataFrame({
        "house_id": np.arange(1, n + 1),
        "price": np.exp(lnprice),
        "sqft": sqft,
        "lot_sqft": lot,
        "beds": beds,
        "baths": baths,
        "stories": stories,
        "parking": parking,
        "style": style,
        "zipcode": zipcode,
        "year_built": year_built,
        "latitude": lat,
        "longitude": lon,
        "sale_year": sale_year,
        "sale_month": sale_month,
        "address": [f"{k} Synthetic Coast Rd" for k in range(1, n + 1)],
    })[list(BASE_COLUMNS)]
    frame["dist_pch"] = dist
    from .dataset import _coerce_types
    ds = PropertyDataset(_coerce_types(frame))
    if return_weights:
        return ds, W, intercept
    return ds


# --------------------------------------------------------------------------
# Monte Carlo harness

HEDONIC = ("lnsqft", "beds", "baths", "lndist_pch", "stories", "single_family")
HEDONIC_EXOG = ("beds", "baths", "lndist_pch", "stories", "single_family")
IRRELEVANT = ("parking", "year_built", "lot_sqft")


def _prepare(dgp):
    ds, W, _ = simulate_market(dgp, return_weights=True)
    return derive_columns(ds), W


def _est_ols(dgp):
    ds, _ = _prepare(dgp)
    from .regress import fit_ols
    return fit_ols(ds, ModelSpec("lnprice", HEDONIC))


def _est_2sls(dgp):
    from .iv_sar import IvSpec, fit_2sls
    ds, _ = _prepare(dgp)
    return fit_2sls(ds, IvSpec("lnprice", ("lnsqft",), ("parking",), HEDONIC_EXOG))


def _est_gs2sls(dgp):
    from .iv_sar import IvSpec, fit_sar_gs2sls
    ds, W = _prepare(dgp)
    return fit_sar_gs2sls(ds, IvSpec("lnprice", exogenous=HEDONIC, weights=W))


def _est_weakiv(dgp):
    from .iv_sar import IvSpec, weak_iv_test
    ds, _ = _prepare(dgp)
    return weak_iv_test(ds, IvSpec("lnprice", ("lnsqft",), ("parking",), HEDONIC_EXOG))


def _est_lrtest(dgp):
    from .discrete import fit_binary, lr_test
    ds, _ = _prepare(dgp)
    restricted = fit_binary(ds, ModelSpec("pricedummy", HEDONIC), "probit")
    full = fit_binary(ds, ModelSpec("pricedummy", HEDONIC + IRRELEVANT), "probit")
    return lr_test(full, restricted)


ESTIMATORS: dict = {
    "ols": _est_ols,
    "2sls": _est_2sls,
    "gs2sls": _est_gs2sls,
    "weakiv": _est_weakiv,
    "lrtest": _est_lrtest,
}


@dataclass
class MonteCarloSummary:
    """Aggregated replication results.

    ``bias``, ``mc_se`` and ``coverage`` are keyed by parameter name for
    parameters with a known true value.  ``rejection_rate`` is keyed by
    parameter (H0: coefficient = 0) for fits, or holds a single ``"test"``
    entry for test statistics (H0 rejected, or instrument judged strong).
    """

    reps: int
    failures: int
    mean: dict
    bias: dict
    mc_se: dict
    coverage: dict
    rejection_rate: dict
    estimates: dict = field(repr=False, default_factory=dict)
    errors: list = field(repr=False, default_factory=list)

    @property
    def failure_rate(self):
        return self.failures / self.reps

    def to_dict(self):
        return {"reps": self.reps, "failures": self.failures,
                "failure_rate": self.failure_rate, "mean": self.mean, "bias": self.bias,
                "mc_se": self.mc_se, "coverage": self.coverage,
                "rejection_rate": self.rejection_rate}


def true_values(dgp: MarketDGP):
    truth = dict(dgp.beta)
    truth["lambda"] = dgp.lam
    return truth


def monte_carlo(dgp: MarketDGP, estimator: str | Callable, reps=200, alpha=0.05,
                truth=None) -> MonteCarloSummary:
    """Repeat ``estimator`` on fresh draws of ``dgp``.

    Replication ``i`` uses seed ``dgp.seed + i``.  ``estimator`` is a name
    from :data:`ESTIMATORS` or a callable taking a :class:`MarketDGP`.
    Failures inside a replication are counted, not raised.
    """
    if reps < 50:
        raise ValueError("monte_carlo needs at least 50 replications")
    fn = ESTIMATORS[estimator] if isinstance(estimator, str) else estimator
    truth = true_values(dgp) if truth is None else truth
    estimates, covered, rejected, tests = {}, {}, {}, []
    errors = []
    for i in range(reps):
        try:
            res = fn(replace(dgp, seed=dgp.seed + i))
        except SpatHedonicError as exc:
            errors.append((i, str(exc)))
            continue
        if hasattr(res, "coef") and hasattr(res, "conf_int"):
            lo, hi = res.conf_int(1 - alpha)
            for name, b, l, h, p in zip(res.names, res.coef, lo, hi, res.p):
                estimates.setdefault(name, []).append(float(b))
                rejected.setdefault(name, []).append(bool(p < alpha))
                if name in truth:
                    covered.setdefault(name, []).append(bool(l <= truth[name] <= h))
        elif hasattr(res, "conclusion"):
            tests.append(res.conclusion == "strong")
            estimates.setdefault("stat", []).append(float(res.stat))
        else:
            tests.append(bool(res.p < alpha))
            estimates.setdefault("stat", []).append(float(getattr(res, "chi2", np.nan)))

    mean = {k: float(np.mean(v)) for k, v in estimates.items()}
    bias = {k: mean[k] - truth[k] for k in estimates if k in truth}
    mc_se = {k: float(np.std(v, ddof=1) / math.sqrt(len(v))) for k, v in estimates.items()
             if len(v) > 1}
    coverage = {k: float(np.mean(v)) for k, v in covered.items()}
    rejection = {k: float(np.mean(v)) for k, v in rejected.items()}
    if tests:
        rejection["test"] = float(np.mean(tests))
    return MonteCarloSummary(reps, len(errors), mean, bias, mc_se, coverage, rejection,
                             {k: np.array(v) for k, v in estimates.items()}, errors)
