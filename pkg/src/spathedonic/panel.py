"""Within (fixed-effects) and random-effects GLS estimators, Hausman test.

The unit index need not be a house: any grouping column works, and with
one sale per house a cluster id is the natural unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .errors import DataError, EstimationError
from .regress import FitResult, ModelSpec, _group_codes, column, demean, design_matrix, ols


@dataclass(frozen=True)
class PanelIndex:
    unit: str
    time: str | None = None


def _check_unique(data, index, rows):
    if index.time is None:
        return
    unit = column(data, index.unit)[rows]
    time = column(data, index.time)[rows]
    pairs = set()
    for u, t in zip(unit.tolist(), time.tolist()):
        if (u, t) in pairs:
            raise DataError(f"(unit, time) pair ({u}, {t}) is not unique")
        pairs.add((u, t))


def _panel_design(data, index, spec):
    spec = spec.replace(absorb=None)
    if index.unit not in spec.columns():
        spec = spec.replace(absorb=index.unit)
    d = design_matrix(data, spec)
    units = column(data, index.unit)[d.rows]
    _check_unique(data, index, d.rows)
    return d, _group_codes(units)


def _info(spec, index, model):
    return {"response": spec.response, "regressors": list(spec.regressors),
            "factors": list(spec.factors), "unit": index.unit, "time": index.time,
            "model": model}


def fit_fe(data, index: PanelIndex, spec: ModelSpec) -> FitResult:
    """Within estimator: demean by unit, then OLS.

    Columns that are constant within every unit are annihilated by the
    transformation and reported in ``dropped``.  The constant is the grand
    mean added back, as in an absorbed regression.
    """
    d, codes = _panel_design(data, index, spec)
    G = int(codes.max()) + 1
    counts = np.bincount(codes)
    if counts.max() < 2:
        raise EstimationError("degenerate panel: every unit is observed once, "
                              "so the within transformation removes all variation")
    y_dm, _ = demean(d.y, codes, G)
    X_dm, _ = demean(d.X, codes, G)
    keep, dropped = [], []
    for j, name in enumerate(d.names):
        if name == "_cons":
            continue
        scale = max(np.abs(d.X[:, j]).max(), 1.0)
        if np.abs(X_dm[:, j]).max() <= 1e-10 * scale:
            dropped.append(name)
        else:
            keep.append(j)
    if spec.intercept:
        X_w = np.column_stack([np.ones(len(d.y))] + [X_dm[:, j] + d.X[:, j].mean() for j in keep])
        names = ["_cons"] + [d.names[j] for j in keep]
        y_w = y_dm + d.y.mean()
        absorbed = G - 1
    else:
        X_w = X_dm[:, keep]
        names = [d.names[j] for j in keep]
        y_w = y_dm
        absorbed = G
    clusters = column(data, spec.cluster)[d.rows] if spec.vce == "cluster" else None
    res = ols(y_w, X_w, names, vce=spec.vce, clusters=clusters, df_absorbed=absorbed,
              centered=True, model="fe", spec=_info(spec, index, "fe"), y_total=d.y)
    res.dropped = tuple(dropped)
    res.extra["n_units"] = G
    return res


def variance_components(d, codes, G):
    """Swamy-Arora estimates (sigma_u^2, sigma_e^2, clipped flag)."""
    counts = np.bincount(codes, minlength=G).astype(float)
    slopes = [j for j, nm in enumerate(d.names) if nm != "_cons"]
    y_dm, y_bar = demean(d.y, codes, G)
    X_dm, X_bar = demean(d.X[:, slopes], codes, G)
    varying = [j for j in range(len(slopes)) if np.abs(X_dm[:, j]).max() > 1e-12]
    Xw = X_dm[:, varying]
    if Xw.shape[1]:
        bw, *_ = np.linalg.lstsq(Xw, y_dm, rcond=None)
        e_w = y_dm - Xw @ bw
    else:
        e_w = y_dm
    df_w = len(d.y) - G - Xw.shape[1]
    if df_w <= 0:
        raise EstimationError("not enough within-unit variation to estimate sigma_e")
    sigma_e2 = float(e_w @ e_w) / df_w

    Xb = np.column_stack([np.ones(G), X_bar]) if len(slopes) else np.ones((G, 1))
    kb = np.linalg.matrix_rank(Xb)
    if G - kb <= 0:
        raise EstimationError("not enough units for the between regression")
    bb, *_ = np.linalg.lstsq(Xb, y_bar, rcond=None)
    e_b = y_bar - Xb @ bb
    sigma_b2 = float(e_b @ e_b) / (G - kb)
    t_bar = G / float((1.0 / counts).sum())
    sigma_u2 = sigma_b2 - sigma_e2 / t_bar
    clipped = sigma_u2 < 0
    return max(sigma_u2, 0.0), sigma_e2, clipped


def fit_re(data, index: PanelIndex, spec: ModelSpec, theta=None) -> FitResult:
    """Random-effects GLS via quasi-demeaning.

    theta_i = 1 - sqrt(sigma_e^2 / (sigma_e^2 + T_i sigma_u^2)) with
    Swamy-Arora variance components; the transformed model
    y - theta_i ybar_i on X - theta_i Xbar_i is fitted by OLS.  A negative
    sigma_u^2 estimate is clipped to zero and flagged.  Passing ``theta``
    (scalar) fixes the transformation instead.
    """
    d, codes = _panel_design(data, index, spec)
    G = int(codes.max()) + 1
    if G < 2:
        raise EstimationError("random effects need at least two units")
    counts = np.bincount(codes, minlength=G).astype(float)
    if theta is None:
        sigma_u2, sigma_e2, clipped = variance_components(d, codes, G)
        th = 1 - np.sqrt(sigma_e2 / (sigma_e2 + counts * sigma_u2))
    else:
        sigma_u2 = sigma_e2 = math.nan
        clipped = False
        th = np.full(G, float(theta))
    _, y_bar = demean(d.y, codes, G)
    _, X_bar = demean(d.X, codes, G)
    t_obs = th[codes]
    y_s = d.y - t_obs * y_bar[codes]
    X_s = d.X - t_obs[:, None] * X_bar[codes]
    live = [j for j in range(X_s.shape[1]) if np.abs(X_s[:, j]).max() > 1e-12]
    dropped = tuple(d.names[j] for j in range(X_s.shape[1]) if j not in live)
    clusters = column(data, spec.cluster)[d.rows] if spec.vce == "cluster" else None
    res = ols(y_s, X_s[:, live], [d.names[j] for j in live], vce=spec.vce, clusters=clusters,
              centered=True, model="re", spec=_info(spec, index, "re"), y_total=d.y)
    if theta is None and spec.vce == "classical":
        # GLS variance uses the idiosyncratic variance, not the transformed-residual scale
        fit_scale = res.ssr / res.df_resid
        res.vcov = res.vcov * (sigma_e2 / fit_scale) if fit_scale > 0 else res.vcov
    res.stat_kind = "z"
    res.dropped = dropped
    res.extra.update({
        "theta": th if len(np.unique(th)) > 1 else float(th[0]),
        "sigma_u": math.sqrt(sigma_u2) if sigma_u2 == sigma_u2 else math.nan,
        "sigma_e": math.sqrt(sigma_e2) if sigma_e2 == sigma_e2 else math.nan,
        "sigma_u_clipped": bool(clipped),
        "n_units": G,
    })
    return res


@dataclass(frozen=True)
class HausmanTest:
    H: float
    df: int
    p: float
    names: tuple

    def to_dict(self):
        return {"H": self.H, "df": self.df, "p": self.p, "coefficients": list(self.names)}


def hausman_test(fe: FitResult, re: FitResult, names=None) -> HausmanTest:
    """Hausman contrast of FE against RE over the common slopes.

    H = d' (V_FE - V_RE)^+ d with d = b_FE - b_RE.  The generalized inverse
    keeps eigenvalues above 1e-10 of the largest in magnitude, and df is the
    number retained (the rank of the variance difference when it is PSD).
    """
    if names is None:
        names = [nm for nm in fe.names if nm in re.names and nm != "_cons"]
    names = list(names)
    if not names:
        raise EstimationError("FE and RE fits share no slope coefficients")
    i_fe = [fe.index(nm) for nm in names]
    i_re = [re.index(nm) for nm in names]
    d = fe.coef[i_fe] - re.coef[i_re]
    V = fe.vcov[np.ix_(i_fe, i_fe)] - re.vcov[np.ix_(i_re, i_re)]
    V = (V + V.T) / 2
    eigval, eigvec = linalg.eigh(V)
    top = np.abs(eigval).max() if eigval.size else 0.0
    keep = eigval > 1e-10 * top if top > 0 else np.zeros_like(eigval, dtype=bool)
    df = int(keep.sum())
    if df == 0:
        return HausmanTest(0.0, 0, 1.0, tuple(names))
    # generalized inverse over the positive eigenspace, so H cannot go negative
    proj = eigvec[:, keep].T @ d
    H = float((proj ** 2 / eigval[keep]).sum())
    return HausmanTest(H, df, float(stats.chi2.sf(H, df)), tuple(names))
