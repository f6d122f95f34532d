"""Least-squares core: OLS, fixed-effect absorption, sandwich variances,
fractional-polynomial search.

Everything funnels through :func:`ols`, which works on arrays.  The
``fit_*`` functions translate a :class:`ModelSpec` into a design matrix
first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from itertools import combinations

import numpy as np
from scipy import linalg, stats

from .errors import (
    DataError,
    EstimationError,
    InsufficientObservationsError,
    MissingColumnError,
    RankDeficiencyError,
)

RANK_TOL = 1e-10
VCE_KINDS = ("classical", "robust", "cluster")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a linear model.

    Parameters
    ----------
    response : str
    regressors : sequence of str
        Numeric columns entered as-is.
    factors : sequence of str
        Categorical columns expanded into indicator columns named
        ``"<level>.<column>"``; the lowest level is the omitted base.
    intercept : bool
    absorb : str, optional
        Grouping column whose fixed effects are swept out by demeaning.
    vce : {"classical", "robust", "cluster"}
    cluster : str, optional
        Grouping column for ``vce="cluster"``.
    """

    response: str
    regressors: tuple = ()
    factors: tuple = ()
    intercept: bool = True
    absorb: str | None = None
    vce: str = "classical"
    cluster: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.response in self.regressors or self.response in self.factors:
            raise ValueError(f"response {self.response!r} also listed as a regressor")
        if self.vce not in VCE_KINDS:
            raise ValueError(f"vce must be one of {VCE_KINDS}, got {self.vce!r}")
        if self.vce == "cluster" and not self.cluster:
            raise ValueError("vce='cluster' requires a cluster column")

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return ModelSpec(**data)

    def columns(self):
        cols = [self.response, *self.regressors, *self.factors]
        for extra in (self.absorb, self.cluster):
            if extra and extra not in cols:
                cols.append(extra)
        return cols


@dataclass
class FitResult:
    """Estimates and diagnostics from a fitted linear model.

    ``stat_kind`` is ``"t"`` (Student-t with ``df_inference`` degrees of
    freedom) or ``"z"`` (standard normal).  ``k_params`` counts every
    estimated mean parameter, including absorbed group effects; it feeds
    AIC and BIC.
    """

    names: list
    coef: np.ndarray
    vcov: np.ndarray
    n: int
    df_resid: int
    df_model: int
    resid: np.ndarray
    fitted: np.ndarray
    r2: float
    loglik: float
    k_params: int
    stat_kind: str = "t"
    df_inference: float | None = None
    model: str = "ols"
    vce: str = "classical"
    spec: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    dropped: tuple = ()

    @property
    def coefficients(self):
        return dict(zip(self.names, self.coef))

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))

    @property
    def stat(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    def _dist(self):
        if self.stat_kind == "z" or self.df_inference is None:
            return stats.norm
        return stats.t(self.df_inference)

    @property
    def p(self):
        return 2 * self._dist().sf(np.abs(self.stat))

    def conf_int(self, level=0.95):
        q = self._dist().ppf(0.5 + level / 2)
        return self.coef - q * self.se, self.coef + q * self.se

    @property
    def ssr(self):
        return float(self.resid @ self.resid)

    @property
    def root_mse(self):
        return math.sqrt(self.ssr / self.df_resid) if self.df_resid > 0 else math.nan

    @property
    def aic(self):
        return -2 * self.loglik + 2 * self.k_params

    @property
    def bic(self):
        return -2 * self.loglik + self.k_params * math.log(self.n)

    def index(self, name):
        return self.names.index(name)

    def to_dict(self):
        lo, hi = self.conf_int()
        rows = [
            {"name": name, "coef": _num(b), "se": _num(s), "stat": _num(t), "p": _num(p),
             "ci_low": _num(a), "ci_high": _num(c)}
            for name, b, s, t, p, a, c in zip(self.names, self.coef, self.se, self.stat,
                                              self.p, lo, hi)
        ]
        out = {
            "model": self.model,
            "spec": self.spec,
            "n": int(self.n),
            "df_resid": int(self.df_resid),
            "stat_kind": self.stat_kind,
            "vce": self.vce,
            "coefficients": rows,
            "r2": _num(self.r2),
            "root_mse": _num(self.root_mse),
            "loglik": _num(self.loglik),
            "aic": _num(self.aic),
            "bic": _num(self.bic),
        }
        if self.dropped:
            out["dropped"] = list(self.dropped)
        out.update({k: _jsonable(v) for k, v in self.extra.items()})
        return out

    def summary(self):
        from .report import render_text
        return render_text(self)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


# --------------------------------------------------------------------------
# design construction

def column(data, name):
    """Column ``name`` of a PropertyDataset, DataFrame or mapping as an array."""
    try:
        values = data[name]
    except KeyError:
        raise MissingColumnError(name) from None
    return np.asarray(values)


def _as_float(values, name):
    try:
        return np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        raise DataError(f"column {name!r} is not numeric") from None


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    names: list
    rows: np.ndarray          # boolean mask of rows kept after listwise deletion
    absorb: np.ndarray | None = None
    cluster: np.ndarray | None = None


def _missing(values):
    if values.dtype.kind in "fc":
        return np.isnan(values)
    if values.dtype.kind == "O":
        return np.array([v is None or (isinstance(v, float) and math.isnan(v)) for v in values])
    return np.zeros(len(values), dtype=bool)


def design_matrix(data, spec: ModelSpec, intercept=None) -> Design:
    """Response vector and design matrix for ``spec`` after listwise deletion."""
    intercept = spec.intercept if intercept is None else intercept
    raw = {name: column(data, name) for name in spec.columns()}
    n = len(raw[spec.response])
    keep = np.ones(n, dtype=bool)
    for values in raw.values():
        keep &= ~_missing(values)
    y = _as_float(raw[spec.response], spec.response)[keep]
    cols, names = [], []
    if intercept:
        cols.append(np.ones(keep.sum()))
        names.append("_cons")
    for name in spec.regressors:
        cols.append(_as_float(raw[name], name)[keep])
        names.append(name)
    for name in spec.factors:
        values = raw[name][keep]
        for level in np.unique(values)[1:]:
            cols.append((values == level).astype(float))
            names.append(f"{_level_label(level)}.{name}")
    X = np.column_stack(cols) if cols else np.empty((keep.sum(), 0))
    absorb = raw[spec.absorb][keep] if spec.absorb else None
    cluster = raw[spec.cluster][keep] if spec.cluster else None
    return Design(y, X, names, keep, absorb, cluster)


def _level_label(level):
    if isinstance(level, (float, np.floating)) and float(level).is_integer():
        return str(int(level))
    return str(level)


# --------------------------------------------------------------------------
# least-squares kernel

@dataclass
class _QR:
    coef: np.ndarray
    xtx_inv: np.ndarray
    rank: int


def _collinear_set(X, names, kept, dependent):
    """Columns involved in the first exact linear dependency."""
    target = X[:, dependent]
    basis = X[:, kept]
    sol, *_ = np.linalg.lstsq(basis, target, rcond=None)
    scale = np.abs(sol).max() if sol.size else 0.0
    involved = [names[kept[i]] for i in np.flatnonzero(np.abs(sol) > 1e-8 * max(scale, 1.0))]
    return involved + [names[dependent]]


def qr_solve(X, y, names=None) -> _QR:
    """Least squares via column-pivoted QR.

    Raises :class:`RankDeficiencyError` when a pivot falls below
    ``RANK_TOL * max|R_ii|``.
    """
    n, k = X.shape
    names = names or [f"x{j}" for j in range(k)]
    if k == 0:
        return _QR(np.empty(0), np.empty((0, 0)), 0)
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag.max() if diag.size else 0.0
    rank = int((diag > RANK_TOL * top).sum()) if top > 0 else 0
    if rank < k:
        dependent = [int(p) for p in piv[rank:]]
        kept = [int(p) for p in piv[:rank]]
        if rank == 0:
            raise RankDeficiencyError([names[j] for j in dependent],
                                      "design matrix has no non-zero column")
        raise RankDeficiencyError(_collinear_set(X, names, kept, dependent[0]))
    R = R[:k, :k]
    b = linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty(k)
    coef[piv] = b
    r_inv = linalg.solve_triangular(R, np.eye(k))
    inv_p = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = inv_p
    return _QR(coef, (xtx_inv + xtx_inv.T) / 2, rank)


def gaussian_loglik(ssr, n):
    """Profile Gaussian log-likelihood with the MLE variance SSR/n."""
    if ssr <= 0:
        return math.inf
    return -0.5 * n * (math.log(2 * math.pi) + math.log(ssr / n) + 1)


def _group_codes(labels):
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes.ravel()


def cluster_robust_vcov(X, resid, clusters, bread=None, n_params=None):
    """Cluster-robust sandwich variance.

    bread @ (sum_g X_g' u_g u_g' X_g) @ bread, scaled by
    G/(G-1) * (N-1)/(N-K).  ``bread`` defaults to inv(X'X); ``n_params``
    (K) defaults to the number of columns of X.
    """
    X = np.asarray(X, dtype=float)
    resid = np.asarray(resid, dtype=float)
    n, k = X.shape
    codes = _group_codes(clusters)
    G = int(codes.max()) + 1 if codes.size else 0
    if G < 2:
        raise EstimationError("cluster-robust variance needs at least two clusters")
    if bread is None:
        bread = qr_solve(X, resid).xtx_inv
    K = k if n_params is None else n_params
    scores = X * resid[:, None]
    sums = np.zeros((G, k))
    np.add.at(sums, codes, scores)
    meat = sums.T @ sums
    c = (G / (G - 1)) * ((n - 1) / (n - K))
    v = c * bread @ meat @ bread
    return (v + v.T) / 2


def robust_vcov(X, resid, bread=None, n_params=None):
    """HC1 heteroskedasticity-robust variance, scaled by N/(N-K)."""
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if bread is None:
        bread = qr_solve(X, resid).xtx_inv
    K = k if n_params is None else n_params
    scores = X * np.asarray(resid, dtype=float)[:, None]
    v = (n / (n - K)) * bread @ (scores.T @ scores) @ bread
    return (v + v.T) / 2


def ols(y, X, names=None, *, vce="classical", clusters=None, df_absorbed=0,
        centered=None, model="ols", spec=None, y_total=None) -> FitResult:
    """Ordinary least squares on arrays.

    Parameters
    ----------
    y, X : array
        Response (n,) and design (n, k).
    names : list of str, optional
    vce : {"classical", "robust", "cluster"}
    clusters : array, optional
        Cluster labels for ``vce="cluster"``.
    df_absorbed : int
        Extra parameters swept out before the call (absorbed effects);
        subtracted from the residual degrees of freedom.
    centered : bool, optional
        Whether R-squared uses the centered total sum of squares.  Defaults
        to whether ``X`` contains a constant column or effects were absorbed.
    y_total : array, optional
        Response used for the total sum of squares (the untransformed
        response when the caller demeaned ``y``).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    df_resid = n - k - df_absorbed
    if df_resid <= 0:
        raise InsufficientObservationsError(
            f"{n} observations cannot identify {k + df_absorbed} parameters")
    fit = qr_solve(X, y, names)
    fitted = X @ fit.coef
    resid = y - fitted
    ssr = float(resid @ resid)
    has_const = bool(k) and bool(np.any(np.all(X == X[0], axis=0) & (X[0] != 0)))
    if centered is None:
        centered = has_const or df_absorbed > 0
    yt = y if y_total is None else np.asarray(y_total, dtype=float)
    sst = float(((yt - yt.mean()) ** 2).sum()) if centered else float(yt @ yt)
    r2 = 1 - ssr / sst if sst > 0 else math.nan

    df_inf = float(df_resid)
    if vce == "classical":
        vcov = (ssr / df_resid) * fit.xtx_inv
    elif vce == "robust":
        vcov = robust_vcov(X, resid, fit.xtx_inv)
    elif vce == "cluster":
        if clusters is None:
            raise ValueError("vce='cluster' needs cluster labels")
        vcov = cluster_robust_vcov(X, resid, clusters, fit.xtx_inv)
        df_inf = float(len(np.unique(np.asarray(clusters))) - 1)
    else:
        raise ValueError(f"unknown vce {vce!r}")

    k_params = k + df_absorbed
    return FitResult(
        names=names, coef=fit.coef, vcov=vcov, n=n, df_resid=df_resid,
        df_model=k - int(has_const),
        resid=resid, fitted=fitted if y_total is None else yt - resid,
        r2=r2, loglik=gaussian_loglik(ssr, n), k_params=k_params,
        stat_kind="t", df_inference=df_inf, model=model, vce=vce, spec=spec or {},
    )


# --------------------------------------------------------------------------
# absorption

@dataclass
class Absorbed:
    """Within-group demeaned columns."""

    columns: dict
    df_absorbed: int
    groups: np.ndarray
    means: dict


def demean(values, codes, n_groups):
    """Subtract group means; ``codes`` are 0..n_groups-1."""
    values = np.asarray(values, dtype=float)
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    sums = np.zeros((n_groups,) + values.shape[1:])
    np.add.at(sums, codes, values)
    means = sums / counts.reshape((-1,) + (1,) * (values.ndim - 1))
    return values - means[codes], means


def absorb_transform(data, group, columns) -> Absorbed:
    """Demean ``columns`` within levels of the ``group`` column.

    Rows with a missing value in any involved column are dropped first.
    ``df_absorbed`` is the number of groups.
    """
    raw = {name: column(data, name) for name in [group, *columns]}
    keep = np.ones(len(raw[group]), dtype=bool)
    for v in raw.values():
        keep &= ~_missing(v)
    codes = _group_codes(raw[group][keep])
    G = int(codes.max()) + 1 if codes.size else 0
    out, means = {}, {}
    for name in columns:
        out[name], means[name] = demean(_as_float(raw[name], name)[keep], codes, G)
    return Absorbed(out, G, codes, means)


def fit_ols(data, spec: ModelSpec) -> FitResult:
    """Fit ``spec`` by least squares, absorbing ``spec.absorb`` if given.

    With absorption the response and regressors are demeaned within groups;
    when ``spec.intercept`` is set the grand means are added back so the
    reported constant is the average fixed effect.  Residual degrees of
    freedom are reduced by the number of absorbed groups.
    """
    d = design_matrix(data, spec, intercept=spec.intercept and not spec.absorb)
    info = {"response": spec.response, "regressors": list(spec.regressors),
            "factors": list(spec.factors), "absorb": spec.absorb, "vce": spec.vce,
            "cluster": spec.cluster}
    if not spec.absorb:
        return ols(d.y, d.X, d.names, vce=spec.vce, clusters=d.cluster, spec=info)

    codes = _group_codes(d.absorb)
    G = int(codes.max()) + 1
    y_dm, _ = demean(d.y, codes, G)
    X_dm, _ = demean(d.X, codes, G) if d.X.shape[1] else (d.X, None)
    names = list(d.names)
    if spec.intercept:
        y_w = y_dm + d.y.mean()
        X_w = np.column_stack([np.ones(len(d.y)), X_dm + d.X.mean(axis=0)]) if d.X.shape[1] \
            else np.ones((len(d.y), 1))
        names = ["_cons"] + names
        absorbed = G - 1
    else:
        y_w, X_w, absorbed = y_dm, X_dm, G
    res = ols(y_w, X_w, names, vce=spec.vce, clusters=d.cluster, df_absorbed=absorbed,
              centered=True, model="areg", spec=info, y_total=d.y)
    res.extra["n_absorbed"] = G
    return res


# --------------------------------------------------------------------------
# fractional polynomials

FP_POWERS = (-2, -1, -0.5, 0, 0.5, 1, 2, 3)


def fp_power(x, p):
    """x**p with the convention that power 0 means ln(x)."""
    x = np.asarray(x, dtype=float)
    return np.log(x) if p == 0 else x ** p


def fp_basis(x, powers):
    """Basis columns for an FP model; a repeated power p adds x**p * ln(x)."""
    cols = []
    for j, p in enumerate(powers):
        col = fp_power(x, p)
        if j > 0 and p == powers[j - 1]:
            col = col * np.log(x)
        cols.append(col)
    return np.column_stack(cols)


def fp_candidates(powers=FP_POWERS):
    """All degree-1 and degree-2 power combinations (44 for the default set)."""
    singles = [(p,) for p in powers]
    pairs = [tuple(c) for c in combinations(powers, 2)]
    repeats = [(p, p) for p in powers]
    return singles + pairs + repeats


def fp_scale(x):
    """Power-of-ten divisor bringing max(x) into [1, 10)."""
    top = float(np.max(np.abs(x)))
    return 10.0 ** math.floor(math.log10(top)) if top > 0 else 1.0


@dataclass
class FracPolyResult:
    powers: tuple
    deviance: float
    fit: FitResult
    scale: float
    candidates: list


def fracpoly_search(data, response, focus, covariates=(), scale=None, factors=()):
    """Search degree-2 fractional polynomials in ``focus``.

    The focus column is divided by ``scale`` (default: the power of ten
    just below its maximum) and must be strictly positive.  Every candidate
    from :func:`fp_candidates` is fitted by OLS together with the linear
    ``covariates``; the minimum-deviance model is returned, where deviance
    is minus twice the Gaussian log-likelihood.
    """
    spec = ModelSpec(response, tuple(covariates) + (focus,), factors=tuple(factors))
    d = design_matrix(data, spec)
    j = d.names.index(focus)
    x = d.X[:, j]
    base = np.delete(d.X, j, axis=1)
    base_names = [nm for nm in d.names if nm != focus]
    if scale is None:
        scale = fp_scale(x)
    x = x / scale
    if np.any(x <= 0):
        raise DataError(f"fractional polynomial needs {focus!r} strictly positive")
    results = []
    best = None
    for powers in fp_candidates():
        B = fp_basis(x, powers)
        fit = ols(d.y, np.column_stack([base, B]),
                  base_names + [f"{focus}__{i + 1}" for i in range(B.shape[1])],
                  model="fracpoly")
        dev = -2 * fit.loglik
        results.append((powers, dev))
        if best is None or dev < best[1]:
            best = (powers, dev, fit)
    powers, dev, fit = best
    fit.extra.update({"powers": list(powers), "deviance": dev, "scale": scale})
    return FracPolyResult(powers, dev, fit, scale, results)
