"""Logit and probit by Newton-Raphson, marginal effects, likelihood-ratio
tests and classification tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats

from .errors import (
    ConvergenceError,
    DataError,
    EstimationError,
    SeparationError,
)
from .regress import ModelSpec, _num, design_matrix, qr_solve

GRAD_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 30
SEPARATION_BOUND = 30.0


# --------------------------------------------------------------------------
# link functions

def _loglik(link, eta, y):
    q = 2 * y - 1
    if link == "logit":
        # log F(q*eta) = -log(1 + exp(-q*eta))
        return float(-np.logaddexp(0.0, -q * eta).sum())
    return float(special.log_ndtr(q * eta).sum())


def _derivatives(link, eta, y):
    """Per-observation score weight and negative-Hessian weight."""
    if link == "logit":
        p = special.expit(eta)
        return y - p, p * (1 - p)
    q = 2 * y - 1
    qe = q * eta
    # inverse Mills ratio phi(qe)/Phi(qe), computed in log space for the tails
    lam = q * np.exp(-0.5 * qe ** 2 - 0.5 * math.log(2 * math.pi) - special.log_ndtr(qe))
    return lam, lam * (lam + eta)


def cdf(link, eta):
    return special.expit(eta) if link == "logit" else special.ndtr(eta)


def pdf(link, eta):
    if link == "logit":
        p = special.expit(eta)
        return p * (1 - p)
    return np.exp(-0.5 * np.asarray(eta) ** 2) / math.sqrt(2 * math.pi)


@dataclass
class BinaryFit:
    """Maximum-likelihood binary-response fit.

    ``vcov`` is the inverse of the negative Hessian at the optimum.
    ``pseudo_r2`` is McFadden's 1 - loglik / loglik_null, with
    ``loglik_null`` the intercept-only log-likelihood.
    """

    link: str
    names: list
    coef: np.ndarray
    vcov: np.ndarray
    loglik: float
    loglik_null: float
    n: int
    iterations: int
    converged: bool
    gradient: np.ndarray
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    spec: dict = field(default_factory=dict)

    @property
    def coefficients(self):
        return dict(zip(self.names, self.coef))

    @property
    def pseudo_r2(self):
        if self.loglik_null == 0:
            return 0.0
        return 1 - self.loglik / self.loglik_null

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))

    @property
    def stat(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    @property
    def p(self):
        return 2 * stats.norm.sf(np.abs(self.stat))

    def conf_int(self, level=0.95):
        q = stats.norm.ppf(0.5 + level / 2)
        return self.coef - q * self.se, self.coef + q * self.se

    @property
    def k_params(self):
        return len(self.coef)

    @property
    def aic(self):
        return -2 * self.loglik + 2 * self.k_params

    @property
    def bic(self):
        return -2 * self.loglik + self.k_params * math.log(self.n)

    @property
    def lr_chi2(self):
        """LR statistic of this model against the intercept-only model."""
        return 2 * (self.loglik - self.loglik_null)

    stat_kind = "z"
    model = property(lambda self: self.link)

    def predict(self, X=None):
        X = self.X if X is None else np.asarray(X, dtype=float)
        return cdf(self.link, X @ self.coef)

    def to_dict(self):
        lo, hi = self.conf_int()
        rows = [
            {"name": nm, "coef": _num(b), "se": _num(s), "stat": _num(t), "p": _num(p),
             "ci_low": _num(a), "ci_high": _num(c)}
            for nm, b, s, t, p, a, c in zip(self.names, self.coef, self.se, self.stat, self.p,
                                            lo, hi)
        ]
        return {"model": self.link, "link": self.link, "spec": self.spec, "n": self.n,
                "coefficients": rows, "loglik": _num(self.loglik),
                "loglik_null": _num(self.loglik_null), "pseudo_r2": _num(self.pseudo_r2),
                "lr_chi2": _num(self.lr_chi2), "aic": _num(self.aic), "bic": _num(self.bic),
                "iterations": self.iterations, "converged": self.converged}

    def summary(self):
        from .report import render_text
        return render_text(self)


def null_loglik(y):
    """Intercept-only log-likelihood; identical for logit and probit."""
    y = np.asarray(y, dtype=float)
    n, m = len(y), y.sum()
    out = 0.0
    if m > 0:
        out += m * math.log(m / n)
    if m < n:
        out += (n - m) * math.log((n - m) / n)
    return out


def newton_binary(y, X, names=None, link="logit", max_iter=MAX_ITER):
    """Newton-Raphson maximization of the binary log-likelihood.

    Steps are halved (up to 30 times) whenever the log-likelihood would
    fall.  Convergence requires max |gradient| <= 1e-8.  A coefficient
    beyond +/-30 that keeps growing by more than one unit per step for three
    consecutive iterations is treated as perfect separation.

    Returns (coef, negative Hessian, loglik, gradient, iterations).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    names = names or [f"x{j}" for j in range(k)]
    # start at the intercept-only optimum
    beta = np.zeros(k)
    const = np.flatnonzero(np.all(X == 1.0, axis=0))
    if const.size:
        ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
        beta[const[0]] = math.log(ybar / (1 - ybar)) if link == "logit" \
            else float(special.ndtri(ybar))
    ll = _loglik(link, X @ beta, y)
    growth = np.zeros(k, dtype=int)
    for it in range(1, max_iter + 1):
        eta = X @ beta
        score_w, hess_w = _derivatives(link, eta, y)
        grad = X.T @ score_w
        info = (X * hess_w[:, None]).T @ X
        if np.abs(grad).max() <= GRAD_TOL:
            return beta, info, ll, grad, it - 1
        try:
            step = linalg.solve(info, grad, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            ll_new = _loglik(link, X @ cand, y)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t /= 2
        else:
            raise ConvergenceError("line search failed to increase the log-likelihood", beta)
        moved = cand - beta
        growing = (np.abs(cand) > SEPARATION_BOUND) & (np.sign(moved) == np.sign(cand)) \
            & (np.abs(moved) > 1.0)
        growth = np.where(growing, growth + 1, 0)
        if (growth >= 3).any():
            j = int(np.argmax(growth))
            raise SeparationError(names[j])
        beta, ll = cand, ll_new
    eta = X @ beta
    score_w, hess_w = _derivatives(link, eta, y)
    grad = X.T @ score_w
    if np.abs(grad).max() <= GRAD_TOL:
        return beta, (X * hess_w[:, None]).T @ X, ll, grad, max_iter
    raise ConvergenceError(f"no convergence after {max_iter} iterations "
                           f"(max |gradient| {np.abs(grad).max():.3g})", beta)


def fit_binary(data, spec: ModelSpec, link="logit") -> BinaryFit:
    """Logit or probit fit of a 0/1 response by Newton-Raphson."""
    if link not in ("logit", "probit"):
        raise ValueError(f"unknown link {link!r}")
    d = design_matrix(data, spec)
    y = d.y
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError(f"response {spec.response!r} must be coded 0/1")
    if y.min() == y.max():
        raise DataError(f"response {spec.response!r} has a single class")
    qr_solve(d.X, y, d.names)  # rank check with named columns
    beta, info, ll, grad, iters = newton_binary(y, d.X, d.names, link)
    vcov = linalg.inv(info)
    return BinaryFit(
        link=link, names=d.names, coef=beta, vcov=(vcov + vcov.T) / 2, loglik=ll,
        loglik_null=null_loglik(y), n=len(y), iterations=iters, converged=True,
        gradient=grad, X=d.X, y=y,
        spec={"response": spec.response, "regressors": list(spec.regressors),
              "factors": list(spec.factors)},
    )


def marginal_effects(fit: BinaryFit, at=None):
    """Marginal effects dPr(y=1)/dx_j = f(x'b) b_j evaluated at ``at``.

    ``at`` defaults to the column means of the estimation sample.  Returns a
    mapping from coefficient name to effect (the constant is skipped).
    """
    x = fit.X.mean(axis=0) if at is None else np.asarray(at, dtype=float)
    dens = float(pdf(fit.link, x @ fit.coef))
    return {nm: dens * b for nm, b in zip(fit.names, fit.coef) if nm != "_cons"}


@dataclass(frozen=True)
class LrTest:
    chi2: float
    df: int
    p: float

    def to_dict(self):
        return {"chi2": self.chi2, "df": self.df, "p": self.p}


def lr_test(unrestricted: BinaryFit, restricted: BinaryFit) -> LrTest:
    """Likelihood-ratio test of ``restricted`` nested in ``unrestricted``."""
    if unrestricted.n != restricted.n:
        raise EstimationError("models were fitted on different numbers of observations")
    missing = set(restricted.names) - set(unrestricted.names)
    if missing:
        raise EstimationError(f"models are not nested: {sorted(missing)} absent from the larger model")
    diff = unrestricted.loglik - restricted.loglik
    if diff < -1e-6:
        raise EstimationError("unrestricted log-likelihood below restricted: optimization failure")
    chi2 = max(2 * diff, 0.0)
    df = len(unrestricted.names) - len(restricted.names)
    p = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    return LrTest(chi2, df, p)


# --------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class ConfusionTable:
    tp: int
    fp: int
    fn: int
    tn: int
    threshold: float = 0.5

    @property
    def n(self):
        return self.tp + self.fp + self.fn + self.tn

    def metrics(self):
        """Rates in percent; None where the denominator is zero."""
        def pct(num, den):
            return 100.0 * num / den if den else None

        tp, fp, fn, tn = self.tp, self.fp, self.fn, self.tn
        return {
            "sensitivity": pct(tp, tp + fn),
            "specificity": pct(tn, tn + fp),
            "ppv": pct(tp, tp + fp),
            "npv": pct(tn, tn + fn),
            "false_pos_rate_true_neg": pct(fp, tn + fp),
            "false_neg_rate_true_pos": pct(fn, tp + fn),
            "false_pos_rate_classified_pos": pct(fp, tp + fp),
            "false_neg_rate_classified_neg": pct(fn, tn + fn),
            "accuracy": pct(tp + tn, self.n),
        }

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "threshold": self.threshold, "metrics": self.metrics()}


def classification_table(probs, actual, threshold=0.5) -> ConfusionTable:
    """Classify positive when the predicted probability is >= ``threshold``."""
    probs = np.asarray(probs, dtype=float)
    actual = np.asarray(actual)
    if probs.shape != actual.shape:
        raise DataError("probabilities and outcomes differ in length")
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    pred = probs >= threshold
    pos = actual != 0
    return ConfusionTable(int((pred & pos).sum()), int((pred & ~pos).sum()),
                          int((~pred & pos).sum()), int((~pred & ~pos).sum()), threshold)
