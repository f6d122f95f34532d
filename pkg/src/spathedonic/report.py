"""Text, JSON and CSV rendering of fit and test results."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

import numpy as np

from .regress import _jsonable

STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))
STAR_LEGEND = "*** p<.01, ** p<.05, * p<.1"


def stars(p):
    """Significance marker for a p-value."""
    if p is None or not math.isfinite(p):
        return ""
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


def fmt(x):
    """Six significant digits; blank for missing values."""
    if x is None:
        return "."
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "." if not math.isfinite(x) else f"{float(x):.6g}"
    return str(x)


def as_dict(result):
    """JSON-ready dictionary for any result object."""
    from .regress import FracPolyResult
    from .spatial import ClusterAssignment, Dendrogram

    if isinstance(result, FracPolyResult):
        out = result.fit.to_dict()
        out["candidates"] = [{"powers": list(p), "deviance": d} for p, d in result.candidates]
        return _jsonable(out)
    if isinstance(result, ClusterAssignment):
        return _jsonable({"k": result.k, "labels": result.labels,
                          "sizes": result.sizes(), "within_ss": result.within_ss,
                          "history": list(result.history), "iterations": result.iterations,
                          "converged": result.converged})
    if isinstance(result, Dendrogram):
        return _jsonable({"n": result.n, "linkage": result.linkage, "merges": result.merges})
    if hasattr(result, "to_dict"):
        return _jsonable(result.to_dict())
    if dataclasses.is_dataclass(result):
        return _jsonable(dataclasses.asdict(result))
    if isinstance(result, dict):
        return _jsonable(result)
    raise TypeError(f"cannot render {type(result).__name__}")


def to_json(result):
    return json.dumps(as_dict(result), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# text

def _table(header, rows, left=1):
    """Right-aligned columns; the first ``left`` columns are left-aligned."""
    cells = [list(header)] + [[fmt(c) if not isinstance(c, str) else c for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = []
    for i, r in enumerate(cells):
        parts = [c.ljust(w) if j < left else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(parts).rstrip())
        if i == 0:
            lines.append("-" * len(lines[0]))
    return lines


def _coef_table(res):
    stat_label = "t-value" if getattr(res, "stat_kind", "z") == "t" else "z-value"
    lo, hi = res.conf_int()
    rows = [[nm, b, s, t, p, a, c, stars(p)]
            for nm, b, s, t, p, a, c in zip(res.names, res.coef, res.se, res.stat, res.p, lo, hi)]
    return _table(["", "Coef.", "St.Err.", stat_label, "p-value", "[95% Conf", "Interval]", "Sig"],
                  rows)


def _kv(pairs):
    width = max(len(k) for k, _ in pairs)
    return [f"{k.ljust(width)} = {fmt(v)}" for k, v in pairs]


def _render_fit(res):
    d = res.to_dict()
    spec = d.get("spec") or {}
    title = f"{d['model']} regression"
    if spec.get("response"):
        title += f" of {spec['response']}"
    lines = [title, ""]
    keys = ["n", "r2", "pseudo_r2", "root_mse", "loglik", "loglik_null", "lr_chi2", "aic", "bic",
            "lambda", "wald_chi2", "theta", "sigma_u", "sigma_e", "n_clusters", "n_units",
            "iterations", "powers", "deviance"]
    pairs = [(k, d[k]) for k in keys if k in d and not isinstance(d[k], (list, dict))]
    if isinstance(d.get("powers"), list):
        pairs.append(("powers", " ".join(fmt(p) for p in d["powers"])))
    if "vce" in d:
        pairs.append(("vce", d["vce"]))
    lines += _kv(pairs) + [""]
    lines += _coef_table(res)
    if d.get("dropped"):
        lines.append(f"omitted: {', '.join(d['dropped'])}")
    if d.get("note"):
        lines.append(f"note: {d['note']}")
    lines.append(STAR_LEGEND)
    return lines


def _render_confusion(tab):
    grid = [
        ["+", tab.tp, tab.fp, tab.tp + tab.fp],
        ["-", tab.fn, tab.tn, tab.fn + tab.tn],
        ["Total", tab.tp + tab.fn, tab.fp + tab.tn, tab.n],
    ]
    lines = [f"Classified positive if Pr(y=1) >= {fmt(tab.threshold)}", ""]
    lines += _table(["Classified", "D", "~D", "Total"], grid)
    m = tab.metrics()
    labels = [
        ("Sensitivity", "Pr( +| D)", "sensitivity"),
        ("Specificity", "Pr( -|~D)", "specificity"),
        ("Positive predictive value", "Pr( D| +)", "ppv"),
        ("Negative predictive value", "Pr(~D| -)", "npv"),
        ("False + rate for true ~D", "Pr( +|~D)", "false_pos_rate_true_neg"),
        ("False - rate for true D", "Pr( -| D)", "false_neg_rate_true_pos"),
        ("False + rate for classified +", "Pr(~D| +)", "false_pos_rate_classified_pos"),
        ("False - rate for classified -", "Pr( D| -)", "false_neg_rate_classified_neg"),
    ]
    rows = [[a, b, "." if m[k] is None else f"{m[k]:.2f}%"] for a, b, k in labels]
    rows.append(["Correctly classified", "", "." if m["accuracy"] is None else f"{m['accuracy']:.2f}%"])
    lines += [""] + _table(["", "", ""], rows, left=2)[2:]
    return lines


def _render_weakiv(rep):
    lines = _kv([("minimum eigenvalue statistic", rep.stat),
                 ("endogenous regressors", rep.n_endogenous),
                 ("excluded instruments", rep.n_instruments)])
    if rep.critical_values:
        sizes = sorted(rep.critical_values)
        lines += ["", "Critical values (2SLS size of nominal 5% Wald test)"]
        lines += _table(["", *[f"{int(round(s * 100))}%" for s in sizes]],
                        [["", *[f"{rep.critical_values[s]:.2f}" for s in sizes]]])
    if rep.conclusion:
        lines.append(f"conclusion at {int(round(rep.size * 100))}% maximal size: {rep.conclusion}")
    return lines


def _render_anova(res):
    rows = [["Between groups", res.ss_between, res.df_between, res.ms_between, res.F, res.p_F],
            ["Within groups", res.ss_within, res.df_within, res.ms_within, "", ""],
            ["Total", res.ss_between + res.ss_within, res.df_between + res.df_within,
             (res.ss_between + res.ss_within) / (res.df_between + res.df_within), "", ""]]
    lines = _table(["Source", "SS", "df", "MS", "F", "Prob > F"], rows)
    if res.bartlett_chi2 is None:
        lines.append(f"Bartlett's test unavailable: {res.note}")
    else:
        lines.append(f"Bartlett's test for equal variances: chi2({res.df_b}) = "
                     f"{fmt(res.bartlett_chi2)}  Prob>chi2 = {fmt(res.p_b)}")
    return lines


def _render_describe(ds):
    rows = [[name, s.n, s.mean, s.sd, s.min, s.max] for name, s in ds.columns.items()]
    return _table(["Variable", "Obs", "Mean", "Std. Dev.", "Min", "Max"], rows)


def _render_generic(d, prefix=""):
    lines = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            lines += _render_generic(v, prefix + k + ".")
        elif isinstance(v, list):
            if len(v) <= 12 and all(not isinstance(x, (list, dict)) for x in v):
                lines.append(f"{prefix}{k} = {' '.join(fmt(x) for x in v)}")
            else:
                lines.append(f"{prefix}{k} = [{len(v)} values]")
        else:
            lines.append(f"{prefix}{k} = {fmt(v)}")
    return lines


def render_text(result) -> str:
    """Aligned plain-text rendering of a result."""
    from .dataset import DescriptiveStats
    from .discrete import ConfusionTable
    from .iv_sar import WeakIvReport
    from .regress import FracPolyResult
    from .spatial import AnovaResult

    if isinstance(result, FracPolyResult):
        lines = _render_fit(result.fit)
    elif hasattr(result, "coef") and hasattr(result, "conf_int"):
        lines = _render_fit(result)
    elif isinstance(result, ConfusionTable):
        lines = _render_confusion(result)
    elif isinstance(result, WeakIvReport):
        lines = _render_weakiv(result)
    elif isinstance(result, AnovaResult):
        lines = _render_anova(result)
    elif isinstance(result, DescriptiveStats):
        lines = _render_describe(result)
    else:
        lines = _render_generic(as_dict(result))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# csv

def csv_rows(result):
    """Plot-ready (header, rows) for a result."""
    from .evaluation import EvalReport
    from .regress import FracPolyResult
    from .spatial import ClusterAssignment, Dendrogram

    if isinstance(result, FracPolyResult):
        return (["powers", "deviance"],
                [[" ".join(fmt(p) for p in pw), repr(float(dv))] for pw, dv in result.candidates])
    if hasattr(result, "coef") and hasattr(result, "conf_int"):
        lo, hi = result.conf_int()
        return (["name", "coef", "se", "stat", "p", "ci_low", "ci_high"],
                [[nm, *map(lambda v: repr(float(v)), row)]
                 for nm, *row in zip(result.names, result.coef, result.se, result.stat,
                                     result.p, lo, hi)])
    if isinstance(result, EvalReport):
        return ["residual"], [[repr(float(r))] for r in result.residuals]
    if isinstance(result, ClusterAssignment):
        return ["leaf_id", "label"], [[i, int(v)] for i, v in enumerate(result.labels)]
    if isinstance(result, Dendrogram):
        return (["step", "left", "right", "height", "size"],
                [[s, int(a), int(b), repr(float(h)), int(z)]
                 for s, (a, b, h, z) in enumerate(result.merges, start=1)])
    flat = _render_generic(as_dict(result))
    return ["key", "value"], [line.split(" = ", 1) for line in flat]


def render_report(result, format="text") -> str:
    """Render ``result`` as ``text``, ``json`` or ``csv``."""
    if format == "text":
        return render_text(result)
    if format == "json":
        return to_json(result) + "\n"
    if format == "csv":
        header, rows = csv_rows(result)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    raise ValueError(f"unknown format {format!r}")
