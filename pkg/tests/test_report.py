import json

import numpy as np
import pandas as pd
import pytest

from spathedonic.discrete import ConfusionTable, fit_binary
from spathedonic.iv_sar import IvSpec, weak_iv_test
from spathedonic.regress import ModelSpec, fit_ols
from spathedonic.report import fmt, render_report, stars
from spathedonic.spatial import oneway_anova_bartlett


@pytest.fixture(scope="module")
def fit():
    rng = np.random.default_rng(0)
    df = pd.DataFrame({"x": rng.normal(size=60), "z": rng.normal(size=60)})
    df["y"] = 1 + 2 * df["x"] + rng.normal(size=60)
    return fit_ols(df, ModelSpec("y", ("x", "z")))


@pytest.mark.parametrize("p,mark", [(0.004, "***"), (0.01, "**"), (0.03, "**"),
                                    (0.07, "*"), (0.1, ""), (0.5, ""), (float("nan"), "")])
def test_stars(p, mark):
    assert stars(p) == mark


def test_json_round_trip(fit):
    text = render_report(fit, "json")
    data = json.loads(text)
    assert [r["name"] for r in data["coefficients"]] == fit.names
    coef = np.array([r["coef"] for r in data["coefficients"]])
    assert np.array_equal(coef, fit.coef)
    assert data["n"] == 60 and data["stat_kind"] == "t"
    assert json.loads(json.dumps(data)) == data
    assert render_report(fit, "json") == text


def test_text_numbers_agree_with_json(fit):
    text = render_report(fit, "text")
    data = json.loads(render_report(fit, "json"))
    for row in data["coefficients"]:
        assert fmt(row["coef"]) in text
        assert fmt(row["se"]) in text
    assert "t-value" in text and "***" in text


def test_csv_series(fit):
    lines = render_report(fit, "csv").strip().splitlines()
    assert lines[0] == "name,coef,se,stat,p,ci_low,ci_high"
    assert len(lines) == 1 + len(fit.names)
    assert float(lines[2].split(",")[1]) == fit.coef[1]


def test_other_results_render():
    tab = ConfusionTable(116, 20, 39, 445)
    text = render_report(tab)
    assert "74.84%" in text and "90.48%" in text and "Classified" in text
    rng = np.random.default_rng(1)
    df = pd.DataFrame({"x": rng.normal(size=100), "z": rng.normal(size=100)})
    df["x"] += df["z"]
    df["y"] = df["x"] + rng.normal(size=100)
    rep = weak_iv_test(df, IvSpec("y", ("x",), ("z",)))
    text = render_report(rep)
    for cv in ("16.38", "8.96", "6.66", "5.53"):
        assert cv in text
    anova = oneway_anova_bartlett(df["y"], np.repeat([1, 2], 50))
    assert "Bartlett" in render_report(anova)
    df["d"] = (df["y"] > 0).astype(float)
    logit = fit_binary(df, ModelSpec("d", ("x",)))
    assert "z-value" in render_report(logit)
    assert json.loads(render_report(logit, "json"))["link"] == "logit"
    with pytest.raises(ValueError):
        render_report(tab, "xml")
