"""Spatial hedonic housing-price models: data handling, spatial structure,
linear, IV, spatial-lag, binary-choice and panel estimators."""

from .dataset import PropertyDataset, derive_columns, describe, load_csv, month_index, write_csv
from .discrete import classification_table, fit_binary, lr_test, marginal_effects
from .errors import (
    ConfigError,
    DataError,
    EstimationError,
    MissingColumnError,
    RankDeficiencyError,
    SpatHedonicError,
)
from .evaluation import (
    MarketDGP,
    evaluate_holdout,
    evaluate_predictions,
    monte_carlo,
    simulate_market,
    split_train_test,
)
from .iv_sar import IvSpec, fit_2sls, fit_sar_gs2sls, weak_iv_test
from .panel import PanelIndex, fit_fe, fit_re, hausman_test
from .regress import ModelSpec, fit_ols, fracpoly_search
from .report import render_report
from .spatial import build_weights, cut_dendrogram, hclust, kmeans, oneway_anova_bartlett

__version__ = "0.1.0"
