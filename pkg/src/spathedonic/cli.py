"""Command-line front end.

Exit codes: 0 success, 1 estimation failure, 2 usage, configuration or
input-data error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .dataset import correlation_matrix, derive_columns, describe, load_csv, write_csv
from .discrete import classification_table, fit_binary, lr_test
from .errors import ConfigError, DataError, EstimationError, MissingColumnError, SpatHedonicError
from .evaluation import MarketDGP, evaluate_holdout, monte_carlo, simulate_market, ESTIMATORS
from .iv_sar import IvSpec, fit_2sls, fit_sar_gs2sls, weak_iv_test
from .panel import PanelIndex, fit_fe, fit_re, hausman_test
from .regress import ModelSpec, fit_ols, fracpoly_search
from .spatial import build_weights, cut_dendrogram, hclust, kmeans, oneway_anova_bartlett

OUTPUT_ENV = "SPATHEDONIC_OUTPUT_DIR"
MODEL_KINDS = ("ols", "areg", "2sls", "sar", "logit", "probit", "fe", "re", "fracpoly")
TEST_KINDS = ("anova", "bartlett", "weakiv", "lrtest", "hausman")
DESCRIBE_DEFAULT = ("price", "lnprice", "sqft", "lnsqft", "beds", "baths", "stories",
                    "parking", "dist_pch", "time")


def exit_code(exc):
    if isinstance(exc, (ConfigError, DataError, FileNotFoundError, ValueError)):
        return 2
    if isinstance(exc, (EstimationError, np.linalg.LinAlgError)):
        return 1
    return 1


# --------------------------------------------------------------------------
# parsing helpers

def split_list(text):
    if not text:
        return ()
    return tuple(t.strip() for t in str(text).replace(";", ",").split(",") if t.strip())


def parse_vce(text):
    """``classical``, ``robust`` or ``cluster:<column>``."""
    text = (text or "classical").strip()
    if text.startswith("cluster"):
        _, _, col = text.partition(":")
        if not col:
            raise ConfigError("vce cluster needs a column: cluster:<column>")
        return "cluster", col.strip()
    if text not in ("classical", "robust"):
        raise ConfigError(f"unknown vce {text!r}")
    return text, None


def parse_iv(items):
    """``endo=instr1+instr2`` items into (endogenous, instruments)."""
    endog, instr = [], []
    for item in items or ():
        for part in split_list(item):
            left, sep, right = part.partition("=")
            if not sep or not left.strip() or not right.strip():
                raise ConfigError(f"bad instrument spec {part!r}; expected endo=instrument")
            endog.append(left.strip())
            instr.extend(t.strip() for t in right.split("+") if t.strip())
    return tuple(endog), tuple(dict.fromkeys(instr))


def parse_reference(text):
    if text is None or str(text).strip() == "":
        return None
    parts = split_list(text)
    if len(parts) != 2:
        raise ConfigError(f"reference must be 'latitude,longitude', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"reference must be numeric, got {text!r}") from None


# --------------------------------------------------------------------------
# model configuration shared by `fit` and `pipeline`

@dataclass
class ModelConfig:
    name: str
    kind: str
    y: str
    x: tuple = ()
    factors: tuple = ()
    absorb: str | None = None
    vce: str = "classical"
    cluster: str | None = None
    endogenous: tuple = ()
    instruments: tuple = ()
    unit: str | None = None
    time: str | None = None
    focus: str | None = None
    intercept: bool = True

    def problems(self):
        out = []
        where = f"model {self.name!r}"
        if self.kind not in MODEL_KINDS:
            out.append(f"{where}: unknown type {self.kind!r} (choose from {', '.join(MODEL_KINDS)})")
        if not self.y:
            out.append(f"{where}: response y is required")
        if self.kind == "areg" and not self.absorb:
            out.append(f"{where}: areg needs absorb")
        if self.kind == "2sls" and not self.endogenous:
            out.append(f"{where}: 2sls needs iv = endogenous=instrument")
        if self.kind in ("fe", "re") and not self.unit:
            out.append(f"{where}: {self.kind} needs unit")
        if self.kind == "fracpoly" and not self.focus:
            out.append(f"{where}: fracpoly needs focus")
        if self.vce == "cluster" and not self.cluster:
            out.append(f"{where}: vce cluster needs a column")
        return out

    def columns(self):
        cols = [self.y, *self.x, *self.factors, *self.endogenous, *self.instruments]
        for c in (self.absorb, self.cluster, self.unit, self.time, self.focus):
            if c:
                cols.append(c)
        return [c for c in dict.fromkeys(cols) if c]

    def model_spec(self):
        return ModelSpec(self.y, self.x, self.factors, self.intercept,
                         self.absorb if self.kind == "areg" else None, self.vce, self.cluster)

    def iv_spec(self, weights=None):
        return IvSpec(self.y, self.endogenous, self.instruments, self.x, self.factors,
                      self.intercept, weights)


def model_from_mapping(name, m):
    """Build a ModelConfig from string options; returns (model, problems)."""
    problems = []
    try:
        vce, cluster = parse_vce(m.get("vce"))
    except ConfigError as exc:
        problems += [f"model {name!r}: {p}" for p in exc.problems]
        vce, cluster = "classical", None
    try:
        endog, instr = parse_iv([m["iv"]] if m.get("iv") else [])
    except ConfigError as exc:
        problems += [f"model {name!r}: {p}" for p in exc.problems]
        endog, instr = (), ()
    model = ModelConfig(
        name=name, kind=(m.get("type") or "").strip(), y=(m.get("y") or "").strip(),
        x=split_list(m.get("x")), factors=split_list(m.get("factors")),
        absorb=m.get("absorb") or None, vce=vce, cluster=cluster, endogenous=endog,
        instruments=instr, unit=m.get("unit") or None, time=m.get("time") or None,
        focus=m.get("focus") or None,
        intercept=str(m.get("constant", "yes")).lower() not in ("no", "false", "0"),
    )
    return model, problems + model.problems()


def fit_model(data, model: ModelConfig, weights=None):
    kind = model.kind
    if kind in ("ols", "areg"):
        return fit_ols(data, model.model_spec())
    if kind == "2sls":
        return fit_2sls(data, model.iv_spec())
    if kind == "sar":
        if weights is None:
            raise ConfigError(f"model {model.name!r}: sar needs a weights matrix")
        return fit_sar_gs2sls(data, model.iv_spec(weights))
    if kind in ("logit", "probit"):
        return fit_binary(data, model.model_spec(), kind)
    if kind in ("fe", "re"):
        index = PanelIndex(model.unit, model.time)
        fn = fit_fe if kind == "fe" else fit_re
        return fn(data, index, model.model_spec())
    if kind == "fracpoly":
        covs = tuple(c for c in model.x if c != model.focus)
        return fracpoly_search(data, model.y, model.focus, covs, factors=model.factors)
    raise ConfigError(f"unknown model type {kind!r}")


def require_columns(data, columns):
    missing = [c for c in dict.fromkeys(columns) if c and c not in data]
    if missing:
        raise ConfigError([f"missing column: {c!r}" for c in missing])


def add_clusters(data, k, linkage="ward", seed=0, coords=("std_latitude", "std_longitude")):
    """Add ``kmeans_cluster`` and ``hier_cluster`` label columns."""
    require_columns(data, coords)
    x = np.column_stack([np.asarray(data[c], dtype=float) for c in coords])
    km = kmeans(x, k, seed=seed)
    dend = hclust(x, linkage)
    cut = cut_dendrogram(dend, k)
    out = data.with_columns({"kmeans_cluster": km.labels, "hier_cluster": cut.labels})
    return out, km, dend, cut


# --------------------------------------------------------------------------
# pipeline

@dataclass
class PipelineConfig:
    input: str
    output_dir: str
    seed: int
    columns: dict = field(default_factory=dict)
    reference: tuple | None = None
    metric: str = "degree_euclidean"
    price_threshold: float | None = None
    k: int = 3
    linkage: str = "ward"
    cluster_coords: tuple = ("std_latitude", "std_longitude")
    anova: tuple = ("lnprice",)
    weights_cutoff: float | None = None
    weights_coords: tuple = ("latitude", "longitude")
    models: list = field(default_factory=list)
    lrtests: list = field(default_factory=list)
    hausman: list = field(default_factory=list)
    eval_model: str | None = None
    train_frac: float = 0.8
    classify_threshold: float = 0.5
    describe_columns: tuple = DESCRIBE_DEFAULT


def _get_float(section, key, problems, default=None):
    raw = section.get(key, fallback=None)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        problems.append(f"[{section.name}] {key}: expected a number, got {raw!r}")
        return default


def _get_int(section, key, problems, default=None):
    raw = section.get(key, fallback=None)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        problems.append(f"[{section.name}] {key}: expected an integer, got {raw!r}")
        return default


def _pairs(text, what, names, problems):
    out = []
    for item in split_list(text):
        a, sep, b = item.partition(":")
        if not sep:
            problems.append(f"{what} entry {item!r} must be 'first:second'")
            continue
        for m in (a, b):
            if m not in names:
                problems.append(f"{what} refers to unknown model {m!r}")
        out.append((a, b))
    return out


def load_config(path) -> PipelineConfig:
    """Read an INI pipeline configuration, reporting every problem at once."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    problems = []
    for sec in ("data", "run"):
        if not parser.has_section(sec):
            problems.append(f"missing section [{sec}]")
            parser.add_section(sec)
    data, run = parser["data"], parser["run"]
    base = path.parent

    inp = data.get("input", fallback="").strip()
    if not inp:
        problems.append("[data] input is required")
    elif not (base / inp).exists() and not Path(inp).exists():
        problems.append(f"[data] input file not found: {inp}")
    inp = str(Path(inp) if Path(inp).is_absolute() or not (base / inp).exists() else base / inp)

    seed = _get_int(run, "seed", problems)
    if seed is None and "seed" not in run:
        problems.append("[run] seed is required")
    out_dir = run.get("output_dir", fallback="").strip() or os.environ.get(OUTPUT_ENV, "")
    if not out_dir:
        problems.append(f"[run] output_dir is required (or set {OUTPUT_ENV})")
    elif not Path(out_dir).is_absolute():
        out_dir = str(base / out_dir)

    try:
        reference = parse_reference(data.get("reference", fallback=None))
    except ConfigError as exc:
        problems += exc.problems
        reference = None
    metric = data.get("metric", fallback="degree_euclidean").strip()
    if metric not in ("degree_euclidean", "haversine_km"):
        problems.append(f"[data] metric must be degree_euclidean or haversine_km, got {metric!r}")

    cfg = PipelineConfig(input=inp, output_dir=out_dir, seed=seed or 0, reference=reference,
                         metric=metric,
                         price_threshold=_get_float(data, "price_threshold", problems))
    if parser.has_section("columns"):
        cfg.columns = dict(parser["columns"])
    if parser.has_section("describe"):
        cfg.describe_columns = split_list(parser["describe"].get("columns", ""))
    if parser.has_section("cluster"):
        sec = parser["cluster"]
        cfg.k = _get_int(sec, "k", problems, 3)
        cfg.linkage = sec.get("linkage", "ward").strip()
        cfg.cluster_coords = split_list(sec.get("coords", "std_latitude, std_longitude"))
        cfg.anova = split_list(sec.get("anova", "lnprice"))
        if cfg.linkage not in ("ward", "complete"):
            problems.append(f"[cluster] linkage must be ward or complete, got {cfg.linkage!r}")
        if cfg.k is not None and cfg.k < 1:
            problems.append("[cluster] k must be positive")
    if parser.has_section("weights"):
        sec = parser["weights"]
        cfg.weights_cutoff = _get_float(sec, "cutoff", problems)
        cfg.weights_coords = split_list(sec.get("coords", "latitude, longitude"))
        if cfg.weights_cutoff is not None and cfg.weights_cutoff <= 0:
            problems.append("[weights] cutoff must be positive")

    for sec in parser.sections():
        if sec.startswith("model."):
            model, probs = model_from_mapping(sec[len("model."):], parser[sec])
            cfg.models.append(model)
            problems += probs
    names = {m.name for m in cfg.models}
    if parser.has_section("tests"):
        sec = parser["tests"]
        cfg.lrtests = _pairs(sec.get("lrtest", ""), "[tests] lrtest", names, problems)
        cfg.hausman = _pairs(sec.get("hausman", ""), "[tests] hausman", names, problems)
    if parser.has_section("eval"):
        sec = parser["eval"]
        cfg.eval_model = sec.get("model", "").strip() or None
        cfg.train_frac = _get_float(sec, "train_frac", problems, 0.8)
        cfg.classify_threshold = _get_float(sec, "threshold", problems, 0.5)
        if cfg.eval_model and cfg.eval_model not in names:
            problems.append(f"[eval] model refers to unknown model {cfg.eval_model!r}")
        if not 0 < cfg.train_frac < 1:
            problems.append("[eval] train_frac must lie in (0, 1)")
    if problems:
        raise ConfigError(problems)
    return cfg


class _Writer:
    """Writes stage outputs and keeps a manifest of file digests."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def text(self, name, content):
        path = self.dir / name
        path.write_text(content)
        self.files[name] = hashlib.sha256(content.encode()).hexdigest()

    def result(self, stem, result):
        self.text(f"{stem}.json", report.render_report(result, "json"))
        self.text(f"{stem}.txt", report.render_report(result, "text"))

    def csv(self, stem, result):
        self.text(f"{stem}.csv", report.render_report(result, "csv"))

    def manifest(self):
        self.text("manifest.json", json.dumps(self.files, indent=2, sort_keys=True) + "\n")


def _prepare_data(cfg):
    ds = load_csv(cfg.input, cfg.columns or None)
    return derive_columns(ds, cfg.price_threshold, reference=cfg.reference, metric=cfg.metric)


def run_pipeline(config: PipelineConfig, log=None) -> int:
    """Run transforms, clustering, cluster tests, model fits and evaluation.

    Every stage writes ``<stage>.json`` and ``<stage>.txt`` into the output
    directory.  Returns the process exit status; the error message goes to
    ``log`` (stderr by default).
    """
    log = log or sys.stderr
    try:
        _run(config)
    except SpatHedonicError as exc:
        print(f"error: {exc}", file=log)
        return exit_code(exc)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=log)
        return 2
    return 0


def _run(cfg: PipelineConfig):
    out = _Writer(cfg.output_dir)
    ds = _prepare_data(cfg)

    # every referenced column must exist once clusters are added
    wanted = list(cfg.cluster_coords) + list(cfg.anova) + list(cfg.describe_columns)
    for m in cfg.models:
        wanted += m.columns()
    if any(m.kind == "sar" for m in cfg.models):
        wanted += list(cfg.weights_coords)
    generated = {"kmeans_cluster", "hier_cluster"}
    require_columns(ds, [c for c in wanted if c not in generated])

    out.text("01_transform.csv", _frame_csv(ds))
    stats = describe(ds, cfg.describe_columns)
    out.result("01_describe", stats)
    corr = correlation_matrix(ds, [c for c in cfg.describe_columns
                                   if np.ptp(np.asarray(ds[c], dtype=float)) > 0])
    out.text("01_correlation.csv", corr.to_csv(float_format="%.17g", lineterminator="\n"))

    ds, km, dend, cut = add_clusters(ds, cfg.k, cfg.linkage, cfg.seed, cfg.cluster_coords)
    out.result("02_kmeans", km)
    out.csv("02_kmeans_labels", km)
    out.result("02_hier", cut)
    out.csv("02_dendrogram", dend)

    for col in cfg.anova:
        for label in ("kmeans_cluster", "hier_cluster"):
            res = oneway_anova_bartlett(ds[col], ds[label])
            out.result(f"03_anova_{col}_{label}", res)

    weights = None
    if any(m.kind == "sar" for m in cfg.models):
        coords = np.column_stack([np.asarray(ds[c], dtype=float) for c in cfg.weights_coords])
        weights = build_weights(coords, cfg.weights_cutoff)
        out.result("04_weights", _weights_summary(weights))

    fits = {}
    for m in cfg.models:
        fit = fit_model(ds, m, weights)
        fits[m.name] = fit
        out.result(f"05_fit_{m.name}", fit)
        out.csv(f"05_fit_{m.name}_coef", fit)
        if m.kind == "2sls" and len(m.endogenous) >= 1:
            out.result(f"05_weakiv_{m.name}", weak_iv_test(ds, m.iv_spec()))
        if m.kind in ("logit", "probit"):
            tab = classification_table(fit.predict(), fit.y, cfg.classify_threshold)
            out.result(f"05_classify_{m.name}", tab)

    for a, b in cfg.lrtests:
        out.result(f"06_lrtest_{a}_{b}", lr_test(fits[a], fits[b]))
    for a, b in cfg.hausman:
        out.result(f"06_hausman_{a}_{b}", hausman_test(fits[a], fits[b]))

    if cfg.eval_model:
        m = next(mm for mm in cfg.models if mm.name == cfg.eval_model)
        if m.kind not in ("ols", "areg"):
            raise ConfigError(f"[eval] model {m.name!r} must be ols or areg")
        spec = m.model_spec()
        if m.kind == "areg":
            spec = spec.replace(absorb=None, factors=spec.factors + (m.absorb,))
        _, rep = evaluate_holdout(ds, spec, cfg.train_frac, cfg.seed)
        out.result("07_eval", rep)
        out.csv("07_eval_residuals", rep)
    out.manifest()


def _frame_csv(ds):
    return ds.frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def _weights_summary(W):
    nnz = int(np.count_nonzero(W.matrix))
    return {"n": W.n, "cutoff": W.cutoff, "standardized": W.standardized,
            "nonzero": nnz, "mean_neighbours": nnz / W.n, "isolated": list(W.isolated),
            "digest": W.digest(), "warnings": list(W.warnings)}


# --------------------------------------------------------------------------
# subcommands

def _load(args):
    ds = load_csv(args.input, dict(kv.split("=", 1) for kv in args.map) if args.map else None)
    return derive_columns(ds, args.threshold, reference=parse_reference(args.reference),
                          metric=args.metric)


def _with_clusters(ds, args):
    if getattr(args, "kmeans", None):
        ds, *_ = add_clusters(ds, args.kmeans, "ward", args.seed)
    return ds


def _model_from_args(args, kind):
    vce, cluster = parse_vce(args.vce)
    endog, instr = parse_iv(args.iv)
    m = ModelConfig(name=kind, kind=kind, y=args.y, x=split_list(",".join(args.x or [])),
                    factors=split_list(",".join(args.factor or [])), absorb=args.absorb,
                    vce=vce, cluster=cluster, endogenous=endog, instruments=instr,
                    unit=args.unit, time=args.time, focus=args.focus,
                    intercept=not args.no_constant)
    probs = m.problems()
    if probs:
        raise ConfigError(probs)
    return m


def cmd_describe(args):
    ds = _load(args)
    cols = split_list(args.columns) or tuple(c for c in DESCRIBE_DEFAULT if c in ds)
    require_columns(ds, cols)
    if args.corr:
        return {"correlation": correlation_matrix(ds, cols).round(12).to_dict()}
    return describe(ds, cols)


def cmd_transform(args):
    ds = _load(args)
    if args.output:
        write_csv(ds, args.output, ds.columns)
    return {"rows": len(ds), "rejected": len(ds.rejects), "columns": ds.columns,
            "output": args.output}


def cmd_cluster(args):
    ds = _load(args)
    coords = split_list(args.coords)
    require_columns(ds, coords)
    x = np.column_stack([np.asarray(ds[c], dtype=float) for c in coords])
    if args.method == "kmeans":
        res = kmeans(x, args.k, seed=args.seed)
    else:
        dend = hclust(x, args.linkage)
        if args.dendrogram:
            dend.to_csv(args.dendrogram)
        res = cut_dendrogram(dend, args.k)
    if args.labels:
        res.to_csv(args.labels)
    if args.anova:
        require_columns(ds, [args.anova])
        return oneway_anova_bartlett(ds[args.anova], res.labels)
    return res


def cmd_weights(args):
    ds = _load(args)
    coords = split_list(args.coords)
    require_columns(ds, coords)
    W = build_weights(np.column_stack([np.asarray(ds[c], dtype=float) for c in coords]),
                      args.cutoff, standardize=not args.raw)
    if args.output:
        np.savetxt(args.output, W.matrix, delimiter=",", fmt="%.17g")
    return _weights_summary(W)


def cmd_fit(args):
    ds = _with_clusters(_load(args), args)
    m = _model_from_args(args, args.model)
    require_columns(ds, m.columns())
    weights = None
    if m.kind == "sar":
        coords = split_list(args.coords)
        require_columns(ds, coords)
        weights = build_weights(np.column_stack([np.asarray(ds[c], dtype=float) for c in coords]),
                                args.cutoff)
    return fit_model(ds, m, weights)


def cmd_test(args):
    ds = _with_clusters(_load(args), args)
    kind = args.kind
    if kind in ("anova", "bartlett"):
        if not args.group:
            raise ConfigError("--group is required for anova/bartlett")
        require_columns(ds, [args.y, args.group])
        return oneway_anova_bartlett(ds[args.y], ds[args.group])
    if kind == "weakiv":
        m = _model_from_args(args, "2sls")
        require_columns(ds, m.columns())
        return weak_iv_test(ds, m.iv_spec())
    if kind == "lrtest":
        link = args.link
        m = _model_from_args(args, link)
        extra = split_list(",".join(args.extra or []))
        if not extra:
            raise ConfigError("--extra lists the regressors tested for exclusion")
        require_columns(ds, m.columns() + list(extra))
        small = fit_binary(ds, m.model_spec(), link)
        big = fit_binary(ds, m.model_spec().replace(regressors=m.x + extra), link)
        return lr_test(big, small)
    if kind == "hausman":
        m = _model_from_args(args, "fe")
        require_columns(ds, m.columns())
        index = PanelIndex(m.unit, m.time)
        spec = m.model_spec()
        return hausman_test(fit_fe(ds, index, spec), fit_re(ds, index, spec))
    raise ConfigError(f"unknown test {kind!r}")


def cmd_eval(args):
    ds = _with_clusters(_load(args), args)
    m = _model_from_args(args, "ols")
    require_columns(ds, m.columns())
    _, rep = evaluate_holdout(ds, m.model_spec(), args.train_frac, args.seed, args.exact)
    if args.residuals:
        rep.residuals_to_csv(args.residuals)
    return rep


def cmd_simulate(args):
    dgp = MarketDGP(n=args.n, lam=args.lam, endogeneity=args.endogeneity,
                    instrument_strength=args.instrument_strength, noise_sd=args.noise_sd,
                    seed=args.seed, weights_cutoff=args.cutoff)
    if args.monte_carlo:
        return monte_carlo(dgp, args.monte_carlo, args.reps)
    ds = simulate_market(dgp)
    if args.output:
        write_csv(ds, args.output, ds.columns)
    return {"rows": len(ds), "output": args.output, "seed": args.seed}


def cmd_pipeline(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    _run(cfg)
    return {"output_dir": cfg.output_dir, "status": 0}


# --------------------------------------------------------------------------
# argument parser

def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--json", action="store_true", help="JSON output")
    p.add_argument("--format", choices=("text", "json", "csv"), default=None)
    return p


def _data_args():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", required=True, help="sales CSV")
    p.add_argument("--map", action="append", metavar="CANON=HEADER",
                   help="column mapping, repeatable")
    p.add_argument("--reference", help="highway reference point 'lat,lon'")
    p.add_argument("--metric", default="degree_euclidean",
                   choices=("degree_euclidean", "haversine_km"))
    p.add_argument("--threshold", type=float, help="pricedummy cut-off (default mean price)")
    p.add_argument("--seed", type=int, default=0)
    return p


def _model_args():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--y", default="lnprice")
    p.add_argument("--x", action="append", help="regressors, comma separated, repeatable")
    p.add_argument("--factor", action="append", help="categorical columns expanded to dummies")
    p.add_argument("--iv", action="append", metavar="ENDO=INSTR[+INSTR]")
    p.add_argument("--absorb")
    p.add_argument("--vce", default="classical", help="classical | robust | cluster:<column>")
    p.add_argument("--unit")
    p.add_argument("--time")
    p.add_argument("--focus", help="fractional-polynomial variable")
    p.add_argument("--no-constant", action="store_true")
    p.add_argument("--kmeans", type=int, metavar="K",
                   help="add kmeans_cluster/hier_cluster columns with K groups")
    return p


def build_parser():
    common, data, model = _common(), _data_args(), _model_args()
    parser = argparse.ArgumentParser(prog="spathedonic",
                                     description="Spatial hedonic housing-price models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", parents=[common, data], help="descriptive statistics")
    p.add_argument("--columns")
    p.add_argument("--corr", action="store_true", help="correlation matrix instead")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("transform", parents=[common, data], help="derive modelling columns")
    p.add_argument("--output")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("cluster", parents=[common, data], help="k-means or hierarchical")
    p.add_argument("method", choices=("kmeans", "hier"))
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--linkage", choices=("ward", "complete"), default="ward")
    p.add_argument("--coords", default="std_latitude,std_longitude")
    p.add_argument("--labels", help="write leaf labels CSV")
    p.add_argument("--dendrogram", help="write merge table CSV (hier)")
    p.add_argument("--anova", metavar="COLUMN", help="report ANOVA/Bartlett of COLUMN by cluster")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("weights", parents=[common, data], help="inverse-distance weights")
    p.add_argument("--coords", default="latitude,longitude")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--raw", action="store_true", help="skip row standardization")
    p.add_argument("--output", help="write dense matrix CSV")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("fit", parents=[common, data, model], help="estimate a model")
    p.add_argument("model", choices=MODEL_KINDS)
    p.add_argument("--coords", default="latitude,longitude", help="weights coordinates (sar)")
    p.add_argument("--cutoff", type=float, help="weights distance band (sar)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", parents=[common, data, model], help="model tests")
    p.add_argument("kind", choices=TEST_KINDS)
    p.add_argument("--group", help="grouping column (anova, bartlett)")
    p.add_argument("--extra", action="append", help="regressors tested for exclusion (lrtest)")
    p.add_argument("--link", choices=("logit", "probit"), default="logit")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("eval", parents=[common, data, model], help="train/test evaluation")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--exact", action="store_true", help="exact-count split")
    p.add_argument("--residuals", help="write held-out residuals CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", parents=[common], help="synthetic market data")
    p.add_argument("--n", type=int, default=620)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--endogeneity", type=float, default=0.0)
    p.add_argument("--instrument-strength", type=float, default=0.25)
    p.add_argument("--noise-sd", type=float, default=0.4)
    p.add_argument("--cutoff", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.add_argument("--monte-carlo", choices=tuple(ESTIMATORS), help="run a Monte Carlo study")
    p.add_argument("--reps", type=int, default=200)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", parents=[common], help="run a configured pipeline")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = args.format or ("json" if args.json else "text")
    try:
        result = args.func(args)
    except SpatHedonicError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.render_report(result, fmt))
    return 0


if __name__ == "__main__":
    sys.exit(main())
