"""End-to-end orchestration: case file in, report files out.

The flow is ingest -> exclusions -> segmentation -> network build and
projection -> node metrics -> team aggregation -> complication counts ->
joined per-case table -> Spearman matrix -> OLS/VIF screening -> Poisson
fit with goodness of fit -> negative binomial fit with the alpha=0 LR
test. All numeric work happens before any file is created; a failing
stage therefore aborts with the stage name and leaves no partial
output. Given the same config and input, reruns are byte-identical.
"""

import hashlib
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__ as _VERSION
from . import centrality, correlation, network, records, regression
from .complications import ComplicationCodeset, count_complications
from .errors import ConfigError, ConvergenceError, DataError

REGRESSION_COLUMNS = ("age", "teamSize", "typSurgery", "avgBtwn", "avgClos",
                      "avgEigen", "dMale")
CORRELATION_COLUMNS = ("avgBtwn", "avgClos", "avgEigen", "avgClust", "avgDeg")

# conventions recorded in every manifest; outputs are meaningless without them
CONVENTIONS = {
    "betweenness": "geodesic counts over unordered pairs, normalized by (n-1)(n-2)/2",
    "closeness": "component-corrected ((n_c-1)/sum d)*((n_c-1)/(n-1)); isolated nodes 0",
    "eigenvector": "largest connected component only, max entry scaled to 1; others 0",
    "degree": "raw neighbor count; normalized raw/(n-1); team averages use normalized",
    "clustering": "edges among neighbors / C(degree, 2); 0 when degree < 2",
    "projection": "unweighted simple graph; repeat collaborations collapse to one edge",
    "segmentation": "half-open day windows [start, start+window); last ends max day + 1",
    "complications": "each matching dx occurrence counts once",
    "ci95": "coefficient +/- 1.959964 * std_error",
}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run depends on; hashed into the manifest."""

    input_path: str
    output_dir: str = "surgnet_out"
    window_days: int = 365
    delimiter: str = ","
    provider_form: str = "wide"
    eig_tol: float = 1e-10
    eig_max_iter: int = 10000
    regression_columns: tuple = REGRESSION_COLUMNS
    codeset: str = "embedded"
    distinct_complications: bool = False
    seed: int = 0

    _KNOWN_COLUMNS = REGRESSION_COLUMNS + ("avgClust", "avgDeg")

    def validate(self):
        if not self.input_path:
            raise ConfigError("input_path is required")
        if self.window_days < 1:
            raise ConfigError(f"window_days must be >= 1, got {self.window_days}")
        if self.provider_form not in ("wide", "long"):
            raise ConfigError(f"provider_form must be 'wide' or 'long', "
                              f"got {self.provider_form!r}")
        if not (self.eig_tol > 0):
            raise ConfigError("eig_tol must be positive")
        if self.eig_max_iter < 1:
            raise ConfigError("eig_max_iter must be >= 1")
        unknown = [c for c in self.regression_columns if c not in self._KNOWN_COLUMNS]
        if unknown:
            raise ConfigError(f"unknown regression column(s): {unknown}; "
                              f"known: {list(self._KNOWN_COLUMNS)}")
        return self

    def to_dict(self):
        return {
            "input_path": self.input_path,
            "output_dir": self.output_dir,
            "window_days": self.window_days,
            "delimiter": self.delimiter,
            "provider_form": self.provider_form,
            "eig_tol": self.eig_tol,
            "eig_max_iter": self.eig_max_iter,
            "regression_columns": list(self.regression_columns),
            "codeset": self.codeset,
            "distinct_complications": self.distinct_complications,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_file(cls, path, **overrides):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        if "regression_columns" in raw:
            raw["regression_columns"] = tuple(raw["regression_columns"])
        return cls(**raw)


@dataclass(frozen=True)
class CaseRow:
    """One joined row of the surgical network data table."""

    case_id: str
    segment: int
    c: int
    age: int | None
    team_size: int
    surgery_type: int | None
    d_male: int
    avg_btwn: float
    avg_clos: float
    avg_eigen: float
    avg_clust: float
    avg_deg: float


_GETTERS = {
    "C": lambda r: r.c,
    "age": lambda r: r.age,
    "teamSize": lambda r: r.team_size,
    "typSurgery": lambda r: r.surgery_type,
    "dMale": lambda r: r.d_male,
    "avgBtwn": lambda r: r.avg_btwn,
    "avgClos": lambda r: r.avg_clos,
    "avgEigen": lambda r: r.avg_eigen,
    "avgClust": lambda r: r.avg_clust,
    "avgDeg": lambda r: r.avg_deg,
}

ROW_COLUMNS = ("case_id", "segment", "C", "age", "teamSize", "typSurgery",
               "dMale", "avgBtwn", "avgClos", "avgEigen", "avgClust", "avgDeg")


@dataclass(frozen=True)
class SegmentAnalysis:
    segment: records.Segment
    graph: network.CoworkerGraph
    summary: network.GraphSummary
    node_metrics: dict
    isolated_nodes: int
    outside_largest_component: int


@dataclass(frozen=True)
class EstimationResult:
    design: regression.DesignMatrix
    dropped_constant: tuple
    ols: regression.OlsResult
    vifs: list
    poisson: regression.FitResult
    gof: regression.GofResult
    negbin: regression.FitResult
    lr_alpha: regression.LrAlphaResult


@dataclass
class RunResult:
    config: PipelineConfig
    diagnostics: list
    exclusion_report: dict
    analyses: list
    rows: list
    spearman: correlation.SpearmanResult
    estimation: EstimationResult
    manifest: dict
    outputs: dict = field(default_factory=dict)
    output_dir: str | None = None


@contextmanager
def _stage(name):
    """Prefix any pipeline error with the stage it came from."""
    try:
        yield
    except ConvergenceError as exc:
        raise ConvergenceError(f"stage {name}: {exc.args[0]}",
                               trace=exc.trace) from exc
    except (ConfigError, DataError) as exc:
        raise type(exc)(f"stage {name}: {exc.args[0]}") from exc


def load_codeset(cfg: PipelineConfig) -> ComplicationCodeset:
    with _stage("codeset"):
        if cfg.codeset == "embedded":
            return ComplicationCodeset.embedded()
        return ComplicationCodeset.from_file(cfg.codeset)


def load_cases(cfg: PipelineConfig):
    """Parse and filter; returns (diagnostics, exclusion_report, retained)."""
    with _stage("ingest"):
        cases, diagnostics = records.parse_cases(
            cfg.input_path, delimiter=cfg.delimiter,
            provider_form=cfg.provider_form)
        if not cases:
            raise DataError("no parseable cases in input")
    with _stage("exclusions"):
        retained, report = records.apply_exclusions(cases)
        if not retained:
            raise DataError("no cases after exclusion")
    return diagnostics, report, retained


def analyze_segments(cfg: PipelineConfig, retained):
    """Segment, build, project, and measure each segment's network."""
    with _stage("segment"):
        segments = records.segment_cases(retained, window_days=cfg.window_days)
    analyses = []
    for seg in segments:
        with _stage(f"network (segment {seg.index})"):
            graph = network.project_one_mode(network.build_bipartite(seg))
            summary = network.summarize(graph, seg)
        with _stage(f"metrics (segment {seg.index})"):
            nm = centrality.compute_all(graph, eig_tol=cfg.eig_tol,
                                        eig_max_iter=cfg.eig_max_iter)
            comps = centrality.connected_components(graph)
            isolated = sum(1 for c in comps if len(c) == 1)
            largest = max((len(c) for c in comps), default=0)
        analyses.append(SegmentAnalysis(
            segment=seg, graph=graph, summary=summary, node_metrics=nm,
            isolated_nodes=isolated,
            outside_largest_component=graph.n_nodes - largest))
    return analyses


def assemble_rows(cfg: PipelineConfig, analyses, codeset):
    """Join team metrics and complication counts into per-case rows."""
    rows = []
    with _stage("join"):
        for sa in analyses:
            for case in sa.segment.cases:
                tm = centrality.team_aggregate(case, sa.node_metrics)
                rows.append(CaseRow(
                    case_id=case.case_id,
                    segment=sa.segment.index,
                    c=count_complications(case, codeset,
                                          distinct=cfg.distinct_complications),
                    age=case.age,
                    team_size=tm.team_size,
                    surgery_type=case.surgery_type,
                    d_male=1 if case.gender == "male" else 0,
                    avg_btwn=tm.avg_betweenness,
                    avg_clos=tm.avg_closeness,
                    avg_eigen=tm.avg_eigenvector,
                    avg_clust=tm.avg_clustering,
                    avg_deg=tm.avg_degree))
    return rows


def _column(rows, name):
    get = _GETTERS[name]
    return np.array([float(get(r)) if get(r) is not None else np.nan
                     for r in rows], dtype=np.float64)


def correlate_rows(rows) -> correlation.SpearmanResult:
    with _stage("correlate"):
        cols = {name: _column(rows, name) for name in CORRELATION_COLUMNS}
        return correlation.spearman_matrix(cols)


def estimate(cfg: PipelineConfig, rows) -> EstimationResult:
    """Screening plus count regressions on the joined table.

    Zero-variance covariates cannot enter the design (they are collinear
    with the intercept); they are dropped here and itemized in the
    manifest so degenerate inputs, like single-provider datasets with
    all-zero network measures, still run to completion.
    """
    with _stage("regress"):
        y = _column(rows, "C")
        cols = {name: _column(rows, name) for name in cfg.regression_columns}
        complete = np.isfinite(y)
        for arr in cols.values():
            complete &= np.isfinite(arr)
        if not complete.any():
            raise DataError("no regression rows with complete covariates")
        dropped = tuple(n for n, arr in cols.items()
                        if np.ptp(arr[complete]) == 0.0)
        kept = {n: arr for n, arr in cols.items() if n not in dropped}

        dm = regression.DesignMatrix.build(y, kept)
        ols = regression.ols_fit(dm.x, dm.y.astype(np.float64),
                                 columns=dm.columns)
        vifs = regression.vif(dm.x, dm.columns)
        pois = regression.poisson_fit(dm)
        gof = regression.poisson_gof(pois, dm)
        nb = regression.negbin_fit(dm)
        lr = regression.lr_test_alpha(pois, nb)
    return EstimationResult(design=dm, dropped_constant=dropped, ols=ols,
                            vifs=vifs, poisson=pois, gof=gof, negbin=nb,
                            lr_alpha=lr)


def run_pipeline(cfg: PipelineConfig, write=True) -> RunResult:
    """Execute every stage and, unless ``write`` is false, emit all
    artifacts into ``cfg.output_dir``."""
    cfg.validate()
    codeset = load_codeset(cfg)
    diagnostics, report, retained = load_cases(cfg)
    analyses = analyze_segments(cfg, retained)
    rows = assemble_rows(cfg, analyses, codeset)
    spearman = correlate_rows(rows)
    est = estimate(cfg, rows)

    manifest = _build_manifest(cfg, diagnostics, report, retained, analyses,
                               rows, spearman, est)
    outputs = _render_outputs(cfg, report, analyses, rows, spearman, est,
                              manifest)
    result = RunResult(config=cfg, diagnostics=diagnostics,
                       exclusion_report=report, analyses=analyses, rows=rows,
                       spearman=spearman, estimation=est, manifest=manifest,
                       outputs=outputs)
    if write:
        with _stage("emit"):
            write_outputs(outputs, cfg.output_dir)
        result.output_dir = cfg.output_dir
    return result


# ---------------------------------------------------------------------------
# rendering


def _fmt(v):
    """Six significant digits for table output; NA for missing."""
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "NA"
    return f"{v:.6g}"


def _jclean(obj):
    """Make an object JSON-safe: numpy scalars to Python, NaN to None."""
    if isinstance(obj, dict):
        return {str(k): _jclean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jclean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jclean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) else v
    return obj


def _json_text(obj) -> str:
    return json.dumps(_jclean(obj), indent=2, sort_keys=True,
                      allow_nan=False) + "\n"


def _tsv(rows_of_cells) -> str:
    return "".join("\t".join(cells) + "\n" for cells in rows_of_cells)


def _segment_stats(analyses, rows):
    by_seg = {}
    for sa in analyses:
        nm = sa.node_metrics.values()
        n = len(sa.node_metrics)
        cs = [r.c for r in rows if r.segment == sa.segment.index]
        by_seg[sa.segment.index] = {
            "segment": sa.segment.index,
            "start_day": sa.segment.start_day,
            "end_day_exclusive": sa.segment.end_day_exclusive,
            "nodes": sa.summary.node_count,
            "edges": sa.summary.edge_count,
            "cases": sa.summary.case_count,
            "avg_team_size": sa.summary.avg_team_size,
            "avg_degree": sa.summary.avg_degree,
            "density": sa.summary.density,
            "avg_betweenness":
                sum(m.betweenness for m in nm) / n if n else 0.0,
            "avg_closeness":
                sum(m.closeness for m in nm) / n if n else 0.0,
            "avg_eigenvector":
                sum(m.eigenvector for m in nm) / n if n else 0.0,
            "avg_complications": sum(cs) / len(cs) if cs else 0.0,
        }
    return [by_seg[k] for k in sorted(by_seg)]


_SEGMENT_MEASURES = ("nodes", "edges", "cases", "avg_team_size", "avg_degree",
                     "density", "avg_betweenness", "avg_closeness",
                     "avg_eigenvector", "avg_complications")


def _render_segments(stats):
    out = [["measure"] + [str(s["segment"]) for s in stats]]
    for measure in _SEGMENT_MEASURES:
        out.append([measure] + [_fmt(s[measure]) for s in stats])
    return _tsv(out)


def render_node_metrics(sa: SegmentAnalysis):
    out = [["provider_id", "degree_raw", "degree", "betweenness", "closeness",
            "eigenvector", "clustering"]]
    for pid in sorted(sa.node_metrics):
        m = sa.node_metrics[pid]
        out.append([pid, str(m.degree_raw), _fmt(m.degree), _fmt(m.betweenness),
                    _fmt(m.closeness), _fmt(m.eigenvector), _fmt(m.clustering)])
    return _tsv(out)


def _render_network_data(rows):
    out = [list(ROW_COLUMNS)]
    for r in rows:
        out.append([r.case_id, str(r.segment)]
                   + [_fmt(_GETTERS[c](r)) for c in ROW_COLUMNS[2:]])
    return _tsv(out)


def render_correlation(sp: correlation.SpearmanResult):
    names = sp.names
    out = [["variable"] + list(names)]
    for i, name in enumerate(names):
        cells = [name]
        for j in range(i + 1):
            rho, p = sp.rho[i, j], sp.p[i, j]
            star = "*" if (not math.isnan(p)) and p < 0.01 and i != j else ""
            cells.append(_fmt(rho) + star)
        out.append(cells)
    text = _tsv(out)
    text += f"\nNote: * p < 0.01, number of observations: {sp.n_obs}\n"
    if sp.degenerate:
        text += f"zero-variance column(s): {', '.join(sp.degenerate)}\n"
    return text


def _fit_table(fit: regression.FitResult):
    out = [["C", "coefficient", "std_error", "z", "p", "ci_low", "ci_high"]]
    for k, name in enumerate(fit.columns):
        out.append([name, _fmt(fit.coef[k]), _fmt(fit.std_err[k]),
                    _fmt(fit.z[k]), _fmt(fit.p[k]), _fmt(fit.ci_low[k]),
                    _fmt(fit.ci_high[k])])
    return out


def render_regression(est: EstimationResult):
    lines = ["== collinearity screening (OLS) =="]
    lines.append(f"R-squared\t{_fmt(est.ols.r_squared)}")
    lines.append("variable\tvif\ttolerance")
    for v in est.vifs:
        lines.append(f"{v.name}\t{_fmt(v.vif)}\t{_fmt(v.tolerance)}")
    if est.dropped_constant:
        lines.append("dropped zero-variance covariate(s)\t"
                     + ", ".join(est.dropped_constant))

    lines.append("")
    lines.append("== poisson ==")
    lines.extend("\t".join(c) for c in _fit_table(est.poisson))
    lines.append(f"log-likelihood\t{_fmt(est.poisson.log_likelihood)}")
    g = est.gof
    lines.append(f"goodness of fit\tpearson_chi2 {_fmt(g.pearson_chi2)}\t"
                 f"df {g.df}\tp {_fmt(g.p_value)}\tdeviance {_fmt(g.deviance)}")

    lines.append("")
    lines.append("== negative binomial ==")
    nb = est.negbin
    table = _fit_table(nb)
    table.append(["ln_alpha", _fmt(nb.ln_alpha), _fmt(nb.ln_alpha_std_err),
                  "", "", _fmt(nb.ln_alpha_ci[0]), _fmt(nb.ln_alpha_ci[1])])
    table.append(["alpha", _fmt(nb.alpha), _fmt(nb.alpha_std_err),
                  "", "", _fmt(nb.alpha_ci[0]), _fmt(nb.alpha_ci[1])])
    lines.extend("\t".join(c) for c in table)
    if nb.alpha_boundary:
        lines.append("alpha at lower boundary (equidispersed data)")
    lines.append(f"log-likelihood\t{_fmt(nb.log_likelihood)}")
    lines.append(f"Likelihood-ratio test of alpha=0\t"
                 f"chibar2(01) = {_fmt(est.lr_alpha.statistic)}\t"
                 f"Prob >= chibar2 = {_fmt(est.lr_alpha.p_value)}")
    lines.append(f"observations\t{nb.n_obs}\t"
                 f"rows_dropped_missing\t{est.design.n_dropped_missing}")
    return "\n".join(lines) + "\n"


def _fit_record(fit: regression.FitResult):
    rec = {
        "model": fit.model,
        "columns": list(fit.columns),
        "coef": fit.coef,
        "std_err": fit.std_err,
        "z": fit.z,
        "p": fit.p,
        "ci_low": fit.ci_low,
        "ci_high": fit.ci_high,
        "log_likelihood": fit.log_likelihood,
        "n_obs": fit.n_obs,
        "iterations": fit.iterations,
        "grad_max_abs": fit.grad_max_abs,
    }
    if fit.model == "negbin":
        rec.update({
            "alpha": fit.alpha,
            "ln_alpha": fit.ln_alpha,
            "alpha_std_err": fit.alpha_std_err,
            "ln_alpha_std_err": fit.ln_alpha_std_err,
            "alpha_ci": list(fit.alpha_ci),
            "ln_alpha_ci": list(fit.ln_alpha_ci),
            "alpha_boundary": fit.alpha_boundary,
        })
    return rec


def _build_manifest(cfg, diagnostics, report, retained, analyses, rows,
                    spearman, est):
    excluded = dict(report)
    per_segment = [{
        "segment": sa.segment.index,
        "cases": sa.summary.case_count,
        "nodes": sa.summary.node_count,
        "edges": sa.summary.edge_count,
        "isolated_nodes": sa.isolated_nodes,
        "outside_largest_component": sa.outside_largest_component,
    } for sa in analyses]
    iso_cases = 0
    for sa in analyses:
        iso = {pid for pid, m in sa.node_metrics.items() if m.degree_raw == 0}
        iso_cases += sum(1 for case in sa.segment.cases
                         if iso & case.providers)
    return {
        "surgnet_version": _VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "conventions": dict(CONVENTIONS),
        "stages": {
            "parse": {"cases": len(retained) + sum(excluded.values()),
                      "diagnostics": len(diagnostics)},
            "exclusions": {"removed": excluded, "retained": len(retained)},
            "segments": {"count": len(analyses),
                         "cases_per_segment":
                             [sa.summary.case_count for sa in analyses]},
            "network": {"per_segment": per_segment,
                        "cases_with_isolated_providers": iso_cases},
            "join": {"rows": len(rows)},
            "correlate": {"n_obs": spearman.n_obs,
                          "degenerate_columns": list(spearman.degenerate)},
            "regression": {
                "columns": list(est.design.columns),
                "rows_used": est.design.n_obs,
                "rows_dropped_missing": est.design.n_dropped_missing,
                "dropped_constant_covariates": list(est.dropped_constant),
                "design_key": est.design.fingerprint(),
            },
        },
    }


def _render_outputs(cfg, report, analyses, rows, spearman, est, manifest):
    stats = _segment_stats(analyses, rows)
    outputs = {
        "exclusions.tsv": _tsv([["rule", "removed"]]
                               + [[k, str(v)] for k, v in report.items()]
                               + [["retained",
                                   str(sum(s["cases"] for s in stats))]]),
        "segments.tsv": _render_segments(stats),
        "segments.json": _json_text(stats),
        "network_data.tsv": _render_network_data(rows),
        "network_data.json": _json_text(
            [{c: _GETTERS[c](r) if c in _GETTERS else getattr(r, c)
              for c in ROW_COLUMNS} for r in rows]),
        "correlation.tsv": render_correlation(spearman),
        "correlation.json": _json_text({
            "columns": list(spearman.names),
            "rho": spearman.rho,
            "p": spearman.p,
            "n_obs": spearman.n_obs,
            "degenerate_columns": list(spearman.degenerate),
        }),
        "regression.tsv": render_regression(est),
        "regression.json": _json_text({
            "ols": {"columns": list(est.ols.columns), "coef": est.ols.coef,
                    "r_squared": est.ols.r_squared, "n_obs": est.ols.n_obs},
            "vif": [{"name": v.name, "vif": v.vif, "tolerance": v.tolerance}
                    for v in est.vifs],
            "dropped_constant_covariates": list(est.dropped_constant),
            "poisson": _fit_record(est.poisson),
            "gof": {"pearson_chi2": est.gof.pearson_chi2,
                    "deviance": est.gof.deviance, "df": est.gof.df,
                    "p_value": est.gof.p_value},
            "negbin": _fit_record(est.negbin),
            "lr_alpha": {"statistic": est.lr_alpha.statistic,
                         "p_value": est.lr_alpha.p_value},
        }),
        "manifest.json": _json_text(manifest),
    }
    for sa in analyses:
        outputs[f"node_metrics_seg{sa.segment.index}.tsv"] = \
            render_node_metrics(sa)
    return outputs


def write_outputs(outputs, output_dir):
    outdir = Path(output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output dir {outdir}: {exc}") from exc
    written = []
    try:
        for name in sorted(outputs):
            path = outdir / name
            path.write_text(outputs[name], encoding="utf-8", newline="\n")
            written.append(path)
    except BaseException:
        # do not leave a half-written artifact set behind
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise
