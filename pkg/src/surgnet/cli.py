"""Command-line interface.

Each pipeline stage is independently invocable for debugging; ``run``
executes the whole flow. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric non-convergence. The output directory can be
overridden with the SURGNET_OUTPUT_DIR environment variable (an explicit
--output-dir flag still wins).
"""

import argparse
import os
import sys

from . import __version__, pipeline, records, synth
from .complications import ComplicationCodeset, count_complications
from .errors import ConfigError, ConvergenceError, DataError
from .network import write_edge_list

ENV_OUTPUT_DIR = "SURGNET_OUTPUT_DIR"


def _add_ingest_args(p):
    p.add_argument("input", help="case file (delimited text with header)")
    p.add_argument("--delimiter", default=",", help="field delimiter")
    p.add_argument("--provider-form", choices=("wide", "long"), default="wide",
                   help="providers semicolon-joined per case (wide) or one "
                        "provider per row (long)")


def _add_window_args(p):
    p.add_argument("--window-days", type=int, default=365,
                   help="segment window length in days")


def _add_metric_args(p):
    p.add_argument("--eig-tol", type=float, default=1e-10,
                   help="eigenvector power-iteration tolerance")
    p.add_argument("--eig-max-iter", type=int, default=10000,
                   help="eigenvector power-iteration cap")


def _add_codeset_args(p):
    p.add_argument("--codeset", default="embedded",
                   help="complication codeset file, or 'embedded'")
    p.add_argument("--distinct", action="store_true",
                   help="count each matching code once per case")


def _resolve_output_dir(flag_value, config_value=None):
    if flag_value:
        return flag_value
    env = os.environ.get(ENV_OUTPUT_DIR)
    if env:
        return env
    return config_value if config_value else "surgnet_out"


def _config_from_args(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig(
        input_path=args.input,
        output_dir=_resolve_output_dir(getattr(args, "output_dir", None)),
        window_days=getattr(args, "window_days", 365),
        delimiter=args.delimiter,
        provider_form=args.provider_form,
        eig_tol=getattr(args, "eig_tol", 1e-10),
        eig_max_iter=getattr(args, "eig_max_iter", 10000),
        codeset=getattr(args, "codeset", "embedded"),
        distinct_complications=getattr(args, "distinct", False),
    )
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="surgnet",
        description="Co-worker network analytics for surgical case records")
    top.add_argument("--version", action="version",
                     version=f"surgnet {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check",
                       help="parse a case file and report diagnostics "
                            "and exclusion counts")
    _add_ingest_args(p)
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("segment", help="show the time-segment breakdown")
    _add_ingest_args(p)
    _add_window_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("metrics",
                       help="compute per-segment node metrics tables")
    _add_ingest_args(p)
    _add_window_args(p)
    _add_metric_args(p)
    p.add_argument("--segment", type=int, default=None,
                   help="restrict output to one segment index")
    p.add_argument("--output-dir", default=None,
                   help="where to write node_metrics_seg<k>.tsv")
    p.add_argument("--save-edges", action="store_true",
                   help="also write edges_seg<k>.tsv edge lists")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("outcomes",
                       help="print per-case complication counts")
    _add_ingest_args(p)
    _add_codeset_args(p)
    p.set_defaults(func=cmd_outcomes)

    p = sub.add_parser("correlate",
                       help="Spearman matrix of the team-average measures")
    _add_ingest_args(p)
    _add_window_args(p)
    _add_metric_args(p)
    _add_codeset_args(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("regress",
                       help="screening, Poisson, and negative binomial fits")
    _add_ingest_args(p)
    _add_window_args(p)
    _add_metric_args(p)
    _add_codeset_args(p)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("run", help="full pipeline, all artifacts to disk")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--input", default=None, help="case file (overrides config)")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--window-days", type=int, default=None)
    p.add_argument("--delimiter", default=None)
    p.add_argument("--provider-form", choices=("wide", "long"), default=None)
    p.add_argument("--eig-tol", type=float, default=None)
    p.add_argument("--eig-max-iter", type=int, default=None)
    p.add_argument("--codeset", default=None)
    p.add_argument("--distinct", action="store_true", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic case file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--providers", type=int, default=50)
    p.add_argument("--segments", type=int, default=4)
    _add_window_args(p)
    p.add_argument("--alpha", type=float, default=None,
                   help="NB2 heterogeneity of the generating model")
    p.add_argument("--coef", action="append", default=[], metavar="NAME=VALUE",
                   help="override a generating coefficient (repeatable)")
    p.add_argument("--out", default="synthetic_cases.csv")
    p.add_argument("--truth-out", default=None,
                   help="sidecar truth file (default: <out>.truth.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-codeset",
                       help="print the complication codeset (prefix<TAB>definition)")
    p.add_argument("--codeset", default="embedded")
    p.set_defaults(func=cmd_dump_codeset)

    return top


# ---------------------------------------------------------------------------
# subcommands


def _parsed_cases(args):
    cases, diagnostics = records.parse_cases(
        args.input, delimiter=args.delimiter, provider_form=args.provider_form)
    return cases, diagnostics


def cmd_ingest_check(args):
    cases, diagnostics = _parsed_cases(args)
    retained, report = records.apply_exclusions(cases)
    print(f"cases parsed\t{len(cases)}")
    print(f"parse diagnostics\t{len(diagnostics)}")
    for d in diagnostics[:10]:
        print(f"  row {d.row}: {d.message}")
    if len(diagnostics) > 10:
        print(f"  ... {len(diagnostics) - 10} more")
    for rule, count in report.items():
        print(f"excluded ({rule})\t{count}")
    print(f"retained\t{len(retained)}")
    return 0


def cmd_segment(args):
    cases, _ = _parsed_cases(args)
    retained, _ = records.apply_exclusions(cases)
    if not retained:
        raise DataError("no cases after exclusion")
    segments = records.segment_cases(retained, window_days=args.window_days)
    print("segment\tstart_day\tend_day_exclusive\tdays\tcases")
    for seg in segments:
        print(f"{seg.index}\t{seg.start_day}\t{seg.end_day_exclusive}"
              f"\t{seg.span_days}\t{len(seg.cases)}")
    return 0


def cmd_metrics(args):
    cfg = _config_from_args(args)
    _, _, retained = pipeline.load_cases(cfg)
    analyses = pipeline.analyze_segments(cfg, retained)
    if args.segment is not None:
        analyses = [sa for sa in analyses if sa.segment.index == args.segment]
        if not analyses:
            raise ConfigError(f"no segment with index {args.segment}")
    outdir = _resolve_output_dir(args.output_dir)
    outputs = {f"node_metrics_seg{sa.segment.index}.tsv":
               pipeline.render_node_metrics(sa) for sa in analyses}
    pipeline.write_outputs(outputs, outdir)
    if args.save_edges:
        for sa in analyses:
            write_edge_list(sa.graph,
                            os.path.join(outdir,
                                         f"edges_seg{sa.segment.index}.tsv"))
    for sa in analyses:
        s = sa.summary
        print(f"segment {sa.segment.index}: nodes {s.node_count}, "
              f"edges {s.edge_count}, cases {s.case_count}, "
              f"density {s.density:.6g}")
    print(f"wrote {len(analyses)} node-metrics table(s) to {outdir}")
    return 0


def cmd_outcomes(args):
    cfg = _config_from_args(args)
    codeset = pipeline.load_codeset(cfg)
    _, _, retained = pipeline.load_cases(cfg)
    print("case_id\tC")
    for case in sorted(retained, key=lambda c: c.case_id):
        print(f"{case.case_id}\t"
              f"{count_complications(case, codeset, distinct=args.distinct)}")
    return 0


def _joined_rows(args):
    cfg = _config_from_args(args)
    codeset = pipeline.load_codeset(cfg)
    _, _, retained = pipeline.load_cases(cfg)
    analyses = pipeline.analyze_segments(cfg, retained)
    rows = pipeline.assemble_rows(cfg, analyses, codeset)
    return cfg, rows


def cmd_correlate(args):
    _, rows = _joined_rows(args)
    sp = pipeline.correlate_rows(rows)
    sys.stdout.write(pipeline.render_correlation(sp))
    return 0


def cmd_regress(args):
    cfg, rows = _joined_rows(args)
    est = pipeline.estimate(cfg, rows)
    sys.stdout.write(pipeline.render_regression(est))
    return 0


def cmd_run(args):
    # flag > environment > config file > dataclass default; None here
    # means "not overridden", so a config-file value can still apply
    overrides = {
        "input_path": args.input,
        "output_dir": args.output_dir or os.environ.get(ENV_OUTPUT_DIR) or None,
        "window_days": args.window_days,
        "delimiter": args.delimiter,
        "provider_form": args.provider_form,
        "eig_tol": args.eig_tol,
        "eig_max_iter": args.eig_max_iter,
        "codeset": args.codeset,
        "distinct_complications": args.distinct,
        "seed": args.seed,
    }
    if args.config:
        cfg = pipeline.PipelineConfig.from_file(args.config, **overrides)
    else:
        if not args.input:
            raise ConfigError("run needs --input (or --config with input_path)")
        cfg = pipeline.PipelineConfig(
            **{k: v for k, v in overrides.items() if v is not None})
    result = pipeline.run_pipeline(cfg.validate())
    nb = result.estimation.negbin
    print(f"cases used\t{len(result.rows)}")
    print(f"segments\t{len(result.analyses)}")
    print(f"negbin alpha\t{nb.alpha:.6g}"
          + (" (boundary)" if nb.alpha_boundary else ""))
    print(f"outputs\t{result.output_dir} ({len(result.outputs)} files)")
    return 0


def _parse_coef_overrides(pairs):
    coef = dict(synth.DEFAULT_COEFFICIENTS)
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"--coef expects NAME=VALUE, got {pair!r}")
        try:
            coef[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--coef value is not a number: {pair!r}")
    return coef


def cmd_synth(args):
    model = synth.ComplicationModel(
        coefficients=_parse_coef_overrides(args.coef),
        alpha=args.alpha if args.alpha is not None else 0.8)
    out, truth = synth.synth_generate(
        seed=args.seed, n_cases=args.cases, n_providers=args.providers,
        window_days=args.window_days, n_segments=args.segments,
        model=model, out_path=args.out, truth_path=args.truth_out)
    print(f"wrote {out}")
    print(f"wrote {truth}")
    return 0


def cmd_dump_codeset(args):
    if args.codeset == "embedded":
        codeset = ComplicationCodeset.embedded()
    else:
        codeset = ComplicationCodeset.from_file(args.codeset)
    codeset.dump(sys.stdout)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        if exc.trace:
            print(f"trace: {exc.trace}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
