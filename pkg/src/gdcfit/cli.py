"""Command-line front end: ``gdcfit {simulate,fit,series,fingerprint,figures}``.

Every subcommand writes ``report.json`` (machine readable) and
``summary.txt`` (human readable) into ``--output``, plus any tables it
produces. Exit codes: 0 ok, 2 parse error, 3 non-convergence,
4 insufficient data, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, pipeline, synth
from .curves import KNUDSEN_RATIO, SdcParams
from .errors import InsufficientDataError, RankDeficiencyError, TraceParseError
from .fingerprint import DEFAULT_ALPHA, classify
from .fit import FitOptions

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NONCONVERGENCE = 3
EXIT_INSUFFICIENT = 4
EXIT_IO = 5


class CliError(Exception):
    def __init__(self, code: int, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.code = code


def _fmt(v, spec: str = ".6g") -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return str(v)
    try:
        return format(float(v), spec)
    except (TypeError, ValueError):
        return str(v)


def _options(args) -> FitOptions:
    return FitOptions(max_iter=args.max_iter, ftol=args.tol, time_basis=args.time_basis, eta=args.eta)


def _prov(args, **extra) -> dict:
    settings = {"model": getattr(args, "model", None), "alpha": getattr(args, "alpha", None),
                "max_iter": args.max_iter, "tol": args.tol, "time_basis": args.time_basis, "eta": args.eta}
    return io.provenance(getattr(args, "input", None), args.seed, command=args.command, settings=settings, **extra)


def _outdir(args) -> Path:
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, "output", str(exc)) from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, "output", str(exc)) from exc


def _report(out: Path, doc, prov, summary: str) -> None:
    try:
        io.write_report(doc, out / "report.json", "json", prov)
    except OSError as exc:
        raise CliError(EXIT_IO, "output", str(exc)) from exc
    _write(out / "summary.txt", summary)
    sys.stdout.write(summary)


def _read(args):
    if not args.input:
        raise CliError(EXIT_PARSE, "input", "--input is required")
    try:
        traces = io.read_traces(args.input)
    except TraceParseError as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    if not traces:
        raise CliError(EXIT_PARSE, "parse", "input holds no traces")
    return traces


def _fit_lines(a: pipeline.PulseAnalysis) -> list[str]:
    lines = [f"pulse {a.pulse_id}  (injection_nmol={_fmt(a.trace.injection_nmol)}, gain={_fmt(a.trace.gain)})"]
    if a.error:
        lines.append(f"  error: {a.error}")
    if a.gdc is not None:
        p = a.gdc.params
        se = a.gdc.stderr
        lines.append(f"  GDC  converged={a.gdc.converged}  iterations={a.gdc.iterations}")
        for k in ("lam", "mu", "sigma", "beta", "x_bar"):
            lines.append(f"    {k:<7}{_fmt(p[k], '>14.6f')}  +- {_fmt(se[k], '.3g')}")
        ratio = p["lam"] * np.exp(p["mu"])
        lines.append(f"    knudsen_ratio {ratio:.4f} (ideal {KNUDSEN_RATIO:.4f})")
        lines.append(f"    RMSE {a.gdc.rmse:.4g}   R^2 {a.gdc.r_squared:.6f}")
    if a.sdc is not None:
        p = a.sdc.params
        lines.append(f"  SDC  converged={a.sdc.converged}  eta={p['eta']:.6g}  scale={p['scale']:.6g}  "
                     f"x_bar={p['x_bar']:.3g}")
        lines.append(f"    RMSE {a.sdc.rmse:.4g}   R^2 {a.sdc.r_squared:.6f}")
    return lines


def cmd_simulate(args) -> int:
    out = _outdir(args)
    if args.regime == "sdc":
        cfg = synth.SynthConfig(ground_truth=SdcParams(eta=args.eta), noise_sigma=args.noise,
                                rng_seed=args.seed, pulse_id="sdc_reference")
        traces = [synth.generate_pulse(cfg)]
    else:
        base = synth.SynthConfig(noise_sigma=args.noise, rng_seed=args.seed, pulse_id="pulse")
        schedule = np.linspace(args.nmol_min, args.nmol_max, args.n_pulses)
        model = synth.RegimeModel(kind=args.regime)
        if args.slope is not None:
            model = synth.RegimeModel(kind=args.regime, a1=args.slope)
        traces = synth.generate_series(base, schedule, model)
    files = []
    for tr in traces:
        path = out / f"{tr.pulse_id}.csv"
        try:
            io.write_traces(tr, path)
        except OSError as exc:
            raise CliError(EXIT_IO, "output", str(exc)) from exc
        files.append(path.name)
    doc = {"regime": args.regime, "noise_sigma": args.noise, "files": files,
           "pulses": [{"pulse_id": t.pulse_id, "injection_nmol": t.injection_nmol, "gain": t.gain,
                       **{k: v for k, v in t.metadata.items() if k.startswith("truth_")}} for t in traces]}
    summary = f"simulated {len(traces)} pulse(s), regime={args.regime}, noise={args.noise}, seed={args.seed}\n"
    summary += "".join(f"  {f}\n" for f in files)
    _report(out, doc, _prov(args), summary)
    return EXIT_OK


def cmd_fit(args) -> int:
    traces = _read(args)
    out = _outdir(args)
    opts = _options(args)
    analyses = [pipeline.analyze_pulse(tr, args.model, opts) for tr in traces]
    docs = []
    lines = []
    for a in analyses:
        d = {"pulse_id": a.pulse_id, "injection_nmol": a.trace.injection_nmol, "gain": a.trace.gain,
             "flux_range": a.flux_range, "error": a.error}
        if a.gdc is not None:
            d["gdc"] = io.fit_result_document(a.gdc)
        if a.sdc is not None:
            d["sdc"] = io.fit_result_document(a.sdc)
        if a.gdc is not None and a.sdc is not None:
            d["gdc_minus_sdc_r2"] = a.gdc.r_squared - a.sdc.r_squared
        docs.append(d)
        lines.extend(_fit_lines(a))
    _report(out, docs, _prov(args), "\n".join(lines) + "\n")
    if any(a.error for a in analyses):
        raise CliError(EXIT_NONCONVERGENCE, "fit", "; ".join(a.error for a in analyses if a.error))
    if not all(a.converged for a in analyses):
        raise CliError(EXIT_NONCONVERGENCE, "fit", "solver did not converge")
    return EXIT_OK


def _series(args):
    traces = _read(args)
    return pipeline.analyze_series(traces, args.model, _options(args))


def cmd_series(args) -> int:
    analyses = _series(args)
    out = _outdir(args)
    rows = pipeline.series_table(analyses)
    _write(out / "series.csv", io.table_to_csv(rows, pipeline.SERIES_COLUMNS))
    failed = [a.pulse_id for a in analyses if not a.converged]
    doc = {"n_pulses": len(rows), "non_converged": failed, "table": rows}
    lines = [f"{len(rows)} pulse(s); {len(rows) - len(failed)} converged"]
    lines.append(f"{'pulse_id':<16}{'nmol':>8}{'lam':>10}{'mu':>10}{'GDC R2':>10}{'SDC R2':>10}")
    for r in rows:
        lines.append(f"{str(r['pulse_id']):<16}{_fmt(r['injection_nmol'], '8.3f')}{_fmt(r['gdc_lam'], '10.4f')}"
                     f"{_fmt(r['gdc_mu'], '10.4f')}{_fmt(r['gdc_r2'], '10.5f')}{_fmt(r['sdc_r2'], '10.5f')}")
    if failed:
        lines.append("non-converged: " + ", ".join(failed))
    _report(out, doc, _prov(args), "\n".join(lines) + "\n")
    return EXIT_OK


def _fingerprint_text(report) -> str:
    lines = [f"regime: {report.regime.value}  (alpha={report.alpha}, n={report.ols.n}, R^2={report.ols.r_squared:.4f})"]
    lines.append(f"{'Coef':<6}{'Estimate':>12}{'Std. Error':>12}{'t value':>10}{'Pr(>|t|)':>10}")
    for row in report.ols.table():
        lines.append(f"{row['coef']:<6}{row['estimate']:>12.4f}{row['std_error']:>12.4f}"
                     f"{row['t_value']:>10.3f}{row['p_value']:>10.3f}")
    n_above = sum(report.above_boundary)
    lines.append(f"pulses above the {KNUDSEN_RATIO:.3f} Knudsen ratio boundary: {n_above}/{len(report.above_boundary)}")
    return "\n".join(lines) + "\n"


def cmd_fingerprint(args) -> int:
    src = Path(args.input) if args.input else None
    if src is not None and src.is_file() and src.suffix.lower() == ".csv" and _is_series_table(src):
        try:
            pts = pipeline.points_from_table(io.read_report(src)["rows"])
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(EXIT_PARSE, "parse", str(exc)) from exc
    else:
        pts = pipeline.series_points(_series(args))
    try:
        report = classify(pts, args.alpha)
    except InsufficientDataError as exc:
        raise CliError(EXIT_INSUFFICIENT, "fingerprint", str(exc)) from exc
    except RankDeficiencyError as exc:
        raise CliError(EXIT_INSUFFICIENT, "fingerprint", str(exc)) from exc
    out = _outdir(args)
    _write(out / "fingerprint.csv", io.table_to_csv(report.ols.table()))
    _report(out, report, _prov(args), _fingerprint_text(report))
    return EXIT_OK


def _is_series_table(path: Path) -> bool:
    try:
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if not line.startswith("#"):
                    return line.startswith("pulse_id,")
    except OSError as exc:
        raise CliError(EXIT_IO, "input", str(exc)) from exc
    return False


def cmd_figures(args) -> int:
    if args.input:
        traces = _read(args)
    else:
        traces = pipeline.default_figure_series(seed=args.seed)
    analyses = pipeline.analyze_series(traces, "both", _options(args))
    out = _outdir(args)
    tables = {
        "fig1_fstar.csv": pipeline.fig_fstar_table(),
        "fig2_flux_range.csv": pipeline.fig_flux_range_table(analyses),
        "fig3_r2.csv": pipeline.fig_r2_table(analyses),
        "fig4_params.csv": pipeline.fig_params_table(analyses),
        "fig5_intercept_ratio.csv": pipeline.fig_intercept_ratio_table(analyses),
    }
    for name, rows in tables.items():
        _write(out / name, io.table_to_csv(rows))
    doc = {"tables": {k: len(v) for k, v in tables.items()}, "n_pulses": len(analyses)}
    summary = "".join(f"{k}: {len(v)} rows\n" for k, v in tables.items())
    _report(out, doc, _prov(args), summary)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "series": cmd_series,
    "fingerprint": cmd_fingerprint,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", help="trace file, directory of trace files, or series table")
    common.add_argument("--output", "-o", default=".", help="output directory (default: current)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--max-iter", type=int, default=500)
    common.add_argument("--tol", type=float, default=1e-12, help="relative cost-improvement tolerance")
    common.add_argument("--time-basis", choices=("clock", "dimensionless"), default="clock")
    common.add_argument("--eta", type=float, default=1.0, help="rate used for dimensionless time / SDC simulation")
    common.add_argument("--config", help="JSON file with default values for any option")

    parser = argparse.ArgumentParser(prog="gdcfit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gdcfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    parser.subcommands = {}
    p = sub.add_parser("simulate", parents=[common], help="write synthetic pulse traces")
    parser.subcommands["simulate"] = p
    p.add_argument("--regime", choices=("sdc", "knudsen", "non_knudsen", "mixed"), default="mixed")
    p.add_argument("--n-pulses", type=int, default=20)
    p.add_argument("--nmol-min", type=float, default=0.51)
    p.add_argument("--nmol-max", type=float, default=24.0)
    p.add_argument("--noise", type=float, default=0.01, help="noise sd as a fraction of peak height")
    p.add_argument("--slope", type=float, default=None, help="non-Knudsen slope a1")

    for name, helptext in (("fit", "fit each pulse in a file"), ("series", "fit a pulse series"),
                           ("fingerprint", "classify the transport regime"), ("figures", "write plot data")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        parser.subcommands[name] = p
        if name != "figures":
            p.add_argument("--model", choices=pipeline.MODELS, default="both" if name != "fingerprint" else "gdc")
        if name == "fingerprint":
            p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_PARSE, "config", str(exc)) from exc
        if not isinstance(cfg, dict):
            raise CliError(EXIT_PARSE, "config", "config file must hold a JSON object")
        # one config file may serve several subcommands; only names no subcommand knows are errors
        known = set(vars(args))
        anywhere = set().union(*(vars(sp.parse_args([])) for sp in parser.subcommands.values()))
        defaults = {}
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if dest not in anywhere or dest == "config":
                raise CliError(EXIT_PARSE, "config", f"unknown option {key!r}")
            if dest in known:
                defaults[dest] = value
        parser.subcommands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"gdcfit: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
