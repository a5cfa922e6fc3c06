"""Reading and writing pulse traces and analysis reports.

Trace file grammar (UTF-8, newline-delimited)::

    # pulse_id: run42
    # injection_nmol: 3.5
    # gain: 8
    # time_unit: s
    # injection_nmol[flux_b]: 7.0
    time,flux_a,flux_b
    0.001,0.0012,0.0031
    ...

* Zero or more ``# key: value`` metadata lines come before the header row.
  ``key[column]: value`` applies to one flux column only and overrides the
  file-wide value.
* The header names exactly one ``time`` column (case-insensitive) and one or
  more flux columns. Cells are separated by commas, or by tabs when the
  header contains a tab.
* Numbers use ``.`` as decimal point regardless of locale. Times must be
  strictly increasing.
* ``time_unit`` is ``s`` (default), ``ms``, ``us`` or ``dimensionless``;
  millisecond and microsecond times are converted to seconds, dimensionless
  ones are kept and flagged with ``metadata["dimensionless"] = True``.

Reports are JSON documents (``format="json"``) or CSV tables
(``format="csv"``); every number is written with 12 significant digits.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import re
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .errors import InvalidArgumentError, TraceParseError
from .preprocess import PulseTrace

_META_RE = re.compile(r"^#\s*([A-Za-z_][\w.\-]*)(?:\[([^\]]+)\])?\s*:\s*(.*?)\s*$")
_KNOWN_KEYS = ("pulse_id", "injection_nmol", "gain", "time_unit")
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}
# Extensions picked up when a directory is read; single files may have any name.
TRACE_SUFFIXES = (".csv", ".tsv")


def _parse_scalar(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _fmt_meta(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_number(cell: str, path, line: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise TraceParseError(f"non-numeric cell {cell!r} in column {column!r}", path, line) from None
    if not math.isfinite(value):
        raise TraceParseError(f"non-finite value {cell!r} in column {column!r}", path, line)
    return value


def read_traces(path) -> list[PulseTrace]:
    """Read every flux column of a trace file, or of every trace file in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in TRACE_SUFFIXES and p.is_file())
        if not files:
            raise TraceParseError("directory holds no trace files", str(path))
        out = []
        for f in files:
            out.extend(read_traces(f))
        return out
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceParseError(f"cannot read file: {exc}", str(path)) from exc
    return parse_traces(text, source=str(path), default_id=path.stem)


def parse_traces(text: str, source: str | None = None, default_id: str = "pulse") -> list[PulseTrace]:
    """Parse trace-file text; see the module docstring for the grammar."""
    lines = text.splitlines()
    meta: dict[str, Any] = {}
    col_meta: dict[str, dict[str, Any]] = {}
    header = None
    header_line = 0
    idx = 0
    for idx, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _META_RE.match(line)
            if m is None:
                continue
            key, column, value = m.groups()
            target = col_meta.setdefault(column, {}) if column else meta
            target[key] = value
            continue
        header = raw.rstrip("\r\n")
        header_line = idx
        break
    if header is None:
        raise TraceParseError("no header row", source)
    delim = "\t" if "\t" in header else ","
    names = [c.strip() for c in header.split(delim)]
    time_cols = [i for i, n in enumerate(names) if n.lower() == "time"]
    if len(time_cols) != 1:
        what = "missing" if not time_cols else "duplicate"
        raise TraceParseError(f"{what} time column in header {names!r}", source, header_line)
    if len(names) < 2:
        raise TraceParseError("header has no flux column", source, header_line)
    if len(set(names)) != len(names):
        raise TraceParseError(f"duplicate column names in header {names!r}", source, header_line)
    t_idx = time_cols[0]
    flux_cols = [i for i in range(len(names)) if i != t_idx]
    unknown = set(col_meta) - {names[i] for i in flux_cols}
    if unknown:
        raise TraceParseError(f"metadata refers to unknown columns {sorted(unknown)}", source)

    times: list[float] = []
    fluxes: list[list[float]] = [[] for _ in flux_cols]
    previous = None
    for lineno in range(header_line + 1, len(lines) + 1):
        raw = lines[lineno - 1]
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(delim)]
        if len(cells) != len(names):
            raise TraceParseError(f"expected {len(names)} cells, got {len(cells)}", source, lineno)
        t = _parse_number(cells[t_idx], source, lineno, names[t_idx])
        if previous is not None and t <= previous:
            kind = "duplicate" if t == previous else "decreasing"
            raise TraceParseError(f"{kind} timestamp {cells[t_idx]}", source, lineno)
        previous = t
        times.append(t)
        for k, i in enumerate(flux_cols):
            fluxes[k].append(_parse_number(cells[i], source, lineno, names[i]))
    if len(times) < 2:
        raise TraceParseError(f"need at least 2 samples, got {len(times)}", source)

    traces = []
    multi = len(flux_cols) > 1
    for k, i in enumerate(flux_cols):
        name = names[i]
        merged = {**meta, **col_meta.get(name, {})}
        unit = str(merged.pop("time_unit", "s")).strip().lower()
        extra = {key: _parse_scalar(v) for key, v in merged.items() if key not in _KNOWN_KEYS}
        t_arr = np.array(times)
        if unit == "dimensionless":
            extra["dimensionless"] = True
        elif unit in _TIME_UNITS:
            t_arr = t_arr * _TIME_UNITS[unit]
        else:
            raise TraceParseError(f"unknown time_unit {unit!r}", source)
        if "pulse_id" in col_meta.get(name, {}):
            pid = col_meta[name]["pulse_id"]
        elif "pulse_id" in meta:
            pid = f"{meta['pulse_id']}:{name}" if multi else meta["pulse_id"]
        else:
            pid = f"{default_id}:{name}" if multi else default_id
        extra["column"] = name
        try:
            nmol = float(merged["injection_nmol"]) if merged.get("injection_nmol", "") != "" else None
            gain = int(merged["gain"]) if merged.get("gain", "") != "" else None
        except ValueError as exc:
            raise TraceParseError(f"bad metadata value: {exc}", source) from None
        traces.append(PulseTrace(
            times=t_arr, flux=np.array(fluxes[k]), pulse_id=pid,
            injection_nmol=nmol, gain=gain, metadata=extra,
        ))
    return traces


def _column_name(trace: PulseTrace, used: set[str]) -> str:
    base = re.sub(r"[^\w.\-]", "_", trace.pulse_id) or "flux"
    name = base
    n = 1
    while name in used or name.lower() == "time":
        n += 1
        name = f"{base}_{n}"
    used.add(name)
    return name


def write_traces(traces: PulseTrace | Sequence[PulseTrace], path, delimiter: str = ",") -> Path:
    """Write traces sharing one time grid to a single file.

    Values are written with ``repr`` so :func:`read_traces` returns them
    bit-identically.
    """
    if isinstance(traces, PulseTrace):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise InvalidArgumentError("no traces to write")
    t = traces[0].times
    for tr in traces[1:]:
        if tr.times.shape != t.shape or np.any(tr.times != t):
            raise InvalidArgumentError("all traces in one file must share a time grid")
    lines = []
    single = len(traces) == 1
    used: set[str] = set()
    cols = ["flux"] if single else [_column_name(tr, used) for tr in traces]
    for tr, col in zip(traces, cols):
        qual = "" if single else f"[{col}]"
        lines.append(f"# pulse_id{qual}: {tr.pulse_id}")
        if tr.injection_nmol is not None:
            lines.append(f"# injection_nmol{qual}: {tr.injection_nmol!r}")
        if tr.gain is not None:
            lines.append(f"# gain{qual}: {tr.gain}")
        for key, value in tr.metadata.items():
            if key in ("column", "dimensionless") or key in _KNOWN_KEYS:
                continue
            lines.append(f"# {key}{qual}: {_fmt_meta(value)}")
    dimless = traces[0].metadata.get("dimensionless", False)
    lines.append(f"# time_unit: {'dimensionless' if dimless else 's'}")
    lines.append(delimiter.join(["time", *cols]))
    for i in range(t.size):
        row = [repr(float(t[i]))] + [repr(float(tr.flux[i])) for tr in traces]
        lines.append(delimiter.join(row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# -- reports -----------------------------------------------------------------

def round_sig(value: float, digits: int = 12):
    """Round to ``digits`` significant digits; NaN -> None, +-inf -> "inf"/"-inf"."""
    if value is None:
        return None
    v = float(value)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(f"{v:.{digits}g}")


def _clean(obj):
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # Enum
        return obj.value
    return obj


def provenance(input_path=None, seed=None, **extra) -> dict:
    doc = {"tool": "gdcfit", "version": __version__,
           "input": None if input_path is None else str(input_path), "seed": seed}
    doc.update(extra)
    return doc


def fit_result_document(result) -> dict:
    m = result.model
    doc: dict[str, Any] = {"pulse_id": result.pulse_id, "model": m.kind, "time_basis": m.time_basis,
                           "time_scale": m.time_scale}
    doc["params"] = dict(result.params)
    doc["stderr"] = result.stderr
    if m.kind == "GDC":
        from .curves import gdc_normalization, knudsen_ratio, residence_time
        doc["derived"] = {
            "normalization": gdc_normalization(m.shape),
            "area_fraction": m.area_fraction,
            "knudsen_ratio": knudsen_ratio(m.shape),
            "residence_time": residence_time(m.shape),
        }
    else:
        doc["derived"] = {"area_fraction": m.area_fraction}
    doc["rmse"] = result.rmse
    doc["mse"] = result.mse
    doc["r_squared"] = result.r_squared
    doc["iterations"] = result.iterations
    doc["converged"] = result.converged
    doc["message"] = result.message
    if m.kind == "GDC":
        doc["init_fallback"] = result.init_fallback
    return doc


def fingerprint_document(report) -> dict:
    ols = report.ols
    return {
        "regime": report.regime.value,
        "alpha": report.alpha,
        "n_points": ols.n,
        "dof": ols.dof,
        "r_squared": ols.r_squared,
        "degenerate": ols.degenerate,
        "coefficients": ols.table(),
        "pulses": [
            {"pulse_id": pid, "knudsen_ratio": r, "above_boundary": a}
            for pid, r, a in zip(report.pulse_ids, report.knudsen_ratios, report.above_boundary)
        ],
    }


def to_document(results) -> Any:
    """Convert fit results, fingerprint reports and lists thereof to plain data."""
    from .fingerprint import FingerprintReport
    from .fit import FitResult

    if isinstance(results, FitResult):
        return fit_result_document(results)
    if isinstance(results, FingerprintReport):
        return fingerprint_document(results)
    if isinstance(results, Mapping):
        return {k: to_document(v) for k, v in results.items()}
    if isinstance(results, (list, tuple)):
        return [to_document(v) for v in results]
    return results


def _table_rows(results) -> list[dict]:
    from .fingerprint import FingerprintReport
    from .fit import FitResult

    if isinstance(results, FingerprintReport):
        return results.ols.table()
    if isinstance(results, FitResult):
        results = [results]
    rows = []
    for r in results:
        if isinstance(r, FitResult):
            d = fit_result_document(r)
            row = {"pulse_id": d["pulse_id"], "model": d["model"]}
            row.update(d["params"])
            row.update({f"se_{k}": v for k, v in d["stderr"].items()})
            row.update(d["derived"])
            row.update({k: d[k] for k in ("rmse", "r_squared", "iterations", "converged")})
            rows.append(row)
        elif isinstance(r, Mapping):
            rows.append(dict(r))
        else:
            raise TypeError(f"cannot tabulate {type(r).__name__}")
    return rows


def dumps_json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


def table_to_csv(rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    rows = [_clean(dict(r)) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
    return buf.getvalue()


def write_report(results, path, format: str = "json", provenance_info: Mapping | None = None) -> Path:
    """Serialize results to a JSON document or a CSV table.

    ``provenance_info`` (see :func:`provenance`) is embedded in JSON reports
    and written as leading ``# key: value`` lines in CSV reports.
    """
    path = Path(path)
    prov = dict(provenance_info) if provenance_info is not None else provenance()
    if format == "json":
        text = dumps_json({"provenance": prov, "results": to_document(results)})
    elif format == "csv":
        head = "".join(f"# {k}: {'' if v is None else v}\n" for k, v in _clean(prov).items())
        text = head + table_to_csv(_table_rows(results))
    else:
        raise InvalidArgumentError(f"unknown report format {format!r}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_report(path) -> Any:
    """Load a report written by :func:`write_report`.

    JSON reports come back as dictionaries; CSV reports as
    ``{"provenance": {...}, "rows": [...]}`` with numeric cells parsed.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return json.loads(text)
    prov = {}
    body = []
    for line in text.splitlines():
        m = _META_RE.match(line)
        if m and not body:
            prov[m.group(1)] = _parse_scalar(m.group(3)) if m.group(3) else None
        else:
            body.append(line)
    reader = csv.DictReader(body)
    rows = [{k: _parse_cell(v) for k, v in row.items()} for row in reader]
    return {"provenance": prov, "rows": rows}


def _parse_cell(v: str):
    if v == "":
        return None
    if v in ("True", "False"):
        return v == "True"
    return _parse_scalar(v)
