"""Result files: versioned CSV, JSON lines, per-method plot data, tone dumps.

Floats are written with ``repr`` (shortest round-trip form), lists are
``;``-joined and block orders ``|``-joined, so identical tables give
byte-identical files and the CSV parses back to the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import InputError, ParseError
from .experiments import ExperimentSpec, ResultRow, ResultTable

__all__ = ["SCHEMA_VERSION", "COLUMNS", "FORMATS", "emit_results", "emit_all", "read_csv", "format_float"]

SCHEMA_VERSION = 1
HEADER_PREFIX = "# mcnoma-results"
FORMATS = ("csv", "jsonl", "plot", "tones", "figure")

COLUMNS = (
    "schema_version",
    "kind",
    "sweep_value",
    "method",
    "seed",
    "status",
    "sum_rate_bpshz",
    "sum_rate_mbps",
    "user_rates_bpshz",
    "user_rates_mbps",
    "energy_w",
    "energy_dbm",
    "transmit_power_w",
    "power_ratio_to_oma",
    "decoding_order",
    "block_fractions",
    "block_orders",
    "kkt_residual",
    "error",
)


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _floats(values):
    return ";".join(format_float(v) for v in values)


def _ints(values):
    return ";".join(str(int(v)) for v in values)


def _row_record(kind, row):
    return {
        "schema_version": str(SCHEMA_VERSION),
        "kind": kind,
        "sweep_value": format_float(row.sweep_value),
        "method": row.method,
        "seed": str(row.seed),
        "status": row.status,
        "sum_rate_bpshz": format_float(row.sum_rate),
        "sum_rate_mbps": format_float(row.sum_rate_mbps),
        "user_rates_bpshz": _floats(row.user_rates),
        "user_rates_mbps": _floats(row.user_rates_mbps),
        "energy_w": format_float(row.energy),
        "energy_dbm": format_float(row.energy_dbm),
        "transmit_power_w": format_float(row.transmit_power),
        "power_ratio_to_oma": format_float(row.power_ratio_to_oma),
        "decoding_order": _ints(row.decoding_order),
        "block_fractions": _floats(row.block_fractions),
        "block_orders": "|".join(_ints(o) for o in row.block_orders),
        "kkt_residual": format_float(row.kkt_residual),
        "error": row.error,
    }


def _csv_text(table):
    buf = io.StringIO()
    buf.write(f"{HEADER_PREFIX} v{SCHEMA_VERSION} {json.dumps(table.spec.to_dict(), sort_keys=True)}\n")
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in table.rows:
        writer.writerow(_row_record(table.spec.kind, row))
    return buf.getvalue()


def _jsonl_text(table):
    lines = []
    for row in table.rows:
        rec = {
            "schema_version": SCHEMA_VERSION,
            "kind": table.spec.kind,
            "sweep_value": row.sweep_value,
            "method": row.method,
            "seed": row.seed,
            "status": row.status,
            "sum_rate_bpshz": row.sum_rate,
            "sum_rate_mbps": row.sum_rate_mbps,
            "user_rates_bpshz": list(row.user_rates),
            "user_rates_mbps": list(row.user_rates_mbps),
            "energy_w": row.energy,
            "energy_dbm": row.energy_dbm,
            "transmit_power_w": row.transmit_power,
            "power_ratio_to_oma": row.power_ratio_to_oma,
            "decoding_order": list(row.decoding_order),
            "block_fractions": list(row.block_fractions),
            "block_orders": [list(o) for o in row.block_orders],
            "kkt_residual": row.kkt_residual,
            "error": row.error,
        }
        # JSON has no NaN/inf; encode them as strings the way the CSV does
        rec = {k: (format_float(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in rec.items()}
        lines.append(json.dumps(rec, sort_keys=False))
    return "\n".join(lines) + "\n"


def metric_for(spec):
    """Row attribute plotted on the y axis and its label."""
    if spec.mode == "energy":
        return "energy_dbm", "transmit power [dBm]"
    if spec.kind == "subcarrier_sweep":
        return "sum_rate", "sum spectral efficiency [bits/s/Hz]"
    return "sum_rate", "data rate sum [bits/s/Hz]"


def _plot_files(table):
    attr, label = metric_for(table.spec)
    out = {}
    for method in table.spec.methods:
        lines = [f"# {table.spec.kind} {method}: {label}", "sweep_value mean std num_ok"]
        for v in table.spec.values:
            vals = np.array([getattr(r, attr) for r in table.select(method, v) if r.ok], dtype=float)
            mean = float(vals.mean()) if vals.size else float("nan")
            std = float(vals.std()) if vals.size else float("nan")
            lines.append(f"{format_float(v)} {format_float(mean)} {format_float(std)} {vals.size}")
        out[f"{method}.dat"] = "\n".join(lines) + "\n"
    return out


def _tone_files(table):
    """Per-tone spectral efficiency for every block of the proposed schedule.

    Uses the first successful proposed row that carries tone data. One file
    per block, columns ``tone`` then one per user, in bits/s/Hz.
    """
    rows = [r for r in table.select("proposed") if r.ok and r.per_tone]
    if not rows:
        return {}
    row = rows[0]
    out = {}
    for k, tones in enumerate(row.per_tone):
        tones = np.asarray(tones, dtype=float)
        frac = row.block_fractions[k] if row.block_fractions else 1.0
        head = [f"# seed {row.seed} value {format_float(row.sweep_value)} block {k} fraction {format_float(frac)}",
                "tone " + " ".join(f"user{u}" for u in range(tones.shape[0]))]
        body = [f"{n} " + " ".join(format_float(x) for x in tones[:, n]) for n in range(tones.shape[1])]
        out[f"block_{k}.dat"] = "\n".join(head + body) + "\n"
    return out


def _write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_results(table, format, path):
    """Write ``table`` in one format.

    Parameters
    ----------
    table : ResultTable
    format : {"csv", "jsonl", "plot", "tones", "figure"}
        ``csv``/``jsonl``/``figure`` write the file ``path``; ``plot`` and
        ``tones`` write one file per method / per block into directory
        ``path``.
    path : str or Path

    Returns
    -------
    list of Path
        Files written.

    Raises
    ------
    InputError
        Empty table, empty method subset or unknown format.
    OSError
        On I/O failure, with the offending path in the message.
    """
    if not table.rows:
        raise InputError("cannot emit an empty result table")
    if not table.spec.methods:
        raise InputError("result table has an empty method subset")
    path = Path(path)
    if format == "csv":
        _write(path, _csv_text(table))
        return [path]
    if format == "jsonl":
        _write(path, _jsonl_text(table))
        return [path]
    if format in ("plot", "tones"):
        files = _plot_files(table) if format == "plot" else _tone_files(table)
        written = []
        for name, text in sorted(files.items()):
            _write(path / name, text)
            written.append(path / name)
        return written
    if format == "figure":
        from .plotting import plot_table

        plot_table(table, path)
        return [path]
    raise InputError(f"unknown format {format!r}; expected one of {FORMATS}")


def emit_all(table, outdir, *, figures=True):
    """Write results.csv, results.jsonl, plot/, tones/ (timeshare demo) and a PNG."""
    outdir = Path(outdir)
    written = emit_results(table, "csv", outdir / "results.csv")
    written += emit_results(table, "jsonl", outdir / "results.jsonl")
    written += emit_results(table, "plot", outdir / "plot")
    if table.spec.kind == "timeshare_demo":
        written += emit_results(table, "tones", outdir / "tones")
    if figures:
        written += emit_results(table, "figure", outdir / f"{table.spec.kind}.png")
        if table.spec.kind == "timeshare_demo" and (outdir / "tones").exists():
            from .plotting import plot_tones

            written += plot_tones(table, outdir / "tones")
    return written


def _parse_floats(text):
    return tuple(float(t) for t in text.split(";")) if text else ()


def _parse_ints(text):
    return tuple(int(t) for t in text.split(";")) if text else ()


def read_csv(path):
    """Parse a results CSV back into a :class:`ResultTable`.

    Raises
    ------
    ParseError
        Missing/unknown header, schema version mismatch or a malformed
        field; ``offset`` is the byte offset of the offending line.
    """
    path = Path(path)
    text = path.read_text()
    first, _, rest = text.partition("\n")
    if not first.startswith(HEADER_PREFIX + " v"):
        raise ParseError(f"{path}: not a results file", 0)
    version_str, _, spec_json = first[len(HEADER_PREFIX) + 2:].partition(" ")
    if version_str != str(SCHEMA_VERSION):
        raise ParseError(f"{path}: schema version {version_str}, expected {SCHEMA_VERSION}", 0)
    try:
        spec = ExperimentSpec.from_dict(json.loads(spec_json))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{path}: bad experiment header: {exc}", 0) from exc
    offset = len(first) + 1
    reader = csv.DictReader(io.StringIO(rest))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ParseError(f"{path}: unexpected columns {reader.fieldnames}", offset)
    rows = []
    lines = rest.split("\n")
    line_offsets = np.cumsum([offset] + [len(line) + 1 for line in lines])
    for i, rec in enumerate(reader):
        try:
            rows.append(ResultRow(
                sweep_value=float(rec["sweep_value"]),
                method=rec["method"],
                seed=int(rec["seed"]),
                status=rec["status"],
                error=rec["error"],
                user_rates=_parse_floats(rec["user_rates_bpshz"]),
                user_rates_mbps=_parse_floats(rec["user_rates_mbps"]),
                energy=float(rec["energy_w"]),
                transmit_power=float(rec["transmit_power_w"]),
                power_ratio_to_oma=float(rec["power_ratio_to_oma"]),
                decoding_order=_parse_ints(rec["decoding_order"]),
                block_fractions=_parse_floats(rec["block_fractions"]),
                block_orders=tuple(_parse_ints(o) for o in rec["block_orders"].split("|")) if rec["block_orders"] else (),
                kkt_residual=float(rec["kkt_residual"]),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"{path}: bad row {i + 1}: {exc}", int(line_offsets[min(i + 1, len(lines))])) from exc
    # sweep values keep the spec's integer type where it has one
    values = {float(v): v for v in spec.values}
    rows = [replace(r, sweep_value=values.get(r.sweep_value, r.sweep_value)) for r in rows]
    return ResultTable(spec, tuple(rows))

