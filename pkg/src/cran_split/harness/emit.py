"""Result serialization: a flat CSV and a JSON mirror of the same records.

All decimals are formatted to 9 significant digits in both formats, so the
value multisets agree exactly across formats and a parse of either
round-trips the emitted numbers.
"""

from __future__ import annotations

import csv
import io
import json

from .sweep import Row, SweepResult

HEADER = ("experiment", "sweep", "value", "approach", "csi", "nc",
          "sum_rate", "rates", "stderr", "seed", "samples", "wall_ms")


class EmitError(OSError):
    """I/O failure while writing results, annotated with the path."""


def _g9(x: float) -> str:
    return format(float(x), ".9g")


def _cells(row: Row) -> list:
    return [
        row.experiment,
        row.sweep,
        _g9(row.value),
        row.approach,
        row.csi or "",
        "" if row.nc is None else str(int(row.nc)),
        _g9(row.sum_rate),
        ";".join(_g9(r) for r in row.rates),
        _g9(row.stderr),
        str(int(row.seed)),
        str(int(row.samples)),
        str(int(row.wall_ms)),
    ]


def render_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for row in result.rows:
        w.writerow(_cells(row))
    return buf.getvalue()


def row_record(row: Row) -> dict:
    """The JSON object for one row; numbers re-parsed from their 9-digit
    rendering so both formats carry identical values."""
    return {
        "experiment": row.experiment,
        "sweep": row.sweep,
        "value": float(_g9(row.value)),
        "approach": row.approach,
        "csi": row.csi or "",
        "nc": None if row.nc is None else int(row.nc),
        "sum_rate": float(_g9(row.sum_rate)),
        "rates": [float(_g9(r)) for r in row.rates],
        "stderr": float(_g9(row.stderr)),
        "seed": int(row.seed),
        "samples": int(row.samples),
        "wall_ms": int(row.wall_ms),
    }


def render_json(result: SweepResult) -> str:
    return json.dumps([row_record(r) for r in result.rows], indent=2) + "\n"


def emit(result: SweepResult, fmt: str, path: str) -> None:
    if fmt == "csv":
        text = render_csv(result)
    elif fmt == "json":
        text = render_json(result)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise EmitError(f"cannot write results to {path!r}: {exc}") from exc


def parse_csv(text: str) -> list:
    """Inverse of ``render_csv`` for round-trip checks: typed row dicts."""
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(rows[0]) != HEADER:
        raise ValueError("missing or malformed header")
    out = []
    for cells in rows[1:]:
        if len(cells) != len(HEADER):
            raise ValueError(f"expected {len(HEADER)} columns, "
                             f"got {len(cells)}")
        rec = dict(zip(HEADER, cells))
        rec["value"] = float(rec["value"])
        rec["nc"] = None if rec["nc"] == "" else int(rec["nc"])
        rec["sum_rate"] = float(rec["sum_rate"])
        rec["rates"] = [float(x) for x in rec["rates"].split(";")] \
            if rec["rates"] else []
        rec["stderr"] = float(rec["stderr"])
        rec["seed"] = int(rec["seed"])
        rec["samples"] = int(rec["samples"])
        rec["wall_ms"] = int(rec["wall_ms"])
        out.append(rec)
    return out
