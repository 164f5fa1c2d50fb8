"""Deterministic file writers for tables and reports.

Every output embeds the experiment's config hash: delimited and text
files as a leading ``#`` comment line, JSON documents as a field, DOT as
a ``//`` comment. Writers produce byte-identical files for identical
inputs (LF newlines, full-precision floats in delimited files, no
timestamps).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence


def fmt_cell(value) -> str:
    """Delimited cell: full-precision floats, empty string for missing."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def fmt_round(value, digits: int = 2) -> str:
    """Human-readable cell: fixed decimals, dash for missing."""
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def write_delimited(path: str | Path, header: Sequence[str],
                    rows: Sequence[Sequence], config_hash: str = "") -> None:
    buf = io.StringIO()
    if config_hash:
        buf.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([fmt_cell(cell) for cell in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_text(path: str | Path, lines: Sequence[str],
               config_hash: str = "") -> None:
    head = [f"# config_hash={config_hash}"] if config_hash else []
    Path(path).write_text("\n".join(head + list(lines)) + "\n", encoding="utf-8")


def write_json(path: str | Path, payload: dict, config_hash: str = "") -> None:
    doc = dict(payload)
    if config_hash:
        doc["config_hash"] = config_hash
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def render_table(header: Sequence[str], rows: Sequence[Sequence[str]],
                 ) -> list[str]:
    """Align columns: first column left, the rest right."""
    cells = [list(header)] + [list(r) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]

    def render(row: list[str]) -> str:
        parts = [row[0].ljust(widths[0])]
        parts += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        return "  ".join(parts).rstrip()

    lines = [render(cells[0]), "  ".join("-" * w for w in widths)]
    lines += [render(row) for row in cells[1:]]
    return lines
