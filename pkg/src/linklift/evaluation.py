"""Decile tables, lift, and plain-text decile reports.

Deciles are rank statistics: records sort by score descending (ties by
record_id ascending) into 10 near-equal bins, decile 1 holding the top
scores. Reports are CSVs plus text bar charts so output bytes are
deterministic and diff-able.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

_BAR_WIDTH = 40


@dataclass(frozen=True)
class DecileRow:
    decile: int
    count: int
    positives: int
    rate: float


@dataclass(frozen=True)
class DecileTable:
    rows: tuple
    n: int
    total_positives: int
    base_rate: float


def decile_table(scores, labels, ids=None) -> DecileTable:
    """Exact per-decile counts and positive rates.

    ``ids`` break score ties; omitted, the input position is the id.
    """
    n = len(scores)
    if len(labels) != n:
        raise DataError(f"{n} scores but {len(labels)} labels")
    if n < 10:
        raise DataError("need at least 10 records for a decile table")
    if ids is None:
        ids = range(n)
    elif len(ids) != n:
        raise DataError(f"{n} scores but {len(ids)} ids")

    order = sorted(range(n), key=lambda i: (-scores[i], ids[i]))
    base, rem = divmod(n, 10)
    rows = []
    pos_total = 0
    at = 0
    for d in range(1, 11):
        size = base + (1 if d <= rem else 0)
        chunk = order[at:at + size]
        at += size
        pos = sum(1 for i in chunk if labels[i] == 1)
        pos_total += pos
        rows.append(DecileRow(decile=d, count=size, positives=pos,
                              rate=pos / size if size else 0.0))
    return DecileTable(rows=tuple(rows), n=n, total_positives=pos_total,
                       base_rate=pos_total / n)


def lift(table: DecileTable, decile: int) -> float:
    """Positive rate of one decile divided by the base rate."""
    if not 1 <= decile <= 10:
        raise DataError(f"decile must be 1..10, got {decile}")
    if table.base_rate <= 0:
        raise DataError("lift undefined: base rate is 0")
    return table.rows[decile - 1].rate / table.base_rate


def table_csv_lines(table: DecileTable) -> list:
    lines = ["decile,count,positives,rate,lift"]
    for row in table.rows:
        lift_s = f"{row.rate / table.base_rate:.6f}" if table.base_rate > 0 else ""
        lines.append(f"{row.decile},{row.count},{row.positives},{row.rate:.6f},{lift_s}")
    return lines


def table_chart_lines(table: DecileTable, title: str = "") -> list:
    """Bar chart, one decile per line; bar length proportional to rate."""
    lines = []
    if title:
        lines.append(title)
    lines.append(f"base rate {table.base_rate:.6f} over {table.n} records")
    for row in table.rows:
        bar = "#" * round(row.rate * _BAR_WIDTH)
        lines.append(f"D{row.decile:02d} |{bar:<{_BAR_WIDTH}}| {row.rate:.6f}")
    return lines


def _safe_name(group: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in group) or "_"


def render_decile_report(tables: dict, out_dir) -> list:
    """One CSV and one text chart per group table; returns written paths."""
    if not tables:
        raise DataError("no decile tables to render")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for group in sorted(tables):
        table = tables[group]
        name = _safe_name(group)
        csv_path = out / f"deciles_{name}.csv"
        csv_path.write_text("\n".join(table_csv_lines(table)) + "\n")
        chart_path = out / f"deciles_{name}.txt"
        chart_path.write_text(
            "\n".join(table_chart_lines(table, title=f"group {group}")) + "\n")
        written.extend([csv_path, chart_path])
    return written


def read_scores_csv(path, labels_col: str, id_col: str = "record_id",
                    score_col: str = "score", group_col: str = "group"):
    """Rows of (id, score, label, group) from a scores CSV; group may be ''."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"empty scores file: {path}")
        for col in (id_col, score_col, labels_col):
            if col not in reader.fieldnames:
                raise DataError(f"column {col!r} not in {path}")
        has_group = group_col in reader.fieldnames
        for row in reader:
            label = int(float(row[labels_col]))
            out.append((row[id_col], float(row[score_col]), label,
                        row[group_col] if has_group else ""))
    if not out:
        raise DataError(f"no rows in {path}")
    return out
