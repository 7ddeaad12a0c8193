"""Report rows, CSV and manifest output."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def fmt(v):
    """Round-trip formatting: floats with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, (tuple, list, np.ndarray)):
        return " ".join(fmt(u) for u in v)
    return str(v)


@dataclass
class ComparabilityReport:
    """Per-sample rows plus a summary. ``ratio`` columns feed the spread."""

    experiment: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)   # extra plot-ready CSVs

    @staticmethod
    def spread_summary(ratios, cap):
        r = np.asarray(ratios, dtype=float)
        r = r[np.isfinite(r) & (r > 0)]
        if len(r) == 0:
            return {"n": 0, "min_ratio": float("nan"), "max_ratio": float("nan"),
                    "spread": float("inf"), "spread_cap": cap, "passed": False}
        lo, hi = float(r.min()), float(r.max())
        return {"n": int(len(r)), "min_ratio": lo, "max_ratio": hi, "spread": hi / lo,
                "spread_cap": float(cap), "passed": bool(hi / lo <= cap)}

    @property
    def passed(self):
        return bool(self.summary.get("passed", False))


def write_csv(path, rows, columns=None):
    path = Path(path)
    if columns is None:
        columns = []
        for row in rows:
            for k in row:
                if k not in columns:
                    columns.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, items: dict):
    """Plain ``key=value`` lines, keys sorted; nested values as JSON."""
    lines = []
    for k in sorted(items):
        v = items[k]
        if isinstance(v, dict):
            v = json.dumps(v, sort_keys=True, default=fmt)
        lines.append(f"{k}={fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def write_report(rep: ComparabilityReport, out_dir, meta: dict):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "report.csv", rep.rows)
    for name, rows in rep.tables.items():
        write_csv(out / f"{name}.csv", rows)
    items = {"experiment": rep.experiment}
    items.update({f"summary.{k}": v for k, v in rep.summary.items()})
    items.update(meta)
    write_manifest(out / "manifest.txt", items)
    return out
