"""Tabulated study results and their bit-stable serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CRITERIA", "ConvergenceReport", "format_value", "write_report", "read_report", "write_csv"]

# verdict names are "<criterion>" or "<criterion>.<detail>"
CRITERIA = (
    "property_suite",
    "resolvent_oracle",
    "reflected_moment",
    "scheme_oracle_refinement",
    "picard_convergence",
    "vi_diagnostics",
    "particle_ordering",
    "galerkin_spde",
    "averaging_decay",
    "rescaling_identity",
    "harness_determinism",
)


def format_value(v):
    """Shortest decimal that round-trips to the same double; blanks for ``None``."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return format_value(v)
    return v


@dataclass
class ConvergenceReport:
    """Rows of ``(control, error, stderr, ...)`` plus named verdicts."""

    name: str
    control: str
    columns: list
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    fingerprint: dict = field(default_factory=dict)
    descending: bool = False

    def add(self, **row):
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown report columns {sorted(unknown)}")
        self.rows.append({c: row.get(c) for c in self.columns})
        self.rows.sort(key=lambda r: r[self.control], reverse=self.descending)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def verdict(self, name, ok):
        if name.split(".", 1)[0] not in CRITERIA:
            raise KeyError(f"verdict {name!r} does not name a known criterion")
        self.verdicts[name] = bool(ok)

    @property
    def passed(self):
        return all(self.verdicts.values())

    def to_dict(self):
        return {
            "name": self.name,
            "control": self.control,
            "columns": list(self.columns),
            "rows": [{k: _plain(v) for k, v in r.items()} for r in self.rows],
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
            "fingerprint": {k: _plain(v) for k, v in self.fingerprint.items()},
            "descending": self.descending,
        }

    @classmethod
    def from_dict(cls, d):
        rows = [{k: (float(v) if v in ("nan", "inf", "-inf") else v) for k, v in r.items()} for r in d["rows"]]
        return cls(d["name"], d["control"], list(d["columns"]), rows, dict(d["verdicts"]),
                   dict(d.get("fingerprint", {})), d.get("descending", False))


def write_csv(path, columns, rows):
    """CSV with a fixed header and round-trip float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_report(report, path, format="csv"):
    if format == "csv":
        write_csv(path, report.columns, [[r[c] for c in report.columns] for r in report.rows])
    elif format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report(path, format="csv", name="report", control=None):
    """Parse a report back; CSV cells become floats where possible."""
    if format == "json":
        with open(path, encoding="utf-8") as fh:
            return ConvergenceReport.from_dict(json.load(fh))
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for line in reader:
            row = {}
            for c, v in zip(columns, line):
                if v == "":
                    row[c] = None
                elif v in ("true", "false"):
                    row[c] = v == "true"
                else:
                    try:
                        row[c] = int(v) if v.lstrip("-").isdigit() else float(v)
                    except ValueError:
                        row[c] = v
            rows.append(row)
    return ConvergenceReport(name, control or columns[0], columns, rows)
