"""Checks, per-experiment reports and CSV output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

SUMMARY_COLUMNS = ("experiment", "check_name", "lhs", "rhs", "margin", "pass")


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


@dataclass(frozen=True)
class Check:
    """An inequality normalized to ``lhs <= rhs``; ``margin = rhs - lhs``."""

    experiment: str
    name: str
    lhs: float
    rhs: float
    asserted: bool = True

    @property
    def margin(self) -> float:
        return float(self.rhs - self.lhs)

    @property
    def passed(self) -> bool:
        return bool(math.isfinite(self.margin) and self.margin >= 0)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        note = "" if self.asserted else " (reported)"
        return f"{self.experiment} {self.name}: {tag}{note} lhs={self.lhs:.6g} rhs={self.rhs:.6g}"


@dataclass
class CertificateReport:
    experiment: str
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def check(self, name: str, lhs: float, rhs: float, asserted: bool = True) -> Check:
        c = Check(self.experiment, name, float(lhs), float(rhs), asserted)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def summary_line(self) -> str:
        asserted = [c for c in self.checks if c.asserted]
        n_ok = sum(c.passed for c in asserted)
        return f"{self.experiment}: {'PASS' if self.passed else 'FAIL'} ({n_ok}/{len(asserted)} checks)"


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    for r in rows[1:]:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([fmt(r.get(k, "")) for k in keys])
    return buf.getvalue()


def summary_rows(reports: list[CertificateReport]) -> list[dict]:
    out = []
    for rep in reports:
        for c in rep.checks:
            out.append(
                {
                    "experiment": c.experiment,
                    "check_name": c.name if c.asserted else c.name + " [reported]",
                    "lhs": c.lhs,
                    "rhs": c.rhs,
                    "margin": c.margin,
                    "pass": c.passed,
                }
            )
    return out


def write_reports(reports: list[CertificateReport], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rep in reports:
        path = out / f"{rep.experiment}.csv"
        path.write_text(rows_to_csv(rep.rows), encoding="utf-8")
        written.append(path)
    path = out / "summary.csv"
    text = rows_to_csv(summary_rows(reports)) or ",".join(SUMMARY_COLUMNS) + "\n"
    path.write_text(text, encoding="utf-8")
    written.append(path)
    return written


@dataclass(frozen=True)
class VerifiedRow:
    experiment: str
    check_name: str
    stored_pass: bool
    recomputed_pass: bool

    @property
    def consistent(self) -> bool:
        return self.stored_pass == self.recomputed_pass


def verify_summary(path: str | Path) -> list[VerifiedRow]:
    """Recompute ``pass`` from the stored ``lhs``/``rhs`` of a summary CSV."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            lhs, rhs = float(row["lhs"]), float(row["rhs"])
            margin = rhs - lhs
            ok = math.isfinite(margin) and margin >= 0
            out.append(VerifiedRow(row["experiment"], row["check_name"], row["pass"] == "true", ok))
    return out
