"""Sweep-result table parsed from the CLI's sweep.csv schema."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

REQUIRED_COLUMNS = ("B", "c_over", "mean_reward", "mean_q_sched", "mean_q_pool")


class SchemaError(ValueError):
    """The input file does not match the documented sweep schema."""


@dataclass(frozen=True)
class SweepRow:
    B: float
    c_over: float
    mean_reward: float
    mean_q_sched: float
    mean_q_pool: float
    lam: Optional[float] = None  # empty in the CSV for non-stochastic arrivals


class SweepFrame:
    """One row per sweep point; column presence and numeric values are
    validated on construction."""

    def __init__(self, rows):
        rows = tuple(rows)
        if not rows:
            raise SchemaError("sweep has no data rows")
        self.rows = rows

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_csv(cls, path: str) -> "SweepFrame":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise SchemaError(f"{path}: empty file")
            missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
            if missing:
                raise SchemaError(f"{path}: missing columns {missing}")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                vals = {}
                for col in REQUIRED_COLUMNS:
                    cell = rec[col]
                    try:
                        vals[col] = float(cell)
                    except (TypeError, ValueError):
                        raise SchemaError(
                            f"{path}:{lineno}: non-numeric {col!r} value {cell!r}"
                        )
                lam_cell = rec.get("lam")
                if lam_cell:
                    try:
                        vals["lam"] = float(lam_cell)
                    except ValueError:
                        raise SchemaError(
                            f"{path}:{lineno}: non-numeric 'lam' value {lam_cell!r}"
                        )
                rows.append(SweepRow(**vals))
        return cls(rows)

    def b_values(self) -> list:
        return sorted({row.B for row in self.rows})

    def c_over_values(self) -> list:
        return sorted({row.c_over for row in self.rows})

    def rows_for_b(self, B: float) -> list:
        return sorted((r for r in self.rows if r.B == B), key=lambda r: r.c_over)

    def rows_for_c_over(self, c_over: float) -> list:
        return sorted((r for r in self.rows if r.c_over == c_over), key=lambda r: r.B)
