"""CSV-serializable result tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import InvariantViolation


def format_value(value: Any, digits: int = 12) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits}g}"
    return str(value)


@dataclass
class SweepTable:
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise InvariantViolation(
                f"row has {len(values)} values for {len(self.columns)} columns"
            )
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self, digits: int = 12) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(v, digits) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        reader = csv.reader(io.StringIO(text))
        columns = next(reader)
        return cls(columns, [tuple(r) for r in reader])

    def __len__(self):
        return len(self.rows)


def check_positive_finite(table: SweepTable, names: Sequence[str], allow_inf: bool = False) -> None:
    """Raise :class:`InvariantViolation` unless every value in ``names`` is > 0."""
    for name in names:
        for v in table.column(name):
            bad = not v > 0 or math.isnan(v) or (math.isinf(v) and not allow_inf)
            if bad:
                raise InvariantViolation(f"column {name} has non-positive or non-finite value {v!r}")
