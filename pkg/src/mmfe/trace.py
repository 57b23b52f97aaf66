"""Run traces and CSV helpers shared by the solvers and the CLI."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

SIG_DIGITS = 12


def fmt(value) -> str:
    """Locale-independent rendering with 12 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, f".{SIG_DIGITS}g")
    try:
        return format(float(value), f".{SIG_DIGITS}g")
    except (TypeError, ValueError):
        return str(value)


def write_csv(path, columns, rows, metadata=None) -> None:
    """Write rows (sequences aligned with ``columns``) with an optional
    ``# key=value`` metadata preamble."""
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path):
    """Return ``(metadata, columns, rows)`` with rows as lists of strings."""
    metadata, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") and not lines:
                key, _, value = line[1:].strip().partition("=")
                metadata[key.strip()] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    return metadata, columns, [row for row in reader]


@dataclass
class RunTrace:
    """Ordered per-iteration records with a fixed column set."""

    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, **values) -> None:
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown trace columns: {sorted(unknown)}")
        self.rows.append([values.get(c) for c in self.columns])

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        write_csv(path, self.columns, self.rows, self.metadata)

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        metadata, columns, rows = read_csv(path)
        parsed = [[_parse(v) for v in row] for row in rows]
        return cls(columns, parsed, metadata)


def _parse(value: str):
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value
