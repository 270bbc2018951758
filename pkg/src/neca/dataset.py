"""Loading and preprocessing of categorical attribute datasets (CADs).

A CAD is a table of n records over m categorical attributes, optionally
paired with a class-label column that is held out for evaluation and never
fed to training.  Domains are the observed distinct tokens per attribute,
kept in first-appearance order so downstream node indexing is deterministic.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


class DatasetError(Exception):
    """Malformed input data or manifest/contract violation."""


@dataclass(frozen=True)
class CAD:
    """Categorical attribute dataset: records, attribute domains, optional labels."""

    records: tuple[tuple[str, ...], ...]
    attribute_names: tuple[str, ...]
    domains: tuple[tuple[str, ...], ...]
    labels: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def m(self) -> int:
        return len(self.attribute_names)

    def __post_init__(self):
        if len(self.domains) != self.m:
            raise DatasetError("one domain required per attribute")
        domain_sets = [set(d) for d in self.domains]
        for i, rec in enumerate(self.records):
            if len(rec) != self.m:
                raise DatasetError(f"record {i} has {len(rec)} entries, expected {self.m}")
            for j, tok in enumerate(rec):
                if tok not in domain_sets[j]:
                    raise DatasetError(f"record {i}: token {tok!r} not in domain of {self.attribute_names[j]!r}")
        if self.labels is not None and len(self.labels) != self.n:
            raise DatasetError(f"{len(self.labels)} labels for {self.n} records")

    def column(self, j: int) -> list[str]:
        return [rec[j] for rec in self.records]


def _observed_domains(records: Sequence[Sequence[str]], m: int) -> tuple[tuple[str, ...], ...]:
    domains = [dict() for _ in range(m)]  # dict preserves first-appearance order
    for rec in records:
        for j, tok in enumerate(rec):
            domains[j].setdefault(tok, None)
    return tuple(tuple(d) for d in domains)


def make_cad(records, attribute_names, labels=None) -> CAD:
    """Build a CAD with domains computed from the data in first-appearance order."""
    records = tuple(tuple(r) for r in records)
    attribute_names = tuple(attribute_names)
    return CAD(
        records=records,
        attribute_names=attribute_names,
        domains=_observed_domains(records, len(attribute_names)),
        labels=tuple(labels) if labels is not None else None,
    )


@dataclass
class DatasetManifest:
    """Per-dataset loading instructions: column roles, source, integrity pin.

    ``checksum`` is a sha256 hex digest; empty means unpinned (no integrity
    check on fetch).  For headerless files ``column_names`` supplies the
    schema.  Roles: exactly zero or one column is the label, ``drop_columns``
    are identifiers excluded from modeling, everything else is a feature.
    """

    name: str
    source_url: str = ""
    checksum: str = ""
    label_column: str | None = None
    drop_columns: tuple[str, ...] = ()
    missing_token: str = "?"
    has_header: bool = True
    column_names: tuple[str, ...] | None = None
    delimiter: str = ","
    notes: str = ""

    def column_roles(self, columns: Sequence[str]) -> dict[str, str]:
        roles = {}
        for c in columns:
            if c == self.label_column:
                roles[c] = "label"
            elif c in self.drop_columns:
                roles[c] = "identifier-drop"
            else:
                roles[c] = "feature"
        if sum(1 for r in roles.values() if r == "label") > 1:
            raise DatasetError("more than one label column")
        return roles

    @classmethod
    def from_file(cls, path) -> "DatasetManifest":
        entries = read_kv_file(path)
        known = {
            "name", "source_url", "checksum", "label", "drop", "missing_token",
            "header", "columns", "delimiter", "notes",
        }
        unknown = set(entries) - known
        if unknown:
            raise DatasetError(f"unknown manifest keys: {sorted(unknown)}")
        if "name" not in entries:
            raise DatasetError(f"manifest {path} missing 'name'")
        return cls(
            name=entries["name"],
            source_url=entries.get("source_url", ""),
            checksum=entries.get("checksum", ""),
            label_column=entries.get("label") or None,
            drop_columns=tuple(t for t in entries.get("drop", "").split(",") if t),
            missing_token=entries.get("missing_token", "?"),
            has_header=entries.get("header", "true").lower() != "false",
            column_names=tuple(t for t in entries.get("columns", "").split(",") if t) or None,
            delimiter=entries.get("delimiter", ","),
            notes=entries.get("notes", ""),
        )


def read_kv_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` text file; '#' starts a comment line."""
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def load_csv(path, manifest: DatasetManifest) -> CAD:
    """Load a comma-separated file into a CAD per the manifest's column roles.

    Identifier columns are dropped, the label column is split out, and
    domains are computed in first-appearance order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=manifest.delimiter) if row]
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    if manifest.has_header:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    elif manifest.column_names is not None:
        header = list(manifest.column_names)
    else:
        header = [f"col_{j}" for j in range(len(rows[0]))]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DatasetError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")

    roles = manifest.column_roles(header)
    if manifest.label_column is not None and manifest.label_column not in header:
        raise DatasetError(f"{path}: label column {manifest.label_column!r} not found")

    feature_idx = [j for j, c in enumerate(header) if roles[c] == "feature"]
    label_idx = next((j for j, c in enumerate(header) if roles[c] == "label"), None)
    records = [tuple(row[j].strip() for j in feature_idx) for row in rows]
    labels = [row[label_idx].strip() for row in rows] if label_idx is not None else None
    return make_cad(records, [header[j] for j in feature_idx], labels)


def save_csv(cad: CAD, path, label_name: str = "label") -> None:
    """Write a CAD back to CSV (features plus the label column if present)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = list(cad.attribute_names) + ([label_name] if cad.labels is not None else [])
        writer.writerow(header)
        for i, rec in enumerate(cad.records):
            row = list(rec) + ([cad.labels[i]] if cad.labels is not None else [])
            writer.writerow(row)


def impute_modes(cad: CAD, missing_token: str = "?") -> CAD:
    """Replace every missing token by its attribute's most frequent value.

    Ties break toward the token that appears first in the column; an
    attribute whose values are all missing has no mode and is an error.
    """
    columns = []
    for j in range(cad.m):
        col = cad.column(j)
        present = [t for t in col if t != missing_token]
        if not col.count(missing_token):
            columns.append(col)
            continue
        if not present:
            raise DatasetError(f"attribute {cad.attribute_names[j]!r}: all values missing, no mode")
        counts = Counter(present)
        best = max(counts.values())
        mode = next(t for t in present if counts[t] == best)  # first appearance wins ties
        columns.append([mode if t == missing_token else t for t in col])
    records = list(zip(*columns)) if columns else [() for _ in range(cad.n)]
    return make_cad(records, cad.attribute_names, cad.labels)


def discretize_numeric(column: Sequence[float], bins: int) -> list[str]:
    """Equal-width binning of a numeric column into tokens bin_0..bin_{bins-1}.

    Values exactly at the maximum land in the last bin; a constant column
    maps everything to bin_0.
    """
    if bins < 1:
        raise DatasetError("bins must be >= 1")
    if not len(column):
        raise DatasetError("empty column")
    lo = min(column)
    hi = max(column)
    if hi == lo:
        return ["bin_0"] * len(column)
    width = (hi - lo) / bins
    out = []
    for x in column:
        k = int((x - lo) / width)
        out.append(f"bin_{min(k, bins - 1)}")
    return out
