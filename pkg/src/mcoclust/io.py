"""CSV/JSON readers and writers for datasets, assignments and run outputs.

Data files are CSV with a header row. An optional ``id`` column names the
objects; every other column must be declared in the schema, a JSON object
mapping column name to family spec (``gaussian``, ``poisson``,
``categorical:H`` or ``multinomial:H``). Missing cells are empty fields or
``NA``. Multinomial cells are ``;``-separated count vectors.

Columns are grouped into families in the order gaussian, poisson,
categorical (by H), multinomial (by H); within a family, file order is kept.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import Assignments, Dataset, FeatureFamily, Kind

ID_COLUMN = "id"
MISSING = ("", "NA")
_KIND_ORDER = {Kind.GAUSSIAN: 0, Kind.POISSON: 1, Kind.CATEGORICAL: 2, Kind.MULTINOMIAL: 3}


class InputError(ValueError):
    """Malformed input file; the message carries file coordinates."""


def format_real(x: float) -> str:
    return format(float(x), ".17g")


def _format_cell(fam: FeatureFamily, value, observed: bool) -> str:
    if not observed:
        return ""
    if fam.kind is Kind.GAUSSIAN:
        return format_real(value)
    if fam.kind is Kind.MULTINOMIAL:
        return ";".join(str(int(c)) for c in value)
    return str(int(value))


def _family_order(families):
    return sorted(set(families), key=lambda f: (_KIND_ORDER[f.kind], f.num_categories or 0))


def read_schema(path) -> dict[str, FeatureFamily]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read schema: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"{path}: schema must be a JSON object")
    schema = {}
    for col, spec in raw.items():
        try:
            schema[col] = FeatureFamily.parse(str(spec))
        except ValueError as exc:
            raise InputError(f"{path}: column {col!r}: bad family spec {spec!r}") from exc
    return schema


def write_schema(dataset: Dataset, path):
    schema = {name: str(fam)
              for fam, names in zip(dataset.families, dataset.feature_names)
              for name in names}
    Path(path).write_text(json.dumps(schema, indent=1) + "\n")


def read_dataset(data_path, schema_path) -> Dataset:
    schema = read_schema(schema_path)
    with open(data_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{data_path}: empty file")
    header, body = rows[0], rows[1:]
    has_id = ID_COLUMN in header and ID_COLUMN not in schema
    columns = [c for c in header if not (has_id and c == ID_COLUMN)]
    unknown = [c for c in columns if c not in schema]
    if unknown:
        raise InputError(f"{data_path}: columns missing from schema: {unknown}")
    absent = [c for c in schema if c not in header]
    if absent:
        raise InputError(f"{data_path}: schema columns missing from data: {absent}")
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"{data_path}: line {r}: expected {len(header)} fields, got {len(row)}")

    n = len(body)
    col_index = {c: i for i, c in enumerate(header)}
    ids = [row[col_index[ID_COLUMN]] for row in body] if has_id else [str(i) for i in range(n)]

    families, matrices, masks, names = [], [], [], []
    for fam in _family_order(schema[c] for c in columns):
        cols = [c for c in columns if schema[c] == fam]
        d = len(cols)
        shape = (n, d, fam.num_categories) if fam.kind is Kind.MULTINOMIAL else (n, d)
        x = np.full(shape, np.nan)
        mask = np.zeros((n, d), bool)
        for j, c in enumerate(cols):
            ci = col_index[c]
            for i, row in enumerate(body):
                cell = row[ci].strip()
                if cell in MISSING:
                    continue
                try:
                    if fam.kind is Kind.MULTINOMIAL:
                        x[i, j] = [float(p) for p in cell.split(";")]
                    else:
                        x[i, j] = float(cell)
                except ValueError as exc:
                    raise InputError(f"{data_path}: line {i + 2}, column {c!r}: "
                                     f"cannot parse {cell!r} as {fam}") from exc
                mask[i, j] = True
        families.append(fam)
        matrices.append(x)
        masks.append(mask)
        names.append(tuple(cols))
    return Dataset(tuple(families), tuple(matrices), tuple(masks), tuple(names), tuple(ids))


def write_dataset(dataset: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([ID_COLUMN] + [c for names in dataset.feature_names for c in names])
        for i, oid in enumerate(dataset.object_ids):
            row = [oid]
            for fam, x, mask in zip(dataset.families, dataset.matrices, dataset.masks):
                row.extend(_format_cell(fam, x[i, j], mask[i, j]) for j in range(x.shape[1]))
            w.writerow(row)


# -- assignments ------------------------------------------------------------------

ASSIGNMENT_HEADER = ["kind", "family", "name", "view", "cluster"]


def write_assignments(dataset: Dataset, assignments: Assignments, path, views=None):
    """One row per feature and one per (object, view) for ``views`` (default all)."""
    if views is None:
        views = range(len(assignments.object_assignment))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSIGNMENT_HEADER)
        for fam, names, rows in zip(dataset.families, dataset.feature_names,
                                    assignments.feature_assignment):
            for name, (v, g) in zip(names, rows):
                w.writerow(["feature", str(fam), name, v, g])
        for v in views:
            for oid, k in zip(dataset.object_ids, assignments.object_assignment[v]):
                w.writerow(["object", "", oid, v, k])


class AssignmentTable:
    """Assignments read back from disk, keyed by feature name and object id."""

    def __init__(self, features, objects):
        self.features = features  # name -> (family, view, cluster)
        self.objects = objects    # view -> {object id: cluster}

    @classmethod
    def read(cls, path) -> "AssignmentTable":
        path = Path(path)
        if path.is_dir():
            path = path / "assignments.csv"
        features, objects = {}, {}
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != ASSIGNMENT_HEADER:
                    raise InputError(f"{path}: header must be {','.join(ASSIGNMENT_HEADER)}")
                for line, row in enumerate(reader, start=2):
                    try:
                        v, c = int(row["view"]), int(row["cluster"])
                    except (TypeError, ValueError) as exc:
                        raise InputError(f"{path}: line {line}: bad view/cluster") from exc
                    if row["kind"] == "feature":
                        features[row["name"]] = (row["family"], v, c)
                    elif row["kind"] == "object":
                        objects.setdefault(v, {})[row["name"]] = c
                    else:
                        raise InputError(f"{path}: line {line}: unknown kind {row['kind']!r}")
        except OSError as exc:
            raise InputError(f"{path}: {exc}") from exc
        return cls(features, objects)


# -- run outputs ------------------------------------------------------------------

def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "elbo"])
        for it, value in enumerate(trace, start=1):
            w.writerow([it, format_real(value)])
