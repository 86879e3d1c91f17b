"""CSV ingestion with declared column roles.

Schema keys (all optional except at least one role):

``continuous``
    Columns parsed as floats.
``categorical``
    Columns integer-coded.  ``categories[col]`` fixes the allowed labels and
    their order; otherwise labels are sorted (numerically when possible).
``cross``
    ``{"name": str, "columns": [...], "sep": ":"}`` joins several categorical
    columns into one cell label such as ``"F:7"``.
``merge``
    ``{col: {target: [source labels]}}``; sources are relabelled to the target
    before coding.  Used to pool sparse tail categories.
``offset``
    ``{col: k}`` subtracts ``k`` from a numeric column.
``rescale``
    ``"twice_max"`` divides every continuous column by twice its maximum.
``delimiter``
    Field separator, ``","`` by default.
``as_value``
    Categorical columns whose numeric label (after offset and merge) is kept
    instead of the code.  The category map is still reported.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, EmptyData, MissingColumn, NonNumericCell, UnknownCategory

RESCALE_RULES = (None, "twice_max")


@dataclass
class IngestResult:
    data: np.ndarray
    names: list
    category_maps: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)

    def column(self, name):
        return self.data[:, self.names.index(name)]

    def to_dict(self):
        return {"names": self.names, "n": int(self.data.shape[0]),
                "category_maps": self.category_maps, "scales": self.scales}


def _label(value):
    """Canonical text for a category value: ``"7.0"`` and ``"7"`` coincide."""
    v = value.strip()
    try:
        f = float(v)
    except ValueError:
        return v
    return str(int(f)) if f.is_integer() else repr(f)


def _sort_key(label):
    parts = []
    for piece in label.split(":"):
        try:
            parts.append((0, float(piece), ""))
        except ValueError:
            parts.append((1, 0.0, piece))
    return tuple(parts)


def _validate(schema):
    unknown = set(schema) - {"continuous", "categorical", "cross", "merge", "offset", "rescale",
                             "categories", "as_value", "delimiter"}
    if unknown:
        raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
    if schema.get("rescale") not in RESCALE_RULES:
        raise ConfigError(f"rescale must be one of {RESCALE_RULES}, got {schema.get('rescale')!r}")
    if not (schema.get("continuous") or schema.get("categorical") or schema.get("cross")):
        raise ConfigError("schema declares no columns")


def ingest_csv(path, schema):
    """Read ``path`` into an :class:`IngestResult` according to ``schema``.

    Output columns are the continuous ones, then the categorical ones, then
    the cross cell if declared.  Category codes start at zero.
    """
    _validate(schema)
    continuous = list(schema.get("continuous", []))
    categorical = list(schema.get("categorical", []))
    cross = schema.get("cross")
    offsets = {k: float(v) for k, v in schema.get("offset", {}).items()}
    merge = {col: {_label(src): _label(tgt) for tgt, srcs in spec.items() for src in srcs}
             for col, spec in schema.get("merge", {}).items()}
    declared = {col: [_label(v) for v in vals] for col, vals in schema.get("categories", {}).items()}

    cat_cols = list(categorical)
    if cross:
        cat_cols += [c for c in cross["columns"] if c not in cat_cols]
    cross_name = cross["name"] if cross else None
    sep = cross.get("sep", ":") if cross else ":"

    cont_rows, cat_rows = [], []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise EmptyData(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh, delimiter=schema.get("delimiter", ","))
        header = next(reader, None)
        if not header:
            raise EmptyData(f"{path} is empty")
        header = [h.strip().strip('"') for h in header]
        index = {h: j for j, h in enumerate(header)}
        for col in continuous + cat_cols:
            if col not in index:
                raise MissingColumn(f"column {col!r} not in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for col in continuous:
                cell = row[index[col]] if index[col] < len(row) else ""
                try:
                    x = float(cell)
                except ValueError:
                    raise NonNumericCell(f"line {lineno}, column {col!r}: {cell!r}") from None
                if not np.isfinite(x):
                    raise NonNumericCell(f"line {lineno}, column {col!r}: {cell!r}")
                vals.append(x - offsets.get(col, 0.0))
            cont_rows.append(vals)
            labels = {}
            for col in cat_cols:
                raw = row[index[col]] if index[col] < len(row) else ""
                if col in offsets:
                    try:
                        raw = repr(float(raw) - offsets[col])
                    except ValueError:
                        raise NonNumericCell(f"line {lineno}, column {col!r}: {raw!r}") from None
                lab = _label(raw)
                labels[col] = merge.get(col, {}).get(lab, lab)
            if cross:
                cell = sep.join(labels[c] for c in cross["columns"])
                labels[cross_name] = merge.get(cross_name, {}).get(cell, cell)
            cat_rows.append(labels)

    if not cont_rows:
        raise EmptyData(f"{path} has no data rows")

    out_cat = categorical + ([cross_name] if cross else [])
    maps = {}
    for col in out_cat:
        seen = {r[col] for r in cat_rows}
        if col in declared:
            order = declared[col]
            bad = sorted(seen - set(order), key=_sort_key)
            if bad:
                raise UnknownCategory(f"column {col!r}: undeclared labels {bad}")
        else:
            order = sorted(seen, key=_sort_key)
        maps[col] = {lab: k for k, lab in enumerate(order)}

    cont = np.asarray(cont_rows, dtype=float).reshape(len(cont_rows), len(continuous))
    scales = {}
    if schema.get("rescale") == "twice_max" and continuous:
        top = cont.max(axis=0)
        if np.any(top <= 0):
            bad = [c for c, t in zip(continuous, top) if t <= 0]
            raise NonNumericCell(f"cannot rescale by a non-positive maximum: {bad}")
        cont = cont / (2.0 * top)
        scales = {c: float(2.0 * t) for c, t in zip(continuous, top)}
    as_value = set(schema.get("as_value", []))
    for col in as_value:
        if col not in maps:
            raise ConfigError(f"as_value column {col!r} is not categorical")
        try:
            [float(lab) for lab in maps[col]]
        except ValueError:
            raise NonNumericCell(f"column {col!r} has non-numeric labels") from None
    codes = np.array([[float(r[c]) if c in as_value else maps[c][r[c]] for c in out_cat]
                      for r in cat_rows], dtype=float)
    codes = codes.reshape(len(cat_rows), len(out_cat))
    return IngestResult(np.hstack([cont, codes]), continuous + out_cat, maps, scales)


def cell_counts(result: IngestResult, column):
    """Counts per code of a categorical column, in code order."""
    k = len(result.category_maps[column])
    return np.bincount(result.column(column).astype(int), minlength=k)


def read_counts(path, count_column="count", delimiter=","):
    """Cell labels and counts from a CSV with one row per cell.

    Every column except ``count_column`` is part of the label.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise EmptyData(f"cannot read {path}: {exc}") from None
    labels, counts = [], []
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if not header:
            raise EmptyData(f"{path} is empty")
        header = [h.strip() for h in header]
        if count_column not in header:
            raise MissingColumn(f"column {count_column!r} not in {path}")
        j = header.index(count_column)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            cell = row[j] if j < len(row) else ""
            try:
                c = float(cell)
            except ValueError:
                raise NonNumericCell(f"line {lineno}, column {count_column!r}: {cell!r}") from None
            if not np.isfinite(c) or c < 0:
                raise NonNumericCell(f"line {lineno}: count must be a non-negative number, got {cell!r}")
            labels.append(":".join(_label(v) for k, v in enumerate(row) if k != j))
            counts.append(c)
    if not counts:
        raise EmptyData(f"{path} has no data rows")
    return labels, np.asarray(counts)
